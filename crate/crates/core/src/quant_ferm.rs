//! Conserved slice product, definite-type certification, CAR and self-dual
//! CAR representations on Fock space, and fermionic fields.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::green::{CauchyData, ConvergenceReport, GreenPair, Stepper};
use crate::lattice::LatticeSpacetime;
use crate::linalg::{c, column_space, hermitian_eigen, matrix_sign, re, CMat, CVec};
use crate::ops::{LatticeOperator, PairingKind, ScalarKind, Section};
use crate::C64;

pub const MAX_FOCK_MODES: usize = 12;

/// Matrix `W` of the boundary form on `2r` data slices:
/// `Q(φ,ψ) = ψ^† W φ` (Hermitian pairing) or `ψ^T W φ` (bilinear pairing).
pub fn boundary_form_matrix(op: &LatticeOperator) -> CMat {
    let l = op.lattice();
    let (k, r) = (op.fiber_dim(), op.radius());
    let nb = l.n_x * k;
    let b = op.pairing().matrix();
    let hermitian = op.pairing().kind() == PairingKind::Hermitian;
    let mut w = CMat::zeros(2 * r * nb, 2 * r * nb);
    // Window slices are 0..2r; the cut sits between r−1 and r.
    let cut = r as i32 - 1;
    for e in op.stencil().entries().iter().filter(|e| e.dt > 0) {
        let ba = b * &e.coeff;
        let at_b = if hermitian { e.coeff.adjoint() * b } else { e.coeff.transpose() * b };
        for s in (cut - e.dt + 1).max(0)..=cut {
            let s2 = (s + e.dt) as usize;
            let s = s as usize;
            for x in 0..l.n_x {
                let x2 = l.wrap_x(x as i64 + e.dx as i64);
                let (ri, ci) = (s * nb + x * k, s2 * nb + x2 * k);
                for i in 0..k {
                    for j in 0..k {
                        w[(ri + i, ci + j)] += ba[(i, j)];
                        w[(ci + i, ri + j)] -= at_b[(i, j)];
                    }
                }
            }
        }
    }
    w * re(l.volume_weight())
}

fn eval_form(op: &LatticeOperator, w: &CMat, phi: &CVec, psi: &CVec) -> C64 {
    let wphi = w * phi;
    match op.pairing().kind() {
        PairingKind::Hermitian => psi.dotc(&wphi),
        PairingKind::SymmetricBilinear => psi.dot(&wphi),
    }
}

fn window(op: &LatticeOperator, s: &Section, t: usize) -> CVec {
    let r = op.radius();
    let vals: Vec<C64> = (t + 1 - r..=t + r).flat_map(|u| s.slice(u).iter().copied()).collect();
    CVec::from_vec(vals)
}

fn check_slice(op: &LatticeOperator, t: usize) -> Result<()> {
    let r = op.radius();
    let n_t = op.lattice().n_t;
    if t < 2 * r || t + 2 * r + 1 > n_t {
        return domain(format!("slice {t} outside [{}, {}]", 2 * r, n_t - 1 - 2 * r));
    }
    Ok(())
}

/// `Q_t(φ,ψ)`, the part of Green's formula crossing the cut between slices
/// `t` and `t + 1`.
pub fn boundary_form(op: &LatticeOperator, phi: &Section, psi: &Section, t: usize) -> Result<C64> {
    check_slice(op, t)?;
    op.check_section(phi)?;
    op.check_section(psi)?;
    let w = boundary_form_matrix(op);
    Ok(eval_form(op, &w, &window(op, phi, t), &window(op, psi, t)))
}

/// Slice product `(φ,ψ)_t = i·Q_t(φ,ψ)`; depends only on slices `t−r+1..=t+r`.
pub fn slice_product(op: &LatticeOperator, phi: &Section, psi: &Section, t: usize) -> Result<C64> {
    Ok(C64::i() * boundary_form(op, phi, psi, t)?)
}

/// Evaluates slice products at many cuts without rebuilding the form.
pub struct SliceProduct {
    op: LatticeOperator,
    w: CMat,
}

impl SliceProduct {
    pub fn new(op: &LatticeOperator) -> Self {
        Self { op: op.clone(), w: boundary_form_matrix(op) }
    }

    pub fn admissible(&self) -> std::ops::Range<usize> {
        let r = self.op.radius();
        2 * r..self.op.lattice().n_t - 2 * r
    }

    pub fn eval(&self, phi: &Section, psi: &Section, t: usize) -> Result<C64> {
        check_slice(&self.op, t)?;
        Ok(C64::i() * eval_form(&self.op, &self.w, &window(&self.op, phi, t), &window(&self.op, psi, t)))
    }

    /// Max over admissible `t` of `|(φ,ψ)_t − (φ,ψ)_{t₀}|`.
    pub fn t_independence(&self, phi: &Section, psi: &Section) -> Result<f64> {
        let rows = self.admissible();
        let v0 = self.eval(phi, psi, rows.start)?;
        let mut worst = 0.0f64;
        for t in rows {
            worst = worst.max((self.eval(phi, psi, t)? - v0).norm());
        }
        Ok(worst)
    }
}

/// Continuum slice product `Σ_x ⟨iσ_P(n♭)φ,ψ⟩ dx` on slice `t` for the 1+1
/// Dirac operator, where `iσ_P(n♭)` acts as `e₀` and `⟨u,v⟩ = v^†e₀u`.
pub fn continuum_dirac_slice_product(phi: &Section, psi: &Section, t: usize) -> C64 {
    let l = phi.lattice();
    let s: C64 = phi.slice(t).iter().zip(psi.slice(t)).map(|(a, b)| b.conj() * a).sum();
    s * re(l.dx)
}

/// One-step map on Cauchy data `(φ_{t*},…,φ_{t*+2r−1}) ↦ (φ_{t*+1},…,φ_{t*+2r})`.
pub fn transfer_matrix(op: &LatticeOperator) -> Result<CMat> {
    let (r, nb) = (op.radius(), op.lattice().n_x * op.fiber_dim());
    let lead = op.slice_block(r as i32).try_inverse().ok_or_else(|| Error::Domain(format!("{} is not time-steppable", op.name)))?;
    let n = 2 * r * nb;
    let mut t = CMat::zeros(n, n);
    for s in 0..2 * r - 1 {
        for i in 0..nb {
            t[(s * nb + i, (s + 1) * nb + i)] = re(1.0);
        }
    }
    for d in -(r as i32)..r as i32 {
        let blk = -(&lead * op.slice_block(d));
        let col = (r as i32 + d) as usize * nb;
        t.view_mut(((2 * r - 1) * nb, col), (nb, nb)).copy_from(&blk);
    }
    Ok(t)
}

/// Spectral projector onto the physical sector: eigenvalues of the one-step
/// map with positive real part. Lattice doublers sit near `−1`.
pub fn physical_projector(op: &LatticeOperator) -> Result<CMat> {
    let t = transfer_matrix(op)?;
    let tinv = t.clone().try_inverse().ok_or_else(|| Error::Domain("one-step map is singular".into()))?;
    let cmat = (&t + tinv) * re(0.5);
    let s = matrix_sign(&cmat).ok_or_else(|| Error::Domain(format!("{}: one-step map has modes at quarter period; refine dt", op.name)))?;
    let n = t.nrows();
    Ok((CMat::identity(n, n) + s) * re(0.5))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefiniteTypeCertificate {
    pub definite: bool,
    /// Smallest eigenvalue of the slice-product Gram on the physical sector,
    /// relative to the largest in magnitude.
    pub physical_min: f64,
    pub physical_spectrum: Vec<f64>,
    /// Slice-product spectrum on all of SOL (discrete doublers included).
    pub full_spectrum: Vec<f64>,
    pub full_positive: usize,
    pub full_negative: usize,
    pub physical_dim: usize,
}

pub fn slice_gram(op: &LatticeOperator) -> CMat {
    // (φ,ψ) = ψ^† H φ with H = iW.
    boundary_form_matrix(op) * C64::i()
}

pub fn definite_type_certificate(op: &LatticeOperator) -> Result<DefiniteTypeCertificate> {
    if op.order() != 1 || op.kind() != ScalarKind::Complex || op.pairing().kind() != PairingKind::Hermitian {
        return domain("definite type is defined for first-order operators on complex bundles");
    }
    let h = slice_gram(op);
    let (full, _) = hermitian_eigen(&h);
    let fmax = full.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let proj = physical_projector(op)?;
    let v = column_space(&proj, 1e-8);
    let g = v.adjoint() * &h * &v;
    let (phys, _) = hermitian_eigen(&g);
    let pmax = phys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let physical_min = phys.first().copied().unwrap_or(0.0) / pmax.max(f64::MIN_POSITIVE);
    Ok(DefiniteTypeCertificate {
        definite: !phys.is_empty() && physical_min > 1e-10,
        physical_min,
        full_positive: full.iter().filter(|&&x| x > 1e-10 * fmax).count(),
        full_negative: full.iter().filter(|&&x| x < -1e-10 * fmax).count(),
        physical_spectrum: phys,
        full_spectrum: full,
        physical_dim: v.ncols(),
    })
}

/// Physical solution sector `V ⊂ SOL` in Cauchy-data coordinates at `t*`,
/// with a basis orthonormal for the slice product.
#[derive(Debug, Clone)]
pub struct SolutionSpace {
    op: LatticeOperator,
    stepper: Stepper,
    t_star: usize,
    /// `(φ,ψ) = ψ^† H φ` on data vectors.
    form: CMat,
    basis: CMat,
    certificate: DefiniteTypeCertificate,
}

fn orthonormalize(h: &CMat, v: &CMat) -> Result<CMat> {
    let mut out: Vec<CVec> = Vec::new();
    for j in 0..v.ncols() {
        let mut u = v.column(j).into_owned();
        for _ in 0..2 {
            for e in &out {
                let proj = e.adjoint() * h * &u;
                u -= e * proj[(0, 0)];
            }
        }
        let n2 = (u.adjoint() * h * &u)[(0, 0)].re;
        if n2 <= 1e-12 * u.norm_squared() {
            return domain("solution basis is not positive for the slice product");
        }
        out.push(u / re(n2.sqrt()));
    }
    Ok(CMat::from_columns(&out))
}

impl SolutionSpace {
    pub fn new(op: &LatticeOperator) -> Result<Self> {
        let certificate = definite_type_certificate(op)?;
        if !certificate.definite {
            return domain(format!("{} is not of definite type on its physical sector", op.name));
        }
        let form = slice_gram(op);
        let v = column_space(&physical_projector(op)?, 1e-8);
        let basis = orthonormalize(&form, &v)?;
        let t_star = op.lattice().n_t / 2;
        Ok(Self { op: op.clone(), stepper: Stepper::new(op)?, t_star, form, basis, certificate })
    }

    pub fn operator(&self) -> &LatticeOperator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn t_star(&self) -> usize {
        self.t_star
    }

    pub fn certificate(&self) -> &DefiniteTypeCertificate {
        &self.certificate
    }

    /// Gram matrix `[(e_j, e_i)]` of the basis.
    pub fn gram(&self) -> CMat {
        self.basis.adjoint() * &self.form * &self.basis
    }

    /// Cauchy-data slices `[t* − r + 1, t* + r]`, centred on the cut at `t*`.
    fn data_start(&self) -> usize {
        self.t_star + 1 - self.op.radius()
    }

    pub fn data_of(&self, phi: &Section) -> Result<CVec> {
        self.op.check_section(phi)?;
        Ok(CauchyData::of(phi, self.data_start(), 2 * self.op.radius())?.vector())
    }

    /// Coefficients `c_j = (φ, e_j)`; errors if `φ` leaves the sector.
    pub fn coordinates(&self, phi: &Section) -> Result<CVec> {
        self.coordinates_with_floor(phi, 0.0)
    }

    /// As [`SolutionSpace::coordinates`], with the sector test relative to
    /// `max(|data|, floor)` so that roundoff-sized solutions pass.
    pub fn coordinates_with_floor(&self, phi: &Section, floor: f64) -> Result<CVec> {
        let d = self.data_of(phi)?;
        let coords = self.basis.adjoint() * &self.form * &d;
        let back = &self.basis * &coords;
        let scale = d.norm().max(floor).max(f64::MIN_POSITIVE);
        if (&back - &d).norm() > 1e-8 * scale {
            return domain("solution lies outside the physical sector");
        }
        Ok(coords)
    }

    /// Slice-orthogonal projection onto the sector, without the membership
    /// test of [`SolutionSpace::coordinates`].
    pub fn project(&self, phi: &Section) -> Result<CVec> {
        let d = self.data_of(phi)?;
        Ok(self.basis.adjoint() * &self.form * &d)
    }

    /// Solution with the given coordinates.
    pub fn solution(&self, coords: &CVec) -> Result<Section> {
        if coords.len() != self.dim() {
            return shape("coordinate vector has wrong length");
        }
        let d = &self.basis * coords;
        let data =
            CauchyData { t_star: self.data_start(), slices: 2 * self.op.radius(), k: self.op.fiber_dim(), values: d.as_slice().to_vec() };
        self.stepper.from_cauchy(&data)
    }

    /// Source `f` with `Gf` equal to the solution `u`: `f = P(θu)` where `θ`
    /// cuts `u` off below slice `cut`.
    pub fn source_for(&self, u: &Section, cut: usize) -> Result<Section> {
        let l = self.op.lattice();
        let mut theta = u.clone();
        for t in 0..cut.min(l.n_t) {
            theta.slice_mut(t).iter_mut().for_each(|v| *v = re(0.0));
        }
        let f = self.op.apply(&theta)?;
        let (lo, hi) = f.time_support().unwrap_or((cut, cut));
        let m = self.op.margin_rows();
        if lo < m.start || hi >= m.end {
            return domain("cut too close to the boundary");
        }
        Ok(f)
    }

    /// Random margin source whose propagated solution lies in the sector:
    /// `P(θu) + Ph` with `u` random in `V` and `h` compactly supported.
    pub fn random_source<R: Rng>(&self, cut: usize, rng: &mut R) -> Result<Section> {
        let coords = crate::linalg::random_cvec(rng, self.dim());
        let u = self.solution(&coords)?;
        let f = self.source_for(&u, cut)?;
        let r = self.op.radius();
        let m = self.op.margin_rows();
        let h = Section::random(self.op.lattice(), self.op.fiber_dim(), ScalarKind::Complex, m.start + r..m.end - r, 0.3, rng);
        f.add(&self.op.apply(&h)?)
    }
}

/// Sparse operator on Fock space, stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOp {
    dim: usize,
    cols: Vec<Vec<(usize, C64)>>,
}

fn merge(entries: &mut Vec<(usize, C64)>) {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, C64)> = Vec::with_capacity(entries.len());
    for &(r, v) in entries.iter() {
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 += v,
            _ => out.push((r, v)),
        }
    }
    out.retain(|e| e.1 != re(0.0));
    *entries = out;
}

impl FockOp {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, cols: vec![Vec::new(); dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![re(1.0); dim])
    }

    pub fn diagonal(d: &[C64]) -> Self {
        Self { dim: d.len(), cols: d.iter().enumerate().map(|(i, &v)| vec![(i, v)]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.cols.iter_mut().flatten().for_each(|e| e.1 *= s);
        out.cols.iter_mut().for_each(merge);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(a, b)| {
                let mut v: Vec<_> = a.iter().chain(b).copied().collect();
                merge(&mut v);
                v
            })
            .collect();
        Self { dim: self.dim, cols }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(re(-1.0)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let cols = other
            .cols
            .iter()
            .map(|col| {
                let mut v: Vec<(usize, C64)> = col.iter().flat_map(|&(k, b)| self.cols[k].iter().map(move |&(r, a)| (r, a * b))).collect();
                merge(&mut v);
                v
            })
            .collect();
        Self { dim: self.dim, cols }
    }

    pub fn anticomm(&self, other: &Self) -> Self {
        self.mul(other).add(&other.mul(self))
    }

    pub fn adjoint(&self) -> Self {
        let mut cols = vec![Vec::new(); self.dim];
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                cols[r].push((c, v.conj()));
            }
        }
        Self { dim: self.dim, cols }
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for (c, col) in self.cols.iter().enumerate() {
            if v[c] != re(0.0) {
                for &(r, a) in col {
                    out[r] += a * v[c];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.cols.iter().flatten().map(|e| e.1.norm()).fold(0.0, f64::max)
    }

    /// `max |X − s·1|` entrywise.
    pub fn distance_to_scalar(&self, s: C64) -> f64 {
        self.sub(&Self::identity(self.dim).scaled(s)).max_abs()
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Operator norm by power iteration on `X*X` from a fixed dense start.
    pub fn norm(&self) -> f64 {
        let adj = self.adjoint();
        let mut v = CVec::from_fn(self.dim, |i, _| c(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()));
        v /= re(v.norm());
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = adj.apply(&self.apply(&v));
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            let next = v.dotc(&w).re;
            v = w / re(nw);
            if (next - lambda).abs() <= 1e-16 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.max(0.0).sqrt()
    }
}

/// Jordan–Wigner annihilators `a₁,…,a_n` on `(ℂ²)^{⊗n}`.
#[derive(Debug, Clone)]
pub struct CarRep {
    pub annihilators: Vec<FockOp>,
    pub grading: FockOp,
    pub vacuum: CVec,
}

fn jordan_wigner(n: usize) -> Vec<FockOp> {
    let dim = 1usize << n;
    (0..n)
        .map(|j| {
            let mut a = FockOp::zeros(dim);
            for col in 0..dim {
                if col >> j & 1 == 1 {
                    let parity = (col & ((1 << j) - 1)).count_ones();
                    let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
                    a.cols[col].push((col ^ (1 << j), re(sign)));
                }
            }
            a
        })
        .collect()
}

impl CarRep {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_FOCK_MODES {
            return Err(Error::Resource(format!("{n} modes exceed the Fock cap of {MAX_FOCK_MODES}")));
        }
        let dim = 1usize << n;
        let parity: Vec<C64> = (0..dim).map(|i| re(if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 })).collect();
        let mut vacuum = CVec::zeros(dim);
        vacuum[0] = re(1.0);
        Ok(Self { annihilators: jordan_wigner(n), grading: FockOp::diagonal(&parity), vacuum })
    }

    pub fn modes(&self) -> usize {
        self.annihilators.len()
    }

    pub fn fock_dim(&self) -> usize {
        self.vacuum.len()
    }

    /// `a(v) = Σ conj(c_j) a_j`, anti-linear in `v`.
    pub fn a(&self, coords: &CVec) -> FockOp {
        let mut m = FockOp::zeros(self.fock_dim());
        for (cj, aj) in coords.iter().zip(&self.annihilators) {
            m = m.add(&aj.scaled(cj.conj()));
        }
        m
    }

    pub fn a_dag(&self, coords: &CVec) -> FockOp {
        self.a(coords).adjoint()
    }

    /// `b(v) = (i/√2)(a(v) − a(v)*)` for `v` in the realification, given by
    /// real coordinates `(Re c, Im c)`.
    pub fn b(&self, real_coords: &DVector<f64>) -> FockOp {
        let n = self.modes();
        let cplx = CVec::from_fn(n, |j, _| c(real_coords[j], real_coords[n + j]));
        let a = self.a(&cplx);
        a.sub(&a.adjoint()).scaled(c(0.0, std::f64::consts::FRAC_1_SQRT_2))
    }
}

/// CAR representation over the orthonormal basis of `sol`.
pub fn build_car(sol: &SolutionSpace) -> Result<CarRep> {
    CarRep::new(sol.dim())
}

/// Self-dual CAR generators over the real span of `{e_j, i e_j}`.
#[derive(Debug, Clone)]
pub struct SelfDualCarRep {
    pub car: CarRep,
    pub generators: Vec<FockOp>,
}

pub fn build_selfdual_car(sol: &SolutionSpace) -> Result<SelfDualCarRep> {
    selfdual_from(build_car(sol)?)
}

pub fn selfdual_from(car: CarRep) -> Result<SelfDualCarRep> {
    let n = car.modes();
    let generators = (0..2 * n)
        .map(|m| {
            let mut e = DVector::zeros(2 * n);
            e[m] = 1.0;
            car.b(&e)
        })
        .collect();
    Ok(SelfDualCarRep { car, generators })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarReport {
    pub modes: usize,
    pub fock_dim: usize,
    /// max ‖{a_i, a_j}‖
    pub aa: f64,
    /// max ‖{a_i*, a_j} − δ_ij‖
    pub a_dag_a: f64,
    pub odd_defect: f64,
    pub selfdual_hermitian: f64,
    /// max ‖{b_i, b_j} − δ_ij‖ over the real orthonormal basis
    pub bb: f64,
}

pub fn car_report(rep: &SelfDualCarRep) -> CarReport {
    let car = &rep.car;
    let n = car.modes();
    let delta = |i: usize, j: usize| re(if i == j { 1.0 } else { 0.0 });
    let (mut aa, mut ada, mut odd) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let ai = &car.annihilators[i];
        odd = odd.max(car.grading.anticomm(ai).max_abs());
        for j in 0..n {
            let aj = &car.annihilators[j];
            aa = aa.max(ai.anticomm(aj).max_abs());
            ada = ada.max(ai.adjoint().anticomm(aj).distance_to_scalar(delta(i, j)));
        }
    }
    let (mut herm, mut bb) = (0.0f64, 0.0f64);
    for (i, bi) in rep.generators.iter().enumerate() {
        herm = herm.max(bi.sub(&bi.adjoint()).max_abs());
        for (j, bj) in rep.generators.iter().enumerate() {
            bb = bb.max(bi.anticomm(bj).distance_to_scalar(delta(i, j)));
        }
    }
    CarReport { modes: n, fock_dim: car.fock_dim(), aa, a_dag_a: ada, odd_defect: odd, selfdual_hermitian: herm, bb }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub samples: usize,
    /// max | ‖a(v)‖ − |v| | / |v|
    pub a_norm: f64,
    /// max | ‖b(v)‖ − |v|/√2 | / |v|
    pub b_norm: f64,
}

pub fn norm_check<R: Rng>(rep: &SelfDualCarRep, samples: usize, rng: &mut R) -> NormReport {
    let n = rep.car.modes();
    let (mut an, mut bn) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let v = crate::linalg::random_cvec(rng, n);
        an = an.max((rep.car.a(&v).norm() - v.norm()).abs() / v.norm());
        let w = crate::linalg::random_rvec(rng, 2 * n);
        bn = bn.max((rep.car.b(&w).norm() - w.norm() * std::f64::consts::FRAC_1_SQRT_2).abs() / w.norm());
    }
    NormReport { samples, a_norm: an, b_norm: bn }
}

/// Fermionic fields `Φ(f) = −a(Gf)*` and `Φ⁺(f) = a(Gf)`.
pub struct FermionicFields<'a> {
    pub sol: &'a SolutionSpace,
    pub gp: &'a GreenPair,
    pub car: &'a CarRep,
}

impl FermionicFields<'_> {
    pub fn coords(&self, f: &Section) -> Result<CVec> {
        let op = self.gp.operator();
        let m = op.margin_rows();
        if let Some((lo, hi)) = f.time_support() {
            if lo < m.start || hi >= m.end {
                return domain("test section must be supported in the margin interior");
            }
        }
        let floor = f.norm() / op.stencil().max_abs_coeff().max(1.0) / op.lattice().volume_weight().sqrt();
        self.sol.coordinates_with_floor(&self.gp.propagator(f)?, floor)
    }

    pub fn phi(&self, f: &Section) -> Result<FockOp> {
        Ok(self.car.a_dag(&self.coords(f)?).scaled(re(-1.0)))
    }

    pub fn phi_plus(&self, f: &Section) -> Result<FockOp> {
        Ok(self.car.a(&self.coords(f)?))
    }
}

pub fn fermionic_fields(car: &CarRep, sol: &SolutionSpace, gp: &GreenPair, f: &Section) -> Result<(FockOp, FockOp)> {
    let fields = FermionicFields { sol, gp, car };
    Ok((fields.phi(f)?, fields.phi_plus(f)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldReport {
    pub samples: usize,
    /// max ‖{Φ(f),Φ(g)}‖
    pub phi_phi: f64,
    /// max ‖{Φ(f),Φ⁺(g)} − i⟪Gf,g⟫‖ relative to |⟪Gf,g⟫| + 1
    pub phi_phi_plus: f64,
    /// max ‖Φ(Pf)‖
    pub field_equation: f64,
}

pub fn field_check<R: Rng>(fields: &FermionicFields, samples: usize, rng: &mut R) -> Result<FieldReport> {
    let op = fields.gp.operator();
    let cut = op.lattice().n_t / 2;
    let mut rep = FieldReport { samples, phi_phi: 0.0, phi_phi_plus: 0.0, field_equation: 0.0 };
    for _ in 0..samples {
        let f = fields.sol.random_source(cut, rng)?;
        let g = fields.sol.random_source(cut, rng)?;
        let (pf, pg) = (fields.phi(&f)?, fields.phi(&g)?);
        rep.phi_phi = rep.phi_phi.max(pf.anticomm(&pg).max_abs());
        let pgp = fields.phi_plus(&g)?;
        let expect = C64::i() * op.pair(&fields.gp.propagator(&f)?, &g)?;
        let d = pf.anticomm(&pgp).distance_to_scalar(expect) / (1.0 + expect.norm());
        rep.phi_phi_plus = rep.phi_phi_plus.max(d);
        let r = op.radius();
        let m = op.margin_rows();
        let h = Section::random(op.lattice(), op.fiber_dim(), ScalarKind::Complex, m.start + r..m.end - r, 1.0, rng);
        rep.field_equation = rep.field_equation.max(fields.phi(&op.apply(&h)?)?.max_abs());
    }
    Ok(rep)
}

/// `⟨Ω, X₁⋯X_n Ω⟩` in the Fock vacuum.
pub fn ferm_npoint(car: &CarRep, factors: &[FockOp]) -> C64 {
    let mut v = car.vacuum.clone();
    for m in factors.iter().rev() {
        v = m.apply(&v);
    }
    car.vacuum.dotc(&v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyIdentityReport {
    pub samples: usize,
    /// max over pairs and cuts of |(Gf,G₊g)_t + iΣ_{s≤t}⟪Gf,g⟫_s| / scale
    pub retarded: f64,
    /// same for |(Gf,G₋g)_t − iΣ_{s>t}⟪Gf,g⟫_s|
    pub advanced: f64,
    /// |(Gf,Gg)_t + i⟪Gf,g⟫|
    pub full: f64,
}

/// Per-slice contributions `dt·dx·Σ_x ⟨φ,ψ⟩` on every slice.
fn slice_pairings(op: &LatticeOperator, phi: &Section, psi: &Section) -> Vec<C64> {
    let l = op.lattice();
    let p = op.pairing();
    (0..l.n_t)
        .map(|t| {
            let s: C64 = (0..l.n_x).map(|x| p.eval(phi.fiber(t, x), psi.fiber(t, x))).sum();
            s * re(l.volume_weight())
        })
        .collect()
}

pub fn key_identity_check<R: Rng>(gp: &GreenPair, samples: usize, rng: &mut R) -> Result<KeyIdentityReport> {
    let op = gp.operator();
    let sp = SliceProduct::new(op);
    let mut rep = KeyIdentityReport { samples, retarded: 0.0, advanced: 0.0, full: 0.0 };
    for _ in 0..samples {
        let f = op.random_margin_section(rng);
        let g = op.random_margin_section(rng);
        let gf = gp.propagator(&f)?;
        let (gpg, gmg) = (gp.retarded(&g)?, gp.advanced(&g)?);
        let rows = slice_pairings(op, &gf, &g);
        let total: C64 = rows.iter().sum();
        let scale = gf.norm() * g.norm() + f64::MIN_POSITIVE;
        for t in sp.admissible() {
            let past: C64 = rows[..=t].iter().sum();
            let lhs_r = sp.eval(&gf, &gpg, t)?;
            let lhs_a = sp.eval(&gf, &gmg, t)?;
            rep.retarded = rep.retarded.max((lhs_r + C64::i() * past).norm() / scale);
            rep.advanced = rep.advanced.max((lhs_a - C64::i() * (total - past)).norm() / scale);
            rep.full = rep.full.max((lhs_r - lhs_a + C64::i() * total).norm() / scale);
        }
    }
    Ok(rep)
}

/// Continuum plane-wave solution `χ e^{i(kx − Et)}` of the 1+1 Dirac
/// equation with `E = +sqrt(k² + m²)` and `χ = (E + k, m)`.
fn dirac_plane_wave(l: &LatticeSpacetime, m0: f64, k: f64, amp: C64) -> Section {
    let e = (k * k + m0 * m0).sqrt();
    let chi = [re(e + k), re(m0)];
    let mut s = Section::zeros(l, 2, ScalarKind::Complex);
    for t in 0..l.n_t {
        for x in 0..l.n_x {
            let ph = C64::from_polar(1.0, k * x as f64 * l.dx - e * t as f64 * l.dt) * amp;
            for (c, v) in chi.iter().enumerate() {
                s.set(t, x, c, v * ph);
            }
        }
    }
    s
}

/// Discrete slice product against `dx·Σ ψ_t^† φ_t` for smooth physical
/// solutions on the circle of length 2 with `dt = dx/2`, over the given
/// spatial resolutions.
pub fn slice_continuum_study(grids: &[usize], m0: f64) -> Result<ConvergenceReport> {
    let length = 2.0;
    let mut values = Vec::new();
    let mut errors = Vec::new();
    for &nx in grids {
        let dx = length / nx as f64;
        let l = LatticeSpacetime::new(16, nx, dx / 2.0, dx)?;
        let op = crate::ops::build_dirac_1p1(&l, m0)?;
        let sol = SolutionSpace::new(&op)?;
        let kk = std::f64::consts::TAU / length;
        let raw_phi = dirac_plane_wave(&l, m0, kk, re(1.0)).add(&dirac_plane_wave(&l, m0, -kk, c(0.3, 0.2)))?;
        let raw_psi = dirac_plane_wave(&l, m0, kk, c(0.5, -0.4)).add(&dirac_plane_wave(&l, m0, -kk, re(0.8)))?;
        let phi = sol.solution(&sol.project(&raw_phi)?)?;
        let psi = sol.solution(&sol.project(&raw_psi)?)?;
        let t = sol.t_star();
        let discrete = slice_product(&op, &phi, &psi, t)?;
        let continuum = continuum_dirac_slice_product(&phi, &psi, t);
        values.push(discrete.re);
        errors.push((discrete - continuum).norm() / continuum.norm());
    }
    Ok(ConvergenceReport::new(grids.to_vec(), values, errors))
}
