//! Symplectic space of a Green-hyperbolic operator, the symbolic Weyl
//! algebra over an integer lattice of classes, its ℓ² representation,
//! quasi-free states and bosonic n-point functions.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};
use crate::green::{solution_from_cauchy, CauchyData, GreenPair};
use crate::linalg::{c, hermitian_eigen, re, CMat};
use crate::ops::{build_dalembert, LatticeOperator, ScalarKind, Section};
use crate::quant_ferm::boundary_form_matrix;
use crate::C64;

/// `SYMPL` in canonical coordinates: Cauchy data of `Gf` on the slices
/// `t* − r + 1 ..= t* + r` with `t* = ⌊n_t/2⌋`.
#[derive(Debug, Clone)]
pub struct SymplSpace {
    gp: GreenPair,
    start: usize,
    slices: usize,
    /// `ω(f,g) = a_f^T Ω a_g` on coordinates.
    omega: DMatrix<f64>,
}

/// Class `[f]` with its representative and canonical coordinates.
#[derive(Debug, Clone)]
pub struct SymplClass {
    pub f: Section,
    pub gf: Section,
    pub coords: DVector<f64>,
}

impl SymplClass {
    pub fn same_class(&self, other: &SymplClass) -> bool {
        let scale = self.coords.amax().max(other.coords.amax()).max(1.0);
        (&self.coords - &other.coords).amax() <= 1e-10 * scale
    }
}

fn check_margin(op: &LatticeOperator, f: &Section) -> Result<()> {
    op.check_section(f)?;
    if let Some((lo, hi)) = f.time_support() {
        let m = op.margin_rows();
        if lo < m.start || hi >= m.end {
            return domain(format!("source occupies slices {lo}..={hi}, outside the margin {}..{}", m.start, m.end));
        }
    }
    Ok(())
}

impl SymplSpace {
    pub fn new(gp: &GreenPair) -> Result<Self> {
        let op = gp.operator();
        if op.kind() != ScalarKind::Real {
            return domain(format!("{} has complex sections; the symplectic space needs a real operator", op.name));
        }
        let r = op.radius();
        let t_star = op.lattice().n_t / 2;
        let w = boundary_form_matrix(op);
        let omega = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| -w[(j, i)].re);
        Ok(Self { gp: gp.clone(), start: t_star + 1 - r, slices: 2 * r, omega })
    }

    pub fn green(&self) -> &GreenPair {
        &self.gp
    }

    pub fn operator(&self) -> &LatticeOperator {
        self.gp.operator()
    }

    pub fn t_star(&self) -> usize {
        self.start + self.slices / 2 - 1
    }

    /// `2r·k·n_x`.
    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega_matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn coords_of_solution(&self, u: &Section) -> Result<DVector<f64>> {
        let d = CauchyData::of(u, self.start, self.slices)?;
        Ok(DVector::from_iterator(d.values.len(), d.values.iter().map(|z| z.re)))
    }

    pub fn class(&self, f: &Section) -> Result<SymplClass> {
        if f.kind() != ScalarKind::Real {
            return domain("symplectic classes need real sections");
        }
        check_margin(self.operator(), f)?;
        let gf = self.gp.propagator(f)?;
        let coords = self.coords_of_solution(&gf)?;
        Ok(SymplClass { f: f.clone(), gf, coords })
    }

    /// Class whose propagated solution has the given Cauchy data, realized
    /// by the source `P(θu)`.
    pub fn class_from_coords(&self, coords: &DVector<f64>) -> Result<SymplClass> {
        if coords.len() != self.dim() {
            return shape("coordinate vector has wrong length");
        }
        let op = self.operator();
        let data =
            CauchyData { t_star: self.start, slices: self.slices, k: op.fiber_dim(), values: coords.iter().map(|&v| re(v)).collect() };
        let u = solution_from_cauchy(op, &data)?;
        let cut = op.margin_rows().start + op.radius();
        let mut theta = u;
        for t in 0..cut {
            theta.slice_mut(t).iter_mut().for_each(|v| *v = re(0.0));
        }
        let f = op.apply(&theta)?;
        self.class(&f)
    }

    /// `ω([f],[g]) = ⟪Gf, g⟫`.
    pub fn omega(&self, f: &SymplClass, g: &SymplClass) -> Result<f64> {
        Ok(self.operator().pair(&f.gf, &g.f)?.re)
    }

    pub fn omega_coords(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.omega * b))
    }

    /// Gram matrix `[ω(cᵢ,cⱼ)]`.
    pub fn gram(&self, classes: &[SymplClass]) -> Result<DMatrix<f64>> {
        let n = classes.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.omega(&classes[i], &classes[j])?;
            }
        }
        Ok(g)
    }

    /// Classes whose data span the solution space. Time-steppable operators
    /// get the unit Cauchy data; constrained ones get propagated unit
    /// sources, kept greedily while they add a new data direction.
    pub fn basis_classes(&self) -> Result<Vec<SymplClass>> {
        let op = self.operator();
        if op.stepping().steppable {
            return (0..self.dim()).map(|i| self.class_from_coords(&DVector::from_fn(self.dim(), |j, _| (i == j) as u8 as f64))).collect();
        }
        let l = op.lattice();
        let k = op.fiber_dim();
        let want = op.solution_dim();
        let m = op.margin_rows();
        let mut kept: Vec<SymplClass> = Vec::new();
        let mut ortho: Vec<DVector<f64>> = Vec::new();
        'outer: for t in m.start..m.end {
            for x in 0..l.n_x {
                for comp in 0..k {
                    let f = Section::delta(l, k, op.kind(), crate::lattice::Point::new(t, x), comp, re(1.0))?;
                    let cls = self.class(&f)?;
                    let mut v = cls.coords.clone();
                    for q in &ortho {
                        v -= q * q.dot(&v);
                    }
                    if v.norm() > 1e-8 * cls.coords.norm().max(f64::MIN_POSITIVE) {
                        ortho.push(&v / v.norm());
                        kept.push(cls);
                        if kept.len() == want {
                            break 'outer;
                        }
                    }
                }
            }
        }
        Ok(kept)
    }
}

pub fn sympl_omega(gp: &GreenPair, f: &Section, g: &Section) -> Result<f64> {
    let op = gp.operator();
    check_margin(op, f)?;
    check_margin(op, g)?;
    Ok(op.pair(&gp.propagator(f)?, g)?.re)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymplRankReport {
    pub classes: usize,
    pub rank: usize,
    pub expected_dim: usize,
    pub full_rank: bool,
}

/// Rank of the ω-Gram matrix of `classes`; singular values count when above
/// `1e-8·‖Ω‖·max|c|²`, so a degenerate family is not rescued by roundoff.
pub fn sympl_rank_check(space: &SymplSpace, classes: &[SymplClass]) -> Result<SymplRankReport> {
    let g = space.gram(classes)?;
    let size = classes.iter().map(|c| c.coords.norm_squared()).fold(0.0, f64::max);
    let scale = space.omega_matrix().norm() * size;
    let sv = crate::linalg::singular_values(&g.map(re));
    let rank = sv.iter().filter(|&&s| s > crate::linalg::RANK_REL_TOL * scale).count();
    Ok(SymplRankReport { classes: classes.len(), rank, expected_dim: space.operator().solution_dim(), full_rank: rank == classes.len() })
}

/// `w(Σ nᵢ[fᵢ])` over a fixed generator list.
pub type WeylWord = Vec<i64>;

/// Finite combination of Weyl words; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeylPolynomial {
    terms: BTreeMap<WeylWord, C64>,
}

impl WeylPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn unit(p: usize) -> Self {
        Self::word(vec![0; p], re(1.0))
    }

    pub fn word(w: WeylWord, coeff: C64) -> Self {
        let mut out = Self::zero();
        out.push(w, coeff);
        out
    }

    fn push(&mut self, w: WeylWord, coeff: C64) {
        match self.terms.entry(w) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if *e.get() == re(0.0) {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                if coeff != re(0.0) {
                    e.insert(coeff);
                }
            }
        }
    }

    pub fn terms(&self) -> &BTreeMap<WeylWord, C64> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, v) in &other.terms {
            out.push(w.clone(), *v);
        }
        out
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = Self::zero();
        for (w, v) in &self.terms {
            out.push(w.clone(), v * s);
        }
        out
    }

    /// Largest coefficient difference over the union of words.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for (w, v) in &self.terms {
            d = d.max((v - other.terms.get(w).copied().unwrap_or(re(0.0))).norm());
        }
        for (w, v) in &other.terms {
            if !self.terms.contains_key(w) {
                d = d.max(v.norm());
            }
        }
        d
    }
}

/// ω-Gram of a generator list; fixes the product of the Weyl algebra.
#[derive(Debug, Clone)]
pub struct WeylAlgebra {
    pub omega: DMatrix<f64>,
}

impl WeylAlgebra {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() {
            return shape("ω-Gram must be square");
        }
        let omega = (&omega - omega.transpose()) * 0.5;
        Ok(Self { omega })
    }

    pub fn from_classes(space: &SymplSpace, generators: &[SymplClass]) -> Result<Self> {
        Self::new(space.gram(generators)?)
    }

    pub fn generators(&self) -> usize {
        self.omega.nrows()
    }

    /// `ω(a,b)` for integer words, summed over `i < j` with the integer
    /// coefficient `aᵢbⱼ − aⱼbᵢ` so that antisymmetry holds bit for bit.
    pub fn omega_words(&self, a: &[i64], b: &[i64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                let k = a[i] * b[j] - a[j] * b[i];
                if k != 0 {
                    s += k as f64 * self.omega[(i, j)];
                }
            }
        }
        s
    }

    pub fn generator(&self, i: usize) -> WeylPolynomial {
        let mut w = vec![0; self.generators()];
        w[i] = 1;
        WeylPolynomial::word(w, re(1.0))
    }
}

/// `w(a)·w(b) = e^{−iω(a,b)/2} w(a+b)`, extended bilinearly.
pub fn weyl_mul(a: &WeylPolynomial, b: &WeylPolynomial, alg: &WeylAlgebra) -> WeylPolynomial {
    let mut out = WeylPolynomial::zero();
    for (wa, ca) in &a.terms {
        for (wb, cb) in &b.terms {
            let phase = C64::from_polar(1.0, -alg.omega_words(wa, wb) / 2.0);
            let sum: WeylWord = wa.iter().zip(wb).map(|(x, y)| x + y).collect();
            out.push(sum, ca * cb * phase);
        }
    }
    out
}

/// `(c·w(a))* = c̄·w(−a)`.
pub fn weyl_star(a: &WeylPolynomial) -> WeylPolynomial {
    let mut out = WeylPolynomial::zero();
    for (w, v) in &a.terms {
        out.push(w.iter().map(|x| -x).collect(), v.conj());
    }
    out
}

pub fn weyl_commutator(a: &WeylPolynomial, b: &WeylPolynomial, alg: &WeylAlgebra) -> WeylPolynomial {
    weyl_mul(a, b, alg).add(&weyl_mul(b, a, alg).scaled(re(-1.0)))
}

pub fn random_word<R: Rng>(p: usize, reach: i64, rng: &mut R) -> WeylWord {
    (0..p).map(|_| rng.gen_range(-reach..=reach)).collect()
}

pub fn random_polynomial<R: Rng>(p: usize, terms: usize, rng: &mut R) -> WeylPolynomial {
    let mut out = WeylPolynomial::zero();
    for _ in 0..terms {
        out.push(random_word(p, 2, rng), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    out
}

/// Finitely supported function on the integer span of the generators.
pub type L2Vector = HashMap<WeylWord, C64>;

/// `(w(φ)F)(ψ) = e^{iω(φ,ψ)/2} F(φ+ψ)`.
pub fn weyl_act(alg: &WeylAlgebra, phi: &[i64], f: &L2Vector) -> L2Vector {
    let mut out = L2Vector::with_capacity(f.len());
    for (chi, v) in f {
        let psi: WeylWord = chi.iter().zip(phi).map(|(a, b)| a - b).collect();
        let phase = C64::from_polar(1.0, alg.omega_words(phi, &psi) / 2.0);
        out.insert(psi, v * phase);
    }
    out
}

pub fn poly_act(alg: &WeylAlgebra, a: &WeylPolynomial, f: &L2Vector) -> L2Vector {
    let mut out = L2Vector::new();
    for (w, cw) in a.terms() {
        for (k, v) in weyl_act(alg, w, f) {
            *out.entry(k).or_insert(re(0.0)) += cw * v;
        }
    }
    out
}

pub fn l2_inner(f: &L2Vector, g: &L2Vector) -> C64 {
    f.iter().filter_map(|(k, v)| g.get(k).map(|w| w.conj() * v)).sum()
}

pub fn l2_distance(f: &L2Vector, g: &L2Vector) -> f64 {
    let mut d = 0.0f64;
    for (k, v) in f {
        d = d.max((v - g.get(k).copied().unwrap_or(re(0.0))).norm());
    }
    for (k, v) in g {
        if !f.contains_key(k) {
            d = d.max(v.norm());
        }
    }
    d
}

pub fn random_l2<R: Rng>(p: usize, support: usize, rng: &mut R) -> L2Vector {
    (0..support).map(|_| (random_word(p, 3, rng), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2RepReport {
    pub samples: usize,
    pub unitarity: f64,
    pub weyl_relation: f64,
    pub symbolic_match: f64,
    pub identity: f64,
}

impl L2RepReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.unitarity <= tol && self.weyl_relation <= tol && self.symbolic_match <= tol && self.identity <= tol
    }
}

pub fn weyl_l2_rep_check<R: Rng>(alg: &WeylAlgebra, samples: usize, rng: &mut R) -> L2RepReport {
    let p = alg.generators();
    let mut rep = L2RepReport { samples, unitarity: 0.0, weyl_relation: 0.0, symbolic_match: 0.0, identity: 0.0 };
    for _ in 0..samples {
        let (f, g) = (random_l2(p, 6, rng), random_l2(p, 6, rng));
        let (a, b) = (random_word(p, 2, rng), random_word(p, 2, rng));
        let scale = 1.0 + l2_inner(&f, &f).re.sqrt() * l2_inner(&g, &g).re.sqrt();
        let u = (l2_inner(&weyl_act(alg, &a, &f), &weyl_act(alg, &a, &g)) - l2_inner(&f, &g)).norm();
        rep.unitarity = rep.unitarity.max(u / scale);
        let ab: WeylWord = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = weyl_act(alg, &a, &weyl_act(alg, &b, &f));
        let rhs: L2Vector =
            weyl_act(alg, &ab, &f).into_iter().map(|(k, v)| (k, v * C64::from_polar(1.0, -alg.omega_words(&a, &b) / 2.0))).collect();
        rep.weyl_relation = rep.weyl_relation.max(l2_distance(&lhs, &rhs));
        let (pa, pb) = (random_polynomial(p, 3, rng), random_polynomial(p, 3, rng));
        let two_step = poly_act(alg, &pa, &poly_act(alg, &pb, &f));
        let symbolic = poly_act(alg, &weyl_mul(&pa, &pb, alg), &f);
        rep.symbolic_match = rep.symbolic_match.max(l2_distance(&two_step, &symbolic));
        rep.identity = rep.identity.max(l2_distance(&weyl_act(alg, &vec![0; p], &f), &f));
    }
    rep
}

/// Quasi-free state `τ(w(φ)) = exp(−μ(φ,φ)/4)` with covariance `μ` and
/// symplectic form `ω`, both on canonical coordinates.
#[derive(Debug, Clone)]
pub struct QuasiFreeState {
    pub mu: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

impl QuasiFreeState {
    pub fn new(mu: DMatrix<f64>, omega: DMatrix<f64>) -> Result<Self> {
        if mu.shape() != omega.shape() || !mu.is_square() {
            return shape("covariance and symplectic form disagree in dimension");
        }
        if (&mu - mu.transpose()).amax() > 1e-12 * mu.amax().max(1.0) {
            return domain("covariance must be symmetric");
        }
        Ok(Self { mu, omega })
    }

    pub fn mu(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.mu * b))
    }

    pub fn omega(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.omega * b))
    }

    pub fn weyl_expectation(&self, a: &DVector<f64>) -> f64 {
        (-self.mu(a, a) / 4.0).exp()
    }

    /// `τ₂ = μ/2 + iω/2`.
    pub fn two_point(&self, a: &DVector<f64>, b: &DVector<f64>) -> C64 {
        c(self.mu(a, b) / 2.0, self.omega(a, b) / 2.0)
    }

    /// The state restricted to the Weyl algebra over a generator list.
    pub fn on_generators(&self, generators: &[DVector<f64>]) -> GeneratorState {
        let p = generators.len();
        let mut mu = DMatrix::zeros(p, p);
        let mut om = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                mu[(i, j)] = self.mu(&generators[i], &generators[j]);
                om[(i, j)] = self.omega(&generators[i], &generators[j]);
            }
        }
        GeneratorState { mu, alg: WeylAlgebra { omega: om } }
    }

    /// `max(0, ¼ω(a,b)² − μ(a,a)μ(b,b))`.
    pub fn domination_defect(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let w = self.omega(a, b);
        (0.25 * w * w - self.mu(a, a) * self.mu(b, b)).max(0.0)
    }
}

/// A quasi-free state seen on integer words over fixed generators.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub mu: DMatrix<f64>,
    pub alg: WeylAlgebra,
}

impl GeneratorState {
    pub fn tau_word(&self, w: &[i64]) -> f64 {
        let v = DVector::from_iterator(w.len(), w.iter().map(|&x| x as f64));
        (-v.dot(&(&self.mu * &v)) / 4.0).exp()
    }

    pub fn tau(&self, a: &WeylPolynomial) -> C64 {
        a.terms().iter().map(|(w, v)| v * self.tau_word(w)).sum()
    }

    /// Smallest eigenvalue of `[τ(wᵢ* wⱼ)]`.
    pub fn gram_min_eigenvalue(&self, words: &[WeylWord]) -> f64 {
        let n = words.len();
        let g = CMat::from_fn(n, n, |i, j| {
            let a = WeylPolynomial::word(words[i].clone(), re(1.0));
            let b = WeylPolynomial::word(words[j].clone(), re(1.0));
            self.tau(&weyl_mul(&weyl_star(&a), &b, &self.alg))
        });
        hermitian_eigen(&g).0[0]
    }
}

/// Real orthonormal Fourier basis of `ℝ^n` (columns) and the mode index of
/// each column.
pub fn real_fourier_basis(n: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut cols = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    let tau = std::f64::consts::TAU;
    cols.push(DVector::from_element(n, 1.0 / (n as f64).sqrt()));
    modes.push(0);
    for k in 1..n.div_ceil(2) {
        let s = (2.0 / n as f64).sqrt();
        cols.push(DVector::from_fn(n, |x, _| s * (tau * (k * x) as f64 / n as f64).cos()));
        cols.push(DVector::from_fn(n, |x, _| s * (tau * (k * x) as f64 / n as f64).sin()));
        modes.push(k);
        modes.push(k);
    }
    if n % 2 == 0 && n > 1 {
        cols.push(DVector::from_fn(n, |x, _| if x % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt()));
        modes.push(n / 2);
    }
    (DMatrix::from_columns(&cols), modes)
}

/// `ω_k = sqrt(m₀² + (2/dx · sin(πk/n_x))²)`.
pub fn mode_frequency(m0: f64, dx: f64, n_x: usize, k: usize) -> f64 {
    let s = 2.0 / dx * (std::f64::consts::PI * k as f64 / n_x as f64).sin();
    (m0 * m0 + s * s).sqrt()
}

/// Map from Cauchy data `(φ_{t*}, φ_{t*+1})` to `(q, p)` with
/// `q = φ_{t*}` and `p = dx(φ_{t*+1} − φ_{t*})/dt`.
pub fn canonical_map(space: &SymplSpace) -> Result<DMatrix<f64>> {
    let op = space.operator();
    if op.radius() != 1 || op.order() != 2 {
        return domain("canonical (q, p) coordinates need a second-order operator of time radius 1");
    }
    let l = op.lattice();
    let n = l.n_x * op.fiber_dim();
    let s = l.dx / l.dt;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        a[(n + i, i)] = -s;
        a[(n + i, n + i)] = s;
    }
    Ok(a)
}

/// Ground-state covariance of each component's mode oscillators, mass `dx`.
pub fn vacuum_with_mass(space: &SymplSpace, m0: f64) -> Result<QuasiFreeState> {
    if !(m0 > 0.0) {
        return domain("the shipped vacuum needs m₀ > 0 (the k = 0 mode has zero frequency otherwise)");
    }
    let op = space.operator();
    let l = op.lattice();
    let k = op.fiber_dim();
    let a = canonical_map(space)?;
    let (u, modes) = real_fourier_basis(l.n_x);
    let freqs: Vec<f64> = modes.iter().map(|&m| mode_frequency(m0, l.dx, l.n_x, m)).collect();
    let mass = l.dx;
    let wq = &u * DMatrix::from_diagonal(&DVector::from_iterator(l.n_x, freqs.iter().map(|w| mass * w))) * u.transpose();
    let wp = &u * DMatrix::from_diagonal(&DVector::from_iterator(l.n_x, freqs.iter().map(|w| 1.0 / (mass * w)))) * u.transpose();
    let n = l.n_x * k;
    let mut mu_qp = DMatrix::zeros(2 * n, 2 * n);
    for x in 0..l.n_x {
        for y in 0..l.n_x {
            for comp in 0..k {
                mu_qp[(x * k + comp, y * k + comp)] = wq[(x, y)];
                mu_qp[(n + x * k + comp, n + y * k + comp)] = wp[(x, y)];
            }
        }
    }
    let mu = a.transpose() * mu_qp * &a;
    let mu = (&mu + mu.transpose()) * 0.5;
    QuasiFreeState::new(mu, space.omega_matrix().clone())
}

/// Ground state of the ultrastatic wave operator carried by `space`.
pub fn default_vacuum(space: &SymplSpace) -> Result<QuasiFreeState> {
    let op = space.operator();
    let l = op.lattice();
    if op.fiber_dim() != 1 || !op.site_terms().is_empty() {
        return domain("the default vacuum is defined for the scalar wave operator");
    }
    let centre = op.stencil().entries().iter().find(|e| e.dt == 0 && e.dx == 0).map(|e| e.coeff[(0, 0)].re);
    let m2 = centre.unwrap_or(0.0) + 2.0 / (l.dt * l.dt) - 2.0 / (l.dx * l.dx);
    let m0 = m2.max(0.0).sqrt();
    let reference = build_dalembert(l, m0, None)?;
    let same = op.stencil().entries().len() == reference.stencil().entries().len()
        && op.stencil().entries().iter().all(|e| {
            reference.stencil().entries().iter().any(|g| {
                g.dt == e.dt && g.dx == e.dx && (g.coeff[(0, 0)] - e.coeff[(0, 0)]).norm() <= 1e-9 * (1.0 + e.coeff[(0, 0)].norm())
            })
        });
    if !same {
        return domain("the default vacuum is defined for the scalar wave operator");
    }
    vacuum_with_mass(space, m0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateReport {
    pub normalization: f64,
    pub domination_pairs: usize,
    pub domination_defect: f64,
    pub families: usize,
    pub min_gram_eigenvalue: f64,
}

impl StateReport {
    pub fn passes(&self) -> bool {
        (self.normalization - 1.0).abs() == 0.0 && self.domination_defect == 0.0 && self.min_gram_eigenvalue >= -1e-10
    }
}

/// Normalization, domination on random coordinate pairs and positivity on
/// random word families.
pub fn state_check<R: Rng>(state: &QuasiFreeState, generators: &[DVector<f64>], pairs: usize, families: usize, rng: &mut R) -> StateReport {
    let d = state.mu.nrows();
    let mut dom = 0.0f64;
    for _ in 0..pairs {
        let a = crate::linalg::random_rvec(rng, d);
        let b = crate::linalg::random_rvec(rng, d);
        dom = dom.max(state.domination_defect(&a, &b));
    }
    let gs = state.on_generators(generators);
    let p = generators.len();
    let mut min_eig = f64::INFINITY;
    for _ in 0..families {
        let n = rng.gen_range(2..=8);
        let words: Vec<WeylWord> = (0..n).map(|_| random_word(p, 1, rng)).collect();
        min_eig = min_eig.min(gs.gram_min_eigenvalue(&words));
    }
    StateReport {
        normalization: gs.tau(&WeylPolynomial::unit(p)).re,
        domination_pairs: pairs,
        domination_defect: dom,
        families,
        min_gram_eigenvalue: min_eig,
    }
}

/// Sum over perfect matchings of `Π τ₂(i,j)`, `i < j`.
pub fn wick(tau2: &CMat, idx: &[usize]) -> C64 {
    match idx.len() {
        0 => re(1.0),
        n if n % 2 == 1 => re(0.0),
        _ => {
            let first = idx[0];
            let mut acc = re(0.0);
            for j in 1..idx.len() {
                let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|(p, _)| *p + 1 != j).map(|(_, v)| *v).collect();
                acc += tau2[(first, idx[j])] * wick(tau2, &rest);
            }
            acc
        }
    }
}

/// `τ_n` on canonical coordinates.
pub fn npoint_coords(state: &QuasiFreeState, coords: &[DVector<f64>]) -> C64 {
    let n = coords.len();
    let tau2 = CMat::from_fn(n, n, |i, j| state.two_point(&coords[i], &coords[j]));
    wick(&tau2, &(0..n).collect::<Vec<_>>())
}

/// `τ_n(f₁,…,f_n)`.
pub fn npoint(state: &QuasiFreeState, space: &SymplSpace, fs: &[Section]) -> Result<C64> {
    let coords = fs.iter().map(|f| space.class(f).map(|c| c.coords)).collect::<Result<Vec<_>>>()?;
    Ok(npoint_coords(state, &coords))
}

/// `τ(w(t₁f₁)⋯w(t_nf_n))` in closed form.
pub fn generating_functional(state: &QuasiFreeState, coords: &[DVector<f64>], t: &[f64]) -> C64 {
    let n = coords.len();
    let mut phase = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            phase += t[i] * t[j] * state.omega(&coords[i], &coords[j]);
        }
    }
    let sum = coords.iter().zip(t).fold(DVector::zeros(coords[0].len()), |acc, (c, &ti)| acc + c * ti);
    C64::from_polar(state.weyl_expectation(&sum), -phase / 2.0)
}

/// `(−i)^n ∂^n/∂t₁⋯∂t_n` at zero by central differences with step `h`.
pub fn npoint_central_difference(state: &QuasiFreeState, coords: &[DVector<f64>], h: f64) -> C64 {
    let n = coords.len();
    let mut acc = re(0.0);
    for mask in 0..1u32 << n {
        let t: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { h } else { -h }).collect();
        let sign = if (n as u32 - mask.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        acc += generating_functional(state, coords, &t) * sign;
    }
    acc / (2.0 * h).powi(n as i32) * C64::new(0.0, -1.0).powi(n as i32)
}

/// Central differences at `h, h/2, h/4` with two Richardson steps.
pub fn npoint_finite_difference(state: &QuasiFreeState, coords: &[DVector<f64>], h: f64) -> C64 {
    let d: Vec<C64> = [h, h / 2.0, h / 4.0].iter().map(|&s| npoint_central_difference(state, coords, s)).collect();
    let r1 = (d[1] * 4.0 - d[0]) / 3.0;
    let r2 = (d[2] * 4.0 - d[1]) / 3.0;
    (r2 * 16.0 - r1) / 15.0
}

/// `⟨Φ(q₁,p₁)Φ(q₂,p₂)⟩` in the ground state of `P²/2M + Mω²Q²/2`, where
/// `Φ(q,p) = pQ − qP`; the Hamiltonian is diagonalized in a truncated number
/// basis of a reference oscillator.
pub fn oscillator_two_point(mass: f64, freq: f64, a: (f64, f64), b: (f64, f64), levels: usize) -> C64 {
    let lambda = 1.5 * mass * freq;
    let mut lower = CMat::zeros(levels, levels);
    for n in 1..levels {
        lower[(n - 1, n)] = re((n as f64).sqrt());
    }
    let raise = lower.adjoint();
    let q = (&lower + &raise) * re(1.0 / (2.0 * lambda).sqrt());
    let p = (&raise - &lower) * c(0.0, (lambda / 2.0).sqrt());
    let h = &p * &p * re(1.0 / (2.0 * mass)) + &q * &q * re(mass * freq * freq / 2.0);
    let (_, vecs) = hermitian_eigen(&h);
    let g = vecs.column(0).into_owned();
    let field = |(qq, pp): (f64, f64)| &q * re(pp) - &p * re(qq);
    let v = field(a) * field(b) * &g;
    g.dotc(&v)
}

/// Class whose data sits in a single real Fourier mode: `q = α·u_j`,
/// `p = β·u_j`.
pub fn single_mode_class(space: &SymplSpace, column: usize, alpha: f64, beta: f64) -> Result<SymplClass> {
    let l = space.operator().lattice();
    if space.operator().fiber_dim() != 1 {
        return domain("single-mode classes are defined for scalar fields");
    }
    let (u, _) = real_fourier_basis(l.n_x);
    let n = l.n_x;
    let mut qp = DVector::zeros(2 * n);
    for x in 0..n {
        qp[x] = alpha * u[(x, column)];
        qp[n + x] = beta * u[(x, column)];
    }
    let a = canonical_map(space)?;
    let d = a.try_inverse().ok_or_else(|| crate::Error::Build("canonical map is singular".into()))? * qp;
    space.class_from_coords(&d)
}

/// `max_e |τ₂(Pe, g)|` and `max_e |τ₂(g, Pe)|` over delta probes `e`.
pub fn field_equation_check<F>(two_point: F, space: &SymplSpace, g: &Section) -> Result<f64>
where
    F: Fn(&Section, &Section) -> Result<C64>,
{
    let op = space.operator();
    let l = op.lattice();
    let (m, r) = (op.margin_rows(), op.radius());
    let mut worst = 0.0f64;
    for t in m.start + r..m.end - r {
        for x in 0..l.n_x {
            for comp in 0..op.fiber_dim() {
                let e = Section::delta(l, op.fiber_dim(), ScalarKind::Real, crate::lattice::Point::new(t, x), comp, re(1.0))?;
                let pe = op.apply(&e)?;
                worst = worst.max(two_point(&pe, g)?.norm()).max(two_point(g, &pe)?.norm());
            }
        }
    }
    Ok(worst)
}

/// Two-point function of a quasi-free state as a function of sections.
pub fn state_two_point<'a>(state: &'a QuasiFreeState, space: &'a SymplSpace) -> impl Fn(&Section, &Section) -> Result<C64> + 'a {
    move |f, g| Ok(state.two_point(&space.class(f)?.coords, &space.class(g)?.coords))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcrIdentityReport {
    pub pairs: usize,
    /// `|τ₂(f,g) − τ₂(g,f) − i⟪Gf,g⟫|`.
    pub two_point: f64,
    /// Adjacent-swap identity for `τ₄`.
    pub four_point: f64,
    pub odd: f64,
}

/// CCR identities of the n-point functions on random margin sources.
pub fn ccr_identity_check<R: Rng>(state: &QuasiFreeState, space: &SymplSpace, pairs: usize, rng: &mut R) -> Result<CcrIdentityReport> {
    let op = space.operator();
    let mut rep = CcrIdentityReport { pairs, two_point: 0.0, four_point: 0.0, odd: 0.0 };
    for i in 0..pairs {
        let f = space.class(&crate::green::random_source(op, i, rng))?;
        let g = space.class(&crate::green::random_source(op, i + 1, rng))?;
        let w = space.omega(&f, &g)?;
        let anti = state.two_point(&f.coords, &g.coords) - state.two_point(&g.coords, &f.coords);
        let scale = 1.0 + w.abs();
        rep.two_point = rep.two_point.max((anti - c(0.0, w)).norm() / scale);
        let h = space.class(&crate::green::random_source(op, i + 2, rng))?;
        let k = space.class(&crate::green::random_source(op, i + 3, rng))?;
        let cs = [f.coords.clone(), g.coords.clone(), h.coords.clone(), k.coords.clone()];
        let t4 = npoint_coords(state, &cs);
        let scale4 = 1.0 + t4.norm();
        for j in 0..3 {
            let mut sw = cs.clone();
            sw.swap(j, j + 1);
            let rest: Vec<DVector<f64>> = cs.iter().enumerate().filter(|(p, _)| *p != j && *p != j + 1).map(|(_, v)| v.clone()).collect();
            let lhs = t4 - npoint_coords(state, &sw);
            let rhs = c(0.0, state.omega(&cs[j], &cs[j + 1])) * npoint_coords(state, &rest);
            rep.four_point = rep.four_point.max((lhs - rhs).norm() / scale4);
        }
        rep.odd = rep.odd.max(npoint_coords(state, &cs[..3]).norm()).max(npoint_coords(state, &cs[..1]).norm());
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcrFunctorReport {
    pub generators: usize,
    pub gram_defect: f64,
    pub product_defect: f64,
    pub star_defect: f64,
}

impl CcrFunctorReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.gram_defect <= tol && self.product_defect <= tol && self.star_defect <= tol
    }
}

/// Pushes generator words along a map of sources and checks that the
/// induced map on Weyl polynomials is a *-homomorphism.
pub fn ccr_functor_check<R, F>(
    source: &SymplSpace,
    target: &SymplSpace,
    push: F,
    generators: &[Section],
    samples: usize,
    rng: &mut R,
) -> Result<CcrFunctorReport>
where
    R: Rng,
    F: Fn(&Section) -> Result<Section>,
{
    let src: Vec<SymplClass> = generators.iter().map(|f| source.class(f)).collect::<Result<_>>()?;
    let dst: Vec<SymplClass> = generators.iter().map(|f| target.class(&push(f)?)).collect::<Result<_>>()?;
    let a1 = WeylAlgebra::from_classes(source, &src)?;
    let a2 = WeylAlgebra::from_classes(target, &dst)?;
    let gram_defect = (&a1.omega - &a2.omega).amax();
    let p = generators.len();
    let mut product_defect = 0.0f64;
    let mut star_defect = 0.0f64;
    for _ in 0..samples {
        let (x, y) = (random_polynomial(p, 3, rng), random_polynomial(p, 3, rng));
        // Integer words are carried over unchanged; only the products differ.
        product_defect = product_defect.max(weyl_mul(&x, &y, &a1).distance(&weyl_mul(&x, &y, &a2)));
        star_defect = star_defect.max(weyl_star(&weyl_mul(&x, &y, &a1)).distance(&weyl_mul(&weyl_star(&y), &weyl_star(&x), &a2)));
    }
    Ok(CcrFunctorReport { generators: p, gram_defect, product_defect, star_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::random_source;
    use crate::lattice::LatticeSpacetime;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wave(n_t: usize, n_x: usize, m0: f64) -> SymplSpace {
        let l = LatticeSpacetime::new(n_t, n_x, 0.125, 0.25).unwrap();
        SymplSpace::new(&GreenPair::new(&build_dalembert(&l, m0, None).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn omega_is_skew_and_matches_coordinates() {
        let s = wave(24, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..20 {
            let f = s.class(&random_source(s.operator(), i, &mut rng)).unwrap();
            let g = s.class(&random_source(s.operator(), i + 1, &mut rng)).unwrap();
            let (a, b) = (s.omega(&f, &g).unwrap(), s.omega(&g, &f).unwrap());
            let scale = f.f.norm() * g.f.norm();
            assert!((a + b).abs() <= 1e-10 * scale.max(1.0));
            assert!((a - s.omega_coords(&f.coords, &g.coords)).abs() <= 1e-10 * (1.0 + a.abs()));
            assert!(s.omega(&f, &f).unwrap().abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn canonical_form_is_q_p_minus_p_q() {
        let s = wave(24, 8, 1.0);
        let a = canonical_map(&s).unwrap();
        let n = 8;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, i)] = -1.0;
        }
        assert!((a.transpose() * j * &a - s.omega_matrix()).amax() <= 1e-10);
    }

    #[test]
    fn rank_is_full_and_negative_control_detected() {
        let s = wave(24, 8, 1.0);
        let basis = s.basis_classes().unwrap();
        let rep = sympl_rank_check(&s, &basis).unwrap();
        assert!(rep.full_rank && rep.rank == 16 && rep.expected_dim == 16);
        assert!(!sympl_rank_check(&s, &basis[..1]).unwrap().full_rank);
        let g = s.green().propagator(&basis[3].f).unwrap();
        assert!((s.coords_of_solution(&g).unwrap() - &basis[3].coords).amax() <= 1e-10);
    }

    #[test]
    fn complex_operators_are_rejected() {
        let l = LatticeSpacetime::new(16, 8, 0.125, 0.25).unwrap();
        let d = crate::ops::build_dirac_1p1(&l, 1.0).unwrap();
        assert!(SymplSpace::new(&GreenPair::new(&d).unwrap()).is_err());
    }

    #[test]
    fn pf_is_the_zero_class() {
        let s = wave(24, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = s.operator();
        let r = op.radius();
        let m = op.margin_rows();
        let h = Section::random(op.lattice(), 1, ScalarKind::Real, m.start + r..m.end - r, 0.5, &mut rng);
        let z = s.class(&op.apply(&h).unwrap()).unwrap();
        assert!(z.coords.amax() <= 1e-10);
        let g = s.class(&random_source(op, 0, &mut rng)).unwrap();
        assert!(s.omega(&z, &g).unwrap().abs() <= 1e-10);
        assert!(z.same_class(&s.class(&op.zero_section()).unwrap()));
    }

    #[test]
    fn weyl_algebra_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 4;
        let m = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        let alg = WeylAlgebra::new(&m - m.transpose()).unwrap();
        let one = WeylPolynomial::unit(p);
        let phi = random_word(p, 2, &mut rng);
        let w = WeylPolynomial::word(phi.clone(), re(1.0));
        assert_eq!(weyl_mul(&w, &weyl_star(&w), &alg), one);
        assert_eq!(weyl_star(&weyl_star(&w)), w);
        assert_eq!(weyl_star(&one), one);
        for _ in 0..50 {
            let (a, b, cc) = (random_polynomial(p, 3, &mut rng), random_polynomial(p, 3, &mut rng), random_polynomial(p, 3, &mut rng));
            let l = weyl_mul(&weyl_mul(&a, &b, &alg), &cc, &alg);
            let r = weyl_mul(&a, &weyl_mul(&b, &cc, &alg), &alg);
            assert!(l.distance(&r) <= 1e-12);
            let s1 = weyl_star(&weyl_mul(&a, &b, &alg));
            let s2 = weyl_mul(&weyl_star(&b), &weyl_star(&a), &alg);
            assert!(s1.distance(&s2) <= 1e-12);
        }
        let (x, y) = (random_word(p, 2, &mut rng), random_word(p, 2, &mut rng));
        let (wx, wy) = (WeylPolynomial::word(x.clone(), re(1.0)), WeylPolynomial::word(y.clone(), re(1.0)));
        let group = weyl_mul(&weyl_mul(&weyl_mul(&wx, &wy, &alg), &weyl_star(&wx), &alg), &weyl_star(&wy), &alg);
        let expect = WeylPolynomial::word(vec![0; p], C64::from_polar(1.0, -alg.omega_words(&x, &y)));
        assert!(group.distance(&expect) <= 1e-14);
    }

    #[test]
    fn l2_representation() {
        let s = wave(24, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gens: Vec<SymplClass> = (0..3).map(|i| s.class(&random_source(s.operator(), i, &mut rng)).unwrap()).collect();
        let alg = WeylAlgebra::from_classes(&s, &gens).unwrap();
        let rep = weyl_l2_rep_check(&alg, 30, &mut rng);
        assert!(rep.passes(1e-12), "{rep:?}");
    }

    #[test]
    fn vacuum_is_a_state() {
        let s = wave(24, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = default_vacuum(&s).unwrap();
        let gens: Vec<DVector<f64>> = (0..4).map(|i| s.class(&random_source(s.operator(), i, &mut rng)).unwrap().coords).collect();
        let rep = state_check(&v, &gens, 200, 20, &mut rng);
        assert!(rep.passes(), "{rep:?}");
        assert!(default_vacuum(&wave(24, 8, 0.0)).is_err());
    }

    #[test]
    fn one_mode_two_point_matches_oscillator() {
        let s = wave(24, 8, 1.0);
        let v = default_vacuum(&s).unwrap();
        let l = *s.operator().lattice();
        let (_, modes) = real_fourier_basis(8);
        for col in [0, 1, 4, 7] {
            let f = single_mode_class(&s, col, 0.7, -0.3).unwrap();
            let g = single_mode_class(&s, col, -0.2, 0.9).unwrap();
            let ours = v.two_point(&f.coords, &g.coords);
            let w = mode_frequency(1.0, l.dx, 8, modes[col]);
            let oracle = oscillator_two_point(l.dx, w, (0.7, -0.3), (-0.2, 0.9), 200);
            assert!((ours - oracle).norm() <= 1e-6, "mode {col}: {ours} vs {oracle}");
        }
    }

    #[test]
    fn npoint_identities_and_fd_oracle() {
        let s = wave(24, 8, 1.0);
        let v = default_vacuum(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rep = ccr_identity_check(&v, &s, 10, &mut rng).unwrap();
        assert!(rep.two_point <= 1e-10 && rep.four_point <= 1e-9 && rep.odd == 0.0, "{rep:?}");
        let cs: Vec<DVector<f64>> = (0..4)
            .map(|i| {
                let c = s.class(&random_source(s.operator(), i, &mut rng)).unwrap().coords;
                let n = v.mu(&c, &c).sqrt();
                c / n
            })
            .collect();
        let exact = npoint_coords(&v, &cs);
        let fd = npoint_finite_difference(&v, &cs, 0.2);
        assert!((exact - fd).norm() <= 1e-6, "{exact} vs {fd}");
        assert!((npoint_coords(&v, &cs[..2]) - npoint_finite_difference(&v, &cs[..2], 0.2)).norm() <= 1e-6);
    }

    #[test]
    fn field_equation_holds_and_control_fails() {
        let s = wave(16, 8, 1.0);
        let v = default_vacuum(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_source(s.operator(), 0, &mut rng);
        assert!(field_equation_check(state_two_point(&v, &s), &s, &g).unwrap() <= 1e-10);
        let op = s.operator().clone();
        let bad = |a: &Section, b: &Section| op.pair(a, b).map(|z| z * 0.5);
        assert!(field_equation_check(bad, &s, &g).unwrap() > 1e-3);
    }

    #[test]
    fn proca_vacuum_analogue_solves_field_equation() {
        let l = LatticeSpacetime::new(16, 6, 0.125, 0.25).unwrap();
        let ops = crate::ops::build_proca(&l, 1.0).unwrap();
        let gp = crate::green::proca_green(&ops).unwrap();
        let s = SymplSpace::new(&gp).unwrap();
        let v = vacuum_with_mass(&s, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_source(s.operator(), 0, &mut rng);
        assert!(field_equation_check(state_two_point(&v, &s), &s, &g).unwrap() <= 1e-10);
    }

    #[test]
    fn identity_push_is_identity() {
        let s = wave(24, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gens: Vec<Section> = (0..3).map(|i| random_source(s.operator(), i, &mut rng)).collect();
        let rep = ccr_functor_check(&s, &s, |f| Ok(f.clone()), &gens, 10, &mut rng).unwrap();
        assert!(rep.passes(1e-14), "{rep:?}");
    }

    #[test]
    fn margin_violations_are_errors() {
        let s = wave(24, 8, 1.0);
        let l = *s.operator().lattice();
        let bad = Section::delta(&l, 1, ScalarKind::Real, crate::lattice::Point::new(0, 0), 0, re(1.0)).unwrap();
        assert!(s.class(&bad).is_err());
    }
}
