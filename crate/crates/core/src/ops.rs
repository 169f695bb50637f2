//! Sections, fiber pairings and translation-invariant stencil operators,
//! with the concrete operators: d'Alembert, Proca, 1+1 Dirac and direct sums.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::lattice::{LatticeSpacetime, Point};
use crate::linalg::{c, cond, hermitian_eigen, max_abs, re, CMat};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Real,
    Complex,
}

/// Field configuration over the whole lattice, stored as `(t, x, component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    lattice: LatticeSpacetime,
    k: usize,
    kind: ScalarKind,
    values: Vec<C64>,
}

impl Section {
    pub fn zeros(lattice: &LatticeSpacetime, k: usize, kind: ScalarKind) -> Self {
        Self { lattice: *lattice, k, kind, values: vec![C64::new(0.0, 0.0); lattice.n_points() * k] }
    }

    pub fn from_values(lattice: &LatticeSpacetime, k: usize, kind: ScalarKind, values: Vec<C64>) -> Result<Self> {
        if values.len() != lattice.n_points() * k {
            return shape(format!("expected {} values, got {}", lattice.n_points() * k, values.len()));
        }
        if kind == ScalarKind::Real && values.iter().any(|v| v.im != 0.0) {
            return domain("real section with nonzero imaginary part");
        }
        Ok(Self { lattice: *lattice, k, kind, values })
    }

    /// Unit value at one point and component.
    pub fn delta(lattice: &LatticeSpacetime, k: usize, kind: ScalarKind, p: Point, comp: usize, value: C64) -> Result<Self> {
        lattice.check(p)?;
        let mut s = Self::zeros(lattice, k, kind);
        s.set(p.t, p.x, comp, value);
        Ok(s)
    }

    pub fn lattice(&self) -> &LatticeSpacetime {
        &self.lattice
    }

    pub fn fiber_dim(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    fn offset(&self, t: usize, x: usize) -> usize {
        (t * self.lattice.n_x + x) * self.k
    }

    pub fn get(&self, t: usize, x: usize, comp: usize) -> C64 {
        self.values[self.offset(t, x) + comp]
    }

    pub fn set(&mut self, t: usize, x: usize, comp: usize, v: C64) {
        let o = self.offset(t, x);
        self.values[o + comp] = v;
    }

    pub fn fiber(&self, t: usize, x: usize) -> &[C64] {
        let o = self.offset(t, x);
        &self.values[o..o + self.k]
    }

    pub fn fiber_mut(&mut self, t: usize, x: usize) -> &mut [C64] {
        let o = self.offset(t, x);
        &mut self.values[o..o + self.k]
    }

    /// Values of slice `t`, length `n_x·k`.
    pub fn slice(&self, t: usize) -> &[C64] {
        let n = self.lattice.n_x * self.k;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [C64] {
        let n = self.lattice.n_x * self.k;
        &mut self.values[t * n..(t + 1) * n]
    }

    /// Exact set of points carrying a nonzero component.
    pub fn support(&self) -> BTreeSet<Point> {
        self.values
            .chunks(self.k.max(1))
            .enumerate()
            .filter(|(_, f)| f.iter().any(|v| *v != C64::new(0.0, 0.0)))
            .map(|(i, _)| self.lattice.point(i))
            .collect()
    }

    pub fn time_support(&self) -> Option<(usize, usize)> {
        let s = self.support();
        let lo = s.iter().map(|p| p.t).min()?;
        let hi = s.iter().map(|p| p.t).max()?;
        Some((lo, hi))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == C64::new(0.0, 0.0))
    }

    pub fn check_compatible(&self, other: &Section) -> Result<()> {
        if self.lattice != other.lattice || self.k != other.k {
            return shape("sections live on different lattices or fibers");
        }
        if self.kind != other.kind {
            return shape("sections have different scalar kinds");
        }
        Ok(())
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Section) -> Result<Section> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, s: C64) -> Section {
        let mut out = self.clone();
        if s.im != 0.0 {
            out.kind = ScalarKind::Complex;
        }
        out.values.iter_mut().for_each(|a| *a *= s);
        out
    }

    pub fn axpy(&mut self, a: C64, x: &Section) -> Result<()> {
        if self.lattice != x.lattice || self.k != x.k {
            return shape("axpy on mismatched sections");
        }
        if a.im != 0.0 || x.kind == ScalarKind::Complex {
            self.kind = ScalarKind::Complex;
        }
        self.values.iter_mut().zip(&x.values).for_each(|(s, v)| *s += a * v);
        Ok(())
    }

    pub fn as_complex(&self) -> Section {
        let mut s = self.clone();
        s.kind = ScalarKind::Complex;
        s
    }

    /// Weighted Euclidean norm `(Σ|φ|² dt·dx)^{1/2}`.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.lattice.volume_weight()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Zero every slice outside `rows`.
    pub fn restrict_rows(&self, rows: Range<usize>) -> Section {
        let mut out = self.clone();
        for t in 0..self.lattice.n_t {
            if !rows.contains(&t) {
                out.slice_mut(t).iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            }
        }
        out
    }

    /// `t ↦ n_t − 1 − t`.
    pub fn time_reflect(&self) -> Section {
        let mut out = Section::zeros(&self.lattice, self.k, self.kind);
        let n_t = self.lattice.n_t;
        for t in 0..n_t {
            out.slice_mut(n_t - 1 - t).copy_from_slice(self.slice(t));
        }
        out
    }

    /// Same values on a lattice with `pad` extra slices on each end.
    pub fn padded(&self, pad: usize) -> Section {
        let l = LatticeSpacetime { n_t: self.lattice.n_t + 2 * pad, ..self.lattice };
        let mut out = Section::zeros(&l, self.k, self.kind);
        for t in 0..self.lattice.n_t {
            out.slice_mut(t + pad).copy_from_slice(self.slice(t));
        }
        out
    }

    /// Inverse of [`Section::padded`] on the target lattice.
    pub fn unpadded(&self, target: &LatticeSpacetime, pad: usize) -> Section {
        let mut out = Section::zeros(target, self.k, self.kind);
        for t in 0..target.n_t {
            out.slice_mut(t).copy_from_slice(self.slice(t + pad));
        }
        out
    }

    /// Random values on the slices in `rows`; `density` is the chance a point is filled.
    pub fn random<R: Rng>(
        lattice: &LatticeSpacetime,
        k: usize,
        kind: ScalarKind,
        rows: Range<usize>,
        density: f64,
        rng: &mut R,
    ) -> Section {
        let mut s = Section::zeros(lattice, k, kind);
        for t in rows {
            for x in 0..lattice.n_x {
                if rng.gen::<f64>() >= density {
                    continue;
                }
                for comp in 0..k {
                    let v = match kind {
                        ScalarKind::Real => re(rng.gen_range(-1.0..1.0)),
                        ScalarKind::Complex => c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    };
                    s.set(t, x, comp, v);
                }
            }
        }
        s
    }

    /// Random section supported on a handful of points in `rows`.
    pub fn random_sparse<R: Rng>(
        lattice: &LatticeSpacetime,
        k: usize,
        kind: ScalarKind,
        rows: Range<usize>,
        points: usize,
        rng: &mut R,
    ) -> Section {
        let mut s = Section::zeros(lattice, k, kind);
        for _ in 0..points {
            let t = rng.gen_range(rows.clone());
            let x = rng.gen_range(0..lattice.n_x);
            for comp in 0..k {
                let v = match kind {
                    ScalarKind::Real => re(rng.gen_range(-1.0..1.0)),
                    ScalarKind::Complex => c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                };
                s.set(t, x, comp, v);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingKind {
    SymmetricBilinear,
    Hermitian,
}

/// Constant nondegenerate fiber metric `⟨u, v⟩ = v^† B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberPairing {
    kind: PairingKind,
    matrix: CMat,
    definite: bool,
}

impl FiberPairing {
    pub fn new(kind: PairingKind, matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return shape("pairing matrix must be square");
        }
        let scale = max_abs(&matrix).max(1.0);
        let defect = match kind {
            PairingKind::Hermitian => max_abs(&(&matrix - matrix.adjoint())),
            PairingKind::SymmetricBilinear => {
                if matrix.iter().any(|z| z.im != 0.0) {
                    return domain("real pairing with complex entries");
                }
                max_abs(&(&matrix - matrix.transpose()))
            }
        };
        if defect > 1e-14 * scale {
            return domain("pairing matrix is not (conjugate-)symmetric");
        }
        let definite = if matrix.nrows() == 0 {
            true
        } else {
            let (vals, _) = hermitian_eigen(&matrix);
            if vals.iter().any(|v| v.abs() <= 1e-14 * scale) {
                return domain("pairing matrix is degenerate");
            }
            vals.iter().all(|&v| v > 0.0) || vals.iter().all(|&v| v < 0.0)
        };
        Ok(Self { kind, matrix, definite })
    }

    pub fn identity(kind: PairingKind, k: usize) -> Self {
        Self::new(kind, CMat::identity(k, k)).expect("identity pairing")
    }

    pub fn real_diag(d: &[f64]) -> Self {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|&x| re(x))));
        Self::new(PairingKind::SymmetricBilinear, m).expect("diagonal pairing")
    }

    pub fn kind(&self) -> PairingKind {
        self.kind
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn is_definite(&self) -> bool {
        self.definite
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eval(&self, u: &[C64], v: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (i, vi) in v.iter().enumerate() {
            let mut row = C64::new(0.0, 0.0);
            for (j, uj) in u.iter().enumerate() {
                row += self.matrix[(i, j)] * uj;
            }
            acc += vi.conj() * row;
        }
        acc
    }

    pub fn negated(&self) -> Self {
        Self { kind: self.kind, matrix: -&self.matrix, definite: self.definite }
    }

    pub fn block_diag(&self, other: &Self) -> Self {
        let n1 = self.dim();
        let n = n1 + other.dim();
        let mut m = CMat::zeros(n, n);
        m.view_mut((0, 0), (n1, n1)).copy_from(&self.matrix);
        m.view_mut((n1, n1), (other.dim(), other.dim())).copy_from(&other.matrix);
        let kind = if self.kind == other.kind { self.kind } else { PairingKind::Hermitian };
        Self { kind, matrix: m, definite: self.definite && other.definite }
    }
}

/// One stencil term: coefficient block acting on the value at `(t+dt, x+dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilEntry {
    pub dt: i32,
    pub dx: i32,
    pub coeff: CMat,
}

/// Translation-invariant linear map between section spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMap {
    pub k_in: usize,
    pub k_out: usize,
    entries: Vec<StencilEntry>,
}

impl StencilMap {
    pub fn new(k_in: usize, k_out: usize, entries: Vec<StencilEntry>) -> Result<Self> {
        for e in &entries {
            if e.coeff.nrows() != k_out || e.coeff.ncols() != k_in {
                return shape("stencil coefficient has wrong shape");
            }
        }
        Ok(Self { k_in, k_out, entries }.normalized())
    }

    pub fn zero(k_in: usize, k_out: usize) -> Self {
        Self { k_in, k_out, entries: Vec::new() }
    }

    pub fn scalar(k: usize, s: C64) -> Self {
        Self::new(k, k, vec![StencilEntry { dt: 0, dx: 0, coeff: CMat::identity(k, k) * s }]).expect("scalar")
    }

    pub fn entries(&self) -> &[StencilEntry] {
        &self.entries
    }

    /// Merge equal offsets and drop exactly vanishing blocks; sorted by offset.
    fn normalized(self) -> Self {
        let mut acc: BTreeMap<(i32, i32), CMat> = BTreeMap::new();
        for e in self.entries {
            acc.entry((e.dt, e.dx)).and_modify(|m| *m += &e.coeff).or_insert(e.coeff);
        }
        let entries = acc
            .into_iter()
            .filter(|(_, m)| m.iter().any(|z| *z != C64::new(0.0, 0.0)))
            .map(|((dt, dx), coeff)| StencilEntry { dt, dx, coeff })
            .collect();
        Self { k_in: self.k_in, k_out: self.k_out, entries }
    }

    pub fn is_exactly_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries.iter().map(|e| max_abs(&e.coeff)).fold(0.0, f64::max)
    }

    pub fn time_extent(&self) -> (i32, i32) {
        let lo = self.entries.iter().map(|e| e.dt).min().unwrap_or(0);
        let hi = self.entries.iter().map(|e| e.dt).max().unwrap_or(0);
        (lo, hi)
    }

    pub fn spatial_reach(&self) -> i32 {
        self.entries.iter().map(|e| e.dx.abs()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.k_in != other.k_in || self.k_out != other.k_out {
            return shape("adding stencils of different shapes");
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Self::new(self.k_in, self.k_out, entries)
    }

    pub fn scaled(&self, s: C64) -> Self {
        let entries = self.entries.iter().map(|e| StencilEntry { coeff: &e.coeff * s, ..e.clone() }).collect();
        Self { k_in: self.k_in, k_out: self.k_out, entries }.normalized()
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.k_in != other.k_out {
            return shape("composing stencils with incompatible fibers");
        }
        let mut entries = Vec::new();
        for a in &self.entries {
            for b in &other.entries {
                entries.push(StencilEntry { dt: a.dt + b.dt, dx: a.dx + b.dx, coeff: &a.coeff * &b.coeff });
            }
        }
        Self::new(other.k_in, self.k_out, entries)
    }

    /// Formal transpose with respect to the Euclidean lattice sum.
    pub fn transpose(&self) -> Self {
        let entries = self.entries.iter().map(|e| StencilEntry { dt: -e.dt, dx: -e.dx, coeff: e.coeff.transpose() }).collect();
        Self { k_in: self.k_out, k_out: self.k_in, entries }.normalized()
    }

    /// Formal conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let entries = self.entries.iter().map(|e| StencilEntry { dt: -e.dt, dx: -e.dx, coeff: e.coeff.adjoint() }).collect();
        Self { k_in: self.k_out, k_out: self.k_in, entries }.normalized()
    }

    pub fn left_mul(&self, m: &CMat) -> Self {
        let entries = self.entries.iter().map(|e| StencilEntry { coeff: m * &e.coeff, ..e.clone() }).collect();
        Self { k_in: self.k_in, k_out: m.nrows(), entries }.normalized()
    }

    pub fn right_mul(&self, m: &CMat) -> Self {
        let entries = self.entries.iter().map(|e| StencilEntry { coeff: &e.coeff * m, ..e.clone() }).collect();
        Self { k_in: m.ncols(), k_out: self.k_out, entries }.normalized()
    }

    /// Block-diagonal sum of two stencils.
    pub fn block_diag(&self, other: &Self) -> Self {
        let (ki, ko) = (self.k_in + other.k_in, self.k_out + other.k_out);
        let mut entries = Vec::new();
        for e in &self.entries {
            let mut m = CMat::zeros(ko, ki);
            m.view_mut((0, 0), (self.k_out, self.k_in)).copy_from(&e.coeff);
            entries.push(StencilEntry { dt: e.dt, dx: e.dx, coeff: m });
        }
        for e in &other.entries {
            let mut m = CMat::zeros(ko, ki);
            m.view_mut((self.k_out, self.k_in), (other.k_out, other.k_in)).copy_from(&e.coeff);
            entries.push(StencilEntry { dt: e.dt, dx: e.dx, coeff: m });
        }
        Self { k_in: ki, k_out: ko, entries }.normalized()
    }

    /// Rows on which the full stencil fits in time.
    pub fn rows(&self, l: &LatticeSpacetime) -> Range<usize> {
        let (lo, hi) = self.time_extent();
        let start = (-lo).max(0) as usize;
        let end = (l.n_t as i64 - hi.max(0) as i64).max(start as i64) as usize;
        start..end
    }

    /// Evaluate on `rows`; every other row of the output is zero.
    pub fn apply_rows(&self, phi: &Section, rows: Range<usize>, kind: ScalarKind) -> Result<Section> {
        if phi.fiber_dim() != self.k_in {
            return shape(format!("stencil expects fiber {}, got {}", self.k_in, phi.fiber_dim()));
        }
        let l = *phi.lattice();
        let mut out = Section::zeros(&l, self.k_out, kind);
        for t in rows {
            for x in 0..l.n_x {
                for e in &self.entries {
                    let tt = t as i64 + e.dt as i64;
                    if tt < 0 || tt >= l.n_t as i64 {
                        continue;
                    }
                    let xx = l.wrap_x(x as i64 + e.dx as i64);
                    let src = phi.fiber(tt as usize, xx);
                    if src.iter().all(|v| *v == C64::new(0.0, 0.0)) {
                        continue;
                    }
                    let dst = out.fiber_mut(t, x);
                    for (i, d) in dst.iter_mut().enumerate() {
                        for (j, s) in src.iter().enumerate() {
                            *d += e.coeff[(i, j)] * s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, phi: &Section) -> Result<Section> {
        let rows = self.rows(phi.lattice());
        self.apply_rows(phi, rows, phi.kind())
    }

    /// Dense matrix of [`StencilMap::apply`], indices `(t·n_x + x)·k + c`.
    pub fn dense(&self, l: &LatticeSpacetime) -> CMat {
        let mut m = CMat::zeros(l.n_points() * self.k_out, l.n_points() * self.k_in);
        for t in self.rows(l) {
            for x in 0..l.n_x {
                for e in &self.entries {
                    let tt = (t as i64 + e.dt as i64) as usize;
                    let xx = l.wrap_x(x as i64 + e.dx as i64);
                    for i in 0..self.k_out {
                        for j in 0..self.k_in {
                            m[((t * l.n_x + x) * self.k_out + i, (tt * l.n_x + xx) * self.k_in + j)] += e.coeff[(i, j)];
                        }
                    }
                }
            }
        }
        m
    }
}

/// Invertibility of the leading (forward) and trailing (backward) slice blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteppingCertificate {
    pub steppable: bool,
    pub forward_cond: f64,
    pub backward_cond: f64,
    /// Both blocks act pointwise in space, so stepping never fills in.
    pub pointwise: bool,
}

/// Discrete differential operator `P` with fiber pairing and certificates.
#[derive(Debug, Clone)]
pub struct LatticeOperator {
    pub name: String,
    lattice: LatticeSpacetime,
    k: usize,
    kind: ScalarKind,
    order: u8,
    radius: usize,
    stencil: StencilMap,
    site: Vec<CMat>,
    pairing: FiberPairing,
    offsets: Vec<[u8; 2]>,
    stepping: SteppingCertificate,
    self_adjoint: bool,
}

pub struct OperatorSpec {
    pub name: String,
    pub kind: ScalarKind,
    pub order: u8,
    pub radius: usize,
    pub stencil: StencilMap,
    /// Per-site blocks indexed by `x`, or empty.
    pub site: Vec<CMat>,
    pub pairing: FiberPairing,
    /// Position of each component inside its cell in half-steps `(t, x)`.
    pub offsets: Vec<[u8; 2]>,
}

impl LatticeOperator {
    pub fn new(lattice: &LatticeSpacetime, spec: OperatorSpec) -> Result<Self> {
        let k = spec.stencil.k_in;
        if spec.stencil.k_out != k || spec.pairing.dim() != k || spec.offsets.len() != k {
            return shape("operator stencil, pairing and offsets disagree on fiber dimension");
        }
        let (lo, hi) = spec.stencil.time_extent();
        if lo < -(spec.radius as i32) || hi > spec.radius as i32 || spec.radius == 0 {
            return shape("stencil exceeds declared time radius");
        }
        if !spec.site.is_empty() && spec.site.len() != lattice.n_x {
            return shape("site terms must be given for every spatial site");
        }
        if spec.kind == ScalarKind::Real
            && (spec.stencil.entries.iter().any(|e| e.coeff.iter().any(|z| z.im != 0.0))
                || spec.site.iter().any(|m| m.iter().any(|z| z.im != 0.0)))
        {
            return domain("real operator with complex coefficients");
        }
        let mut op = Self {
            name: spec.name,
            lattice: *lattice,
            k,
            kind: spec.kind,
            order: spec.order,
            radius: spec.radius,
            stencil: spec.stencil,
            site: spec.site,
            pairing: spec.pairing,
            offsets: spec.offsets,
            stepping: SteppingCertificate { steppable: false, forward_cond: f64::INFINITY, backward_cond: f64::INFINITY, pointwise: false },
            self_adjoint: false,
        };
        op.stepping = op.compute_stepping();
        op.self_adjoint = op.stencil_self_adjointness_defect() <= 1e-14;
        Ok(op)
    }

    pub fn lattice(&self) -> &LatticeSpacetime {
        &self.lattice
    }
    pub fn fiber_dim(&self) -> usize {
        self.k
    }
    pub fn kind(&self) -> ScalarKind {
        self.kind
    }
    pub fn order(&self) -> u8 {
        self.order
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    pub fn stencil(&self) -> &StencilMap {
        &self.stencil
    }
    pub fn site_terms(&self) -> &[CMat] {
        &self.site
    }
    pub fn pairing(&self) -> &FiberPairing {
        &self.pairing
    }
    pub fn offsets(&self) -> &[[u8; 2]] {
        &self.offsets
    }
    pub fn stepping(&self) -> &SteppingCertificate {
        &self.stepping
    }

    /// Dimension of the space of solutions with compact spatial support,
    /// counted as `r·(rank B₋ᵣ + rank B₊ᵣ)` from the outermost slice blocks.
    /// Equals `2r·k·n_x` for time-steppable operators; smaller for
    /// constrained ones.
    pub fn solution_dim(&self) -> usize {
        let r = self.radius as i32;
        self.radius
            * (crate::linalg::rank(&self.slice_block(-r), crate::linalg::RANK_REL_TOL)
                + crate::linalg::rank(&self.slice_block(r), crate::linalg::RANK_REL_TOL))
    }
    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    /// Equation rows `[r, n_t − 1 − r]`.
    pub fn eq_rows(&self) -> Range<usize> {
        self.radius..self.lattice.n_t - self.radius
    }

    /// Rows admissible for test sections, `[2r, n_t − 1 − 2r]`.
    pub fn margin_rows(&self) -> Range<usize> {
        2 * self.radius..self.lattice.n_t - 2 * self.radius
    }

    /// Same stencil and pairing on another lattice.
    pub fn on_lattice(&self, lattice: &LatticeSpacetime) -> Result<Self> {
        if !self.site.is_empty() && lattice.n_x != self.lattice.n_x {
            return shape("site terms fix the number of spatial sites");
        }
        Self::new(lattice, self.spec())
    }

    pub fn spec(&self) -> OperatorSpec {
        OperatorSpec {
            name: self.name.clone(),
            kind: self.kind,
            order: self.order,
            radius: self.radius,
            stencil: self.stencil.clone(),
            site: self.site.clone(),
            pairing: self.pairing.clone(),
            offsets: self.offsets.clone(),
        }
    }

    /// Same operator acting on complex sections with the Hermitian extension
    /// of its pairing.
    pub fn complexified(&self) -> Result<Self> {
        if self.kind == ScalarKind::Complex {
            return Ok(self.clone());
        }
        let pairing = FiberPairing::new(PairingKind::Hermitian, self.pairing.matrix().clone())?;
        Self::new(&self.lattice, OperatorSpec { kind: ScalarKind::Complex, pairing, ..self.spec() })
    }

    pub fn with_pairing(&self, pairing: FiberPairing) -> Result<Self> {
        Self::new(&self.lattice, OperatorSpec { pairing, ..self.spec() })
    }

    /// Block of the stencil coupling row `t` to slice `t + dt`, as a map on
    /// whole slices.
    pub fn slice_block(&self, dt: i32) -> CMat {
        let (n, k) = (self.lattice.n_x, self.k);
        let mut m = CMat::zeros(n * k, n * k);
        for e in self.stencil.entries.iter().filter(|e| e.dt == dt) {
            for x in 0..n {
                let xx = self.lattice.wrap_x(x as i64 + e.dx as i64);
                m.view_mut((x * k, xx * k), (k, k)).add_assign(&e.coeff);
            }
        }
        if dt == 0 && !self.site.is_empty() {
            for x in 0..n {
                m.view_mut((x * k, x * k), (k, k)).add_assign(&self.site[x]);
            }
        }
        m
    }

    /// Pointwise block for offset `dt` if every entry there has `dx = 0`.
    pub fn pointwise_block(&self, dt: i32) -> Option<CMat> {
        let es: Vec<_> = self.stencil.entries.iter().filter(|e| e.dt == dt).collect();
        if es.iter().any(|e| e.dx != 0) {
            return None;
        }
        let mut m = CMat::zeros(self.k, self.k);
        for e in es {
            m += &e.coeff;
        }
        Some(m)
    }

    fn compute_stepping(&self) -> SteppingCertificate {
        let r = self.radius as i32;
        let fwd = self.pointwise_block(r);
        let bwd = self.pointwise_block(-r);
        let pointwise = fwd.is_some() && bwd.is_some();
        let fc = match &fwd {
            Some(b) => cond(b),
            None => cond(&self.slice_block(r)),
        };
        let bc = match &bwd {
            Some(b) => cond(b),
            None => cond(&self.slice_block(-r)),
        };
        let steppable = fc.is_finite() && bc.is_finite() && fc < 1e12 && bc < 1e12;
        SteppingCertificate { steppable, forward_cond: fc, backward_cond: bc, pointwise }
    }

    /// Largest violation of `B·A_Δ = A_{−Δ}^† B` over the stencil, relative to
    /// the coefficient scale.
    pub fn stencil_self_adjointness_defect(&self) -> f64 {
        let b = self.pairing.matrix();
        let adj = match self.pairing.kind() {
            PairingKind::Hermitian => self.stencil.adjoint().right_mul(b),
            PairingKind::SymmetricBilinear => self.stencil.transpose().right_mul(b),
        };
        let lhs = self.stencil.left_mul(b);
        let diff = match lhs.add(&adj.scaled(re(-1.0))) {
            Ok(d) => d,
            Err(_) => return f64::INFINITY,
        };
        let scale = self.stencil.max_abs_coeff().max(1.0) * max_abs(b).max(1.0);
        let mut defect = diff.max_abs_coeff();
        for s in &self.site {
            let st = match self.pairing.kind() {
                PairingKind::Hermitian => s.adjoint(),
                PairingKind::SymmetricBilinear => s.transpose(),
            };
            defect = defect.max(max_abs(&(b * s - st * b)));
        }
        defect / scale
    }

    pub fn check_section(&self, phi: &Section) -> Result<()> {
        if phi.lattice() != &self.lattice || phi.fiber_dim() != self.k {
            return shape(format!(
                "operator {} expects fiber {} on {}x{}, got fiber {} on {}x{}",
                self.name,
                self.k,
                self.lattice.n_t,
                self.lattice.n_x,
                phi.fiber_dim(),
                phi.lattice().n_t,
                phi.lattice().n_x
            ));
        }
        if self.kind == ScalarKind::Real && phi.kind() == ScalarKind::Complex {
            return shape("complex section given to a real operator");
        }
        Ok(())
    }

    /// `Pφ` on equation rows, zero elsewhere.
    pub fn apply(&self, phi: &Section) -> Result<Section> {
        self.check_section(phi)?;
        let mut out = self.stencil.apply_rows(phi, self.eq_rows(), phi.kind())?;
        if !self.site.is_empty() {
            for t in self.eq_rows() {
                for x in 0..self.lattice.n_x {
                    let src: Vec<C64> = phi.fiber(t, x).to_vec();
                    let dst = out.fiber_mut(t, x);
                    for (i, d) in dst.iter_mut().enumerate() {
                        for (j, s) in src.iter().enumerate() {
                            *d += self.site[x][(i, j)] * s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Dense matrix of [`LatticeOperator::apply`].
    pub fn dense(&self) -> CMat {
        let l = &self.lattice;
        let k = self.k;
        let mut m = CMat::zeros(l.n_points() * k, l.n_points() * k);
        for t in self.eq_rows() {
            for x in 0..l.n_x {
                let row = (t * l.n_x + x) * k;
                for e in &self.stencil.entries {
                    let tt = (t as i64 + e.dt as i64) as usize;
                    let xx = l.wrap_x(x as i64 + e.dx as i64);
                    let col = (tt * l.n_x + xx) * k;
                    m.view_mut((row, col), (k, k)).add_assign(&e.coeff);
                }
                if !self.site.is_empty() {
                    let col = (t * l.n_x + x) * k;
                    m.view_mut((row, col), (k, k)).add_assign(&self.site[x]);
                }
            }
        }
        m
    }

    pub fn pair(&self, phi: &Section, psi: &Section) -> Result<C64> {
        crate::lattice::spacetime_pairing(&self.lattice, &self.pairing, phi, psi)
    }

    pub fn random_margin_section<R: Rng>(&self, rng: &mut R) -> Section {
        Section::random(&self.lattice, self.k, self.kind, self.margin_rows(), 1.0, rng)
    }

    pub fn zero_section(&self) -> Section {
        Section::zeros(&self.lattice, self.k, self.kind)
    }

    /// Operator with the stencil reflected in time, `(Δt, Δx) ↦ (−Δt, Δx)`.
    pub fn time_reflected(&self) -> Result<Self> {
        let entries = self.stencil.entries.iter().map(|e| StencilEntry { dt: -e.dt, ..e.clone() }).collect();
        let stencil = StencilMap::new(self.k, self.k, entries)?;
        Self::new(&self.lattice, OperatorSpec { stencil, name: format!("{}-reflected", self.name), ..self.spec() })
    }
}

/// Max relative defect `|⟪Pφ,ψ⟫ − ⟪φ,Pψ⟫| / (‖Pφ‖‖ψ‖ + ‖φ‖‖Pψ‖)` over random
/// margin-supported pairs.
pub fn adjointness_defect<R: Rng>(p: &LatticeOperator, samples: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let phi = p.random_margin_section(rng);
        let psi = p.random_margin_section(rng);
        let pphi = p.apply(&phi)?;
        let ppsi = p.apply(&psi)?;
        let a = p.pair(&pphi, &psi)?;
        let b = p.pair(&phi, &ppsi)?;
        let scale = pphi.norm() * psi.norm() + phi.norm() * ppsi.norm();
        if scale > 0.0 {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    Ok(worst)
}

/// `□ + m₀² + B(x)` on real `k`-component fields.
pub fn build_dalembert(l: &LatticeSpacetime, m0: f64, potential: Option<&[DMatrix<f64>]>) -> Result<LatticeOperator> {
    if m0 < 0.0 || !m0.is_finite() {
        return domain("mass must be nonnegative");
    }
    if l.cfl() > 1.0 {
        return Err(Error::Config(format!("CFL ratio dt/dx = {} exceeds 1", l.cfl())));
    }
    let k = match potential {
        Some(b) if b.len() != l.n_x => return shape("potential must have one block per spatial site"),
        Some(b) => b.first().map(|m| m.nrows()).unwrap_or(1),
        None => 1,
    };
    let mut site = Vec::new();
    if let Some(b) = potential {
        for m in b {
            if m.nrows() != k || m.ncols() != k {
                return shape("potential blocks must all be k×k");
            }
            if (m - m.transpose()).abs().max() > 0.0 {
                return domain("potential must be symmetric");
            }
            site.push(m.map(re));
        }
    }
    let stencil = wave_stencil(l, k, m0);
    LatticeOperator::new(
        l,
        OperatorSpec {
            name: if m0 == 0.0 { "wave".into() } else { format!("wave(m={m0})") },
            kind: ScalarKind::Real,
            order: 2,
            radius: 1,
            stencil,
            site,
            pairing: FiberPairing::identity(PairingKind::SymmetricBilinear, k),
            offsets: vec![[0, 0]; k],
        },
    )
}

fn wave_stencil(l: &LatticeSpacetime, k: usize, m0: f64) -> StencilMap {
    let id = CMat::identity(k, k);
    let (it2, ix2) = (1.0 / (l.dt * l.dt), 1.0 / (l.dx * l.dx));
    let e = |dt, dx, s: f64| StencilEntry { dt, dx, coeff: &id * re(s) };
    StencilMap::new(k, k, vec![e(1, 0, it2), e(-1, 0, it2), e(0, 0, -2.0 * it2 + 2.0 * ix2 + m0 * m0), e(0, 1, -ix2), e(0, -1, -ix2)])
        .expect("wave stencil")
}

/// Clifford generators of the 1+1 Dirac operator: `e₀² = 1`, `e₁² = −1`.
pub fn dirac_gammas() -> (CMat, CMat) {
    let z = re(0.0);
    let o = re(1.0);
    let e0 = CMat::from_row_slice(2, 2, &[z, o, o, z]);
    let e1 = CMat::from_row_slice(2, 2, &[z, o, -o, z]);
    (e0, e1)
}

/// `D = i(−e₀∂_t + e₁∂_x) + m₀` with centered differences, paired by `β`.
pub fn dirac_operator_with_pairing(l: &LatticeSpacetime, m0: f64, beta: FiberPairing) -> Result<LatticeOperator> {
    if !m0.is_finite() || m0 < 0.0 {
        return domain("mass must be nonnegative");
    }
    let (e0, e1) = dirac_gammas();
    let i = c(0.0, 1.0);
    let (ht, hx) = (0.5 / l.dt, 0.5 / l.dx);
    let entries = vec![
        StencilEntry { dt: 1, dx: 0, coeff: &e0 * (-i * ht) },
        StencilEntry { dt: -1, dx: 0, coeff: &e0 * (i * ht) },
        StencilEntry { dt: 0, dx: 1, coeff: &e1 * (i * hx) },
        StencilEntry { dt: 0, dx: -1, coeff: &e1 * (-i * hx) },
        StencilEntry { dt: 0, dx: 0, coeff: CMat::identity(2, 2) * re(m0) },
    ];
    LatticeOperator::new(
        l,
        OperatorSpec {
            name: if m0 == 0.0 { "dirac".into() } else { format!("dirac(m={m0})") },
            kind: ScalarKind::Complex,
            order: 1,
            radius: 1,
            stencil: StencilMap::new(2, 2, entries)?,
            site: Vec::new(),
            pairing: beta,
            offsets: vec![[0, 0]; 2],
        },
    )
}

/// Shipped spinor pairing `β = e₀`.
pub fn dirac_pairing() -> FiberPairing {
    FiberPairing::new(PairingKind::Hermitian, dirac_gammas().0).expect("dirac pairing")
}

/// 1+1 Dirac operator; fails unless the discrete slice form is positive on
/// the physical solution sector.
pub fn build_dirac_1p1(l: &LatticeSpacetime, m0: f64) -> Result<LatticeOperator> {
    let op = dirac_operator_with_pairing(l, m0, dirac_pairing())?;
    if !op.is_self_adjoint() {
        return Err(Error::Build("dirac stencil is not formally self-adjoint".into()));
    }
    let cert = crate::quant_ferm::definite_type_certificate(&op)?;
    if !cert.definite {
        return Err(Error::Build(format!("slice form is not positive on the physical sector (min eigenvalue {:.3e})", cert.physical_min)));
    }
    Ok(op)
}

/// Block-diagonal sum; time radius is the larger of the two.
pub fn direct_sum(p1: &LatticeOperator, p2: &LatticeOperator) -> Result<LatticeOperator> {
    if p1.lattice != p2.lattice {
        return shape("direct sum of operators on different lattices");
    }
    if p2.k == 0 {
        return Ok(p1.clone());
    }
    if p1.k == 0 {
        return Ok(p2.clone());
    }
    if p1.kind != p2.kind {
        return shape("direct sum of real and complex operators");
    }
    let site = if p1.site.is_empty() && p2.site.is_empty() {
        Vec::new()
    } else {
        let z1 = vec![CMat::zeros(p1.k, p1.k); p1.lattice.n_x];
        let z2 = vec![CMat::zeros(p2.k, p2.k); p2.lattice.n_x];
        let s1 = if p1.site.is_empty() { &z1 } else { &p1.site };
        let s2 = if p2.site.is_empty() { &z2 } else { &p2.site };
        s1.iter()
            .zip(s2)
            .map(|(a, b)| {
                let mut m = CMat::zeros(p1.k + p2.k, p1.k + p2.k);
                m.view_mut((0, 0), (p1.k, p1.k)).copy_from(a);
                m.view_mut((p1.k, p1.k), (p2.k, p2.k)).copy_from(b);
                m
            })
            .collect()
    };
    let mut offsets = p1.offsets.clone();
    offsets.extend(p2.offsets.iter().copied());
    LatticeOperator::new(
        &p1.lattice,
        OperatorSpec {
            name: format!("{}+{}", p1.name, p2.name),
            kind: p1.kind,
            order: p1.order.max(p2.order),
            radius: p1.radius.max(p2.radius),
            stencil: p1.stencil.block_diag(&p2.stencil),
            site,
            pairing: p1.pairing.block_diag(&p2.pairing),
            offsets,
        },
    )
}

/// Cochains on the lattice: vertices (k=1), edges `(dt, dx)` (k=2) and
/// plaquettes (k=1), with Lorentzian fiber metrics.
#[derive(Debug, Clone)]
pub struct DiscreteFormsComplex {
    pub d0: StencilMap,
    pub d1: StencilMap,
    pub delta1: StencilMap,
    pub delta2: StencilMap,
    pub metrics: [FiberPairing; 3],
}

impl DiscreteFormsComplex {
    pub fn new(l: &LatticeSpacetime) -> Self {
        let (it, ix) = (1.0 / l.dt, 1.0 / l.dx);
        let col = |a: f64, b: f64| CMat::from_column_slice(2, 1, &[re(a), re(b)]);
        let row = |a: f64, b: f64| CMat::from_row_slice(1, 2, &[re(a), re(b)]);
        // (dφ)_t = ∂_t φ, (dφ)_x = ∂_x φ, forward differences.
        let d0 = StencilMap::new(
            1,
            2,
            vec![
                StencilEntry { dt: 0, dx: 0, coeff: col(-it, -ix) },
                StencilEntry { dt: 1, dx: 0, coeff: col(it, 0.0) },
                StencilEntry { dt: 0, dx: 1, coeff: col(0.0, ix) },
            ],
        )
        .expect("d0");
        // (dα) = ∂_t α_x − ∂_x α_t on plaquettes.
        let d1 = StencilMap::new(
            2,
            1,
            vec![
                StencilEntry { dt: 0, dx: 0, coeff: row(ix, -it) },
                StencilEntry { dt: 1, dx: 0, coeff: row(0.0, it) },
                StencilEntry { dt: 0, dx: 1, coeff: row(-ix, 0.0) },
            ],
        )
        .expect("d1");
        let s0 = FiberPairing::real_diag(&[1.0]);
        let s1 = FiberPairing::real_diag(&[-1.0, 1.0]);
        let s2 = FiberPairing::real_diag(&[-1.0]);
        let inv = |p: &FiberPairing| p.matrix().clone().try_inverse().expect("nondegenerate");
        let delta1 = d0.transpose().right_mul(s1.matrix()).left_mul(&inv(&s0));
        let delta2 = d1.transpose().right_mul(s2.matrix()).left_mul(&inv(&s1));
        Self { d0, d1, delta1, delta2, metrics: [s0, s1, s2] }
    }

    /// Component positions of 1-cochains in half-steps: time edges sit at
    /// `(t+½, x)`, space edges at `(t, x+½)`.
    pub fn edge_offsets() -> Vec<[u8; 2]> {
        vec![[1, 0], [0, 1]]
    }
}

/// Proca operator `δd + m₀²`, its normally hyperbolic companion
/// `dδ + δd + m₀²` and the cochain complex they are built from.
#[derive(Debug, Clone)]
pub struct ProcaOperators {
    pub proca: LatticeOperator,
    pub wave: LatticeOperator,
    pub forms: DiscreteFormsComplex,
    /// `m₀⁻² dδ + id` on 1-cochains.
    pub correction: StencilMap,
}

pub fn build_proca(l: &LatticeSpacetime, m0: f64) -> Result<ProcaOperators> {
    if !(m0 > 0.0) || !m0.is_finite() {
        return domain("Proca mass must be positive");
    }
    let forms = DiscreteFormsComplex::new(l);
    let mass = StencilMap::scalar(2, re(m0 * m0));
    let dd = forms.delta2.compose(&forms.d1)?;
    let ddual = forms.d0.compose(&forms.delta1)?;
    let proca_stencil = dd.add(&mass)?;
    let wave_stencil = ddual.add(&proca_stencil)?;
    let spec = |name: &str, stencil: StencilMap| OperatorSpec {
        name: name.into(),
        kind: ScalarKind::Real,
        order: 2,
        radius: 1,
        stencil,
        site: Vec::new(),
        pairing: forms.metrics[1].clone(),
        offsets: DiscreteFormsComplex::edge_offsets(),
    };
    let proca = LatticeOperator::new(l, spec(&format!("proca(m={m0})"), proca_stencil))?;
    let wave = LatticeOperator::new(l, spec(&format!("hodge-wave(m={m0})"), wave_stencil))?;
    if !wave.stepping().steppable {
        return Err(Error::Build("Hodge wave operator is not time-steppable".into()));
    }
    let comm = ddual.compose(wave.stencil())?.add(&wave.stencil().compose(&ddual)?.scaled(re(-1.0)))?;
    if !comm.is_exactly_zero() {
        return Err(Error::Build(format!("[dδ, P̃] ≠ 0 (max coefficient {:e})", comm.max_abs_coeff())));
    }
    let correction = ddual.scaled(re(1.0 / (m0 * m0))).add(&StencilMap::scalar(2, re(1.0)))?;
    Ok(ProcaOperators { proca, wave, forms, correction })
}

trait AddAssignView {
    fn add_assign(&mut self, m: &CMat);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, C64> {
    fn add_assign(&mut self, m: &CMat) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self[(i, j)] += m[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat(n_t: usize, n_x: usize) -> LatticeSpacetime {
        LatticeSpacetime::new(n_t, n_x, 0.0625, 0.125).unwrap()
    }

    #[test]
    fn wave_kills_constants() {
        let l = lat(12, 8);
        let p = build_dalembert(&l, 0.0, None).unwrap();
        let phi = Section::from_values(&l, 1, ScalarKind::Real, vec![re(3.0); l.n_points()]).unwrap();
        assert!(p.apply(&phi).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn wave_row_matches_hand_stencil() {
        let l = lat(12, 8);
        let p = build_dalembert(&l, 0.5, None).unwrap();
        let mut phi = Section::zeros(&l, 1, ScalarKind::Real);
        let j = 2.0;
        for x in 0..8 {
            phi.set(5, x, 0, re((2.0 * std::f64::consts::PI * x as f64 * j / 8.0).cos()));
        }
        let out = p.apply(&phi).unwrap();
        for x in 0..8 {
            let v = |xx: i64| phi.get(5, l.wrap_x(xx), 0).re;
            let expect = -2.0 * v(x as i64) / (l.dt * l.dt) - (v(x as i64 + 1) - 2.0 * v(x as i64) + v(x as i64 - 1)) / (l.dx * l.dx)
                + 0.25 * v(x as i64);
            assert!((out.get(5, x, 0).re - expect).abs() < 1e-10);
            assert!((out.get(4, x, 0).re - v(x as i64) / (l.dt * l.dt)).abs() < 1e-10);
        }
    }

    #[test]
    fn wave_rejects_cfl_violation() {
        let l = LatticeSpacetime::new(12, 8, 0.2, 0.1).unwrap();
        assert!(matches!(build_dalembert(&l, 0.0, None), Err(Error::Config(_))));
    }

    #[test]
    fn apply_matches_dense_matrix() {
        let l = lat(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<DMatrix<f64>> = (0..8).map(|x| DMatrix::from_element(1, 1, 0.1 * x as f64)).collect();
        for p in [build_dalembert(&l, 1.0, Some(&b)).unwrap(), dirac_operator_with_pairing(&l, 0.7, dirac_pairing()).unwrap()] {
            let phi = Section::random(&l, p.fiber_dim(), p.kind(), 0..8, 1.0, &mut rng);
            let dense = p.dense() * nalgebra::DVector::from_column_slice(phi.values());
            let out = p.apply(&phi).unwrap();
            let diff = out.values().iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-10, "{}: {diff}", p.name);
        }
    }

    #[test]
    fn shipped_operators_are_self_adjoint() {
        let l = lat(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b: Vec<DMatrix<f64>> = (0..8).map(|x| DMatrix::from_row_slice(2, 2, &[1.0, 0.1 * x as f64, 0.1 * x as f64, -0.5])).collect();
        let proca = build_proca(&l, 1.0).unwrap();
        let ops = [
            build_dalembert(&l, 0.0, None).unwrap(),
            build_dalembert(&l, 1.0, Some(&b)).unwrap(),
            build_dirac_1p1(&l, 0.5).unwrap(),
            proca.proca,
            proca.wave,
        ];
        for p in &ops {
            assert!(p.is_self_adjoint(), "{}", p.name);
            let d = adjointness_defect(p, 10, &mut rng).unwrap();
            assert!(d <= 1e-12, "{}: {d}", p.name);
            assert!(p.stencil().spatial_reach() <= 1, "{}", p.name);
        }
    }

    #[test]
    fn asymmetric_stencil_is_detected() {
        let l = lat(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut spec = build_dalembert(&l, 0.0, None).unwrap().spec();
        spec.stencil = spec
            .stencil
            .add(&StencilMap::new(1, 1, vec![StencilEntry { dt: 0, dx: 1, coeff: CMat::from_element(1, 1, re(40.0)) }]).unwrap())
            .unwrap();
        let p = LatticeOperator::new(&l, spec).unwrap();
        assert!(!p.is_self_adjoint());
        assert!(adjointness_defect(&p, 10, &mut rng).unwrap() > 1e-3);
    }

    #[test]
    fn cochain_complex_is_exact() {
        let l = lat(12, 8);
        let f = DiscreteFormsComplex::new(&l);
        assert!(f.d1.compose(&f.d0).unwrap().is_exactly_zero());
        assert!(f.delta1.compose(&f.delta2).unwrap().is_exactly_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Section::random(&l, 1, ScalarKind::Real, 2..10, 1.0, &mut rng);
        let b = Section::random(&l, 2, ScalarKind::Real, 2..10, 1.0, &mut rng);
        let lhs = crate::lattice::spacetime_pairing(&l, &f.metrics[1], &f.d0.apply(&a).unwrap(), &b).unwrap();
        let rhs = crate::lattice::spacetime_pairing(&l, &f.metrics[0], &a, &f.delta1.apply(&b).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn proca_companion_is_componentwise_wave() {
        let l = lat(12, 8);
        let pr = build_proca(&l, 1.0).unwrap();
        let wave = wave_stencil(&l, 2, 1.0);
        let w = pr.wave.stencil();
        // Both components of the Hodge companion carry □ + m².
        let diff = w.add(&wave.scaled(re(-1.0))).unwrap();
        assert!(diff.is_exactly_zero() || diff.max_abs_coeff() == 0.0, "{:?}", diff.entries());
    }

    #[test]
    fn proca_rejects_zero_mass() {
        let l = lat(12, 8);
        assert!(matches!(build_proca(&l, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dirac_kills_constant_spinors_when_massless() {
        let l = lat(12, 8);
        let p = build_dirac_1p1(&l, 0.0).unwrap();
        let phi =
            Section::from_values(&l, 2, ScalarKind::Complex, (0..l.n_points() * 2).map(|i| c(1.0, i as f64 % 2.0)).collect()).unwrap();
        assert!(p.apply(&phi).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn flipped_dirac_pairing_fails_the_build_check() {
        let l = lat(12, 8);
        let op = dirac_operator_with_pairing(&l, 0.5, dirac_pairing().negated()).unwrap();
        assert!(op.is_self_adjoint());
        assert!(!crate::quant_ferm::definite_type_certificate(&op).unwrap().definite);
    }

    #[test]
    fn direct_sum_with_empty_summand() {
        let l = lat(12, 8);
        let p = build_dalembert(&l, 0.0, None).unwrap();
        let empty = LatticeOperator {
            k: 0,
            stencil: StencilMap::zero(0, 0),
            pairing: FiberPairing::identity(PairingKind::SymmetricBilinear, 0),
            offsets: Vec::new(),
            ..p.clone()
        };
        let s = direct_sum(&p, &empty).unwrap();
        assert_eq!(s.fiber_dim(), 1);
        assert_eq!(s.stencil(), p.stencil());
    }

    #[test]
    fn wave_plus_dirac_is_block_diagonal() {
        let l = lat(12, 8);
        let w = build_dalembert(&l, 1.0, None).unwrap();
        let d = build_dirac_1p1(&l, 0.0).unwrap();
        assert!(direct_sum(&w, &d).is_err());
        let wc = w.complexified().unwrap();
        let s = direct_sum(&wc, &d).unwrap();
        assert_eq!(s.fiber_dim(), 3);
        assert!(s.is_self_adjoint());
        assert!(s.stepping().steppable);
    }
}
