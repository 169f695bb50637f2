//! Region embeddings and the functorial layer: extension by zero,
//! restriction of Green's operators, induced maps on symplectic and solution
//! coordinates, time-slice and causality checks, and the CAR functor.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::green::{CauchyData, GreenPair, Stepper};
use crate::lattice::{
    causal_future, causal_past, causally_disjoint, is_causally_compatible, region_cone, Direction, LatticeSpacetime, Point, Region,
};
use crate::linalg::{c, max_abs, re, singular_values, CMat, CVec};
use crate::ops::{LatticeOperator, PairingKind, ScalarKind, Section};
use crate::quant_bos::{weyl_commutator, SymplClass, SymplSpace, WeylAlgebra};
use crate::quant_ferm::{boundary_form_matrix, slice_gram, CarRep, FockOp, SliceProduct, SolutionSpace};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionShape {
    Band,
    Diamond,
    Other,
}

/// Inclusion of a causally compatible region into the lattice of `ambient`.
///
/// Bands carry their own lattice (rows `t₁..=t₂`) and restricted operator;
/// every other region lives on the ambient lattice behind a mask.
#[derive(Debug, Clone)]
pub struct RegionEmbedding {
    ambient: LatticeOperator,
    region: Region,
    shape: RegionShape,
    offset: usize,
    sub: LatticeOperator,
    mask: Vec<bool>,
    equations: Vec<bool>,
    sources: Vec<bool>,
}

fn stencil_interior(op: &LatticeOperator, set: &[bool]) -> Vec<bool> {
    let l = op.lattice();
    let mut out = vec![false; set.len()];
    for t in 0..l.n_t {
        for x in 0..l.n_x {
            let i = t * l.n_x + x;
            if !set[i] {
                continue;
            }
            out[i] = op.stencil().entries().iter().all(|e| {
                let tt = t as i64 + e.dt as i64;
                tt >= 0 && (tt as usize) < l.n_t && set[tt as usize * l.n_x + l.wrap_x(x as i64 + e.dx as i64)]
            });
        }
    }
    out
}

impl RegionEmbedding {
    pub fn new(ambient: &LatticeOperator, region: Region) -> Result<Self> {
        let l = *ambient.lattice();
        if !is_causally_compatible(&l, &region)? {
            return domain("region is not causally compatible");
        }
        let (lo, hi) = region.time_range();
        let full_band = region.len() == (hi - lo + 1) * l.n_x;
        let (shape, offset, sub) = if full_band {
            let sl = LatticeSpacetime::new(hi - lo + 1, l.n_x, l.dt, l.dx)?;
            (RegionShape::Band, lo, ambient.on_lattice(&sl)?)
        } else {
            (RegionShape::Other, 0, ambient.clone())
        };
        let sl = *sub.lattice();
        let mut mask = vec![false; sl.n_points()];
        for p in region.members() {
            mask[(p.t - offset) * sl.n_x + p.x] = true;
        }
        let equations = stencil_interior(&sub, &mask);
        let sources = stencil_interior(&sub, &equations);
        Ok(Self { ambient: ambient.clone(), region, shape, offset, sub, mask, equations, sources })
    }

    pub fn band(ambient: &LatticeOperator, t1: usize, t2: usize) -> Result<Self> {
        Self::new(ambient, Region::band(ambient.lattice(), t1, t2)?)
    }

    pub fn diamond(ambient: &LatticeOperator, centre: Point, half: usize) -> Result<Self> {
        let mut e = Self::new(ambient, Region::diamond_centered(ambient.lattice(), centre, half)?)?;
        e.shape = RegionShape::Diamond;
        Ok(e)
    }

    pub fn identity(ambient: &LatticeOperator) -> Result<Self> {
        Self::band(ambient, 0, ambient.lattice().n_t - 1)
    }

    pub fn ambient(&self) -> &LatticeOperator {
        &self.ambient
    }

    /// Operator on the lattice carrying sections of the region.
    pub fn sub_operator(&self) -> &LatticeOperator {
        &self.sub
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn shape(&self) -> RegionShape {
        self.shape
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    fn sub_index(&self, t: usize, x: usize) -> usize {
        t * self.sub.lattice().n_x + x
    }

    /// Points of the sub-lattice that may carry sources.
    pub fn source_points(&self) -> Vec<Point> {
        let sl = self.sub.lattice();
        (0..sl.n_points()).filter(|&i| self.sources[i]).map(|i| sl.point(i)).collect()
    }

    pub fn admits_source(&self, f: &Section) -> bool {
        let k = f.fiber_dim();
        f.values().chunks(k).enumerate().all(|(i, v)| self.sources[i] || v.iter().all(|z| *z == re(0.0)))
    }

    /// Random section on the admissible source points.
    pub fn random_source<R: Rng>(&self, density: f64, rng: &mut R) -> Section {
        let op = &self.sub;
        let mut f = Section::zeros(op.lattice(), op.fiber_dim(), op.kind());
        for p in self.source_points() {
            if rng.gen_bool(density) {
                for comp in 0..op.fiber_dim() {
                    let v = match op.kind() {
                        ScalarKind::Real => re(rng.gen_range(-1.0..1.0)),
                        ScalarKind::Complex => c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    };
                    f.set(p.t, p.x, comp, v);
                }
            }
        }
        if f.is_zero() {
            let p = self.source_points()[0];
            f.set(p.t, p.x, 0, re(1.0));
        }
        f
    }

    /// Ambient section restricted to the region, on the sub-lattice.
    pub fn restrict(&self, phi: &Section) -> Result<Section> {
        self.ambient.check_section(phi)?;
        let sl = *self.sub.lattice();
        let mut out = Section::zeros(&sl, phi.fiber_dim(), phi.kind());
        for t in 0..sl.n_t {
            for x in 0..sl.n_x {
                if self.mask[self.sub_index(t, x)] {
                    out.fiber_mut(t, x).copy_from_slice(phi.fiber(t + self.offset, x));
                }
            }
        }
        Ok(out)
    }

    /// Retarded or advanced Green's operator of the region.
    pub fn green(&self, f: &Section, dir: Direction) -> Result<Section> {
        if !self.admits_source(f) {
            return domain("source leaves the admissible interior of the region");
        }
        match self.shape {
            RegionShape::Band => GreenPair::new(&self.sub)?.solve(f, dir),
            _ => self.dense_green(f, dir),
        }
    }

    /// Unique solution of `Pu = f` on the stencil-interior points with `u`
    /// supported in the region cone of `supp f`.
    fn dense_green(&self, f: &Section, dir: Direction) -> Result<Section> {
        let op = &self.sub;
        if !op.site_terms().is_empty() {
            return domain("region Green's operators need a translation-invariant stencil");
        }
        let l = *op.lattice();
        let k = op.fiber_dim();
        let mut cone = BTreeSet::new();
        for p in f.support() {
            cone.extend(region_cone(&l, &self.region, p, dir));
        }
        let unknowns: Vec<Point> = cone.into_iter().collect();
        let col: std::collections::HashMap<Point, usize> = unknowns.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let eqs: Vec<Point> = (0..l.n_points()).filter(|&i| self.equations[i]).map(|i| l.point(i)).collect();
        let mut a = CMat::zeros(eqs.len() * k, unknowns.len() * k);
        let mut b = CVec::zeros(eqs.len() * k);
        for (row, p) in eqs.iter().enumerate() {
            for e in op.stencil().entries() {
                let q = Point::new((p.t as i64 + e.dt as i64) as usize, l.wrap_x(p.x as i64 + e.dx as i64));
                if let Some(&j) = col.get(&q) {
                    let mut blk = a.view_mut((row * k, j * k), (k, k));
                    blk += &e.coeff;
                }
            }
            for i in 0..k {
                b[row * k + i] = f.get(p.t, p.x, i);
            }
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if unknowns.len() * k > eqs.len() * k || smin <= 1e-10 * smax {
            return Err(Error::Build("region Green's problem is not uniquely solvable".into()));
        }
        let u = svd.solve(&b, 0.0).map_err(|e| Error::Build(e.into()))?;
        if (&a * &u - &b).norm() > 1e-9 * b.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Build("region Green's problem is inconsistent".into()));
        }
        let mut out = Section::zeros(&l, k, f.kind());
        for (j, p) in unknowns.iter().enumerate() {
            for i in 0..k {
                out.set(p.t, p.x, i, u[j * k + i]);
            }
        }
        Ok(out)
    }
}

/// Extension by zero of a region section to the ambient lattice.
pub fn ext_zero(e: &RegionEmbedding, phi: &Section) -> Result<Section> {
    e.sub.check_section(phi)?;
    if !e.admits_source(phi) {
        return domain("section touches the margin of the region");
    }
    let l = *e.ambient.lattice();
    let mut out = Section::zeros(&l, phi.fiber_dim(), phi.kind());
    let sl = *phi.lattice();
    for t in 0..sl.n_t {
        for x in 0..sl.n_x {
            out.fiber_mut(t + e.offset, x).copy_from_slice(phi.fiber(t, x));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResGreenExtReport {
    pub shape: RegionShape,
    pub samples: usize,
    /// `max ‖res∘G±∘ext f − G_sub± f‖ / ‖G_sub± f‖`.
    pub defect: f64,
    /// `max ‖P∘ext f − ext∘P_sub f‖` on interior rows.
    pub intertwining: f64,
    pub cone_mismatches: usize,
}

impl ResGreenExtReport {
    pub fn passes(&self) -> bool {
        self.defect <= 1e-10 && self.intertwining <= 1e-13 && self.cone_mismatches == 0
    }
}

pub fn res_green_ext_check<R: Rng>(e: &RegionEmbedding, samples: usize, rng: &mut R) -> Result<ResGreenExtReport> {
    let amb = GreenPair::new(&e.ambient)?;
    let l = *e.ambient.lattice();
    let mut rep = ResGreenExtReport { shape: e.shape, samples, defect: 0.0, intertwining: 0.0, cone_mismatches: 0 };
    for _ in 0..samples {
        let f = e.random_source(0.3, rng);
        let ef = ext_zero(e, &f)?;
        for dir in [Direction::Future, Direction::Past] {
            let sub = e.green(&f, dir)?;
            let back = e.restrict(&amb.solve(&ef, dir)?)?;
            rep.defect = rep.defect.max(back.sub(&sub)?.norm() / sub.norm().max(f64::MIN_POSITIVE));
            let seeds: BTreeSet<Point> = ef.support();
            let ambient_cone = match dir {
                Direction::Future => causal_future(&l, &seeds)?,
                Direction::Past => causal_past(&l, &seeds)?,
            };
            let inside: BTreeSet<Point> = ambient_cone.into_iter().filter(|p| e.region.contains(*p)).collect();
            let mut local = BTreeSet::new();
            for p in &seeds {
                local.extend(region_cone(&l, &e.region, *p, dir));
            }
            rep.cone_mismatches += inside.symmetric_difference(&local).count();
        }
        let pe = e.ambient.apply(&ef)?;
        let ep = e.sub.apply(&f)?;
        let sl = *e.sub.lattice();
        for t in 0..sl.n_t {
            for x in 0..sl.n_x {
                if e.equations[e.sub_index(t, x)] {
                    for (a, b) in pe.fiber(t + e.offset, x).iter().zip(ep.fiber(t, x)) {
                        rep.intertwining = rep.intertwining.max((a - b).norm());
                    }
                }
            }
        }
    }
    Ok(rep)
}

fn data_start(op: &LatticeOperator) -> usize {
    op.lattice().n_t / 2 + 1 - op.radius()
}

fn unit(n: usize, i: usize) -> CVec {
    CVec::from_fn(n, |j, _| re((i == j) as u8 as f64))
}

fn coords(op: &LatticeOperator, u: &Section) -> Result<CVec> {
    Ok(CauchyData::of(u, data_start(op), 2 * op.radius())?.vector())
}

fn solution_with_data(op: &LatticeOperator, stepper: &Stepper, d: &CVec, start: usize) -> Result<Section> {
    let data = CauchyData { t_star: start, slices: 2 * op.radius(), k: op.fiber_dim(), values: d.as_slice().to_vec() };
    stepper.from_cauchy(&data)
}

fn require_band(e: &RegionEmbedding) -> Result<()> {
    if e.shape != RegionShape::Band {
        return domain("canonical coordinates exist only for time bands; this region has no full Cauchy slice");
    }
    Ok(())
}

/// Source on the band whose propagated solution has coordinates `e_i`.
fn basis_source(e: &RegionEmbedding, stepper: &Stepper, i: usize) -> Result<Section> {
    let op = &e.sub;
    let n = 2 * op.radius() * op.lattice().n_x * op.fiber_dim();
    let mut u = solution_with_data(op, stepper, &unit(n, i), data_start(op))?;
    let cut = op.margin_rows().start + op.radius();
    for t in 0..cut {
        u.slice_mut(t).iter_mut().for_each(|v| *v = re(0.0));
    }
    op.apply(&u)
}

/// Matrix of the induced map from band coordinates to ambient coordinates,
/// computed as `[f] ↦ [ext f]` on sources realizing the coordinate basis.
pub fn coordinate_morphism(e: &RegionEmbedding) -> Result<CMat> {
    require_band(e)?;
    let op = &e.sub;
    let stepper = Stepper::new(op)?;
    let amb = GreenPair::new(&e.ambient)?;
    let n = 2 * op.radius() * op.lattice().n_x * op.fiber_dim();
    let mut m = CMat::zeros(coords(&e.ambient, &e.ambient.zero_section())?.len(), n);
    for i in 0..n {
        let f = basis_source(e, &stepper, i)?;
        let u = amb.propagator(&ext_zero(e, &f)?)?;
        m.set_column(i, &coords(&e.ambient, &u)?);
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorphismReport {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub injective: bool,
    pub isomorphism: bool,
    /// Relative defect of form preservation `M^T Ω M = Ω_sub` (or the
    /// Hermitian analogue).
    pub form_defect: f64,
}

fn form_preservation(e: &RegionEmbedding, m: &CMat) -> f64 {
    let w_sub = boundary_form_matrix(&e.sub);
    let w_amb = boundary_form_matrix(&e.ambient);
    let pulled = match e.ambient.pairing().kind() {
        PairingKind::Hermitian => m.adjoint() * w_amb * m,
        PairingKind::SymmetricBilinear => m.transpose() * w_amb * m,
    };
    max_abs(&(pulled - &w_sub)) / max_abs(&w_sub).max(f64::MIN_POSITIVE)
}

fn rank_report(e: &RegionEmbedding, m: &CMat) -> MorphismReport {
    let sv = singular_values(m);
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > crate::linalg::RANK_REL_TOL * max).count();
    MorphismReport {
        rows: m.nrows(),
        cols: m.ncols(),
        rank,
        injective: rank == m.ncols(),
        isomorphism: m.is_square() && rank == m.ncols(),
        form_defect: form_preservation(e, m),
    }
}

/// `SYMPL(f)` on canonical coordinates; real operators only.
pub fn sympl_morphism(e: &RegionEmbedding) -> Result<(DMatrix<f64>, MorphismReport)> {
    if e.ambient.kind() != ScalarKind::Real {
        return domain("the symplectic functor needs a real operator");
    }
    let m = coordinate_morphism(e)?;
    let rep = rank_report(e, &m);
    Ok((m.map(|z| z.re), rep))
}

/// `SOL(f)`: extension of band solutions by propagation, on Cauchy data.
pub fn sol_morphism(e: &RegionEmbedding) -> Result<(CMat, MorphismReport)> {
    require_band(e)?;
    let op = &e.sub;
    let sub_stepper = Stepper::new(op)?;
    let amb_stepper = Stepper::new(&e.ambient)?;
    let n = 2 * op.radius() * op.lattice().n_x * op.fiber_dim();
    let start = data_start(op);
    let mut s = CMat::zeros(coords(&e.ambient, &e.ambient.zero_section())?.len(), n);
    for i in 0..n {
        let u = solution_with_data(op, &sub_stepper, &unit(n, i), start)?;
        let ext = extend_solution(e, &amb_stepper, &u)?;
        s.set_column(i, &coords(&e.ambient, &ext)?);
    }
    let rep = rank_report(e, &s);
    Ok((s, rep))
}

/// Unique ambient solution agreeing with a band solution on the band.
pub fn extend_solution(e: &RegionEmbedding, amb_stepper: &Stepper, u: &Section) -> Result<Section> {
    let op = &e.sub;
    let start = data_start(op);
    let d = CauchyData::of(u, start, 2 * op.radius())?.vector();
    solution_with_data(&e.ambient, amb_stepper, &d, start + e.offset)
}

/// `‖SYMPL(f) − SOL(f)‖` relative: the square relating the two functors
/// through `[f] ↦ Gf` commutes.
pub fn diagram_defect(e: &RegionEmbedding) -> Result<f64> {
    let m = coordinate_morphism(e)?;
    let (s, _) = sol_morphism(e)?;
    Ok(max_abs(&(&m - &s)) / max_abs(&s).max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimesliceReport {
    pub applicable: bool,
    pub sympl: Option<MorphismReport>,
    pub sol: Option<MorphismReport>,
    /// `‖ext(res u) − u‖ / ‖u‖` for ambient solutions `u`.
    pub reextension: f64,
}

impl TimesliceReport {
    pub fn passes(&self) -> bool {
        self.applicable
            && self.sol.as_ref().is_some_and(|r| r.isomorphism && r.form_defect <= 1e-10)
            && self.sympl.as_ref().is_none_or(|r| r.isomorphism && r.form_defect <= 1e-10)
            && self.reextension <= 1e-10
    }
}

pub fn timeslice_check<R: Rng>(e: &RegionEmbedding, samples: usize, rng: &mut R) -> Result<TimesliceReport> {
    if e.shape != RegionShape::Band {
        return Ok(TimesliceReport { applicable: false, sympl: None, sol: None, reextension: f64::NAN });
    }
    let sympl = if e.ambient.kind() == ScalarKind::Real { Some(sympl_morphism(e)?.1) } else { None };
    let (_, sol) = sol_morphism(e)?;
    let amb = &e.ambient;
    let stepper = Stepper::new(amb)?;
    let n = 2 * amb.radius() * amb.lattice().n_x * amb.fiber_dim();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let d = match amb.kind() {
            ScalarKind::Real => crate::linalg::random_rvec(rng, n).map(re),
            ScalarKind::Complex => crate::linalg::random_cvec(rng, n),
        };
        let u = solution_with_data(amb, &stepper, &d, data_start(amb))?;
        let back = extend_solution(e, &stepper, &e.restrict(&u)?)?;
        worst = worst.max(back.sub(&u)?.norm() / u.norm());
    }
    Ok(TimesliceReport { applicable: true, sympl, sol: Some(sol), reextension: worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalityMode {
    Bos,
    Ferm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalityReport {
    pub mode: CausalityMode,
    pub disjoint: bool,
    pub generators: [usize; 2],
    /// Bos: max `|ω|` across families. Ferm: max cross slice product.
    pub cross_pairing: f64,
    /// Bos: number of nonzero Weyl commutators. Ferm: max mixed
    /// anticommutator entry.
    pub commutator: f64,
}

impl CausalityReport {
    pub fn passes(&self) -> bool {
        self.disjoint
            && match self.mode {
                CausalityMode::Bos => self.cross_pairing == 0.0 && self.commutator == 0.0,
                CausalityMode::Ferm => self.cross_pairing <= 1e-12 && self.commutator <= 1e-12,
            }
    }
}

fn region_sources<R: Rng>(op: &LatticeOperator, r: &Region, count: usize, rng: &mut R) -> Result<Vec<Section>> {
    let e = RegionEmbedding::new(op, r.clone())?;
    if e.source_points().is_empty() {
        return domain("region has no admissible source points");
    }
    Ok((0..count).map(|_| e.random_source(0.5, rng)).collect())
}

/// Quantum causality for generator families localized in two regions.
pub fn causality_check<R: Rng>(
    op: &LatticeOperator,
    r1: &Region,
    r2: &Region,
    mode: CausalityMode,
    per_family: usize,
    rng: &mut R,
) -> Result<CausalityReport> {
    let l = op.lattice();
    let disjoint = causally_disjoint(l, r1, r2)?;
    if !disjoint {
        return Ok(CausalityReport { mode, disjoint, generators: [0, 0], cross_pairing: f64::NAN, commutator: f64::NAN });
    }
    let f1 = region_sources(op, r1, per_family, rng)?;
    let f2 = region_sources(op, r2, per_family, rng)?;
    let gp = GreenPair::new(op)?;
    match mode {
        CausalityMode::Bos => {
            let space = SymplSpace::new(&gp)?;
            let classes: Vec<SymplClass> = f1.iter().chain(&f2).map(|f| space.class(f)).collect::<Result<_>>()?;
            let alg = WeylAlgebra::from_classes(&space, &classes)?;
            let n1 = f1.len();
            let mut cross = 0.0f64;
            let mut nonzero = 0usize;
            for i in 0..n1 {
                for j in n1..classes.len() {
                    cross = cross.max(alg.omega[(i, j)].abs()).max(alg.omega[(j, i)].abs());
                    if !weyl_commutator(&alg.generator(i), &alg.generator(j), &alg).is_empty() {
                        nonzero += 1;
                    }
                }
            }
            Ok(CausalityReport { mode, disjoint, generators: [n1, f2.len()], cross_pairing: cross, commutator: nonzero as f64 })
        }
        CausalityMode::Ferm => {
            let sp = SliceProduct::new(op);
            let u1: Vec<Section> = f1.iter().map(|f| gp.propagator(f)).collect::<Result<_>>()?;
            let u2: Vec<Section> = f2.iter().map(|f| gp.propagator(f)).collect::<Result<_>>()?;
            let mut cross = 0.0f64;
            for a in &u1 {
                for b in &u2 {
                    for t in sp.admissible() {
                        cross = cross.max(sp.eval(a, b, t)?.norm()).max(sp.eval(b, a, t)?.norm());
                    }
                }
            }
            let fam1 = positive_family(op, &u1)?;
            let fam2 = positive_family(op, &u2)?;
            let (fields, n1) = local_car_fields(op, &fam1, &fam2)?;
            let mut worst = 0.0f64;
            for (phi, phi_plus) in &fields[..n1] {
                for (psi, psi_plus) in &fields[n1..] {
                    for (x, y) in [(phi, psi), (phi, psi_plus), (phi_plus, psi), (phi_plus, psi_plus)] {
                        worst = worst.max(x.anticomm(y).max_abs());
                    }
                }
            }
            Ok(CausalityReport { mode, disjoint, generators: [fam1.len(), fam2.len()], cross_pairing: cross, commutator: worst })
        }
    }
}

/// Combinations of the solutions `us` on which the slice product is positive
/// definite, normalized; at most five.
fn positive_family(op: &LatticeOperator, us: &[Section]) -> Result<Vec<CVec>> {
    let h = slice_gram(op);
    let d = CMat::from_columns(&us.iter().map(|u| coords(op, u)).collect::<Result<Vec<_>>>()?);
    let g = d.adjoint() * &h * &d;
    let (vals, vecs) = crate::linalg::hermitian_eigen(&g);
    let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = Vec::new();
    for (i, &v) in vals.iter().enumerate().rev() {
        if v > 1e-8 * max && out.len() < 5 {
            out.push(&d * vecs.column(i) / re(v.sqrt()));
        }
    }
    if out.is_empty() {
        return domain("no positive directions for the slice product in this family");
    }
    Ok(out)
}

/// Fields `Φ = −a(u)*`, `Φ⁺ = a(u)` on the Fock space over the span of both
/// families with its slice product.
fn local_car_fields(op: &LatticeOperator, fam1: &[CVec], fam2: &[CVec]) -> Result<(Vec<(FockOp, FockOp)>, usize)> {
    let h = slice_gram(op);
    let all: Vec<CVec> = fam1.iter().chain(fam2).cloned().collect();
    let d = CMat::from_columns(&all);
    let g = d.adjoint() * &h * &d;
    let g = (&g + g.adjoint()) * re(0.5);
    let chol = g.cholesky().ok_or_else(|| Error::Build("family Gram is not positive definite".into()))?;
    let lt = chol.l().adjoint();
    let car = CarRep::new(all.len())?;
    let fields = (0..all.len())
        .map(|j| {
            let v = lt.column(j).into_owned();
            (car.a(&v).adjoint().scaled(re(-1.0)), car.a(&v))
        })
        .collect();
    Ok((fields, fam1.len()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarFunctorReport {
    pub modes: usize,
    /// `‖C^†C − I‖` for the band-to-ambient map in orthonormal bases.
    pub isometry_defect: f64,
    /// Max difference of normalized traces of corresponding monomials.
    pub trace_defect: f64,
    pub monomials: usize,
}

impl CarFunctorReport {
    pub fn passes(&self) -> bool {
        self.isometry_defect <= 1e-10 && self.trace_defect <= 1e-10
    }
}

/// `CAR(f)` for a band: the solution map is an isometry of the physical
/// sectors, and monomials in `a(v), a(v)*` keep their normalized traces.
pub fn car_functor_check<R: Rng>(e: &RegionEmbedding, monomials: usize, rng: &mut R) -> Result<CarFunctorReport> {
    require_band(e)?;
    let sub = SolutionSpace::new(&e.sub)?;
    let amb = SolutionSpace::new(&e.ambient)?;
    if sub.dim() != amb.dim() {
        return shape("band and ambient physical sectors differ in dimension");
    }
    let n = sub.dim();
    let stepper = Stepper::new(&e.ambient)?;
    let mut cmat = CMat::zeros(n, n);
    for j in 0..n {
        let u = sub.solution(&unit(n, j))?;
        cmat.set_column(j, &amb.coordinates(&extend_solution(e, &stepper, &u)?)?);
    }
    let isometry_defect = max_abs(&(cmat.adjoint() * &cmat - CMat::identity(n, n)));
    let (car_s, car_a) = (CarRep::new(n)?, CarRep::new(n)?);
    let dim = car_s.fock_dim() as f64;
    let mut trace_defect = 0.0f64;
    for _ in 0..monomials {
        let len = rng.gen_range(1..=4);
        let mut xs = FockOp::identity(car_s.fock_dim());
        let mut xa = FockOp::identity(car_a.fock_dim());
        for _ in 0..len {
            let v = crate::linalg::random_cvec(rng, n);
            let w = &cmat * &v;
            let (ys, ya) = if rng.gen_bool(0.5) { (car_s.a(&v), car_a.a(&w)) } else { (car_s.a_dag(&v), car_a.a_dag(&w)) };
            xs = xs.mul(&ys);
            xa = xa.mul(&ya);
        }
        let tr = |x: &FockOp| -> C64 { (0..x.dim()).map(|i| x.apply(&unit(x.dim(), i))[i]).sum::<C64>() / dim };
        trace_defect = trace_defect.max((tr(&xs) - tr(&xa)).norm());
    }
    Ok(CarFunctorReport { modes: n, isometry_defect, trace_defect, monomials })
}
