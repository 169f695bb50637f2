//! The check registry. Every check has a stable name, a suite, an anchor
//! naming the statement it verifies, a default tolerance and a bound
//! direction. Checks draw randomness from an RNG seeded by the run seed and
//! their own name, so results do not depend on scheduling or on which other
//! checks run.

use std::sync::OnceLock;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ghq::functor::{
    car_functor_check, causality_check, ext_zero, res_green_ext_check, sympl_morphism, timeslice_check, CarFunctorReport, CausalityMode,
    RegionEmbedding, ResGreenExtReport, TimesliceReport,
};
use ghq::green::{
    dirac_green, exact_sequence_check, green_axiom_report, proca_green, random_source, retarded_kernel_study, uniqueness_check,
    ConvergenceReport, ExactSequenceReport, GreenAxiomReport, GreenPair,
};
use ghq::lattice::{Direction, LatticeSpacetime, Point, Region};
use ghq::linalg::{max_abs, re, CMat};
use ghq::ops::{adjointness_defect, build_dalembert, build_dirac_1p1, build_proca, direct_sum, LatticeOperator, ScalarKind, Section};
use ghq::quant_bos::{
    ccr_functor_check, ccr_identity_check, field_equation_check, mode_frequency, npoint_coords, npoint_finite_difference,
    oscillator_two_point, real_fourier_basis, single_mode_class, state_check, state_two_point, sympl_rank_check, vacuum_with_mass,
    weyl_l2_rep_check, weyl_mul, weyl_star, CcrIdentityReport, QuasiFreeState, SymplClass, SymplSpace, WeylAlgebra, WeylPolynomial,
};
use ghq::quant_ferm::{
    build_car, build_selfdual_car, car_report, definite_type_certificate, field_check, key_identity_check, norm_check,
    slice_continuum_study, CarReport, FermionicFields, FieldReport, KeyIdentityReport, NormReport, SliceProduct, SolutionSpace,
};
use ghq::symbols::{
    build_clifford, classify_symbol, definite_type_test, euler_witness, random_covector, rs_classification, sigma_dirac, sigma_wave,
    CausalType, Covector, RsClassificationReport,
};
use ghq::{Error, Result};

use crate::config::{OperatorName, Scenario, ScenarioConfig, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Pass iff observed ≤ tolerance.
    Max,
    /// Pass iff observed ≥ tolerance.
    Min,
}

impl Bound {
    pub fn holds(self, observed: f64, tolerance: f64) -> bool {
        match self {
            Bound::Max => observed <= tolerance,
            Bound::Min => observed >= tolerance,
        }
    }
}

type CheckFn = fn(&Ctx, &mut ChaCha8Rng) -> Result<f64>;

pub struct CheckDef {
    pub name: &'static str,
    pub suite: Suite,
    pub anchor: &'static str,
    pub tolerance: f64,
    pub bound: Bound,
    /// Axiom scenario the check belongs to, if any.
    pub scenario: Option<Scenario>,
    run: CheckFn,
}

impl CheckDef {
    pub fn run(&self, ctx: &Ctx) -> Result<f64> {
        (self.run)(ctx, &mut rng_for(ctx.cfg.seed, self.name))
    }
}

const fn check(name: &'static str, suite: Suite, anchor: &'static str, tolerance: f64, run: CheckFn) -> CheckDef {
    CheckDef { name, suite, anchor, tolerance, bound: Bound::Max, scenario: None, run }
}

const fn at_least(name: &'static str, suite: Suite, anchor: &'static str, tolerance: f64, run: CheckFn) -> CheckDef {
    CheckDef { name, suite, anchor, tolerance, bound: Bound::Min, scenario: None, run }
}

const fn axiom(name: &'static str, scenario: Scenario, anchor: &'static str, tolerance: f64, run: CheckFn) -> CheckDef {
    CheckDef { name, suite: Suite::Axioms, anchor, tolerance, bound: Bound::Max, scenario: Some(scenario), run }
}

pub static CHECKS: &[CheckDef] = &[
    check("green.pg-identity", Suite::Green, "P∘G± = id on compactly supported sources", 1e-10, |c, _| Ok(c.green_axioms()?.g1)),
    check("green.gp-identity", Suite::Green, "G±∘P = id on compactly supported sections", 1e-10, |c, _| Ok(c.green_axioms()?.g2)),
    check("green.support", Suite::Green, "supp G±f lies in the causal future/past of supp f", 0.0, |c, _| {
        Ok(c.green_axioms()?.support_violations as f64)
    }),
    check("green.uniqueness", Suite::Green, "uniqueness of advanced and retarded Green's operators", 1e-10, green_uniqueness),
    check("green.self-adjointness", Suite::Green, "formal self-adjointness of P", 1e-12, |c, r| {
        adjointness_defect(&c.configured()?.0, 10, r)
    }),
    check("green.duality", Suite::Green, "G₊ and G₋ are formally adjoint", 1e-10, green_duality),
    check("green.dirac-composite", Suite::Green, "Dirac Green's operators from the squared operator", 1e-10, green_dirac_composite),
    check("green.proca-constraint", Suite::Green, "Proca solutions with co-closed sources are co-closed", 1e-10, green_proca_constraint),
    check("exact-seq.p-injective", Suite::ExactSeq, "exactness: P is injective on compactly supported sections", 0.0, |c, _| {
        Ok(flag(!c.exact()?.p_injective))
    }),
    check("exact-seq.gp-zero", Suite::ExactSeq, "exactness: G∘P vanishes on compactly supported sections", 1e-10, |c, _| {
        Ok(c.exact()?.gp_defect)
    }),
    check("exact-seq.kernel-range", Suite::ExactSeq, "exactness: ker G = P(C_c) by double inclusion", 0.0, |c, _| {
        Ok(flag(!c.exact()?.kernel_equals_range))
    }),
    check("exact-seq.solution-dim", Suite::ExactSeq, "exactness: dim G(C_c) equals the count of Cauchy data", 0.0, |c, _| {
        let e = c.exact()?;
        Ok(e.rank_g_sources.abs_diff(e.expected_solution_dim) as f64)
    }),
    check("symbols.clifford", Suite::Symbols, "Clifford relations of the gamma matrices", 1e-12, |c, _| {
        c.dims().iter().map(|&m| Ok(build_clifford(m)?.relation_defect())).try_fold(0.0, fold_max)
    }),
    check("symbols.beta-symmetry", Suite::Symbols, "Clifford multiplication is β-symmetric", 1e-12, |c, _| {
        c.dims().iter().map(|&m| Ok(build_clifford(m)?.beta_symmetry_defect())).try_fold(0.0, fold_max)
    }),
    check("symbols.wave-classification", Suite::Symbols, "wave symbol invertible iff ξ is not lightlike", 0.0, |c, r| {
        symbol_misclassified(c, r, 2, |m, xi| Ok(sigma_wave(xi, 1 << (m / 2))))
    }),
    check("symbols.dirac-classification", Suite::Symbols, "Dirac symbol invertible iff ξ is not lightlike", 0.0, |c, r| {
        symbol_misclassified(c, r, 1, |m, xi| sigma_dirac(&build_clifford(m)?, xi))
    }),
    at_least("symbols.dirac-definite", Suite::Symbols, "Dirac operators are of definite type", 1e-10, symbols_dirac_definite),
    check("symbols.euler-indefinite", Suite::Symbols, "Euler operator is not of definite type (witness)", 1e-12, |c, _| {
        Ok(c.dims().iter().map(|&m| euler_witness(m).1).fold(0.0, f64::max))
    }),
    check("symbols.rs-classification", Suite::Symbols, "Rarita-Schwinger symbol invertible iff ξ is not lightlike", 0.0, |c, _| {
        Ok(c.rs()?.iter().map(|r| r.misclassified).sum::<usize>() as f64)
    }),
    check("symbols.rs-null-vector", Suite::Symbols, "lightlike null vector of the Rarita-Schwinger symbol", 1e-12, |c, _| {
        Ok(c.rs()?.iter().map(|r| r.null_vector_defect).fold(0.0, f64::max))
    }),
    check("symbols.rs-witness", Suite::Symbols, "Rarita-Schwinger operator is not of definite type (witness)", 1e-12, |c, _| {
        Ok(c.rs()?.iter().map(|r| r.witness_value.abs()).fold(0.0, f64::max))
    }),
    check("symbols.rs-kernel-dim", Suite::Symbols, "dim ker γ = (m−1)·2^⌊m/2⌋", 0.0, |c, _| {
        Ok(c.rs()?.iter().map(|r| r.kernel_dim.abs_diff(r.expected_kernel_dim)).sum::<usize>() as f64)
    }),
    check("bos.skew", Suite::Bos, "symplectic form is antisymmetric", 1e-10, bos_skew),
    check("bos.rank", Suite::Bos, "symplectic form is nondegenerate on solutions", 0.0, |c, _| {
        let s = c.space()?;
        let rep = sympl_rank_check(s, &s.basis_classes()?)?;
        Ok(rep.expected_dim.abs_diff(rep.rank) as f64)
    }),
    check("bos.zero-class", Suite::Bos, "P(C_c) is the zero class of the quotient", 1e-12, bos_zero_class),
    check("bos.weyl-symbolic", Suite::Bos, "Weyl relations hold symbolically", 0.0, bos_weyl_symbolic),
    check("bos.weyl-l2", Suite::Bos, "ℓ² representation of the Weyl algebra", 1e-12, |c, r| {
        let rep = weyl_l2_rep_check(&c.weyl(r)?.1, c.cfg.samples.pairs, r);
        Ok(rep.unitarity.max(rep.weyl_relation).max(rep.symbolic_match).max(rep.identity))
    }),
    check("bos.state", Suite::Bos, "quasi-free vacuum is a state", 1e-10, bos_state),
    check("bos.two-point", Suite::Bos, "τ₂(f,g) − τ₂(g,f) = i⟪Gf,g⟫", 1e-10, |c, _| Ok(c.ccr()?.two_point)),
    check("bos.four-point", Suite::Bos, "adjacent-swap identity for τ₄", 1e-9, |c, _| Ok(c.ccr()?.four_point)),
    check("bos.field-equation", Suite::Bos, "τ₂(f, Pg) = 0", 1e-10, |c, r| {
        let (s, v) = (c.space()?, c.state()?);
        (0..3).map(|i| field_equation_check(state_two_point(v, s), s, &random_source(s.operator(), i, r))).try_fold(0.0, fold_max)
    }),
    check("bos.wick", Suite::Bos, "Wick τ₄ against the generating functional", 1e-6, bos_wick),
    check("bos.oscillator", Suite::Bos, "single-mode vacuum two-point function", 1e-6, bos_oscillator),
    at_least("ferm.definite", Suite::Ferm, "slice product is positive on the physical sector", 1e-10, |c, _| {
        Ok(definite_type_certificate(&c.dirac(&c.ferm_lattice()?)?)?.physical_min)
    }),
    check("ferm.slice-conservation", Suite::Ferm, "slice product is independent of the slice", 1e-12, ferm_slice_conservation),
    check("ferm.orthonormal", Suite::Ferm, "solution basis is orthonormal for the slice product", 1e-12, |c, _| {
        let g = c.sol()?.gram();
        Ok(max_abs(&(&g - CMat::identity(g.nrows(), g.ncols()))))
    }),
    check("ferm.car-aa", Suite::Ferm, "{a(v), a(w)} = 0", 1e-12, |c, _| Ok(c.car()?.0.aa)),
    check("ferm.car-a-adag", Suite::Ferm, "{a(v)*, a(w)} = (v, w)", 1e-12, |c, _| Ok(c.car()?.0.a_dag_a)),
    check("ferm.car-bb", Suite::Ferm, "self-dual CAR relations for b(v)", 1e-12, |c, _| Ok(c.car()?.0.bb)),
    check("ferm.a-norm", Suite::Ferm, "a(v) norm equals |v|", 1e-10, |c, _| Ok(c.car()?.1.a_norm)),
    check("ferm.b-norm", Suite::Ferm, "b(v) norm equals |v|/√2", 1e-10, |c, _| Ok(c.car()?.1.b_norm)),
    check("ferm.phi-phi", Suite::Ferm, "{Φ(f), Φ(g)} = 0", 1e-12, |c, _| Ok(c.fields()?.phi_phi)),
    check("ferm.phi-phi-plus", Suite::Ferm, "{Φ(f), Φ⁺(g)} = i⟪Gf,g⟫", 1e-10, |c, _| Ok(c.fields()?.phi_phi_plus)),
    check("ferm.field-equation", Suite::Ferm, "Φ(Pf) = 0", 1e-10, |c, _| Ok(c.fields()?.field_equation)),
    check("ferm.key-retarded", Suite::Ferm, "half identity for the retarded Green's operator", 1e-10, |c, _| Ok(c.key()?.retarded)),
    check("ferm.key-advanced", Suite::Ferm, "half identity for the advanced Green's operator", 1e-10, |c, _| Ok(c.key()?.advanced)),
    check("ferm.key-full", Suite::Ferm, "slice product of propagated solutions is i⟪Gf,g⟫", 1e-10, |c, _| Ok(c.key()?.full)),
    axiom("axioms.res-green-ext-band", Scenario::Band, "res∘G∘ext = G on a time band", 1e-10, |c, r| {
        res_defect(&res_green_ext_check(&RegionEmbedding::band(&c.wave()?, c.band().0, c.band().1)?, c.cfg.samples.functor, r)?)
    }),
    axiom("axioms.res-green-ext-diamond", Scenario::Diamond, "res∘G∘ext = G on a causal diamond", 1e-10, |c, r| {
        let l = c.lattice()?;
        let e = RegionEmbedding::diamond(&c.wave()?, Point::new(l.n_t / 2, l.n_x / 2), c.diamond_half())?;
        res_defect(&res_green_ext_check(&e, c.cfg.samples.functor, r)?)
    }),
    axiom("axioms.timeslice-sympl", Scenario::Band, "time-slice axiom for the symplectic functor", 1e-10, |c, _| {
        timeslice_defect(c.timeslice_wave()?, true)
    }),
    axiom("axioms.timeslice-sol", Scenario::Band, "time-slice axiom for the solution functor", 1e-10, |c, _| {
        timeslice_defect(c.timeslice_dirac()?, false)
    }),
    axiom("axioms.functoriality", Scenario::Band, "morphisms compose along nested bands", 1e-12, axioms_functoriality),
    axiom("axioms.ccr-functor", Scenario::Band, "CCR functor is an injective *-homomorphism on a band", 1e-10, axioms_ccr_functor),
    axiom("axioms.car-functor", Scenario::Band, "CAR functor is isometric and trace preserving on a band", 1e-12, |c, r| {
        let l = c.ferm_lattice()?;
        let (t1, t2) = band_for(l.n_t);
        let rep: CarFunctorReport = car_functor_check(&RegionEmbedding::band(&c.dirac(&l)?, t1, t2)?, c.cfg.samples.functor * 4, r)?;
        Ok(rep.isometry_defect.max(rep.trace_defect))
    }),
    axiom("axioms.causality-bos", Scenario::DisjointPair, "Einstein causality for the CCR functor", 0.0, |c, r| {
        causality(&build_dalembert(&c.causality_lattice()?, c.mass(), None)?, CausalityMode::Bos, r)
    }),
    axiom("axioms.causality-ferm", Scenario::DisjointPair, "graded causality for the CAR functor", 1e-12, |c, r| {
        causality(&c.dirac(&c.causality_lattice()?)?, CausalityMode::Ferm, r)
    }),
    check("continuum.kernel-value", Suite::Continuum, "massless retarded kernel tends to 1/2", 1e-4, |c, _| {
        Ok(*c.kernel()?.errors.last().expect("grids"))
    }),
    at_least("continuum.kernel-order", Suite::Continuum, "massless retarded kernel converges with order ≥ 1", 1.0, |c, _| {
        Ok(c.kernel()?.min_order())
    }),
    at_least("continuum.slice-order", Suite::Continuum, "slice product converges to the continuum formula", 1.0, |c, _| {
        Ok(slice_continuum_study(&c.cfg.continuum.slice_grids, c.mass_or_one())?.min_order())
    }),
];

pub fn find(name: &str) -> Option<&'static CheckDef> {
    CHECKS.iter().find(|c| c.name == name)
}

/// FNV-1a; stable across platforms and toolchains.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ name_hash(name))
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn fold_max(acc: f64, x: Result<f64>) -> Result<f64> {
    Ok(acc.max(x?))
}

/// Default band: the middle half of the lattice, at least 8 slices.
pub fn band_for(n_t: usize) -> (usize, usize) {
    let t1 = (n_t / 4).max(2);
    (t1, (n_t - 1 - t1).max(t1 + 7))
}

/// Lazily built shared state. Each memoized value uses its own RNG stream.
pub struct Ctx<'a> {
    pub cfg: &'a ScenarioConfig,
    configured: OnceLock<Result<(LatticeOperator, GreenPair, LatticeOperator)>>,
    green_axioms: OnceLock<Result<GreenAxiomReport>>,
    exact: OnceLock<Result<ExactSequenceReport>>,
    rs: OnceLock<Result<Vec<RsClassificationReport>>>,
    space: OnceLock<Result<SymplSpace>>,
    state: OnceLock<Result<QuasiFreeState>>,
    ccr: OnceLock<Result<CcrIdentityReport>>,
    sol: OnceLock<Result<SolutionSpace>>,
    car: OnceLock<Result<(CarReport, NormReport)>>,
    fields: OnceLock<Result<FieldReport>>,
    key: OnceLock<Result<KeyIdentityReport>>,
    ts_wave: OnceLock<Result<TimesliceReport>>,
    ts_dirac: OnceLock<Result<TimesliceReport>>,
    kernel: OnceLock<Result<ConvergenceReport>>,
}

fn memo<'b, T>(cell: &'b OnceLock<Result<T>>, f: impl FnOnce() -> Result<T>) -> Result<&'b T> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Self {
        Self {
            cfg,
            configured: OnceLock::new(),
            green_axioms: OnceLock::new(),
            exact: OnceLock::new(),
            rs: OnceLock::new(),
            space: OnceLock::new(),
            state: OnceLock::new(),
            ccr: OnceLock::new(),
            sol: OnceLock::new(),
            car: OnceLock::new(),
            fields: OnceLock::new(),
            key: OnceLock::new(),
            ts_wave: OnceLock::new(),
            ts_dirac: OnceLock::new(),
            kernel: OnceLock::new(),
        }
    }

    fn group_rng(&self, group: &str) -> ChaCha8Rng {
        rng_for(self.cfg.seed, &format!("group:{group}"))
    }

    pub fn lattice(&self) -> Result<LatticeSpacetime> {
        self.cfg.lattice.build()
    }

    pub fn ferm_lattice(&self) -> Result<LatticeSpacetime> {
        let l = &self.cfg.lattice;
        LatticeSpacetime::new(self.cfg.ferm.n_t, self.cfg.ferm.n_x, l.dt, l.dx)
    }

    /// Lattice for the disjoint-pair checks: two diamonds that admit
    /// sources and stay causally disjoint need at least 24×16 points.
    pub fn causality_lattice(&self) -> Result<LatticeSpacetime> {
        let l = &self.cfg.lattice;
        LatticeSpacetime::new(l.n_t.max(24), l.n_x.max(16), l.dt, l.dx)
    }

    fn mass(&self) -> f64 {
        self.cfg.operator.mass
    }

    /// Mass for constructions that need a gap.
    pub fn mass_or_one(&self) -> f64 {
        if self.mass() > 0.0 {
            self.mass()
        } else {
            1.0
        }
    }

    fn dims(&self) -> &[usize] {
        &self.cfg.symbols.dims
    }

    pub fn wave(&self) -> Result<LatticeOperator> {
        build_dalembert(&self.lattice()?, self.mass(), None)
    }

    pub fn dirac(&self, l: &LatticeSpacetime) -> Result<LatticeOperator> {
        build_dirac_1p1(l, self.mass())
    }

    /// Configured operator, its Green's operators and the operator handed
    /// to the dense oracle.
    pub fn configured(&self) -> Result<&(LatticeOperator, GreenPair, LatticeOperator)> {
        memo(&self.configured, || build_configured(self.cfg.operator.name, &self.lattice()?, self.mass()))
    }

    /// Real operator for the bosonic suite: the configured one when it is
    /// real, the wave operator otherwise.
    fn real_green(&self) -> Result<GreenPair> {
        match self.cfg.operator.name {
            OperatorName::Proca => proca_green(&build_proca(&self.lattice()?, self.mass())?),
            _ => GreenPair::new(&self.wave()?),
        }
    }

    pub fn space(&self) -> Result<&SymplSpace> {
        memo(&self.space, || SymplSpace::new(&self.real_green()?))
    }

    pub fn state(&self) -> Result<&QuasiFreeState> {
        let m = self.cfg.npoint.state_mass.unwrap_or(self.mass_or_one());
        memo(&self.state, || vacuum_with_mass(self.space()?, m))
    }

    fn green_axioms(&self) -> Result<&GreenAxiomReport> {
        memo(&self.green_axioms, || green_axiom_report(&self.configured()?.1, self.cfg.samples.green, &mut self.group_rng("green")))
    }

    fn exact(&self) -> Result<&ExactSequenceReport> {
        memo(&self.exact, || exact_sequence_check(&self.configured()?.1))
    }

    fn rs(&self) -> Result<&Vec<RsClassificationReport>> {
        memo(&self.rs, || {
            let mut r = self.group_rng("rs");
            self.dims().iter().map(|&m| rs_classification(m, self.cfg.samples.covectors, &mut r)).collect()
        })
    }

    fn weyl(&self, r: &mut ChaCha8Rng) -> Result<(Vec<SymplClass>, WeylAlgebra)> {
        let s = self.space()?;
        let gens: Vec<SymplClass> = (0..4).map(|i| s.class(&random_source(s.operator(), i, r))).collect::<Result<_>>()?;
        let alg = WeylAlgebra::from_classes(s, &gens)?;
        Ok((gens, alg))
    }

    fn ccr(&self) -> Result<&CcrIdentityReport> {
        memo(&self.ccr, || ccr_identity_check(self.state()?, self.space()?, self.cfg.samples.pairs, &mut self.group_rng("ccr")))
    }

    fn sol(&self) -> Result<&SolutionSpace> {
        memo(&self.sol, || SolutionSpace::new(&self.dirac(&self.ferm_lattice()?)?))
    }

    fn car(&self) -> Result<&(CarReport, NormReport)> {
        memo(&self.car, || {
            let rep = build_selfdual_car(self.sol()?)?;
            Ok((car_report(&rep), norm_check(&rep, self.cfg.samples.car_vectors, &mut self.group_rng("car"))))
        })
    }

    fn fields(&self) -> Result<&FieldReport> {
        memo(&self.fields, || {
            let sol = self.sol()?;
            let gp = GreenPair::new(sol.operator())?;
            let car = build_car(sol)?;
            field_check(&FermionicFields { sol, gp: &gp, car: &car }, self.cfg.samples.pairs, &mut self.group_rng("fields"))
        })
    }

    fn key(&self) -> Result<&KeyIdentityReport> {
        memo(&self.key, || {
            let l = &self.cfg.lattice;
            let lat = LatticeSpacetime::new(l.n_t.max(24), self.cfg.ferm.key_n_x, l.dt, l.dx)?;
            key_identity_check(&GreenPair::new(&self.dirac(&lat)?)?, self.cfg.samples.pairs, &mut self.group_rng("key"))
        })
    }

    pub fn band(&self) -> (usize, usize) {
        match self.cfg.axioms.band {
            Some([a, b]) => (a, b),
            None => band_for(self.cfg.lattice.n_t),
        }
    }

    pub fn diamond_half(&self) -> usize {
        let l = &self.cfg.lattice;
        self.cfg.axioms.diamond_half.unwrap_or_else(|| (l.n_x / 2 - 1).min(l.n_t / 2 - 3).max(1))
    }

    fn timeslice_wave(&self) -> Result<&TimesliceReport> {
        memo(&self.ts_wave, || {
            let (t1, t2) = self.band();
            timeslice_check(&RegionEmbedding::band(&self.wave()?, t1, t2)?, self.cfg.samples.functor, &mut self.group_rng("ts-wave"))
        })
    }

    fn timeslice_dirac(&self) -> Result<&TimesliceReport> {
        memo(&self.ts_dirac, || {
            let (t1, t2) = self.band();
            let e = RegionEmbedding::band(&self.dirac(&self.lattice()?)?, t1, t2)?;
            timeslice_check(&e, self.cfg.samples.functor, &mut self.group_rng("ts-dirac"))
        })
    }

    fn kernel(&self) -> Result<&ConvergenceReport> {
        memo(&self.kernel, || retarded_kernel_study(&self.cfg.continuum.kernel_grids))
    }
}

pub fn build_configured(name: OperatorName, l: &LatticeSpacetime, m0: f64) -> Result<(LatticeOperator, GreenPair, LatticeOperator)> {
    Ok(match name {
        OperatorName::Wave => {
            let op = build_dalembert(l, m0, None)?;
            (op.clone(), GreenPair::new(&op)?, op)
        }
        OperatorName::Dirac => {
            let op = build_dirac_1p1(l, m0)?;
            (op.clone(), GreenPair::new(&op)?, op)
        }
        OperatorName::Proca => {
            let ops = build_proca(l, m0)?;
            (ops.proca.clone(), proca_green(&ops)?, ops.proca)
        }
        OperatorName::WaveDirac => {
            let op = direct_sum(&build_dalembert(l, m0, None)?.complexified()?, &build_dirac_1p1(l, m0)?)?;
            (op.clone(), GreenPair::new(&op)?, op)
        }
    })
}

fn green_uniqueness(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (_, gp, oracle) = c.configured()?;
    let rep = uniqueness_check(gp, oracle, c.cfg.samples.uniqueness, r)?;
    Ok(rep.max_distance)
}

fn green_duality(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (op, gp, _) = c.configured()?;
    let mut worst = 0.0f64;
    for i in 0..c.cfg.samples.green.min(10) {
        let (f, g) = (random_source(op, i, r), random_source(op, i + 1, r));
        let gf = gp.retarded(&f)?;
        let a = op.pair(&gf, &g)?;
        let b = op.pair(&f, &gp.advanced(&g)?)?;
        let scale = gf.norm() * g.norm() * op.lattice().volume_weight();
        worst = worst.max((a - b).norm() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn green_dirac_composite(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let op = c.dirac(&c.lattice()?)?;
    let direct = GreenPair::new(&op)?;
    let composite = dirac_green(&op, c.mass())?;
    let mut worst = 0.0f64;
    for i in 0..c.cfg.samples.green.min(10) {
        let f = random_source(&op, i, r);
        for dir in [Direction::Future, Direction::Past] {
            let d = direct.solve(&f, dir)?.sub(&composite.solve(&f, dir)?)?;
            worst = worst.max(d.norm() / f.norm());
        }
    }
    Ok(worst)
}

fn green_proca_constraint(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let l = c.lattice()?;
    let ops = build_proca(&l, c.mass_or_one())?;
    let gp = proca_green(&ops)?;
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let beta = Section::random(&l, 1, ScalarKind::Real, 4..l.n_t - 5, 1.0, r);
        let f = ops.forms.delta2.apply(&beta)?;
        for dir in [Direction::Future, Direction::Past] {
            let alpha = gp.solve(&f, dir)?;
            let div = ops.forms.delta1.apply(&alpha)?;
            worst = worst.max(div.norm() / (alpha.norm() * ops.forms.delta1.max_abs_coeff()));
        }
    }
    Ok(worst)
}

fn symbol_misclassified(c: &Ctx, r: &mut ChaCha8Rng, order: u32, sigma: impl Fn(usize, &Covector) -> Result<CMat>) -> Result<f64> {
    let mut bad = 0usize;
    for &m in c.dims() {
        for i in 0..c.cfg.samples.covectors {
            let xi = random_covector(m, i, r);
            let cls = classify_symbol(&sigma(m, &xi)?, &xi, order);
            let expect = !matches!(cls.causal_type, CausalType::Lightlike | CausalType::Zero);
            bad += usize::from(cls.invertible != expect);
        }
    }
    Ok(bad as f64)
}

fn symbols_dirac_definite(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for &m in c.dims() {
        let cl = build_clifford(m)?;
        let rep = definite_type_test(|x| sigma_dirac(&cl, x), &cl.beta, None, m, 20, r)?;
        worst = worst.min(if rep.hermitian_defect <= 1e-12 { rep.min_eigenvalue } else { f64::NEG_INFINITY });
    }
    Ok(worst)
}

fn bos_skew(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let s = c.space()?;
    let mut worst = 0.0f64;
    for i in 0..c.cfg.samples.pairs {
        let f = s.class(&random_source(s.operator(), i, r))?;
        let g = s.class(&random_source(s.operator(), i + 1, r))?;
        let scale = (f.f.norm() * g.f.norm()).max(1.0);
        worst = worst.max((s.omega(&f, &g)? + s.omega(&g, &f)?).abs() / scale);
    }
    Ok(worst)
}

fn bos_zero_class(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let s = c.space()?;
    let op = s.operator();
    let m = op.margin_rows();
    let rad = op.radius();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let h = Section::random(op.lattice(), op.fiber_dim(), ScalarKind::Real, m.start + rad..m.end - rad, 0.5, r);
        let ph = op.apply(&h)?;
        worst = worst.max(s.class(&ph)?.coords.amax() / ph.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn bos_weyl_symbolic(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (_, alg) = c.weyl(r)?;
    let p = alg.generators();
    let mut failures = 0usize;
    for _ in 0..c.cfg.samples.pairs {
        let x = ghq::quant_bos::random_word(p, 2, r);
        let y = ghq::quant_bos::random_word(p, 2, r);
        let (wx, wy) = (WeylPolynomial::word(x.clone(), re(1.0)), WeylPolynomial::word(y.clone(), re(1.0)));
        let sum: Vec<i64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let phase = ghq::C64::from_polar(1.0, -alg.omega_words(&x, &y) / 2.0);
        failures += usize::from(weyl_mul(&wx, &wy, &alg) != WeylPolynomial::word(sum, phase));
        failures += usize::from(weyl_star(&wx) != WeylPolynomial::word(x.iter().map(|v| -v).collect(), re(1.0)));
        failures += usize::from(weyl_mul(&wx, &weyl_star(&wx), &alg) != WeylPolynomial::unit(p));
        failures += usize::from(alg.omega_words(&x, &y) != -alg.omega_words(&y, &x));
    }
    Ok(failures as f64)
}

fn bos_state(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (gens, _) = c.weyl(r)?;
    let coords: Vec<DVector<f64>> = gens.into_iter().map(|g| g.coords).collect();
    let rep = state_check(c.state()?, &coords, 10 * c.cfg.samples.pairs, c.cfg.samples.pairs, r);
    Ok((rep.normalization - 1.0).abs().max(rep.domination_defect).max(-rep.min_gram_eigenvalue))
}

fn bos_wick(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (s, v) = (c.space()?, c.state()?);
    let cs: Vec<DVector<f64>> = (0..4)
        .map(|i| {
            let x = s.class(&random_source(s.operator(), i, r))?.coords;
            let n = v.mu(&x, &x).sqrt();
            Ok(x / n)
        })
        .collect::<Result<_>>()?;
    Ok((npoint_coords(v, &cs) - npoint_finite_difference(v, &cs, 0.2)).norm())
}

fn bos_oscillator(c: &Ctx, _: &mut ChaCha8Rng) -> Result<f64> {
    let s = SymplSpace::new(&GreenPair::new(&c.wave()?)?)?;
    let m = c.mass_or_one();
    let v = vacuum_with_mass(&s, m)?;
    let l = *s.operator().lattice();
    let (_, modes) = real_fourier_basis(l.n_x);
    let mut worst = 0.0f64;
    for (col, &k) in modes.iter().enumerate() {
        let f = single_mode_class(&s, col, 0.7, -0.3)?;
        let g = single_mode_class(&s, col, -0.2, 0.9)?;
        let ours = v.two_point(&f.coords, &g.coords);
        let w = mode_frequency(m, l.dx, l.n_x, k);
        let oracle = oscillator_two_point(l.dx, w, (0.7, -0.3), (-0.2, 0.9), 60);
        worst = worst.max((ours - oracle).norm());
    }
    Ok(worst)
}

fn ferm_slice_conservation(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let op = c.dirac(&c.lattice()?)?;
    let gp = GreenPair::new(&op)?;
    let sp = SliceProduct::new(&op);
    let mut worst = 0.0f64;
    for _ in 0..c.cfg.samples.pairs.min(10) {
        let (f, g) = (op.random_margin_section(r), op.random_margin_section(r));
        let (u, v) = (gp.propagator(&f)?, gp.propagator(&g)?);
        worst = worst.max(sp.t_independence(&u, &v)? * op.lattice().volume_weight() / (u.norm() * v.norm()));
    }
    Ok(worst)
}

fn res_defect(rep: &ResGreenExtReport) -> Result<f64> {
    Ok(if rep.cone_mismatches > 0 { f64::INFINITY } else { rep.defect.max(rep.intertwining) })
}

fn timeslice_defect(rep: &TimesliceReport, sympl: bool) -> Result<f64> {
    let m = if sympl { rep.sympl.as_ref() } else { rep.sol.as_ref() };
    match m {
        Some(m) if m.isomorphism => Ok(m.form_defect.max(rep.reextension)),
        Some(_) => Ok(f64::INFINITY),
        None => Err(Error::Domain("time-slice morphism not available for this operator".into())),
    }
}

fn axioms_functoriality(c: &Ctx, _: &mut ChaCha8Rng) -> Result<f64> {
    let op = c.wave()?;
    let (t1, t2) = c.band();
    let (o1, o2) = (2.min(t1), (op.lattice().n_t - 3).max(t2));
    let inner = RegionEmbedding::band(&op, t1, t2)?;
    let outer = RegionEmbedding::band(&op, o1, o2)?;
    let nested = RegionEmbedding::band(outer.sub_operator(), t1 - o1, t2 - o1)?;
    let (m1, _) = sympl_morphism(&inner)?;
    let (m2, _) = sympl_morphism(&outer)?;
    let (m12, _) = sympl_morphism(&nested)?;
    Ok((&m2 * &m12 - &m1).amax() / m1.amax().max(1.0))
}

fn axioms_ccr_functor(c: &Ctx, r: &mut ChaCha8Rng) -> Result<f64> {
    let (t1, t2) = c.band();
    let e = RegionEmbedding::band(&c.wave()?, t1, t2)?;
    let source = SymplSpace::new(&GreenPair::new(e.sub_operator())?)?;
    let target = SymplSpace::new(&GreenPair::new(e.ambient())?)?;
    let gens: Vec<Section> = (0..3).map(|_| e.random_source(0.4, r)).collect();
    let rep = ccr_functor_check(&source, &target, |f| ext_zero(&e, f), &gens, c.cfg.samples.functor, r)?;
    Ok(rep.gram_defect.max(rep.product_defect).max(rep.star_defect))
}

/// Two diamonds on the middle slice, half a circle apart.
pub fn disjoint_pair(l: &LatticeSpacetime) -> Result<(Region, Region)> {
    let h = (l.n_x / 4).saturating_sub(1).max(3);
    let t = l.n_t / 2;
    Ok((Region::diamond_centered(l, Point::new(t, l.n_x / 4), h)?, Region::diamond_centered(l, Point::new(t, 3 * l.n_x / 4), h)?))
}

fn causality(op: &LatticeOperator, mode: CausalityMode, r: &mut ChaCha8Rng) -> Result<f64> {
    let (r1, r2) = disjoint_pair(op.lattice())?;
    let per = if mode == CausalityMode::Bos { 3 } else { 4 };
    let rep = causality_check(op, &r1, &r2, mode, per, r)?;
    if !rep.disjoint {
        return Err(Error::Domain("regions are not causally disjoint".into()));
    }
    Ok(rep.cross_pairing.max(rep.commutator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn names_are_unique_and_suites_covered() {
        let names: BTreeSet<&str> = CHECKS.iter().map(|c| c.name).collect();
        assert_eq!(names.len(), CHECKS.len());
        assert!(CHECKS.len() >= 30);
        for s in [Suite::Green, Suite::ExactSeq, Suite::Symbols, Suite::Bos, Suite::Ferm, Suite::Axioms, Suite::Continuum] {
            assert!(CHECKS.iter().any(|c| c.suite == s), "{s:?}");
        }
        for c in CHECKS {
            assert!(c.name.starts_with(c.suite.as_str()), "{}", c.name);
            assert_eq!(c.scenario.is_some(), c.suite == Suite::Axioms);
        }
    }

    #[test]
    fn rng_streams_depend_on_name_and_seed() {
        use rand::Rng;
        let a: u64 = rng_for(1, "x").gen();
        assert_eq!(a, rng_for(1, "x").gen::<u64>());
        assert_ne!(a, rng_for(1, "y").gen::<u64>());
        assert_ne!(a, rng_for(2, "x").gen::<u64>());
    }

    #[test]
    fn default_band_has_eight_slices() {
        assert_eq!(band_for(16), (4, 11));
        assert_eq!(band_for(12), (3, 10));
    }
}
