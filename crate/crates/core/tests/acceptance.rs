//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::Instant;

use ghq::functor::{causality_check, res_green_ext_check, timeslice_check, CausalityMode, RegionEmbedding};
use ghq::green::{
    dirac_green, exact_sequence_check, green_axiom_report, proca_green, random_source, retarded_kernel_study, uniqueness_check, GreenPair,
};
use ghq::lattice::{LatticeSpacetime, Point, Region};
use ghq::linalg::re;
use ghq::ops::{build_dalembert, build_dirac_1p1, build_proca, direct_sum, LatticeOperator};
use ghq::quant_bos::{
    ccr_identity_check, default_vacuum, field_equation_check, npoint_coords, npoint_finite_difference, state_two_point, sympl_rank_check,
    weyl_l2_rep_check, weyl_mul, weyl_star, SymplClass, SymplSpace, WeylAlgebra, WeylPolynomial,
};
use ghq::quant_ferm::{
    build_car, build_selfdual_car, car_report, field_check, key_identity_check, norm_check, slice_continuum_study, FermionicFields,
    SliceProduct, SolutionSpace,
};
use ghq::symbols::rs_classification;
use ghq::Result;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.0625;
const DX: f64 = 0.125;

struct Outcome {
    pass: bool,
    detail: String,
}

fn lat(n_t: usize, n_x: usize) -> LatticeSpacetime {
    LatticeSpacetime::new(n_t, n_x, DT, DX).expect("lattice")
}

fn rng(i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + i)
}

fn green_pairs(l: &LatticeSpacetime) -> Result<Vec<(String, GreenPair, LatticeOperator)>> {
    let w0 = build_dalembert(l, 0.0, None)?;
    let w1 = build_dalembert(l, 1.0, None)?;
    let proca = build_proca(l, 1.0)?;
    let dirac = build_dirac_1p1(l, 1.0)?;
    let sum = direct_sum(&w1.complexified()?, &dirac)?;
    Ok(vec![
        ("wave m=0".into(), GreenPair::new(&w0)?, w0),
        ("wave m=1".into(), GreenPair::new(&w1)?, w1),
        ("proca m=1".into(), proca_green(&proca)?, proca.proca.clone()),
        ("dirac direct".into(), GreenPair::new(&dirac)?, dirac.clone()),
        ("dirac D∘G".into(), dirac_green(&dirac, 1.0)?, dirac.clone()),
        ("wave⊕dirac".into(), GreenPair::new(&sum)?, sum),
    ])
}

fn c1() -> Result<Outcome> {
    let start = Instant::now();
    let l = lat(48, 16);
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for (_, gp, _) in green_pairs(&l)? {
        let rep = green_axiom_report(&gp, 50, &mut r)?;
        worst = worst.max(rep.g1).max(rep.g2);
        violations += rep.support_violations;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: worst <= 1e-10 && violations == 0 && secs < 30.0,
        detail: format!("max defect {worst:.2e} (≤ 1e-10), support violations {violations}, {secs:.1} s (< 30 s)"),
    })
}

fn c2() -> Result<Outcome> {
    let l = lat(24, 8);
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for (_, gp, oracle) in green_pairs(&l)? {
        let rep = uniqueness_check(&gp, &oracle, 20, &mut r)?;
        worst = worst.max(rep.max_distance);
    }
    Ok(Outcome { pass: worst <= 1e-10, detail: format!("max distance to oracle {worst:.2e} (≤ 1e-10), 6 operators × 20 sources") })
}

fn c3() -> Result<Outcome> {
    let l = lat(24, 8);
    let wave = exact_sequence_check(&GreenPair::new(&build_dalembert(&l, 1.0, None)?)?)?;
    let dirac = exact_sequence_check(&GreenPair::new(&build_dirac_1p1(&l, 1.0)?)?)?;
    let dims_ok = wave.rank_g_sources == 16 && dirac.rank_g_sources == 2 * 2 * 8;
    Ok(Outcome {
        pass: wave.passes() && dirac.passes() && dims_ok,
        detail: format!(
            "wave dim G(C_c) = {} (2r·k·n_x = 16), dirac dim G(C_c) = {} (2r·k·n_x = 32), injective {}/{}, ker G = P(C_c) {}/{}",
            wave.rank_g_sources,
            dirac.rank_g_sources,
            wave.p_injective,
            dirac.p_injective,
            wave.kernel_equals_range,
            dirac.kernel_equals_range
        ),
    })
}

fn wave_space(n_t: usize, n_x: usize) -> Result<SymplSpace> {
    SymplSpace::new(&GreenPair::new(&build_dalembert(&lat(n_t, n_x), 1.0, None)?)?)
}

fn c4() -> Result<Outcome> {
    let s = wave_space(24, 8)?;
    let mut r = rng(4);
    let mut skew = 0.0f64;
    for i in 0..100 {
        let f = s.class(&random_source(s.operator(), i, &mut r))?;
        let g = s.class(&random_source(s.operator(), i + 1, &mut r))?;
        let scale = f.f.norm() * g.f.norm();
        skew = skew.max((s.omega(&f, &g)? + s.omega(&g, &f)?).abs() / scale.max(1.0));
    }
    let rank = sympl_rank_check(&s, &s.basis_classes()?)?;
    Ok(Outcome {
        pass: skew <= 1e-10 && rank.full_rank,
        detail: format!("skew defect {skew:.2e} (≤ 1e-10) over 100 pairs, ω-Gram rank {}/{}", rank.rank, rank.expected_dim),
    })
}

fn c5() -> Result<Outcome> {
    let s = wave_space(24, 8)?;
    let mut r = rng(5);
    let gens: Vec<SymplClass> = (0..4).map(|i| s.class(&random_source(s.operator(), i, &mut r))).collect::<Result<_>>()?;
    let alg = WeylAlgebra::from_classes(&s, &gens)?;
    let mut symbolic = true;
    for a in -2..=2i64 {
        for b in -2..=2i64 {
            let (x, y) = (vec![a, 1, 0, -b], vec![b, 0, a, 1]);
            let wx = WeylPolynomial::word(x.clone(), re(1.0));
            let wy = WeylPolynomial::word(y.clone(), re(1.0));
            let sum: Vec<i64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
            let phase = ghq::C64::from_polar(1.0, -alg.omega_words(&x, &y) / 2.0);
            symbolic &= weyl_mul(&wx, &wy, &alg) == WeylPolynomial::word(sum, phase);
            symbolic &= weyl_star(&wx) == WeylPolynomial::word(x.iter().map(|v| -v).collect(), re(1.0));
            symbolic &= weyl_mul(&wx, &weyl_star(&wx), &alg) == WeylPolynomial::unit(4);
        }
    }
    let l2 = weyl_l2_rep_check(&alg, 50, &mut r);
    let wave = build_dalembert(&lat(24, 16), 1.0, None)?;
    let l = *wave.lattice();
    let r1 = Region::diamond_centered(&l, Point::new(12, 3), 3)?;
    let r2 = Region::diamond_centered(&l, Point::new(12, 11), 3)?;
    let caus = causality_check(&wave, &r1, &r2, CausalityMode::Bos, 3, &mut r)?;
    let worst = l2.unitarity.max(l2.weyl_relation).max(l2.symbolic_match).max(l2.identity);
    Ok(Outcome {
        pass: symbolic && l2.passes(1e-12) && caus.passes(),
        detail: format!(
            "symbolic relations exact {symbolic}, ℓ² defect {worst:.2e} (≤ 1e-12), disjoint-family commutators nonzero {}",
            caus.commutator
        ),
    })
}

fn c6() -> Result<Outcome> {
    let s = wave_space(24, 8)?;
    let v = default_vacuum(&s)?;
    let mut r = rng(6);
    let ccr = ccr_identity_check(&v, &s, 30, &mut r)?;
    let mut field = 0.0f64;
    for i in 0..5 {
        let g = random_source(s.operator(), i, &mut r);
        field = field.max(field_equation_check(state_two_point(&v, &s), &s, &g)?);
    }
    let cs: Vec<DVector<f64>> = (0..4)
        .map(|i| {
            let c = s.class(&random_source(s.operator(), i, &mut r))?.coords;
            let n = v.mu(&c, &c).sqrt();
            Ok(c / n)
        })
        .collect::<Result<_>>()?;
    let fd = (npoint_coords(&v, &cs) - npoint_finite_difference(&v, &cs, 0.2)).norm();
    Ok(Outcome {
        pass: ccr.two_point <= 1e-10 && ccr.four_point <= 1e-9 && field <= 1e-10 && fd <= 1e-6,
        detail: format!(
            "τ₂ antisymmetry {:.2e} (≤ 1e-10), τ₄ swap {:.2e} (≤ 1e-9), field equation {field:.2e} (≤ 1e-10), Wick vs FD {fd:.2e} (≤ 1e-6)",
            ccr.two_point, ccr.four_point
        ),
    })
}

fn c7() -> Result<Outcome> {
    let op = build_dirac_1p1(&lat(48, 8), 1.0)?;
    let gp = GreenPair::new(&op)?;
    let sp = SliceProduct::new(&op);
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (f, g) = (op.random_margin_section(&mut r), op.random_margin_section(&mut r));
        let (u, v) = (gp.propagator(&f)?, gp.propagator(&g)?);
        let scale = u.norm() * v.norm() / op.lattice().volume_weight();
        worst = worst.max(sp.t_independence(&u, &v)? / scale);
    }
    let study = slice_continuum_study(&[8, 16, 32], 1.0)?;
    Ok(Outcome {
        pass: worst <= 1e-12 && study.min_order() >= 1.0,
        detail: format!(
            "t-independence {worst:.2e} (≤ 1e-12), continuum errors {:.2e}/{:.2e}/{:.2e}, min order {:.2} (≥ 1)",
            study.errors[0],
            study.errors[1],
            study.errors[2],
            study.min_order()
        ),
    })
}

fn c8() -> Result<Outcome> {
    let start = Instant::now();
    let sol = SolutionSpace::new(&build_dirac_1p1(&lat(16, 4), 1.0)?)?;
    let rep = build_selfdual_car(&sol)?;
    let car = car_report(&rep);
    let norms = norm_check(&rep, 100, &mut rng(8));
    let secs = start.elapsed().as_secs_f64();
    let anti = car.aa.max(car.a_dag_a).max(car.bb);
    Ok(Outcome {
        pass: anti <= 1e-12 && norms.a_norm <= 1e-10 && norms.b_norm <= 1e-10 && car.fock_dim <= 1 << 10 && secs < 60.0,
        detail: format!(
            "anticommutators {anti:.2e} (≤ 1e-12), ‖a(v)‖ {:.2e}, ‖b(v)‖ {:.2e} (≤ 1e-10), Fock dim {} (≤ 1024), {secs:.1} s (< 60 s)",
            norms.a_norm, norms.b_norm, car.fock_dim
        ),
    })
}

fn c9() -> Result<Outcome> {
    let op = build_dirac_1p1(&lat(20, 4), 1.0)?;
    let sol = SolutionSpace::new(&op)?;
    let gp = GreenPair::new(&op)?;
    let car = build_car(&sol)?;
    let mut r = rng(9);
    let fields = field_check(&FermionicFields { sol: &sol, gp: &gp, car: &car }, 10, &mut r)?;
    let key = key_identity_check(&GreenPair::new(&build_dirac_1p1(&lat(32, 8), 1.0)?)?, 10, &mut r)?;
    let half = key.retarded.max(key.advanced).max(key.full);
    Ok(Outcome {
        pass: fields.phi_phi <= 1e-12 && fields.phi_phi_plus <= 1e-10 && half <= 1e-10,
        detail: format!(
            "{{Φ,Φ}} {:.2e} (≤ 1e-12), {{Φ,Φ⁺}} − i⟪Gf,g⟫ {:.2e} (≤ 1e-10), half-identities {half:.2e} (≤ 1e-10)",
            fields.phi_phi, fields.phi_phi_plus
        ),
    })
}

fn c10() -> Result<Outcome> {
    let mut r = rng(10);
    let wave = build_dalembert(&lat(24, 16), 1.0, None)?;
    let dirac = build_dirac_1p1(&lat(24, 16), 1.0)?;
    let ts_w = timeslice_check(&RegionEmbedding::band(&wave, 7, 16)?, 5, &mut r)?;
    let ts_d = timeslice_check(&RegionEmbedding::band(&build_dirac_1p1(&lat(24, 8), 1.0)?, 7, 16)?, 5, &mut r)?;
    let l = *wave.lattice();
    let r1 = Region::diamond_centered(&l, Point::new(12, 3), 3)?;
    let r2 = Region::diamond_centered(&l, Point::new(12, 11), 3)?;
    let bos = causality_check(&wave, &r1, &r2, CausalityMode::Bos, 3, &mut r)?;
    let ferm = causality_check(&dirac, &r1, &r2, CausalityMode::Ferm, 4, &mut r)?;
    let mut res = 0.0f64;
    let mut mismatches = 0;
    for op in [&wave, &dirac] {
        for e in [RegionEmbedding::band(op, 5, 18)?, RegionEmbedding::diamond(op, Point::new(12, 8), 5)?] {
            let rep = res_green_ext_check(&e, 5, &mut r)?;
            res = res.max(rep.defect);
            mismatches += rep.cone_mismatches;
        }
    }
    let gram = [&ts_w, &ts_d].iter().flat_map(|t| [t.sympl.as_ref(), t.sol.as_ref()]).flatten().map(|m| m.form_defect).fold(0.0, f64::max);
    Ok(Outcome {
        pass: ts_w.passes() && ts_d.passes() && bos.passes() && ferm.passes() && res <= 1e-10 && mismatches == 0,
        detail: format!(
            "time-slice iso {}/{} Gram {gram:.2e} (≤ 1e-10), causality bos {} ferm {:.2e} (≤ 1e-12), res∘G∘ext {res:.2e} (≤ 1e-10)",
            ts_w.passes(),
            ts_d.passes(),
            bos.commutator,
            ferm.commutator.max(ferm.cross_pairing)
        ),
    })
}

fn c11() -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng(11);
    let mut pass = true;
    let mut parts = Vec::new();
    for m in 3..=6 {
        let rep = rs_classification(m, 1000, &mut r)?;
        pass &= rep.passes() && rep.kernel_dim == (m - 1) * (1 << (m / 2));
        parts.push(format!("m={m}: err {} ker {}", rep.misclassified, rep.kernel_dim));
        pass &= rep.null_vector_defect <= 1e-12 && rep.witness_value.abs() <= 1e-12;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome { pass: pass && secs < 10.0, detail: format!("{}; {secs:.1} s (< 10 s)", parts.join(", ")) })
}

fn c12() -> Result<Outcome> {
    let rep = retarded_kernel_study(&[32, 64, 128])?;
    Ok(Outcome {
        pass: rep.min_order() >= 1.0,
        detail: format!(
            "kernel values {:.6}/{:.6}/{:.6} → 0.5, min order {:.2} (≥ 1)",
            rep.values[0],
            rep.values[1],
            rep.values[2],
            rep.min_order()
        ),
    })
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("green axioms", c1),
        ("uniqueness", c2),
        ("exact sequence", c3),
        ("symplectic structure", c4),
        ("weyl/ccr", c5),
        ("bosonic n-points", c6),
        ("slice product", c7),
        ("car norms and relations", c8),
        ("fermionic fields", c9),
        ("locality axioms", c10),
        ("rarita-schwinger", c11),
        ("continuum sanity", c12),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {detail} [{:.1} s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
