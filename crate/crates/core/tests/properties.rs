//! Property tests over random lattices, sources and covectors.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ghq::green::{random_source, support_violations, GreenPair};
use ghq::lattice::{causal_future, causal_past, causally_disjoint, Direction, LatticeSpacetime, Point, Region};
use ghq::linalg::{c, max_abs, random_cvec, CMat};
use ghq::ops::{build_dalembert, build_dirac_1p1, DiscreteFormsComplex, ScalarKind, Section};
use ghq::quant_bos::{weyl_commutator, weyl_mul, weyl_star, WeylAlgebra, WeylPolynomial};
use ghq::quant_ferm::{build_car, SliceProduct, SolutionSpace};
use ghq::symbols::{build_clifford, sigma_dirac, sigma_wave, Covector};

fn lattice() -> impl Strategy<Value = LatticeSpacetime> {
    (12usize..=20, 4usize..=9).prop_map(|(n_t, n_x)| LatticeSpacetime::new(n_t, n_x, 0.0625, 0.125).unwrap())
}

fn point_in(l: LatticeSpacetime) -> impl Strategy<Value = Point> {
    (0..l.n_t, 0..l.n_x).prop_map(|(t, x)| Point::new(t, x))
}

fn covector(m: usize) -> impl Strategy<Value = Covector> {
    prop::collection::vec(-2.0f64..2.0, m).prop_map(Covector)
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn future_cone_is_reflexive_and_transitive((l, p) in lattice().prop_flat_map(|l| (Just(l), point_in(l)))) {
        let j = causal_future(&l, &BTreeSet::from([p])).unwrap();
        prop_assert!(j.contains(&p));
        prop_assert_eq!(causal_future(&l, &j).unwrap(), j);
    }

    #[test]
    fn cones_are_time_reversal_dual((l, p, q) in lattice().prop_flat_map(|l| (Just(l), point_in(l), point_in(l)))) {
        let p_in_future_of_q = causal_future(&l, &BTreeSet::from([q])).unwrap().contains(&p);
        let q_in_past_of_p = causal_past(&l, &BTreeSet::from([p])).unwrap().contains(&q);
        prop_assert_eq!(p_in_future_of_q, q_in_past_of_p);
        prop_assert_eq!(p_in_future_of_q, l.in_future_cone(q, p));
    }

    #[test]
    fn causal_disjointness_is_symmetric(
        (l, a, b, ha, hb) in lattice().prop_flat_map(|l| (Just(l), point_in(l), point_in(l), 0usize..3, 0usize..3))
    ) {
        let (Ok(r1), Ok(r2)) = (Region::diamond_centered(&l, a, ha), Region::diamond_centered(&l, b, hb)) else {
            return Ok(());
        };
        prop_assert_eq!(causally_disjoint(&l, &r1, &r2).unwrap(), causally_disjoint(&l, &r2, &r1).unwrap());
    }

    #[test]
    fn exterior_derivative_squares_to_zero(l in lattice(), seed in any::<u64>()) {
        let forms = DiscreteFormsComplex::new(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = Section::random(&l, 1, ScalarKind::Real, 1..l.n_t - 1, 1.0, &mut rng);
        let dd = forms.d1.apply(&forms.d0.apply(&phi).unwrap()).unwrap();
        prop_assert_eq!(dd.max_abs(), 0.0);
        let beta = Section::random(&l, 1, ScalarKind::Real, 1..l.n_t - 1, 1.0, &mut rng);
        let dd = forms.delta1.apply(&forms.delta2.apply(&beta).unwrap()).unwrap();
        prop_assert!(dd.max_abs() <= 1e-12 * forms.delta1.max_abs_coeff() * forms.delta2.max_abs_coeff());
    }

    #[test]
    fn support_is_recomputable_from_values(l in lattice(), seed in any::<u64>(), density in 0.05f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Section::random(&l, 2, ScalarKind::Complex, 0..l.n_t, density, &mut rng);
        let expect: BTreeSet<Point> = (0..l.n_points())
            .map(|i| l.point(i))
            .filter(|p| s.fiber(p.t, p.x).iter().any(|z| z.norm() != 0.0))
            .collect();
        prop_assert_eq!(s.support(), expect);
        prop_assert_eq!(s.values().len(), l.n_points() * 2);
    }

    #[test]
    fn wave_green_operators_invert_p(l in lattice(), mass in 0.0f64..2.0, seed in any::<u64>()) {
        let op = build_dalembert(&l, mass, None).unwrap();
        let gp = GreenPair::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_source(&op, 0, &mut rng);
        for dir in [Direction::Future, Direction::Past] {
            let u = gp.solve(&f, dir).unwrap();
            let back = op.apply(&u).unwrap().restrict_rows(op.eq_rows());
            let f_eq = f.restrict_rows(op.eq_rows());
            prop_assert!(back.sub(&f_eq).unwrap().norm() <= 1e-10 * f.norm());
            prop_assert_eq!(support_violations(&op, &f, &u, dir), 0);
        }
    }

    #[test]
    fn green_operators_are_dual(l in lattice(), seed in any::<u64>()) {
        let op = build_dirac_1p1(&l, 0.7).unwrap();
        let gp = GreenPair::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, g) = (op.random_margin_section(&mut rng), op.random_margin_section(&mut rng));
        let a = op.pair(&gp.retarded(&f).unwrap(), &g).unwrap();
        let b = op.pair(&f, &gp.advanced(&g).unwrap()).unwrap();
        let scale = gp.retarded(&f).unwrap().norm() * g.norm() * l.volume_weight();
        prop_assert!((a - b).norm() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn time_reflection_swaps_advanced_and_retarded(l in lattice(), seed in any::<u64>()) {
        let op = build_dalembert(&l, 1.0, None).unwrap();
        let gp = GreenPair::new(&op).unwrap();
        let rev = GreenPair::new(&op.time_reflected().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = op.random_margin_section(&mut rng);
        let lhs = rev.advanced(&f.time_reflect()).unwrap();
        let rhs = gp.retarded(&f).unwrap().time_reflect();
        prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-10 * rhs.norm().max(1e-300));
    }

    #[test]
    fn disjoint_sources_pair_to_zero(n_x in 12usize..=16, seed in any::<u64>()) {
        let l = LatticeSpacetime::new(20, n_x, 0.0625, 0.125).unwrap();
        let op = build_dalembert(&l, 1.0, None).unwrap();
        let gp = GreenPair::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Two one-point sources on the same slice, far apart on the circle.
        let f = Section::delta(&l, 1, ScalarKind::Real, Point::new(10, 0), 0, c(rng.gen_range(-1.0..1.0), 0.0)).unwrap();
        let g = Section::delta(&l, 1, ScalarKind::Real, Point::new(10, n_x / 2), 0, c(rng.gen_range(-1.0..1.0), 0.0)).unwrap();
        // Gf on slice 10 is supported at x = 0 only, so the pairing vanishes exactly.
        prop_assert_eq!(op.pair(&gp.propagator(&f).unwrap(), &g).unwrap().norm(), 0.0);
    }

    #[test]
    fn clifford_polarization(m in 2usize..=6, seeds in (any::<u64>(), any::<u64>())) {
        let cl = build_clifford(m).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seeds.0);
        let mut r2 = ChaCha8Rng::seed_from_u64(seeds.1);
        let xi = Covector((0..m).map(|_| r1.gen_range(-2.0..2.0)).collect());
        let eta = Covector((0..m).map(|_| r2.gen_range(-2.0..2.0)).collect());
        let (a, b) = (sigma_dirac(&cl, &xi).unwrap() * c(0.0, 1.0), sigma_dirac(&cl, &eta).unwrap() * c(0.0, 1.0));
        let inner: f64 = xi.0.iter().zip(&eta.0).enumerate().map(|(j, (x, y))| ghq::symbols::eps(j) * x * y).sum();
        let n = cl.spinor_dim();
        let lhs = &a * &b + &b * &a;
        prop_assert!(max_abs(&(lhs + CMat::identity(n, n) * c(2.0 * inner, 0.0))) <= 1e-12 * (1.0 + inner.abs()));
    }

    #[test]
    fn dirac_symbol_squares_to_wave_symbol(xi in (2usize..=6).prop_flat_map(covector)) {
        let cl = build_clifford(xi.dim()).unwrap();
        let s = sigma_dirac(&cl, &xi).unwrap();
        let w = sigma_wave(&xi, cl.spinor_dim());
        prop_assert!(max_abs(&(&s * &s + w)) <= 1e-12 * (1.0 + xi.euclid2()));
    }

    #[test]
    fn weyl_relations_hold_symbolically(
        entries in prop::collection::vec(-1.0f64..1.0, 6),
        x in prop::collection::vec(-3i64..=3, 4),
        y in prop::collection::vec(-3i64..=3, 4),
    ) {
        let mut omega = DMatrix::zeros(4, 4);
        let mut k = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                omega[(i, j)] = entries[k];
                omega[(j, i)] = -entries[k];
                k += 1;
            }
        }
        let alg = WeylAlgebra::new(omega).unwrap();
        let one = c(1.0, 0.0);
        let (wx, wy) = (WeylPolynomial::word(x.clone(), one), WeylPolynomial::word(y.clone(), one));
        let sum: Vec<i64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let phase = ghq::C64::from_polar(1.0, -alg.omega_words(&x, &y) / 2.0);
        prop_assert_eq!(weyl_mul(&wx, &wy, &alg), WeylPolynomial::word(sum, phase));
        prop_assert_eq!(weyl_mul(&wx, &weyl_star(&wx), &alg), WeylPolynomial::unit(4));
        prop_assert_eq!(alg.omega_words(&x, &y), -alg.omega_words(&y, &x));
        if alg.omega_words(&x, &y) == 0.0 {
            prop_assert!(weyl_commutator(&wx, &wy, &alg).is_empty());
        }
    }

    #[test]
    fn annihilator_is_antilinear(seed in any::<u64>(), lre in -2.0f64..2.0, lim in -2.0f64..2.0) {
        let l = LatticeSpacetime::new(12, 4, 0.0625, 0.125).unwrap();
        let sol = SolutionSpace::new(&build_dirac_1p1(&l, 1.0).unwrap()).unwrap();
        let car = build_car(&sol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_cvec(&mut rng, car.modes());
        let lambda = c(lre, lim);
        let lhs = car.a(&(&v * lambda)).to_dense();
        let rhs = car.a(&v).to_dense() * lambda.conj();
        prop_assert!(max_abs(&(lhs - rhs)) <= 1e-12 * (1.0 + lambda.norm()));
    }

    #[test]
    fn slice_product_is_conserved(l in lattice(), seed in any::<u64>(), mass in 0.2f64..2.0) {
        let op = build_dirac_1p1(&l, mass).unwrap();
        let gp = GreenPair::new(&op).unwrap();
        let sp = SliceProduct::new(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (gp.propagator(&op.random_margin_section(&mut rng)).unwrap(), gp.propagator(&op.random_margin_section(&mut rng)).unwrap());
        prop_assert!(sp.t_independence(&u, &v).unwrap() * l.volume_weight() <= 1e-12 * u.norm() * v.norm());
    }
}
