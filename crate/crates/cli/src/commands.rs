//! Subcommands that produce data files rather than check reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ghq::green::{random_source, GreenPair};
use ghq::linalg::{c, max_abs, re, CMat};
use ghq::ops::{LatticeOperator, ScalarKind, Section};
use ghq::quant_bos::{field_equation_check, npoint, state_two_point, sympl_omega, SymplSpace};
use ghq::quant_ferm::{
    build_car, build_selfdual_car, car_report, ferm_npoint, norm_check, slice_gram, FermionicFields, FockOp, SolutionSpace,
};
use ghq::symbols::{
    build_clifford, build_rs, classify_symbol, definite_type_test, euler_witness, exterior_pairing, form_value, rs_definite_witness,
    sigma_dirac, sigma_euler, sigma_rs, sigma_wave, CausalType, Covector,
};
use ghq::{Error, Result, C64};

use crate::checks::{rng_for, Ctx};
use crate::config::{Entry, ScenarioConfig};
use crate::io::{matrix_rows, write_section, write_triplets, TripletHeader};

/// All index tuples of length `n` over `0..s`, lexicographic.
fn tuples(s: usize, n: usize) -> Vec<Vec<usize>> {
    (0..s.pow(n as u32))
        .map(|mut k| {
            let mut t = vec![0; n];
            for slot in t.iter_mut().rev() {
                *slot = k % s;
                k /= s;
            }
            t
        })
        .collect()
}

fn section_from_entries(op: &LatticeOperator, entries: &[Entry]) -> Result<Section> {
    let mut s = Section::zeros(op.lattice(), op.fiber_dim(), ScalarKind::Complex);
    for e in entries {
        op.lattice().check(ghq::lattice::Point::new(e.t, e.x))?;
        if e.c >= op.fiber_dim() {
            return Err(Error::Config(format!("component {} out of range", e.c)));
        }
        s.set(e.t, e.x, e.c, c(e.re, e.im));
    }
    Section::from_values(op.lattice(), op.fiber_dim(), op.kind(), s.into_values())
}

fn csv_rows(order: usize, rows: &[(Vec<usize>, C64)]) -> String {
    let mut out = String::new();
    let cols: Vec<String> = (1..=order).map(|i| format!("i{i}")).collect();
    let _ = writeln!(out, "{},re,im", cols.join(","));
    for (idx, z) in rows {
        let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{},{:e},{:e}", idx.join(","), z.re, z.im);
    }
    out
}

pub struct Output {
    pub csv: String,
    pub summary: Value,
    pub passed: bool,
}

/// Bosonic n-point functions of the vacuum on the configured test sections.
pub fn npoint_command(cfg: &ScenarioConfig) -> Result<Output> {
    let ctx = Ctx::new(cfg);
    let (space, state) = (ctx.space()?, ctx.state()?);
    let op = space.operator();
    let mut rng = rng_for(cfg.seed, "npoint");
    let mut fs = cfg.npoint.sections.iter().map(|e| section_from_entries(op, e)).collect::<Result<Vec<_>>>()?;
    fs.extend((0..cfg.npoint.random).map(|i| random_source(op, i, &mut rng)));
    if fs.is_empty() {
        return Err(Error::Config("npoint needs at least one test section".into()));
    }
    let n = cfg.npoint.order;
    let rows = tuples(fs.len(), n)
        .into_iter()
        .map(|idx| {
            let args: Vec<Section> = idx.iter().map(|&i| fs[i].clone()).collect();
            Ok((idx, npoint(state, space, &args)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let gp = space.green();
    let mut two_point = 0.0f64;
    let mut field = 0.0f64;
    for (i, f) in fs.iter().enumerate() {
        field = field.max(field_equation_check(state_two_point(state, space), space, f)?);
        for g in &fs[i + 1..] {
            let w = sympl_omega(gp, f, g)?;
            let anti = npoint(state, space, &[f.clone(), g.clone()])? - npoint(state, space, &[g.clone(), f.clone()])?;
            two_point = two_point.max((anti - c(0.0, w)).norm() / (1.0 + w.abs()));
        }
    }
    let mut four_point = 0.0f64;
    if fs.len() >= 2 {
        let args = [fs[0].clone(), fs[1 % fs.len()].clone(), fs[0].clone(), fs[fs.len() - 1].clone()];
        let t4 = npoint(state, space, &args)?;
        for j in 0..3 {
            let mut sw = args.clone();
            sw.swap(j, j + 1);
            let rest: Vec<Section> = args.iter().enumerate().filter(|(p, _)| *p != j && *p != j + 1).map(|(_, v)| v.clone()).collect();
            let rhs = c(0.0, sympl_omega(gp, &args[j], &args[j + 1])?) * npoint(state, space, &rest)?;
            four_point = four_point.max((t4 - npoint(state, space, &sw)? - rhs).norm() / (1.0 + t4.norm()));
        }
    }
    let passed = two_point <= 1e-10 && four_point <= 1e-9 && field <= 1e-10;
    let summary = json!({
        "operator": op.name,
        "order": n,
        "sections": fs.len(),
        "rows": rows.len(),
        "defects": {
            "two_point_antisymmetry": two_point,
            "four_point_swap": four_point,
            "field_equation": field,
        },
        "tolerances": {"two_point_antisymmetry": 1e-10, "four_point_swap": 1e-9, "field_equation": 1e-10},
        "passed": passed,
        "seed": cfg.seed,
    });
    Ok(Output { csv: csv_rows(n, &rows), summary, passed })
}

/// Fermionic vacuum n-points `⟨Ω, Φ⁺(f₁)Φ(f₂)Φ⁺(f₃)⋯Ω⟩` on sector sources,
/// with the Gram matrix and the CAR defect table.
pub fn ferm_command(cfg: &ScenarioConfig) -> Result<Output> {
    let ctx = Ctx::new(cfg);
    let op = ctx.dirac(&ctx.ferm_lattice()?)?;
    let sol = SolutionSpace::new(&op)?;
    let gp = GreenPair::new(&op)?;
    let car = build_car(&sol)?;
    let fields = FermionicFields { sol: &sol, gp: &gp, car: &car };
    let mut rng = rng_for(cfg.seed, "ferm");
    let mut fs = cfg.npoint.sections.iter().map(|e| section_from_entries(&op, e)).collect::<Result<Vec<_>>>()?;
    let cut = op.lattice().n_t / 2;
    for _ in 0..cfg.npoint.random {
        fs.push(sol.random_source(cut, &mut rng)?);
    }
    if fs.is_empty() {
        return Err(Error::Config("ferm needs at least one test section".into()));
    }
    let phi: Vec<FockOp> = fs.iter().map(|f| fields.phi(f)).collect::<Result<_>>()?;
    let phi_plus: Vec<FockOp> = fs.iter().map(|f| fields.phi_plus(f)).collect::<Result<_>>()?;
    let n = cfg.npoint.order;
    let rows: Vec<(Vec<usize>, C64)> = tuples(fs.len(), n)
        .into_iter()
        .map(|idx| {
            let factors: Vec<FockOp> =
                idx.iter().enumerate().map(|(p, &i)| if p % 2 == 0 { phi_plus[i].clone() } else { phi[i].clone() }).collect();
            let v = ferm_npoint(&car, &factors);
            (idx, v)
        })
        .collect();
    let mut phi_phi = 0.0f64;
    let mut phi_phi_plus = 0.0f64;
    for (i, f) in fs.iter().enumerate() {
        for (j, g) in fs.iter().enumerate() {
            phi_phi = phi_phi.max(phi[i].anticomm(&phi[j]).max_abs());
            let expect = C64::i() * op.pair(&gp.propagator(f)?, g)?;
            phi_phi_plus = phi_phi_plus.max(phi[i].anticomm(&phi_plus[j]).distance_to_scalar(expect) / (1.0 + expect.norm()));
        }
    }
    let sd = build_selfdual_car(&sol)?;
    let table = car_report(&sd);
    let norms = norm_check(&sd, cfg.samples.car_vectors, &mut rng);
    let gram = sol.gram();
    let gram_defect = max_abs(&(&gram - CMat::identity(gram.nrows(), gram.ncols())));
    let passed = table.aa <= 1e-12
        && table.a_dag_a <= 1e-12
        && table.bb <= 1e-12
        && norms.a_norm <= 1e-10
        && norms.b_norm <= 1e-10
        && phi_phi <= 1e-12
        && phi_phi_plus <= 1e-10
        && gram_defect <= 1e-12;
    let summary = json!({
        "operator": op.name,
        "order": n,
        "sections": fs.len(),
        "modes": car.modes(),
        "fock_dim": car.fock_dim(),
        "gram": matrix_rows(&gram),
        "gram_defect": gram_defect,
        "car_defects": {
            "a_a": table.aa,
            "a_star_a": table.a_dag_a,
            "b_b": table.bb,
            "odd": table.odd_defect,
            "selfdual_hermitian": table.selfdual_hermitian,
            "a_norm": norms.a_norm,
            "b_norm": norms.b_norm,
            "phi_phi": phi_phi,
            "phi_phi_plus": phi_phi_plus,
        },
        "passed": passed,
        "seed": cfg.seed,
    });
    Ok(Output { csv: csv_rows(n, &rows), summary, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolOperator {
    Wave,
    Dirac,
    Euler,
    Rs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolQuery {
    pub operator: SymbolOperator,
    pub m: usize,
    pub xi: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolAnswer {
    pub classification: Classification,
    pub min_singular_value: f64,
    /// `None` for operators that are not of Dirac type.
    pub definite_type: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub causal_type: &'static str,
    pub invertible: bool,
}

fn causal_name(t: CausalType) -> &'static str {
    match t {
        CausalType::Timelike => "timelike",
        CausalType::Lightlike => "lightlike",
        CausalType::Spacelike => "spacelike",
        CausalType::Zero => "zero",
    }
}

pub fn symbol_command(q: &SymbolQuery) -> Result<SymbolAnswer> {
    if q.xi.len() != q.m {
        return Err(Error::Config(format!("xi has {} components, expected m = {}", q.xi.len(), q.m)));
    }
    if q.xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("xi must be finite".into()));
    }
    let xi = Covector(q.xi.clone());
    let m = q.m;
    let mut rng = rng_for(q.seed, "symbol");
    // Operators that fail definiteness come with the explicit isotropic
    // vector of the form at ν = e₁.
    let (sigma, definite, witness) = match q.operator {
        SymbolOperator::Wave => {
            if m < 2 {
                return Err(Error::Config("m must be at least 2".into()));
            }
            (sigma_wave(&xi, 1), None, None)
        }
        SymbolOperator::Dirac => {
            let cl = build_clifford(m)?;
            let d = definite_type_test(|x| sigma_dirac(&cl, x), &cl.beta, None, m, 20, &mut rng)?;
            (sigma_dirac(&cl, &xi)?, Some(d.definite), None)
        }
        SymbolOperator::Euler => {
            if !(2..=6).contains(&m) {
                return Err(Error::Domain("the Euler symbol is shipped for 2 ≤ m ≤ 6".into()));
            }
            let d = definite_type_test(|x| sigma_euler(m, x), &exterior_pairing(m), None, m, 20, &mut rng)?;
            let (w, value) = euler_witness(m);
            (sigma_euler(m, &xi)?, Some(d.definite), Some((w, value)))
        }
        SymbolOperator::Rs => {
            let rs = build_rs(m)?;
            let d = definite_type_test(|x| rs.symbol_full(x), &rs.pairing, Some(&rs.kernel), m, 20, &mut rng)?;
            let w = rs_definite_witness(&rs);
            let value = form_value(&rs.symbol_full(&Covector::future_conormal(&e1(m)))?, &rs.pairing, &w).norm();
            (sigma_rs(&rs, &xi)?, Some(d.definite), Some((w, value)))
        }
    };
    let order = if q.operator == SymbolOperator::Wave { 2 } else { 1 };
    let cls = classify_symbol(&sigma, &xi, order);
    Ok(SymbolAnswer {
        classification: Classification { causal_type: causal_name(cls.causal_type), invertible: cls.invertible },
        min_singular_value: cls.min_singular_value,
        definite_type: definite,
        witness: witness.as_ref().map(|(w, _)| w.iter().map(|z| [z.re, z.im]).collect()),
        witness_value: witness.map(|(_, v)| v),
    })
}

fn e1(m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[0] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Op,
    Green,
    Section,
    Gram,
}

/// Text for the requested export. Deterministic given the configuration.
pub fn export(cfg: &ScenarioConfig, kind: ExportKind) -> Result<String> {
    let ctx = Ctx::new(cfg);
    let (op, gp, _) = ctx.configured()?;
    let lattice = Some((&cfg.lattice).into());
    let header = |name: &str, m: &CMat| TripletHeader {
        lattice,
        k: Some(op.fiber_dim()),
        r: Some(op.radius()),
        pairing: Some(matrix_rows(op.pairing().matrix())),
        seed: Some(cfg.seed),
        ..TripletHeader::new(name, m, op.kind() == ScalarKind::Complex)
    };
    match kind {
        ExportKind::Op => {
            let m = op.dense();
            Ok(write_triplets(&TripletHeader { note: Some(op.name.clone()), ..header("op", &m) }, &m))
        }
        ExportKind::Green => {
            // Columns are unit sources on the source rows; entries are G f.
            let l = op.lattice();
            let k = op.fiber_dim();
            let rows = gp.source_rows();
            let block = l.n_x * k;
            let n = l.n_points() * k;
            let cols: Vec<usize> = (rows.start * block..rows.end * block).collect();
            let mut m = CMat::zeros(n, n);
            for &j in &cols {
                let mut f = Section::zeros(l, k, op.kind());
                f.values_mut()[j] = re(1.0);
                let u = gp.propagator(&f)?;
                for (i, v) in u.values().iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            let note = format!("causal propagator G = G₊ − G₋ of {} on unit sources in slices {}..{}", op.name, rows.start, rows.end);
            Ok(write_triplets(&TripletHeader { note: Some(note), ..header("green", &m) }, &m))
        }
        ExportKind::Section => {
            let mut rng = rng_for(cfg.seed, "export-section");
            let f = random_source(op, 0, &mut rng);
            write_section(&gp.propagator(&f)?).map_err(|e| Error::Config(e.to_string()))
        }
        ExportKind::Gram => {
            if op.kind() == ScalarKind::Real {
                let space = SymplSpace::new(gp)?;
                let m = space.omega_matrix().map(re);
                let h = TripletHeader { note: Some("symplectic form on Cauchy data".into()), ..header("gram", &m) };
                Ok(write_triplets(&TripletHeader { complex: false, ..h }, &m))
            } else {
                let m = slice_gram(op);
                Ok(write_triplets(&TripletHeader { note: Some("slice product on Cauchy data".into()), ..header("gram", &m) }, &m))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuples_are_lexicographic() {
        assert_eq!(tuples(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(tuples(3, 1).len(), 3);
    }

    #[test]
    fn symbol_answers() {
        let q = |operator, m, xi: Vec<f64>| symbol_command(&SymbolQuery { operator, m, xi, seed: 0 }).unwrap();
        let a = q(SymbolOperator::Dirac, 4, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(a.classification.causal_type, "lightlike");
        assert!(!a.classification.invertible && a.definite_type == Some(true) && a.witness.is_none());
        let a = q(SymbolOperator::Rs, 4, vec![2.0, 0.5, 0.0, 0.0]);
        assert!(a.classification.invertible && a.definite_type == Some(false));
        assert!(a.witness.is_some() && a.witness_value.unwrap() <= 1e-12);
        let a = q(SymbolOperator::Wave, 3, vec![0.0, 1.0, 0.0]);
        assert_eq!(a.classification.causal_type, "spacelike");
        assert!(a.definite_type.is_none());
        assert!(symbol_command(&SymbolQuery { operator: SymbolOperator::Wave, m: 3, xi: vec![1.0], seed: 0 }).is_err());
    }
}
