//! Pointwise principal symbols on m-dimensional Lorentzian fibers: Clifford
//! models, wave/Dirac/Euler/Rarita-Schwinger symbols, characteristic-variety
//! classification and definite-type tests.
//!
//! Signature is `(−,+,…,+)` with `e₁` timelike. The future conormal of a
//! future timelike `n` is the covector `ν` with `ν(n) > 0`; it is what enters
//! the slice product `⟨iσ_P(ν)φ,ψ⟩`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{c, hermitian_eigen, kron, max_abs, null_space, re, singular_values, CMat, CVec};
use crate::C64;

pub const LIGHTLIKE_REL_TOL: f64 = 1e-12;
pub const INVERTIBLE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalType {
    Timelike,
    Lightlike,
    Spacelike,
    Zero,
}

/// Covector with lower-index components `(ξ₁,…,ξ_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covector(pub Vec<f64>);

impl Covector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `⟨ξ,ξ⟩ = −ξ₁² + Σ_{j≥2} ξ_j²`.
    pub fn norm2(&self) -> f64 {
        self.0.iter().enumerate().map(|(j, x)| eps(j) * x * x).sum()
    }

    pub fn euclid2(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn classify(&self) -> CausalType {
        let e = self.euclid2();
        let n = self.norm2();
        if e == 0.0 {
            CausalType::Zero
        } else if n.abs() <= LIGHTLIKE_REL_TOL * e {
            CausalType::Lightlike
        } else if n < 0.0 {
            CausalType::Timelike
        } else {
            CausalType::Spacelike
        }
    }

    /// Components of `ξ^♯`: `ε_j ξ_j`.
    pub fn sharp(&self) -> Vec<f64> {
        self.0.iter().enumerate().map(|(j, x)| eps(j) * x).collect()
    }

    /// Future conormal of the vector `n`: `ν_1 = n¹`, `ν_j = −n^j`.
    pub fn future_conormal(n: &[f64]) -> Self {
        Covector(n.iter().enumerate().map(|(j, x)| -eps(j) * x).collect())
    }
}

/// `ε_j = ⟨e_j,e_j⟩`, zero-based.
pub fn eps(j: usize) -> f64 {
    if j == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Hermitian, mutually anticommuting matrices squaring to one: `2k+1` of them
/// of size `2^k`.
fn euclidean_gammas(k: usize) -> Vec<CMat> {
    let (z, o, i) = (re(0.0), re(1.0), c(0.0, 1.0));
    let sx = CMat::from_row_slice(2, 2, &[z, o, o, z]);
    let sy = CMat::from_row_slice(2, 2, &[z, -i, i, z]);
    let sz = CMat::from_row_slice(2, 2, &[o, z, z, -o]);
    let mut g = vec![CMat::identity(1, 1)];
    for _ in 0..k {
        let n = g[0].nrows();
        let mut next: Vec<CMat> = g.iter().map(|m| kron(m, &sx)).collect();
        next.push(kron(&CMat::identity(n, n), &sy));
        next.push(kron(&CMat::identity(n, n), &sz));
        g = next;
    }
    g
}

#[derive(Debug, Clone)]
pub struct CliffordModel {
    pub m: usize,
    /// `e_j·` with `e_i e_j + e_j e_i = −2⟨e_i,e_j⟩`.
    pub gammas: Vec<CMat>,
    /// Spinor pairing `⟨u,v⟩ = v^† β u`.
    pub beta: CMat,
}

pub fn build_clifford(m: usize) -> Result<CliffordModel> {
    if !(2..=6).contains(&m) {
        return domain(format!("Clifford model needs 2 ≤ m ≤ 6, got {m}"));
    }
    let eu = euclidean_gammas(m / 2);
    let gammas: Vec<CMat> = (0..m).map(|j| if j == 0 { eu[0].clone() } else { &eu[j] * c(0.0, 1.0) }).collect();
    let beta = gammas[0].clone();
    Ok(CliffordModel { m, gammas, beta })
}

impl CliffordModel {
    pub fn spinor_dim(&self) -> usize {
        self.gammas[0].nrows()
    }

    fn check_dim(&self, xi: &Covector) -> Result<()> {
        if xi.dim() != self.m {
            return domain(format!("covector has {} components, model has m = {}", xi.dim(), self.m));
        }
        Ok(())
    }

    /// Clifford multiplication by `ξ^♯`.
    pub fn clifford(&self, xi: &Covector) -> CMat {
        let n = self.spinor_dim();
        let mut out = CMat::zeros(n, n);
        for (g, x) in self.gammas.iter().zip(xi.sharp()) {
            out += g * re(x);
        }
        out
    }

    /// Max violation of `e_i e_j + e_j e_i = −2⟨e_i,e_j⟩`.
    pub fn relation_defect(&self) -> f64 {
        let n = self.spinor_dim();
        let mut worst = 0.0f64;
        for i in 0..self.m {
            for j in 0..self.m {
                let g = if i == j { -2.0 * eps(i) } else { 0.0 };
                let ac = &self.gammas[i] * &self.gammas[j] + &self.gammas[j] * &self.gammas[i];
                worst = worst.max(max_abs(&(ac - CMat::identity(n, n) * re(g))));
            }
        }
        worst
    }

    /// Max violation of `β e_j = e_j^† β` (Clifford multiplication is
    /// symmetric for the spinor pairing, so `D` is formally self-adjoint).
    pub fn beta_symmetry_defect(&self) -> f64 {
        self.gammas.iter().map(|g| max_abs(&(&self.beta * g - g.adjoint() * &self.beta))).fold(0.0, f64::max)
    }
}

/// `σ(ξ) = −⟨ξ,ξ⟩·id_k`.
pub fn sigma_wave(xi: &Covector, k: usize) -> CMat {
    CMat::identity(k, k) * re(-xi.norm2())
}

/// `σ_D(ξ) = i ξ^♯·`.
pub fn sigma_dirac(model: &CliffordModel, xi: &Covector) -> Result<CMat> {
    model.check_dim(xi)?;
    Ok(model.clifford(xi) * c(0.0, 1.0))
}

/// Exterior algebra fiber with bitmask basis `e^I`, `I ⊆ {1,…,m}`.
pub fn exterior_pairing(m: usize) -> CMat {
    let d = 1usize << m;
    CMat::from_diagonal(&CVec::from_fn(d, |i, _| {
        let s: f64 = (0..m).filter(|j| i >> j & 1 == 1).map(eps).product();
        re(s)
    }))
}

fn wedge(m: usize, xi: &[f64]) -> CMat {
    let d = 1usize << m;
    let mut w = CMat::zeros(d, d);
    for i in 0..d {
        for (j, &x) in xi.iter().enumerate() {
            if i >> j & 1 == 0 && x != 0.0 {
                let sign = if (i & ((1 << j) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                w[(i | 1 << j, i)] += re(sign * x);
            }
        }
    }
    w
}

fn interior(m: usize, v: &[f64]) -> CMat {
    let d = 1usize << m;
    let mut w = CMat::zeros(d, d);
    for i in 0..d {
        for (j, &x) in v.iter().enumerate() {
            if i >> j & 1 == 1 && x != 0.0 {
                let sign = if (i & ((1 << j) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                w[(i & !(1 << j), i)] += re(sign * x);
            }
        }
    }
    w
}

/// `σ(ξ) = i(ξ∧ − ξ^♯⌟)` on `ΛT*M ⊗ ℂ`.
pub fn sigma_euler(m: usize, xi: &Covector) -> Result<CMat> {
    if xi.dim() != m || !(1..=8).contains(&m) {
        return domain("covector dimension does not match the exterior algebra");
    }
    Ok((wedge(m, &xi.0) - interior(m, &xi.sharp())) * c(0.0, 1.0))
}

/// `T*M ⊗ Σ` with the splitting `ι(Σ) ⊕ ker γ`.
#[derive(Debug, Clone)]
pub struct RsModel {
    pub clifford: CliffordModel,
    /// `γ(ψ) = Σ ε_β e_β ψ_β`.
    pub gamma: CMat,
    /// `ι(ψ) = −(1/m) Σ e_j^* ⊗ e_j ψ`.
    pub iota: CMat,
    /// Orthonormal basis of `Σ^{3/2} = ker γ` (columns).
    pub kernel: CMat,
    /// Pairing `diag(ε_β) ⊗ β` on `T*M ⊗ Σ`.
    pub pairing: CMat,
}

pub fn build_rs(m: usize) -> Result<RsModel> {
    if m < 3 {
        return domain("the Rarita-Schwinger symbol needs m ≥ 3");
    }
    let cl = build_clifford(m)?;
    let n = cl.spinor_dim();
    let mut gamma = CMat::zeros(n, m * n);
    let mut iota = CMat::zeros(m * n, n);
    for b in 0..m {
        gamma.view_mut((0, b * n), (n, n)).copy_from(&(&cl.gammas[b] * re(eps(b))));
        iota.view_mut((b * n, 0), (n, n)).copy_from(&(&cl.gammas[b] * re(-1.0 / m as f64)));
    }
    let kernel = null_space(&gamma, INVERTIBLE_REL_TOL);
    let metric = CMat::from_diagonal(&CVec::from_fn(m, |b, _| re(eps(b))));
    let pairing = kron(&metric, &cl.beta);
    Ok(RsModel { clifford: cl, gamma, iota, kernel, pairing })
}

impl RsModel {
    pub fn m(&self) -> usize {
        self.clifford.m
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    /// `‖γ∘ι − id‖`.
    pub fn splitting_defect(&self) -> f64 {
        let n = self.clifford.spinor_dim();
        max_abs(&(&self.gamma * &self.iota - CMat::identity(n, n)))
    }

    /// The symbol formula on all of `T*M ⊗ Σ`:
    /// `i{(id⊗ξ^♯·)ψ − (2/m) Σ_β e_β^* ⊗ e_β·(ξ^♯⌟ψ)}`.
    pub fn symbol_full(&self, xi: &Covector) -> Result<CMat> {
        self.clifford.check_dim(xi)?;
        let (m, n) = (self.m(), self.clifford.spinor_dim());
        let x = self.clifford.clifford(xi);
        let sharp = xi.sharp();
        let mut s = kron(&CMat::identity(m, m), &x);
        for b in 0..m {
            for a in 0..m {
                if sharp[a] != 0.0 {
                    let blk = &self.clifford.gammas[b] * re(-2.0 / m as f64 * sharp[a]);
                    let mut v = s.view_mut((b * n, a * n), (n, n));
                    v += blk;
                }
            }
        }
        Ok(s * c(0.0, 1.0))
    }

    /// Projection `id − ι∘γ` onto `Σ^{3/2}`.
    pub fn projector(&self) -> CMat {
        let d = self.m() * self.clifford.spinor_dim();
        CMat::identity(d, d) - &self.iota * &self.gamma
    }
}

/// `σ_Q(ξ)` on `Σ^{3/2}` in the coordinates of `rs.kernel`.
pub fn sigma_rs(rs: &RsModel, xi: &Covector) -> Result<CMat> {
    let full = rs.symbol_full(xi)?;
    Ok(rs.kernel.adjoint() * rs.projector() * full * &rs.kernel)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolClass {
    pub causal_type: CausalType,
    pub invertible: bool,
    pub min_singular_value: f64,
}

/// Invertibility by the minimum singular value relative to `|ξ|^order`
/// (Euclidean) or the largest singular value, whichever is larger. The
/// explicit scale matters for scalar symbols, whose singular values are all
/// equal even at rounding-level lightlike covectors.
pub fn classify_symbol(sigma: &CMat, xi: &Covector, order: u32) -> SymbolClass {
    let s = singular_values(sigma);
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    let scale = max.max(xi.euclid2().sqrt().powi(order as i32));
    SymbolClass { causal_type: xi.classify(), invertible: scale > 0.0 && min > INVERTIBLE_REL_TOL * scale, min_singular_value: min }
}

/// Random covector; every fourth sample is exactly lightlike up to rounding.
pub fn random_covector<R: Rng>(m: usize, i: usize, rng: &mut R) -> Covector {
    let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if i % 4 == 3 {
        let s: f64 = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        let mut w = v.clone();
        w[0] = sign * s;
        Covector(w)
    } else {
        Covector(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsClassificationReport {
    pub m: usize,
    pub samples: usize,
    pub lightlike: usize,
    pub misclassified: usize,
    pub kernel_dim: usize,
    pub expected_kernel_dim: usize,
    /// `‖σ_Q(ξ)ψ‖` for the explicit null vector at `ξ^♯ = e₁+e₂`.
    pub null_vector_defect: f64,
    /// Form value at the definite-type witness.
    pub witness_value: f64,
}

impl RsClassificationReport {
    pub fn passes(&self) -> bool {
        self.misclassified == 0
            && self.kernel_dim == self.expected_kernel_dim
            && self.null_vector_defect <= 1e-12
            && self.witness_value <= 1e-12
    }
}

/// Null vector `ψ = e₁^*⊗ψ₁ − e₂^*⊗ψ₁` with `(e₁+e₂)ψ₁ = 0`, and the
/// lightlike covector with `ξ^♯ = e₁ + e₂`.
pub fn rs_null_vector(rs: &RsModel) -> (Covector, CVec) {
    let (m, n) = (rs.m(), rs.clifford.spinor_dim());
    let mut xi = vec![0.0; m];
    xi[0] = -1.0;
    xi[1] = 1.0;
    let nil = &rs.clifford.gammas[0] + &rs.clifford.gammas[1];
    let k = null_space(&nil, INVERTIBLE_REL_TOL);
    let psi1 = k.column(0).into_owned();
    let mut psi = CVec::zeros(m * n);
    psi.rows_mut(0, n).copy_from(&psi1);
    psi.rows_mut(n, n).copy_from(&(-psi1));
    (Covector(xi), psi)
}

/// Witness against definiteness: `ψ₁ = e₁e₂ψ₂`, `ψ_k = 0` for `k ≥ 3`.
pub fn rs_definite_witness(rs: &RsModel) -> CVec {
    let (m, n) = (rs.m(), rs.clifford.spinor_dim());
    let psi2 = CVec::from_fn(n, |i, _| c(1.0 + i as f64, 0.5 - i as f64));
    let psi1 = &rs.clifford.gammas[0] * &rs.clifford.gammas[1] * &psi2;
    let mut psi = CVec::zeros(m * n);
    psi.rows_mut(0, n).copy_from(&psi1);
    psi.rows_mut(n, n).copy_from(&psi2);
    let norm = psi.norm();
    psi / re(norm)
}

/// `⟨iσ(ν)φ,φ⟩` for a pairing matrix `b`.
pub fn form_value(sigma: &CMat, b: &CMat, phi: &CVec) -> C64 {
    let v = sigma * phi * c(0.0, 1.0);
    phi.dotc(&(b * v))
}

pub fn rs_classification<R: Rng>(m: usize, samples: usize, rng: &mut R) -> Result<RsClassificationReport> {
    let rs = build_rs(m)?;
    let mut lightlike = 0;
    let mut bad = 0;
    for i in 0..samples {
        let xi = random_covector(m, i, rng);
        let cls = classify_symbol(&sigma_rs(&rs, &xi)?, &xi, 1);
        let light = cls.causal_type == CausalType::Lightlike;
        lightlike += light as usize;
        if cls.invertible == light {
            bad += 1;
        }
    }
    let (xi, psi) = rs_null_vector(&rs);
    let null_vector_defect = (rs.symbol_full(&xi)? * &psi).norm() / psi.norm();
    let w = rs_definite_witness(&rs);
    let nu = Covector::future_conormal(&unit(m, 0));
    let witness_value = form_value(&rs.symbol_full(&nu)?, &rs.pairing, &w).norm();
    Ok(RsClassificationReport {
        m,
        samples,
        lightlike,
        misclassified: bad,
        kernel_dim: rs.kernel_dim(),
        expected_kernel_dim: (m - 1) * (1 << (m / 2)),
        null_vector_defect,
        witness_value,
    })
}

fn unit(m: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[j] = 1.0;
    v
}

/// Random future-directed timelike unit vector.
pub fn random_future_timelike<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let space: Vec<f64> = (1..m).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let s2: f64 = space.iter().map(|x| x * x).sum();
    let mut n = vec![(1.0 + s2).sqrt()];
    n.extend(space);
    n
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefiniteTypeResult {
    pub definite: bool,
    pub trials: usize,
    /// Smallest eigenvalue of the Hermitian form over all trials, relative
    /// to the largest.
    pub min_eigenvalue: f64,
    pub hermitian_defect: f64,
    pub witness: Option<Vec<C64>>,
    pub witness_value: Option<f64>,
}

/// Samples future timelike `n` and checks that `(φ,ψ) ↦ ⟨iσ(ν)φ,ψ⟩` is
/// positive definite; `basis` restricts to a subspace (columns).
pub fn definite_type_test<R, F>(
    symbol: F,
    pairing: &CMat,
    basis: Option<&CMat>,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DefiniteTypeResult>
where
    R: Rng,
    F: Fn(&Covector) -> Result<CMat>,
{
    let mut worst = f64::INFINITY;
    let mut herm = 0.0f64;
    let mut witness = None;
    for t in 0..trials {
        let n = if t == 0 { unit(m, 0) } else { random_future_timelike(m, rng) };
        let nu = Covector::future_conormal(&n);
        let mut h = pairing * symbol(&nu)? * c(0.0, 1.0);
        if let Some(b) = basis {
            h = b.adjoint() * h * b;
        }
        herm = herm.max(max_abs(&(&h - h.adjoint())) / max_abs(&h).max(f64::MIN_POSITIVE));
        let (vals, vecs) = hermitian_eigen(&h);
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let rel = vals[0] / scale;
        if rel < worst {
            worst = rel;
            if rel <= 1e-10 {
                let v = vecs.column(0).into_owned();
                let v = match basis {
                    Some(b) => b * v,
                    None => v,
                };
                witness = Some((v.as_slice().to_vec(), vals[0]));
            }
        }
    }
    let definite = worst > 1e-10 && herm <= 1e-12;
    Ok(DefiniteTypeResult {
        definite,
        trials,
        min_eigenvalue: worst,
        hermitian_defect: herm,
        witness_value: witness.as_ref().map(|w| w.1),
        witness: witness.map(|w| w.0),
    })
}

/// The Euler witness `n♭ ∈ Λ¹` with `⟨iσ(ν)ν, ν⟩ = 0`.
pub fn euler_witness(m: usize) -> (CVec, f64) {
    let nu = Covector::future_conormal(&unit(m, 0));
    let mut v = CVec::zeros(1 << m);
    v[1] = re(nu.0[0]);
    let sigma = sigma_euler(m, &nu).expect("dimension");
    let value = form_value(&sigma, &exterior_pairing(m), &v).norm();
    (v, value)
}
