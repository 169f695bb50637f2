//! Scenario configuration. Every field has a default, so the report can echo
//! the fully materialized configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use ghq::lattice::LatticeSpacetime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorName {
    Wave,
    Dirac,
    Proca,
    #[serde(rename = "wave+dirac")]
    WaveDirac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Green,
    ExactSeq,
    Symbols,
    Bos,
    Ferm,
    Axioms,
    Continuum,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Green => "green",
            Suite::ExactSeq => "exact-seq",
            Suite::Symbols => "symbols",
            Suite::Bos => "bos",
            Suite::Ferm => "ferm",
            Suite::Axioms => "axioms",
            Suite::Continuum => "continuum",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    All,
    Band,
    Diamond,
    DisjointPair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { n_t: 16, n_x: 8, dt: 0.0625, dx: 0.125 }
    }
}

impl LatticeConfig {
    pub fn build(&self) -> ghq::Result<LatticeSpacetime> {
        LatticeSpacetime::new(self.n_t, self.n_x, self.dt, self.dx)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    pub name: OperatorName,
    pub mass: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { name: OperatorName::Wave, mass: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Samples {
    /// Random sources per Green axiom check.
    pub green: usize,
    /// Sources compared against the dense oracle.
    pub uniqueness: usize,
    /// Pairs for skew-symmetry and n-point identities.
    pub pairs: usize,
    /// Random vectors for the CAR norm checks.
    pub car_vectors: usize,
    /// Random covectors per dimension for symbol classification.
    pub covectors: usize,
    /// Samples for functor and locality checks.
    pub functor: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self { green: 10, uniqueness: 4, pairs: 10, car_vectors: 20, covectors: 200, functor: 5 }
    }
}

/// Lattice sizes for the fermionic checks that build full Fock matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FermConfig {
    pub n_t: usize,
    pub n_x: usize,
    /// Spatial size for the matrix-free half-identities.
    pub key_n_x: usize,
}

impl Default for FermConfig {
    fn default() -> Self {
        Self { n_t: 16, n_x: 4, key_n_x: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolsConfig {
    pub dims: Vec<usize>,
}

impl Default for SymbolsConfig {
    fn default() -> Self {
        Self { dims: vec![3, 4, 5, 6] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxiomsConfig {
    pub scenario: Scenario,
    /// Time band `[t1, t2]`; defaults to the middle half of the lattice.
    pub band: Option<[usize; 2]>,
    /// Half-width of the single diamond; defaults to fit the lattice.
    pub diamond_half: Option<usize>,
}

impl Default for AxiomsConfig {
    fn default() -> Self {
        Self { scenario: Scenario::All, band: None, diamond_half: None }
    }
}

/// Spatial grid sizes for the continuum-limit studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuumConfig {
    pub kernel_grids: Vec<usize>,
    pub slice_grids: Vec<usize>,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self { kernel_grids: vec![32, 64, 128], slice_grids: vec![8, 16, 32] }
    }
}

/// One nonzero entry of a test section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub t: usize,
    pub x: usize,
    #[serde(default)]
    pub c: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NpointConfig {
    /// Order of the n-point functions written to CSV.
    pub order: usize,
    /// Explicit test sections; random ones are appended up to `random`.
    pub sections: Vec<Vec<Entry>>,
    pub random: usize,
    /// Mass of the reference vacuum; defaults to the operator mass.
    pub state_mass: Option<f64>,
}

impl Default for NpointConfig {
    fn default() -> Self {
        Self { order: 2, sections: Vec::new(), random: 3, state_mass: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub lattice: LatticeConfig,
    pub operator: OperatorConfig,
    pub suites: Vec<Suite>,
    pub samples: Samples,
    pub ferm: FermConfig,
    pub symbols: SymbolsConfig,
    pub axioms: AxiomsConfig,
    pub npoint: NpointConfig,
    pub continuum: ContinuumConfig,
    /// Per-check tolerance overrides keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
    /// Report destination; stdout when absent.
    pub report: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lattice: LatticeConfig::default(),
            operator: OperatorConfig::default(),
            suites: vec![Suite::All],
            samples: Samples::default(),
            ferm: FermConfig::default(),
            symbols: SymbolsConfig::default(),
            axioms: AxiomsConfig::default(),
            npoint: NpointConfig::default(),
            continuum: ContinuumConfig::default(),
            tolerances: BTreeMap::new(),
            report: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.into(), source },
            other => other,
        })
    }

    /// Parses and validates; parse errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: "<config>".into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.lattice.build() {
            return bad(format!("lattice: {e}"));
        }
        if self.lattice.dt > self.lattice.dx {
            return bad(format!("lattice: CFL ratio dt/dx = {} exceeds 1", self.lattice.dt / self.lattice.dx));
        }
        if self.lattice.n_t < 12 || self.lattice.n_x < 4 {
            return bad("lattice: need n_t ≥ 12 and n_x ≥ 4".into());
        }
        if !(self.operator.mass >= 0.0 && self.operator.mass.is_finite()) {
            return bad("operator.mass must be finite and nonnegative".into());
        }
        if matches!(self.operator.name, OperatorName::Proca) && self.operator.mass == 0.0 {
            return bad("operator.mass must be positive for proca".into());
        }
        if self.suites.is_empty() {
            return bad("suites must not be empty".into());
        }
        if self.symbols.dims.iter().any(|&m| !(3..=6).contains(&m)) {
            return bad("symbols.dims entries must lie in 3..=6".into());
        }
        if !(2..=6).contains(&self.ferm.n_x) || self.ferm.n_t < 12 || self.ferm.key_n_x < 2 {
            return bad("ferm: need 2 ≤ n_x ≤ 6, n_t ≥ 12 and key_n_x ≥ 2".into());
        }
        if !matches!(self.npoint.order, 2 | 4) {
            return bad("npoint.order must be 2 or 4".into());
        }
        for grids in [&self.continuum.kernel_grids, &self.continuum.slice_grids] {
            if grids.len() < 2 || grids.windows(2).any(|w| w[1] <= w[0]) || grids[0] < 4 {
                return bad("continuum grids need at least two increasing sizes, each ≥ 4".into());
            }
        }
        for (name, tol) in &self.tolerances {
            if crate::checks::find(name).is_none() {
                return bad(format!("tolerances: unknown check {name:?}"));
            }
            if !(tol.is_finite() && *tol >= 0.0) {
                return bad(format!("tolerances: {name} must be finite and nonnegative"));
            }
        }
        if let Some([t1, t2]) = self.axioms.band {
            if t2 < t1 + 7 || t2 >= self.lattice.n_t {
                return bad("axioms.band must span at least 8 slices inside the lattice".into());
            }
        }
        Ok(())
    }

    pub fn runs(&self, suite: Suite) -> bool {
        self.suites.contains(&Suite::All) || self.suites.contains(&suite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = ScenarioConfig::parse("{}").unwrap();
        assert_eq!(cfg.lattice.n_t, 16);
        assert_eq!(cfg.suites, vec![Suite::All]);
    }

    #[test]
    fn unknown_operator_reports_line() {
        let err = ScenarioConfig::parse("{\n  \"operator\": {\"name\": \"klein\"}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ScenarioConfig::parse("{\"lattice\": {\"nt\": 4}}").is_err());
    }

    #[test]
    fn cfl_and_tolerance_names_are_validated() {
        assert!(ScenarioConfig::parse("{\"lattice\": {\"dt\": 0.5, \"dx\": 0.25}}").is_err());
        assert!(ScenarioConfig::parse("{\"tolerances\": {\"nope\": 1e-3}}").is_err());
        assert!(ScenarioConfig::parse("{\"tolerances\": {\"green.pg-identity\": 1e-9}}").is_ok());
    }
}
