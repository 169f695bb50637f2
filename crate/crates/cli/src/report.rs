//! Report assembly. The body is a pure function of the configuration; wall
//! times live in a separate `timing` section.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{Bound, CheckDef, Ctx, CHECKS};
use crate::config::{Scenario, ScenarioConfig, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: &'static str,
    pub suite: &'static str,
    pub anchor: &'static str,
    pub status: Status,
    /// `None` when the check errored or the value is not finite.
    pub observed: Option<f64>,
    pub tolerance: f64,
    pub bound: Bound,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBody {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub checks: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub report: ReportBody,
    pub timing: Timing,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.report.summary.failed == 0 && self.report.summary.errors == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Checks selected by the configured suites and, for axioms, the scenario.
pub fn selected(cfg: &ScenarioConfig) -> Vec<&'static CheckDef> {
    CHECKS
        .iter()
        .filter(|c| cfg.runs(c.suite))
        .filter(|c| match (c.scenario, cfg.axioms.scenario) {
            (Some(s), want) => want == Scenario::All || s == want,
            (None, _) => true,
        })
        .collect()
}

pub fn evaluate(def: &CheckDef, ctx: &Ctx) -> CheckRecord {
    let tolerance = ctx.cfg.tolerances.get(def.name).copied().unwrap_or(def.tolerance);
    let (status, observed, message) = match def.run(ctx) {
        Ok(v) if v.is_finite() => (if def.bound.holds(v, tolerance) { Status::Pass } else { Status::Fail }, Some(v), None),
        Ok(v) => (Status::Fail, None, Some(format!("observed value is {v}"))),
        Err(e) => (Status::Error, None, Some(e.to_string())),
    };
    CheckRecord { name: def.name, suite: def.suite.as_str(), anchor: def.anchor, status, observed, tolerance, bound: def.bound, message }
}

pub fn run_checks(cfg: &ScenarioConfig, checks: &[&'static CheckDef]) -> Report {
    let start = Instant::now();
    let ctx = Ctx::new(cfg);
    let results: Vec<(CheckRecord, f64)> = checks
        .par_iter()
        .map(|def| {
            let t = Instant::now();
            let rec = evaluate(def, &ctx);
            (rec, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut timing = BTreeMap::new();
    let mut records = Vec::with_capacity(results.len());
    for (rec, secs) in results {
        timing.insert(rec.name, secs);
        records.push(rec);
    }
    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    let summary = Summary { total: records.len(), passed: count(Status::Pass), failed: count(Status::Fail), errors: count(Status::Error) };
    Report {
        report: ReportBody { seed: cfg.seed, config: cfg.clone(), checks: records, summary },
        timing: Timing { total_seconds: start.elapsed().as_secs_f64(), checks: timing },
    }
}

pub fn run(cfg: &ScenarioConfig) -> Report {
    run_checks(cfg, &selected(cfg))
}

/// Restricts a configuration to one suite.
pub fn with_suite(cfg: &ScenarioConfig, suite: Suite) -> ScenarioConfig {
    ScenarioConfig { suites: vec![suite], ..cfg.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_filters_axiom_checks() {
        let mut cfg = ScenarioConfig::parse("{\"suites\": [\"axioms\"], \"axioms\": {\"scenario\": \"diamond\"}}").unwrap();
        let names: Vec<_> = selected(&cfg).iter().map(|c| c.name).collect();
        assert_eq!(names, vec!["axioms.res-green-ext-diamond"]);
        cfg.axioms.scenario = Scenario::All;
        assert!(selected(&cfg).len() > 5);
    }

    #[test]
    fn overrides_change_status() {
        let mut cfg = ScenarioConfig::parse("{\"suites\": [\"symbols\"], \"symbols\": {\"dims\": [3]}}").unwrap();
        let def = crate::checks::find("symbols.clifford").unwrap();
        assert_eq!(evaluate(def, &Ctx::new(&cfg)).status, Status::Pass);
        cfg.tolerances.insert("symbols.dirac-definite".into(), 2.0);
        let def = crate::checks::find("symbols.dirac-definite").unwrap();
        let rec = evaluate(def, &Ctx::new(&cfg));
        assert_eq!(rec.status, Status::Fail, "{rec:?}");
    }
}
