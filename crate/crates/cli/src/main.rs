use std::io::{Read as _, Write as _};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ghq_cli::checks::CHECKS;
use ghq_cli::commands::{export, ferm_command, npoint_command, symbol_command, ExportKind, Output, SymbolQuery};
use ghq_cli::config::{Scenario, ScenarioConfig, Suite};
use ghq_cli::io::{read_section, read_triplets};
use ghq_cli::report::{self, Report, Status};

#[derive(Parser)]
#[command(name = "ghq", version, about = "Green-hyperbolic operators on lattice spacetimes: checks and exports")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every configured suite and write the JSON report.
    Run {
        config: String,
        /// Report path; overrides the configured one.
        #[arg(long)]
        report: Option<String>,
    },
    /// Green's operator and exact-sequence checks for the configured operator.
    Green { config: String },
    /// Bosonic n-point functions as CSV, with a JSON summary of identity defects.
    Npoint {
        config: String,
        #[arg(long)]
        out: Option<String>,
        /// Summary path; stderr when absent.
        #[arg(long)]
        summary: Option<String>,
    },
    /// Fermionic n-point functions as CSV, with the Gram matrix and CAR defects.
    Ferm {
        config: String,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        summary: Option<String>,
    },
    /// Classify a principal symbol; reads a JSON query from a file or stdin.
    Symbol {
        /// Query file; `-` or absent reads stdin.
        input: Option<String>,
    },
    /// Locality axioms; prints pass/fail per axiom.
    Axioms {
        config: String,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
    },
    /// Write an operator, Green's operator, section or Gram matrix to a file.
    Export {
        config: String,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        out: String,
        /// Read the file back and compare.
        #[arg(long)]
        verify: bool,
    },
    /// List registered checks.
    ListChecks {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    All,
    Band,
    Diamond,
    DisjointPair,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Op,
    Green,
    Section,
    Gram,
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<ghq::Error> for Failure {
    fn from(e: ghq::Error) -> Self {
        match e {
            ghq::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load(path: &str) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(usage)
}

fn write_to(path: Option<&str>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("cannot write {p}: {e}"))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| usage(e)),
    }
}

fn finish_report(rep: &Report, path: Option<&str>) -> Result<(), Failure> {
    write_to(path, &rep.to_json())?;
    if rep.passed() {
        Ok(())
    } else {
        let s = &rep.report.summary;
        Err(Failure::Check(format!("{} of {} checks failed, {} errored", s.failed, s.total, s.errors)))
    }
}

fn finish_output(out: Output, csv: Option<&str>, summary: Option<&str>) -> Result<(), Failure> {
    write_to(csv, &out.csv)?;
    let text = serde_json::to_string_pretty(&out.summary).expect("summary serializes") + "\n";
    match summary {
        Some(p) => write_to(Some(p), &text)?,
        None => eprint!("{text}"),
    }
    if out.passed {
        Ok(())
    } else {
        Err(Failure::Check("identity defects exceed tolerance".into()))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("GHQ_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| usage(format!("GHQ_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(usage)
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { config, report: path } => {
            let cfg = load(&config)?;
            let rep = report::run(&cfg);
            finish_report(&rep, path.as_deref().or(cfg.report.as_deref()))
        }
        Cmd::Green { config } => {
            let cfg = load(&config)?;
            let cfg = ScenarioConfig { suites: vec![Suite::Green, Suite::ExactSeq], ..cfg };
            finish_report(&report::run(&cfg), None)
        }
        Cmd::Npoint { config, out, summary } => finish_output(npoint_command(&load(&config)?)?, out.as_deref(), summary.as_deref()),
        Cmd::Ferm { config, out, summary } => finish_output(ferm_command(&load(&config)?)?, out.as_deref(), summary.as_deref()),
        Cmd::Symbol { input } => {
            let text = match input.as_deref() {
                None | Some("-") => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s).map_err(usage)?;
                    s
                }
                Some(p) => std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {p}: {e}")))?,
            };
            let q: SymbolQuery = serde_json::from_str(&text).map_err(|e| usage(format!("symbol query: {e}")))?;
            let a = symbol_command(&q)?;
            write_to(None, &(serde_json::to_string_pretty(&a).expect("answer serializes") + "\n"))
        }
        Cmd::Axioms { config, scenario } => {
            let mut cfg = report::with_suite(&load(&config)?, Suite::Axioms);
            if let Some(s) = scenario {
                cfg.axioms.scenario = match s {
                    ScenarioArg::All => Scenario::All,
                    ScenarioArg::Band => Scenario::Band,
                    ScenarioArg::Diamond => Scenario::Diamond,
                    ScenarioArg::DisjointPair => Scenario::DisjointPair,
                };
            }
            let rep = report::run(&cfg);
            let lines: Vec<_> = rep
                .report
                .checks
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "axiom": c.name,
                        "statement": c.anchor,
                        "pass": c.status == Status::Pass,
                        "observed": c.observed,
                        "tolerance": c.tolerance,
                        "message": c.message,
                    })
                })
                .collect();
            let body = serde_json::json!({"seed": cfg.seed, "axioms": lines});
            write_to(None, &(serde_json::to_string_pretty(&body).expect("json") + "\n"))?;
            if rep.passed() {
                Ok(())
            } else {
                Err(Failure::Check("an axiom check failed".into()))
            }
        }
        Cmd::Export { config, kind, out, verify } => {
            let cfg = load(&config)?;
            let kind = match kind {
                KindArg::Op => ExportKind::Op,
                KindArg::Green => ExportKind::Green,
                KindArg::Section => ExportKind::Section,
                KindArg::Gram => ExportKind::Gram,
            };
            let text = export(&cfg, kind)?;
            write_to(Some(&out), &text)?;
            if verify {
                let back = std::fs::read_to_string(&out).map_err(usage)?;
                let again = if kind == ExportKind::Section {
                    let ctx = ghq_cli::checks::Ctx::new(&cfg);
                    let op = &ctx.configured()?.0;
                    let s = read_section(&back, op.lattice(), op.fiber_dim(), op.kind()).map_err(|e| Failure::Check(e.to_string()))?;
                    ghq_cli::io::write_section(&s).map_err(|e| Failure::Check(e.to_string()))?
                } else {
                    let (h, m) = read_triplets(&back).map_err(|e| Failure::Check(e.to_string()))?;
                    ghq_cli::io::write_triplets(&h, &m)
                };
                if again != text {
                    return Err(Failure::Check(format!("{out}: round trip changed the contents")));
                }
                eprintln!("{out}: round trip exact");
            }
            Ok(())
        }
        Cmd::ListChecks { json } => {
            if json {
                let v: Vec<_> = CHECKS
                    .iter()
                    .map(|c| serde_json::json!({"name": c.name, "suite": c.suite.as_str(), "anchor": c.anchor, "tolerance": c.tolerance, "bound": c.bound}))
                    .collect();
                write_to(None, &(serde_json::to_string_pretty(&v).expect("json") + "\n"))
            } else {
                let w = CHECKS.iter().map(|c| c.name.len()).max().unwrap_or(0);
                let mut s = String::new();
                for c in CHECKS {
                    s.push_str(&format!("{:<w$}  {:<10} {}\n", c.name, c.suite.as_str(), c.anchor));
                }
                write_to(None, &s)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.cmd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("ghq: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("ghq: {m}");
            ExitCode::from(2)
        }
    }
}
