//! Subcommand implementations and report plumbing for the `rankcomm` binary.
//!
//! Every run produces one report: a config echo, a payload, and timing. The
//! payload is a pure function of the config (randomized modes are seeded),
//! so re-running an echoed config reproduces it byte for byte; timing lives
//! outside the payload for that reason. Exit codes: 0 pass/success, 1 a
//! property was violated (witness in the payload), 2 guard failure or
//! infeasibility, 3 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use rankcomm::commutant::{
    commutant_dimension, replay_additive_proof, verify_commuting, MatrixSelector, ReplayOutcome,
};
use rankcomm::completion::{complete_to_rank, verify_completion, SupportPattern};
use rankcomm::error::Error;
use rankcomm::json::{linmap_from_json, symmap_from_json, ToJson};
use rankcomm::linmap::{DecomposeOutcome, MatLinMap};
use rankcomm::multitrace::{
    decompose_trace, replay_trace_proof, vandermonde_extract, verify_trace_commuting,
    SymMultiMap, TraceDecomposeOutcome, TraceReplayOutcome,
};
use rankcomm::{FieldSpec, Mat, Mode, Scalar, DEFAULT_BUDGET};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "rankcomm",
    version,
    about = "Exact verification and decomposition of maps commuting on rank-k matrix sets",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format: json (the contract) or text (human-readable).
    #[arg(long, global = true, default_value = "json")]
    pub format: String,
    /// Enumeration budget override (also RANKCOMM_BUDGET).
    #[arg(long, global = true)]
    pub budget: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModeArgs {
    /// exhaustive or random.
    #[arg(long, default_value = "exhaustive")]
    pub mode: String,
    /// Sample count for random mode.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Seed for random mode (fixed default keeps reports reproducible).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModeArgs {
    fn resolve(&self) -> Result<Mode, Error> {
        Mode::parse(&self.mode, self.samples, self.seed)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find and certify a rank-k completion of a support pattern.
    Complete {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Positions as "i,j;i,j;...". Empty for the empty pattern.
        #[arg(long, default_value = "")]
        pattern: String,
        #[arg(long, default_value = "p:5")]
        field: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Count the rank-k matrices over GF(p), optionally cross-checked by
    /// enumeration.
    Count {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        field: String,
        /// Re-derive the count by exhaustive enumeration (within budget).
        #[arg(long)]
        check: bool,
    },
    /// Check [G(x), x] = 0 over a matrix set for an operator file.
    Verify {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        selector: String,
        /// Optional field assertion; must match the map file.
        #[arg(long)]
        field: Option<String>,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Exact dimension and basis of the space of maps commuting on a set.
    Dim {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        selector: Option<String>,
        #[arg(long)]
        field: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Recognize the standard form of an operator file.
    Decompose {
        #[arg(long)]
        map: PathBuf,
    },
    /// Mechanically replay the additive rank-k argument for an operator.
    Replay {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Built-in example maps.
    Gallery {
        #[command(subcommand)]
        what: GalleryCommand,
    },
    /// Commutant dimension reports over a grid of (n, k, field) cells.
    Sweep {
        /// Inclusive range, e.g. "2..3" or a single value.
        #[arg(long)]
        n: String,
        /// Inclusive range; the upper bound may be "n", e.g. "1..n".
        #[arg(long)]
        k: String,
        /// Comma-separated field specs, e.g. "p:2,p:3,p:5".
        #[arg(long)]
        fields: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Operations on symmetric m-linear maps.
    Trace {
        #[command(subcommand)]
        what: TraceCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum GalleryCommand {
    /// The map commuting on all rank-1 matrices that is not standard.
    Example {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        field: String,
        /// Selector to verify against, e.g. rank:1.
        #[arg(long)]
        verify: Option<String>,
        #[command(flatten)]
        mode: ModeArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum TraceCommand {
    /// Check [T(x), x] = 0 over a matrix set for a multimap file.
    Verify {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        selector: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Vandermonde extraction of [T(c), c] for a pattern fill.
    Extract {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        k: usize,
        /// Fill values, comma-separated; default all 1.
        #[arg(long)]
        fills: Option<String>,
    },
    /// Decompose the trace as mu_0 x^m + mu_1(x) x^(m-1) + ... + mu_m(x).
    Decompose {
        #[arg(long)]
        map: PathBuf,
    },
    /// Mechanically replay the m-linear cascade at rank k.
    Replay {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        k: usize,
    },
}

pub struct Outcome {
    pub exit: i32,
    pub config: Value,
    pub payload: Value,
}

fn read_json(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_linmap(path: &Path) -> Result<MatLinMap, Error> {
    linmap_from_json(&read_json(path)?)
}

fn load_symmap(path: &Path) -> Result<SymMultiMap, Error> {
    symmap_from_json(&read_json(path)?)
}

/// Inclusive range "a..b", a single value "a", or (when `n` is given) an
/// upper bound written as the letter n.
fn parse_range(s: &str, n: Option<usize>) -> Result<(usize, usize), Error> {
    let bad = || Error::Parse(format!("bad range {s:?}"));
    let parse_end = |t: &str| -> Result<usize, Error> {
        if t == "n" {
            n.ok_or_else(bad)
        } else {
            t.parse().map_err(|_| bad())
        }
    };
    match s.split_once("..") {
        Some((a, b)) => Ok((parse_end(a.trim())?, parse_end(b.trim())?)),
        None => {
            let v = parse_end(s.trim())?;
            Ok((v, v))
        }
    }
}

pub fn resolve_budget(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("RANKCOMM_BUDGET")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(DEFAULT_BUDGET)
}

pub fn run(command: &Command, budget: u64) -> Result<Outcome, Error> {
    match command {
        Command::Complete { n, k, pattern, field, mode } => {
            let spec = FieldSpec::parse(field)?;
            let pat = SupportPattern::parse(pattern, *n)?;
            let m = mode.resolve()?;
            let config = json!({
                "command": "complete", "n": n, "k": k,
                "pattern": pat.to_json(), "field": spec.to_json(), "mode": m.to_json(),
                "budget": budget,
            });
            let completion = complete_to_rank(&pat, *k, &spec)?;
            let verification = verify_completion(&pat, &completion.b, *k, &spec, m, budget)?;
            let exit = if verification.passed() { 0 } else { 1 };
            Ok(Outcome {
                exit,
                config,
                payload: json!({
                    "completion": completion.to_json(),
                    "verification": verification.to_json(),
                }),
            })
        }
        Command::Count { n, k, field, check } => {
            let spec = FieldSpec::parse(field)?;
            let Some(p) = spec.modulus() else {
                return Err(Error::RequiresPrimeField("rank-class counting"));
            };
            let config = json!({
                "command": "count", "n": n, "k": k, "field": spec.to_json(),
                "check": check, "budget": budget,
            });
            let count = rankcomm::count_rank(*n, *k, p)?;
            let enumerated = if *check {
                let got = rankcomm::enumerate_rank_k(*n, *k, &spec, budget)?.count() as u64;
                if count != got.into() {
                    return Err(Error::Parse(format!(
                        "closed form {count} disagrees with enumeration {got}"
                    )));
                }
                Value::from(got)
            } else {
                Value::Null
            };
            Ok(Outcome {
                exit: 0,
                config,
                payload: json!({"count": count.to_string(), "enumerated": enumerated}),
            })
        }
        Command::Verify { map, selector, field, mode } => {
            let g = load_linmap(map)?;
            if let Some(f) = field {
                let spec = FieldSpec::parse(f)?;
                if spec != *g.spec() {
                    return Err(Error::MixedFields);
                }
            }
            let sel = MatrixSelector::parse(selector)?;
            let m = mode.resolve()?;
            let config = json!({
                "command": "verify", "map": map.display().to_string(),
                "selector": sel.to_json(), "field": g.spec().to_json(),
                "mode": m.to_json(), "budget": budget,
            });
            let verdict = verify_commuting(&g, sel, m, budget)?;
            Ok(Outcome {
                exit: if verdict.passed() { 0 } else { 1 },
                config,
                payload: verdict.to_json(),
            })
        }
        Command::Dim { n, k, selector, field, mode } => {
            let spec = FieldSpec::parse(field)?;
            let sel = match (k, selector) {
                (Some(k), None) => MatrixSelector::RankExact(*k),
                (None, Some(s)) => MatrixSelector::parse(s)?,
                _ => {
                    return Err(Error::Parse(
                        "dim needs exactly one of --k or --selector".into(),
                    ))
                }
            };
            let m = mode.resolve()?;
            let config = json!({
                "command": "dim", "n": n, "selector": sel.to_json(),
                "field": spec.to_json(), "mode": m.to_json(), "budget": budget,
            });
            let report = commutant_dimension(*n, sel, &spec, m, budget)?;
            Ok(Outcome { exit: 0, config, payload: report.to_json() })
        }
        Command::Decompose { map } => {
            let g = load_linmap(map)?;
            let config = json!({
                "command": "decompose", "map": map.display().to_string(),
                "field": g.spec().to_json(), "n": g.n(),
            });
            let outcome = g.decompose()?;
            let exit = match &outcome {
                DecomposeOutcome::Standard(_) => 0,
                DecomposeOutcome::NotStandard { .. } => 1,
            };
            Ok(Outcome { exit, config, payload: outcome.to_json() })
        }
        Command::Replay { map, k } => {
            let g = load_linmap(map)?;
            let config = json!({
                "command": "replay", "map": map.display().to_string(), "k": k,
                "field": g.spec().to_json(), "n": g.n(),
            });
            let outcome = replay_additive_proof(&g, *k)?;
            let exit = match &outcome {
                ReplayOutcome::Standard { .. } => 0,
                ReplayOutcome::Violation { .. } => 1,
            };
            Ok(Outcome { exit, config, payload: outcome.to_json() })
        }
        Command::Gallery { what } => {
            let GalleryCommand::Example { n, field, verify, mode } = what;
            let spec = FieldSpec::parse(field)?;
            let g = MatLinMap::example_map(*n, &spec)?;
            let m = mode.resolve()?;
            let config = json!({
                "command": "gallery example", "n": n, "field": spec.to_json(),
                "verify": verify.clone().map(Value::from).unwrap_or(Value::Null),
                "mode": m.to_json(), "budget": budget,
            });
            let image_of_identity = g.apply(&Mat::identity(*n, &spec));
            let decomposition = g.decompose()?;
            let mut exit = 0;
            let verification = match verify {
                Some(sel_s) => {
                    let sel = MatrixSelector::parse(sel_s)?;
                    let verdict = verify_commuting(&g, sel, m, budget)?;
                    if !verdict.passed() {
                        exit = 1;
                    }
                    json!({"selector": sel.to_json(), "result": verdict.to_json()})
                }
                None => Value::Null,
            };
            Ok(Outcome {
                exit,
                config,
                payload: json!({
                    "map": g.to_json(),
                    "image_of_identity": image_of_identity.to_json(),
                    "decompose": decomposition.to_json(),
                    "verify": verification,
                }),
            })
        }
        Command::Sweep { n, k, fields, mode } => {
            let (n_lo, n_hi) = parse_range(n, None)?;
            let m = mode.resolve()?;
            let specs: Vec<FieldSpec> = fields
                .split(',')
                .map(FieldSpec::parse)
                .collect::<Result<_, _>>()?;
            let mut cells = Vec::new();
            for nn in n_lo..=n_hi {
                let (k_lo, k_hi) = parse_range(k, Some(nn))?;
                for kk in k_lo..=k_hi.min(nn) {
                    for spec in &specs {
                        cells.push((nn, kk, spec.clone()));
                    }
                }
            }
            let config = json!({
                "command": "sweep", "n": n, "k": k,
                "fields": specs.iter().map(ToJson::to_json).collect::<Vec<_>>(),
                "mode": m.to_json(), "budget": budget,
            });
            // worker pool; results collected in grid order regardless of
            // schedule
            let reports: Vec<Value> = cells
                .par_iter()
                .map(|(nn, kk, spec)| {
                    let cell = json!({"n": nn, "k": kk, "field": spec.to_json()});
                    match commutant_dimension(
                        *nn,
                        MatrixSelector::RankExact(*kk),
                        spec,
                        m,
                        budget,
                    ) {
                        Ok(report) => {
                            let mut obj = cell;
                            obj["report"] = report.to_json();
                            obj
                        }
                        Err(e) => {
                            let mut obj = cell;
                            obj["error"] = e.to_json();
                            obj
                        }
                    }
                })
                .collect();
            Ok(Outcome { exit: 0, config, payload: json!({"cells": reports}) })
        }
        Command::Trace { what } => run_trace(what, budget),
    }
}

fn run_trace(cmd: &TraceCommand, budget: u64) -> Result<Outcome, Error> {
    match cmd {
        TraceCommand::Verify { map, selector, mode } => {
            let g = load_symmap(map)?;
            let sel = MatrixSelector::parse(selector)?;
            let m = mode.resolve()?;
            let config = json!({
                "command": "trace verify", "map": map.display().to_string(),
                "selector": sel.to_json(), "mode": m.to_json(), "budget": budget,
                "m": g.m(), "n": g.n(), "field": g.spec().to_json(),
            });
            let verdict = verify_trace_commuting(&g, sel, m, budget)?;
            Ok(Outcome {
                exit: if verdict.passed() { 0 } else { 1 },
                config,
                payload: verdict.to_json(),
            })
        }
        TraceCommand::Extract { map, pattern, k, fills } => {
            let g = load_symmap(map)?;
            let spec = g.spec().clone();
            let pat = SupportPattern::parse(pattern, g.n())?;
            let fill_values: Vec<Scalar> = match fills {
                Some(s) => s
                    .split(',')
                    .map(|t| Scalar::parse(t.trim(), &spec))
                    .collect::<Result<_, _>>()?,
                None => vec![Scalar::one(&spec); pat.v()],
            };
            if fill_values.len() != pat.v() {
                return Err(Error::Parse(format!(
                    "{} fills for {} positions",
                    fill_values.len(),
                    pat.v()
                )));
            }
            if fill_values.iter().any(Scalar::is_zero) {
                return Err(Error::Parse("fills must be nonzero".into()));
            }
            let config = json!({
                "command": "trace extract", "map": map.display().to_string(),
                "pattern": pat.to_json(), "k": k,
                "fills": fill_values.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "m": g.m(), "n": g.n(), "field": spec.to_json(),
            });
            let cert_field = if spec.is_prime_field() {
                spec.clone()
            } else {
                FieldSpec::prime(5)?
            };
            let completion = complete_to_rank(&pat, *k, &cert_field)?;
            let b = completion.b_over(&spec);
            let mut c = Mat::zero(g.n(), &spec);
            for (&(i, j), z) in pat.positions().iter().zip(&fill_values) {
                c.set(i, j, z.clone());
            }
            let extracted = vandermonde_extract(&g, &c, &b)?;
            let direct = g.trace_eval(&c).commutator(&c);
            let agree = extracted == direct;
            let exit = if extracted.is_zero() { 0 } else { 1 };
            Ok(Outcome {
                exit,
                config,
                payload: json!({
                    "completion": completion.to_json(),
                    "extracted": extracted.to_json(),
                    "is_zero": extracted.is_zero(),
                    "direct": direct.to_json(),
                    "agree": agree,
                }),
            })
        }
        TraceCommand::Decompose { map } => {
            let g = load_symmap(map)?;
            let config = json!({
                "command": "trace decompose", "map": map.display().to_string(),
                "m": g.m(), "n": g.n(), "field": g.spec().to_json(),
            });
            let outcome = decompose_trace(&g)?;
            let exit = match &outcome {
                TraceDecomposeOutcome::Decomposed(_) => 0,
                TraceDecomposeOutcome::NotDecomposable { .. } => 1,
            };
            Ok(Outcome { exit, config, payload: outcome.to_json() })
        }
        TraceCommand::Replay { map, k } => {
            let g = load_symmap(map)?;
            let config = json!({
                "command": "trace replay", "map": map.display().to_string(), "k": k,
                "m": g.m(), "n": g.n(), "field": g.spec().to_json(), "budget": budget,
            });
            let outcome = replay_trace_proof(&g, *k, budget)?;
            let exit = match &outcome {
                TraceReplayOutcome::CommutingEverywhere { .. } => 0,
                TraceReplayOutcome::Violation { .. } => 1,
            };
            Ok(Outcome { exit, config, payload: outcome.to_json() })
        }
    }
}

/// Human-readable rendering; JSON remains the contract.
pub fn render_text(config: &Value, payload: &Value, exit: i32) -> String {
    let mut out = String::new();
    let cmd = config
        .get("command")
        .and_then(Value::as_str)
        .unwrap_or("run");
    out.push_str(&format!("rankcomm {VERSION} — {cmd}\n"));
    match cmd {
        "dim" => {
            if let Some(obj) = payload.as_object() {
                out.push_str(&format!(
                    "dimension {} (standard {}, excess {}), predicted {}\n",
                    obj["dimension"], obj["standard_dim"], obj["excess"],
                    obj.get("predicted").map(|v| v.to_string()).unwrap_or_default(),
                ));
                out.push_str(&format!(
                    "set size {}, constraints {}, mode {}\n",
                    obj["set_size"], obj["constraint_count"], obj["mode"],
                ));
                if let Some(note) = obj.get("note").and_then(Value::as_str) {
                    out.push_str(&format!("note: {note}\n"));
                }
            }
        }
        "sweep" => {
            out.push_str(&format!(
                "{:>3} {:>3} {:<8} {:>9} {:>7} {:>9}  note\n",
                "n", "k", "field", "dimension", "excess", "predicted"
            ));
            if let Some(cells) = payload.get("cells").and_then(Value::as_array) {
                for cell in cells {
                    let n = cell["n"].to_string();
                    let k = cell["k"].to_string();
                    let field = cell["field"]
                        .get("p")
                        .map(|p| format!("GF({p})"))
                        .unwrap_or_else(|| "Q".into());
                    let (dimension, excess, predicted, note) = match cell.get("report") {
                        Some(r) => (
                            r["dimension"].to_string(),
                            r["excess"].to_string(),
                            match r.get("predicted") {
                                Some(Value::Null) | None => "-".to_string(),
                                Some(v) => v.to_string(),
                            },
                            r.get("note").and_then(Value::as_str).unwrap_or("").to_string(),
                        ),
                        None => (
                            "-".into(),
                            "-".into(),
                            "-".into(),
                            cell.get("error")
                                .and_then(|e| e.get("error"))
                                .and_then(Value::as_str)
                                .unwrap_or("error")
                                .to_string(),
                        ),
                    };
                    out.push_str(&format!(
                        "{n:>3} {k:>3} {field:<8} {dimension:>9} {excess:>7} {predicted:>9}  {note}\n"
                    ));
                }
            }
        }
        _ => {
            out.push_str(&serde_json::to_string_pretty(payload).unwrap_or_default());
            out.push('\n');
        }
    }
    out.push_str(&format!("exit {exit}\n"));
    out
}
