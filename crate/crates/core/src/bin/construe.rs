use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use construe::grammar::{enumerate_states, KnowledgeBase};
use construe::interp::{Problem, ProblemOptions};
use construe::io::{self, InputError};
use construe::oracle;
use construe::procedures::Registry;
use construe::report::{self, Report};
use construe::search::{self, SearchConfig, Trace};
use construe::temporal::INF;
use construe::validate;

#[derive(Parser)]
#[command(
    name = "construe",
    version,
    about = "Abductive interpretation of time series"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct KbArgs {
    /// Knowledge-base files, names inside $CONSTRUE_KB_PATH, or built-in names
    /// (sinus, ecg_waves, ecg_rhythms).
    #[arg(long = "kb", required = true, num_args = 1..)]
    kb: Vec<String>,
}

#[derive(Args)]
struct InputArgs {
    /// Observations as JSON or CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Raw signal as `t,value` CSV.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Turn every sample of the signal into an observation of this observable.
    #[arg(long)]
    base_observable: Option<String>,
    /// Attribute that holds the sample value.
    #[arg(long, default_value = "V")]
    base_attribute: String,
    /// Prefer observations near salient points of the signal.
    #[arg(long)]
    salient: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for the best interpretation and print it as JSON.
    Interpret {
        #[command(flatten)]
        kb: KbArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Nodes expanded per iteration (defaults to the KB's value).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        max_nodes: usize,
        /// Wall-clock budget in milliseconds.
        #[arg(long)]
        time_budget_ms: Option<u64>,
        /// Write the search trace here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        pretty: bool,
    },
    /// List the abstraction patterns of a grammar.
    Patterns {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        grammar: Option<String>,
        #[arg(long, default_value_t = 6)]
        max_findings: usize,
        /// Text instead of JSON lines.
        #[arg(long)]
        pretty: bool,
    },
    /// Exhaustive minimum exclusive covers for a small problem.
    Oracle {
        #[command(flatten)]
        kb: KbArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 10)]
        max_findings: usize,
        #[arg(long, default_value_t = 4)]
        max_hypotheses: usize,
        #[arg(long)]
        pretty: bool,
    },
    /// Solve a set-cover instance through its interpretation problem.
    Setcover {
        /// Universe, e.g. `1,2,3`.
        #[arg(long)]
        universe: String,
        /// Sets separated by `;`, e.g. `1,2;3`.
        #[arg(long)]
        sets: String,
        /// Print the generated knowledge base and stop.
        #[arg(long)]
        print_kb: bool,
    },
    /// Show how a node of a trace was derived.
    Explain {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        node: usize,
        /// Also list alternatives that were not followed.
        #[arg(long)]
        why_not: bool,
        /// Text instead of JSON lines.
        #[arg(long)]
        pretty: bool,
    },
    /// Re-derive a reported interpretation and check every invariant.
    Validate {
        #[command(flatten)]
        kb: KbArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Kb(String),
    Other(String),
    Truncated,
    Invalid(usize),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        match e {
            InputError::Kb(k) => Failure::Kb(k.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn kb_dir() -> Option<PathBuf> {
    std::env::var_os("CONSTRUE_KB_PATH").map(PathBuf::from)
}

fn load_kb(a: &KbArgs, reg: &Registry) -> Result<KnowledgeBase, Failure> {
    Ok(io::load_kb(&a.kb, kb_dir().as_deref(), reg)?)
}

fn load_problem(kb: KnowledgeBase, reg: Registry, a: &InputArgs) -> Result<Problem, Failure> {
    let mut inp = match &a.input {
        Some(p) => io::load_input(p)?,
        None => io::Input::default(),
    };
    if let Some(s) = &a.series {
        inp.series = Some(io::parse_series_csv(&io::read(s)?)?);
    }
    if let Some(q) = &a.base_observable {
        let s = inp
            .series
            .as_ref()
            .ok_or_else(|| other("--base-observable needs a signal"))?;
        inp.observations
            .extend(io::series_observations(s, q, &a.base_attribute));
    }
    Problem::new(
        Arc::new(kb),
        Arc::new(reg),
        inp.observations,
        ProblemOptions {
            abstracts: inp.abstracts,
            series: inp.series,
            salient: a.salient,
        },
    )
    .map_err(other)
}

fn write_json(path: Option<&Path>, v: &impl serde::Serialize, pretty: bool) -> Result<(), Failure> {
    let text = if pretty {
        serde_json::to_string_pretty(v)
    } else {
        serde_json::to_string(v)
    }
    .map_err(other)?;
    match path {
        Some(p) => {
            std::fs::write(p, text + "\n").map_err(|e| other(format!("{}: {e}", p.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<u32>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<u32>()
                .map_err(|_| other(format!("bad element `{x}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Interpret {
            kb,
            input,
            k,
            max_nodes,
            time_budget_ms,
            trace,
            output,
            pretty,
        } => {
            let reg = Registry::with_builtins();
            let kb = load_kb(&kb, &reg)?;
            let p = load_problem(kb, reg, &input)?;
            let cfg = SearchConfig {
                k,
                max_nodes,
                time_budget: time_budget_ms.map(Duration::from_millis),
                record_rejections: trace.is_some(),
            };
            let r = search::construe(&p, &cfg);
            if let Some(t) = &trace {
                std::fs::write(t, r.trace.to_jsonl())
                    .map_err(|e| other(format!("{}: {e}", t.display())))?;
            }
            write_json(output.as_deref(), &Report::from_result(&p, &r), pretty)?;
            if r.truncated {
                return Err(Failure::Truncated);
            }
            Ok(())
        }
        Cmd::Patterns {
            kb,
            grammar,
            max_findings,
            pretty,
        } => {
            let reg = Registry::with_builtins();
            let kb = load_kb(&kb, &reg)?;
            if let Some(g) = &grammar {
                if kb.grammar(g).is_none() {
                    return Err(Failure::Kb(format!("no grammar `{g}`")));
                }
            }
            let bound = |b: i64| match b {
                b if b >= INF => "inf".to_string(),
                b if b <= -INF => "-inf".to_string(),
                b => b.to_string(),
            };
            for (gi, g) in kb.grammars.iter().enumerate() {
                if grammar.as_ref().is_some_and(|n| *n != g.name) {
                    continue;
                }
                if pretty {
                    println!("{} hypothesizes {}", g.name, g.hypothesis);
                }
                for s in enumerate_states(&kb, gi, max_findings) {
                    let cs = s.canonical_constraints();
                    if pretty {
                        println!("  {}", s.word().join(" "));
                        for (x, y, lo, hi, label) in cs {
                            println!(
                                "    {} <= {x} - {y} <= {}    ({label})",
                                bound(lo),
                                bound(hi)
                            );
                        }
                    } else {
                        let cs: Vec<_> = cs
                            .into_iter()
                            .map(|(x, y, lo, hi, label)| serde_json::json!({"x": x, "y": y, "lo": bound(lo), "hi": bound(hi), "label": label}))
                            .collect();
                        let line = serde_json::json!({"grammar": g.name, "hypothesis": g.hypothesis, "findings": s.word(), "constraints": cs});
                        println!("{line}");
                    }
                }
            }
            Ok(())
        }
        Cmd::Oracle {
            kb,
            input,
            max_findings,
            max_hypotheses,
            pretty,
        } => {
            let reg = Registry::with_builtins();
            let kb = load_kb(&kb, &reg)?;
            let p = load_problem(kb, reg, &input)?;
            let sol =
                oracle::brute_force_solution(&p, max_findings, max_hypotheses).map_err(other)?;
            write_json(None, &sol, pretty)
        }
        Cmd::Setcover {
            universe,
            sets,
            print_kb,
        } => {
            let u = parse_list(&universe)?;
            let s: Vec<Vec<u32>> = sets.split(';').map(parse_list).collect::<Result<_, _>>()?;
            if print_kb {
                print!("{}", oracle::reduction_kb(&u, &s).map_err(other)?);
                return Ok(());
            }
            let p = oracle::phi_reduction(&u, &s).map_err(other)?;
            let r = search::construe(&p, &SearchConfig::default());
            let exclusive = if u.len() <= oracle::MAX_ORACLE_OBSERVATIONS {
                oracle::brute_force_solution(&p, u.len().max(1), s.len())
                    .map_err(other)?
                    .minimum_size
            } else {
                None
            };
            let covered = r.best.covering_ratio(&p) == 1.0;
            let out = serde_json::json!({
                "set_cover": oracle::min_set_cover(&u, &s),
                "exclusive_cover": exclusive,
                "construe": covered.then_some(r.best.hypotheses.len()),
                "covering_ratio": r.best.covering_ratio(&p),
                "sets": r.best.hypotheses.iter().map(|h| h.observable().to_string()).collect::<Vec<_>>(),
                "truncated": r.truncated,
            });
            write_json(None, &out, false)
        }
        Cmd::Explain {
            trace,
            node,
            why_not,
            pretty,
        } => {
            let t = Trace::from_jsonl(&io::read(&trace)?).map_err(other)?;
            let steps = report::explain(&t, node)
                .ok_or_else(|| other(format!("no node {node} in the trace")))?;
            let alternatives = if why_not {
                report::why_not(&t, node).unwrap_or_default()
            } else {
                Vec::new()
            };
            if pretty {
                for n in steps {
                    println!("{}", report::node_line(&t, n.id));
                }
                if why_not {
                    println!("alternatives:");
                    for a in &alternatives {
                        println!("  {}", a.describe(&t));
                    }
                }
            } else {
                for n in steps {
                    println!("{}", serde_json::json!({ "step": n }));
                }
                for a in &alternatives {
                    println!("{}", serde_json::json!({ "alternative": a }));
                }
            }
            Ok(())
        }
        Cmd::Validate { kb, input, report } => {
            let reg = Registry::with_builtins();
            let kb = load_kb(&kb, &reg)?;
            let p = load_problem(kb, reg, &input)?;
            let claimed: Report = serde_json::from_str(&io::read(&report)?).map_err(other)?;
            let states =
                search::replay(&p, &claimed.path).ok_or_else(|| other("path does not replay"))?;
            let last = states.last().expect("at least the root");
            let mut problems: Vec<String> = validate::validate_final(&p, last)
                .iter()
                .map(|v| v.to_string())
                .collect();
            if !Report::describe(&p, last).same_interpretation(&claimed) {
                problems.push("replayed interpretation differs from the report".into());
            }
            for s in &problems {
                println!("{s}");
            }
            if problems.is_empty() {
                println!(
                    "ok: {} hypotheses, covering ratio {}",
                    last.hypotheses.len(),
                    last.covering_ratio(&p)
                );
                Ok(())
            } else {
                Err(Failure::Invalid(problems.len()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Kb(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Truncated) => {
            eprintln!("warning: search budget exhausted; reporting the best interpretation found");
            ExitCode::from(3)
        }
        Err(Failure::Invalid(n)) => {
            eprintln!("error: {n} violations");
            ExitCode::from(4)
        }
    }
}
