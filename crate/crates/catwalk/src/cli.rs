//! Command-line surface: evaluate, search, prove, formulas, simulation,
//! table reproduction and trace dumps.
//!
//! Exit codes: 0 success, 1 table-reproduction mismatch, 2 usage or
//! computation error.

use std::io::Write;

use clap::{Parser, Subcommand, ValueEnum};
use num::ToPrimitive;
use serde_json::json;

use crate::evaluate::{detect_scaled_repetition, evaluate_strategy};
use crate::montecarlo::{crosscheck, simulate, DEFAULT_MAX_STEPS};
use crate::numerics::{format_rational, parse_rational, to_decimal_string, Rational};
use crate::prove::{verify_local_optimality, ProveOutcome, DEFAULT_LOOKAHEAD};
use crate::search::{search_optimal, Objective, SearchConfig};
use crate::strategy::{format_strategy, parse_strategy, sweep_strategy, twice_left_twice_right};
use crate::tables::reproduce_tables;
use crate::topology::Topology;
use crate::{dynamics, formulas, Error, Result};

/// JSON schema tag stamped on machine-readable output.
const SCHEMA: &str = "catwalk/1";

#[derive(Parser)]
#[command(
    name = "catwalk",
    about = "Exact solver, prover and simulator for catch-the-walking-cat games",
    version
)]
struct Cli {
    /// Emit machine-readable JSON instead of text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Duration,
    Escape,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Duration => Objective::MinDuration,
            ObjectiveArg::Escape => Objective::MinEscape,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a strategy exactly: expected duration and escape rate
    Eval {
        /// Topology spec: line:5, line:5:exits, ring:6, grid:2x4:exits
        topology: String,
        /// Strategy text like "1661(2266)", or preset:NAME
        strategy: String,
    },
    /// Search for an optimal opening strategy
    Search {
        topology: String,
        #[arg(long, value_enum, default_value = "duration")]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 14)]
        maxdepth: usize,
        /// Warm-start upper bound "p/q"
        #[arg(long)]
        incumbent: Option<String>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Collect all optima within this distance of the best value ("p/q")
        #[arg(long)]
        all_optima_within: Option<String>,
        /// Disable the first-step symmetry reduction
        #[arg(long)]
        no_symmetry: bool,
    },
    /// Deviation-test a candidate strategy for local optimality
    Prove {
        topology: String,
        strategy: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = DEFAULT_LOOKAHEAD)]
        lookahead: usize,
    },
    /// Closed-form quantities (run without arguments to list them)
    Formula {
        name: Option<String>,
        args: Vec<String>,
    },
    /// Monte Carlo playouts
    Simulate {
        topology: String,
        strategy: String,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Compare against the exact evaluation (3 standard errors)
        #[arg(long)]
        crosscheck: bool,
        /// Write the duration histogram as CSV to this path
        #[arg(long)]
        csv: Option<String>,
    },
    /// Recompute published tables and diff against stored expectations
    Tables {
        /// Table ids like T1 T4; empty means all
        ids: Vec<String>,
    },
    /// Dump the exact step-by-step residence distribution
    Trace {
        topology: String,
        strategy: String,
        #[arg(long, default_value_t = 12)]
        steps: usize,
    },
}

/// Runs the CLI against explicit arguments and streams; returns the exit
/// code.
pub fn run<W: Write, E: Write>(argv: &[String], out: &mut W, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return 2;
            }
            let _ = write!(out, "{rendered}");
            return 0;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch<W: Write>(cli: &Cli, out: &mut W) -> Result<i32> {
    let json = cli.json;
    match &cli.command {
        Command::Eval { topology, strategy } => cmd_eval(topology, strategy, json, out),
        Command::Search {
            topology,
            objective,
            maxdepth,
            incumbent,
            threads,
            all_optima_within,
            no_symmetry,
        } => {
            let t = Topology::parse(topology)?;
            let mut cfg = SearchConfig::new((*objective).into(), *maxdepth);
            if let Some(v) = incumbent {
                cfg.incumbent = Some(parse_rational(v)?);
            }
            cfg.threads = (*threads).max(1);
            if let Some(eps) = all_optima_within {
                cfg.collect_ties = true;
                cfg.tie_tolerance = parse_rational(eps)?;
            }
            cfg.symmetry_reduction = !no_symmetry;
            let outcome = search_optimal(&t, cfg)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "search": outcome,
                    }))
                    .unwrap()
                )
                .ok();
            } else {
                match &outcome.best {
                    Some(best) => {
                        writeln!(
                            out,
                            "best strategy: {}",
                            format_strategy(&best.strategy)
                        )
                        .ok();
                        writeln!(
                            out,
                            "value = {} ({})",
                            format_rational(&best.value),
                            to_decimal_string(&best.value, 5)
                        )
                        .ok();
                        if outcome.optima.len() > 1 {
                            writeln!(out, "equal-value optima:").ok();
                            for f in &outcome.optima {
                                writeln!(out, "  {}", format_strategy(&f.strategy)).ok();
                            }
                        }
                        if let Some(cert) = &outcome.certificate {
                            writeln!(
                                out,
                                "repetition: t0={} period={} factor={}",
                                cert.t0,
                                cert.period,
                                format_rational(&cert.factor)
                            )
                            .ok();
                        }
                    }
                    None => {
                        writeln!(out, "no resolvable strategy found within the horizon").ok();
                    }
                }
                if let Some(lb) = &outcome.lower_bound {
                    writeln!(out, "lower bound: {}", format_rational(lb)).ok();
                }
                writeln!(
                    out,
                    "nodes: {}  pruned: {}  frontier: {}",
                    outcome.nodes, outcome.pruned, outcome.frontier
                )
                .ok();
            }
            Ok(0)
        }
        Command::Prove {
            topology,
            strategy,
            horizon,
            lookahead,
        } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            let outcome = verify_local_optimality(&t, &s, *horizon, *lookahead)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "prove": outcome,
                    }))
                    .unwrap()
                )
                .ok();
                return Ok(0);
            }
            match outcome {
                ProveOutcome::Certificate(cert) => {
                    writeln!(
                        out,
                        "certificate for {} (value {}):",
                        format_strategy(&cert.candidate),
                        format_rational(&cert.value)
                    )
                    .ok();
                    writeln!(
                        out,
                        "  horizon {} lookahead {}  complete: {}",
                        cert.horizon, cert.lookahead, cert.complete
                    )
                    .ok();
                    for r in &cert.records {
                        let outcome = match &r.outcome {
                            crate::prove::DeviationOutcome::Refuted { by_step } => {
                                format!("refuted by step {by_step}")
                            }
                            crate::prove::DeviationOutcome::Tie { equivalent } => {
                                format!("tie: {}", format_strategy(equivalent))
                            }
                            crate::prove::DeviationOutcome::Inconclusive => {
                                "inconclusive".to_string()
                            }
                        };
                        writeln!(
                            out,
                            "  step {:>2} open {} -> {}",
                            r.step, r.alternative, outcome
                        )
                        .ok();
                    }
                    if let Some(nt) = &cert.repetition {
                        writeln!(out, "  repetition: {nt:?}").ok();
                    }
                }
                ProveOutcome::Counterexample {
                    step,
                    alternative,
                    strategy,
                    value,
                } => {
                    writeln!(
                        out,
                        "counterexample at step {step}: open {alternative} then {} achieves {}",
                        format_strategy(&strategy),
                        format_rational(&value)
                    )
                    .ok();
                }
            }
            Ok(0)
        }
        Command::Formula { name, args } => cmd_formula(name.as_deref(), args, json, out),
        Command::Simulate {
            topology,
            strategy,
            trials,
            seed,
            max_steps,
            threads,
            crosscheck: do_check,
            csv,
        } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            if *do_check {
                let report = crosscheck(&t, &s, *trials, *seed)?;
                if let Some(path) = csv {
                    write_histogram_csv(path, &report.report.histogram)?;
                }
                if json {
                    writeln!(
                        out,
                        "{}",
                        serde_json::to_string_pretty(&json!({
                            "schema": SCHEMA,
                            "crosscheck": report,
                        }))
                        .unwrap()
                    )
                    .ok();
                } else {
                    writeln!(
                        out,
                        "simulated {} trials: mean duration {:.5} (exact {:.5}, {:.1} se), \
                         escape {:.5} (exact {:.5}, {:.1} se) -> {}",
                        report.report.trials,
                        report.report.mean_duration,
                        report.exact_duration,
                        report.duration_diff / report.duration_se.max(f64::EPSILON),
                        report.report.escape_frequency(),
                        report.exact_escape_rate,
                        report.escape_diff / report.escape_se,
                        if report.pass { "PASS" } else { "FAIL" }
                    )
                    .ok();
                }
                return Ok(if report.pass { 0 } else { 1 });
            }
            let report = simulate(&t, &s, *trials, *seed, *max_steps, (*threads).max(1))?;
            if let Some(path) = csv {
                write_histogram_csv(path, &report.histogram)?;
            }
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "simulation": report,
                    }))
                    .unwrap()
                )
                .ok();
            } else {
                writeln!(
                    out,
                    "trials {}  caught {}  escaped {}  truncated {}",
                    report.trials, report.caught, report.escaped, report.truncated
                )
                .ok();
                writeln!(
                    out,
                    "mean duration {:.5}  variance {:.5}  seed {}",
                    report.mean_duration, report.duration_variance, report.seed
                )
                .ok();
            }
            Ok(0)
        }
        Command::Tables { ids } => {
            let report = reproduce_tables(ids)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "tables": report,
                    }))
                    .unwrap()
                )
                .ok();
            } else {
                for c in &report.cells {
                    writeln!(
                        out,
                        "{} {:<42} expected {:<14} computed {:<20} |diff| {:<10} {}",
                        c.table,
                        c.label,
                        c.expected,
                        c.computed,
                        c.diff,
                        if c.pass { "ok" } else { "MISMATCH" }
                    )
                    .ok();
                }
                let failures = report.failures().count();
                writeln!(
                    out,
                    "{} cells, {} mismatches",
                    report.cells.len(),
                    failures
                )
                .ok();
            }
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Trace {
            topology,
            strategy,
            steps,
        } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            let trace = dynamics::play_trace(&t, &s, *steps)?;
            if json {
                let steps: Vec<_> = trace
                    .steps
                    .iter()
                    .map(|r| {
                        json!({
                            "step": r.step,
                            "opened": r.opened,
                            "caught": format_rational(&r.caught),
                            "escaped": format_rational(&r.escaped),
                            "inbox": r.dist.inbox.iter().map(format_rational).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "trace": steps,
                    }))
                    .unwrap()
                )
                .ok();
            } else {
                for r in &trace.steps {
                    let inbox = r
                        .dist
                        .inbox
                        .iter()
                        .map(format_rational)
                        .collect::<Vec<_>>()
                        .join(" ");
                    writeln!(
                        out,
                        "step {:>3}  open {}  caught {:<10} escaped {:<10} inbox [{}]",
                        r.step,
                        r.opened,
                        format_rational(&r.caught),
                        format_rational(&r.escaped),
                        inbox
                    )
                    .ok();
                }
            }
            Ok(0)
        }
    }
}

fn cmd_eval<W: Write>(topology: &str, strategy: &str, json: bool, out: &mut W) -> Result<i32> {
    let t = Topology::parse(topology)?;
    let s = parse_strategy(strategy, &t)?;
    let r = evaluate_strategy(&t, &s)?;
    let certificate = dynamics::play_trace(&t, &s, 24)
        .ok()
        .and_then(|tr| detect_scaled_repetition(&tr, 12));
    if json {
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema": SCHEMA,
                "topology": topology,
                "strategy": format_strategy(&s),
                "result": r,
                "certificate": certificate,
            }))
            .unwrap()
        )
        .ok();
    } else {
        writeln!(out, "duration = {}", r.duration).ok();
        writeln!(out, "escape rate = {}", r.escape_rate).ok();
        writeln!(out, "caught rate = {}", r.caught_rate).ok();
        if let Some(c) = certificate {
            writeln!(
                out,
                "repetition: t0={} period={} factor={}",
                c.t0,
                c.period,
                format_rational(&c.factor)
            )
            .ok();
        }
    }
    Ok(0)
}

fn fmt_pair<W: Write>(out: &mut W, r: &Rational) {
    writeln!(out, "{} ({})", format_rational(r), to_decimal_string(r, 5)).ok();
}

fn cmd_formula<W: Write>(
    name: Option<&str>,
    args: &[String],
    json: bool,
    out: &mut W,
) -> Result<i32> {
    let usage = "formulas: e_save n | e_random n | e_exit i n | e_exit_avg n | \
                 e_sin n | sine_profile n | random_open n | e_approx n | \
                 fib k | lucas k | e2d i m | e2d_avg m | sweep n | tltr n";
    let name = match name {
        Some(n) => n,
        None => {
            writeln!(out, "{usage}").ok();
            return Ok(0);
        }
    };
    let want = |k: usize| -> Result<Vec<i64>> {
        if args.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{name} takes {k} argument(s); {usage}"
            )));
        }
        args.iter()
            .map(|a| {
                a.parse::<i64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad integer {a:?}")))
            })
            .collect()
    };
    let mut emit_exact = |r: &Rational| {
        if json {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&json!({
                    "schema": SCHEMA,
                    "formula": name,
                    "exact": format_rational(r),
                    "decimal": r.to_f64(),
                }))
                .unwrap()
            )
            .ok();
        } else {
            fmt_pair(out, r);
        }
    };
    match name {
        "e_save" => {
            let a = want(1)?;
            emit_exact(&formulas::e_save(a[0] as usize)?);
        }
        "e_random" => {
            let a = want(1)?;
            emit_exact(&formulas::e_random_closed(a[0] as usize));
        }
        "e_exit" => {
            let a = want(2)?;
            let v = formulas::e_exit(a[0] as usize, a[1] as usize)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(
                        &json!({"schema": SCHEMA, "formula": name, "exact": v})
                    )
                    .unwrap()
                )
                .ok();
            } else {
                writeln!(out, "{v}").ok();
            }
        }
        "e_exit_avg" => {
            let a = want(1)?;
            emit_exact(&formulas::e_exit_avg(a[0] as usize));
        }
        "e_sin" => {
            let a = want(1)?;
            let v = formulas::e_sin(a[0] as usize);
            writeln!(out, "{v:.5}").ok();
        }
        "sine_profile" => {
            let a = want(1)?;
            let p = formulas::sine_profile(a[0] as usize);
            let text = p
                .iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{text}").ok();
        }
        "random_open" => {
            let a = want(1)?;
            let (esc, dur) = formulas::random_open_solve(a[0] as usize)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&json!({
                        "schema": SCHEMA,
                        "formula": name,
                        "escape": format_rational(&esc),
                        "duration": format_rational(&dur),
                    }))
                    .unwrap()
                )
                .ok();
            } else {
                write!(out, "escape    = ").ok();
                fmt_pair(out, &esc);
                write!(out, "duration  = ").ok();
                fmt_pair(out, &dur);
            }
        }
        "e_approx" => {
            let a = want(1)?;
            writeln!(out, "{:.5}", formulas::e_approx(a[0] as usize)).ok();
        }
        "fib" => {
            let a = want(1)?;
            writeln!(
                out,
                "{}",
                formulas::fib_lucas_ext(formulas::SequenceKind::Fibonacci, a[0])
            )
            .ok();
        }
        "lucas" => {
            let a = want(1)?;
            writeln!(
                out,
                "{}",
                formulas::fib_lucas_ext(formulas::SequenceKind::Lucas, a[0])
            )
            .ok();
        }
        "e2d" => {
            let a = want(2)?;
            emit_exact(&formulas::e2d(a[0] as usize, a[1] as usize)?);
        }
        "e2d_avg" => {
            let a = want(1)?;
            emit_exact(&formulas::e2d_avg(a[0] as usize)?);
        }
        "sweep" => {
            let a = want(1)?;
            let s = sweep_strategy(a[0] as usize)?;
            writeln!(out, "{}", format_strategy(&s)).ok();
        }
        "tltr" => {
            let a = want(1)?;
            let s = twice_left_twice_right(a[0] as usize)?;
            writeln!(out, "{}", format_strategy(&s)).ok();
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown formula {other:?}; {usage}"
            )));
        }
    }
    Ok(0)
}

fn write_histogram_csv(path: &str, histogram: &[(usize, u64)]) -> Result<()> {
    let mut text = String::from("duration,count\n");
    for (d, c) in histogram {
        text.push_str(&format!("{d},{c}\n"));
    }
    std::fs::write(path, text)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {path}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("catwalk".to_string())
            .chain(args.iter().map(|s| s.to_string()))
            .collect();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(&argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn eval_prints_duration() {
        let (code, out, _) = run_args(&["eval", "line:4", "2332"]);
        assert_eq!(code, 0);
        assert!(out.contains("duration = 39/16 (2.43750)"), "{out}");
    }

    #[test]
    fn formula_e2d_avg() {
        let (code, out, _) = run_args(&["formula", "e2d_avg", "7"]);
        assert_eq!(code, 0);
        assert!(out.contains("1084/329 (3.29483)"), "{out}");
    }

    #[test]
    fn usage_errors_exit_2() {
        let (code, _, err) = run_args(&["eval", "line:4"]);
        assert_eq!(code, 2);
        assert!(!err.is_empty());
        let (code, _, err) = run_args(&["eval", "blob:4", "11"]);
        assert_eq!(code, 2);
        assert!(err.contains("topology"));
        let (code, _, _) = run_args(&["formula", "nope", "1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn eval_json_has_schema() {
        let (code, out, _) = run_args(&["--json", "eval", "grid:2x2:exits", "(1)"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema"], "catwalk/1");
        assert_eq!(v["result"]["escape_rate"]["Exact"], "4/7");
    }

    #[test]
    fn trace_lists_steps() {
        let (code, out, _) = run_args(&["trace", "line:3", "22", "--steps", "2"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 2);
        assert!(out.contains("open 2"));
    }

    #[test]
    fn tables_subset_runs() {
        let (code, out, _) = run_args(&["tables", "T10"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("11 cells, 0 mismatches"), "{out}");
        let (code, _, err) = run_args(&["tables", "T99"]);
        assert_eq!(code, 2);
        assert!(err.contains("unknown table"));
    }
}
