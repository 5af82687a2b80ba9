//! One-command reproduction of the published result tables.
//!
//! Expected values live in `data/tables.json`, one record per cell with its
//! table id, the computation that produces it, and either an exact rational
//! or a decimal with a tolerance. `reproduce_tables` recomputes every cell
//! and diffs.

use num::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::evaluate::{asymptotic_profile, evaluate_strategy, Value};
use crate::formulas::{e2d_avg, random_open_solve};
use crate::numerics::{char_poly, parse_rational, real_roots_in, Rational};
use crate::strategy::{parse_strategy, twice_left_twice_right};
use crate::topology::{move_kernel, Dest, Topology};
use crate::{Error, Result};

const TABLE_DATA: &str = include_str!("../data/tables.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Duration,
    Escape,
    Vector,
    Decay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellOp {
    /// Exact evaluation of a strategy on a topology.
    Eval {
        topology: String,
        strategy: String,
        metric: Metric,
    },
    /// Random-opening escape rate / duration on an exit line.
    RandomOpen { n: usize, metric: Metric },
    /// Twice left - twice right family on an exit line.
    Tltr { n: usize, metric: Metric },
    /// Mean dwell time on the 2xm all-exits grid.
    E2dAvg { m: usize },
    /// Asymptotic profile (vector or per-cycle decay) of a cyclic strategy.
    Profile {
        topology: String,
        strategy: String,
        metric: Metric,
    },
    /// Profile pushed one game step forward and renormalized.
    ProfileNext { topology: String, strategy: String },
    /// Nonzero eigenvalues of a cycle map, ascending.
    CycleEigenvalues { topology: String, cycle: String },
    /// Structural check of the published 4-step propagation coefficients.
    T7Propagation,
}

/// One expected table cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableCell {
    pub table: String,
    pub label: String,
    pub op: CellOp,
    /// "p/q" for exact cells, decimal text (comma-separated for vectors)
    /// otherwise.
    pub expected: String,
    /// Absent means exact rational equality.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// Computed-vs-expected outcome for one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub table: String,
    pub label: String,
    pub expected: String,
    pub computed: String,
    pub diff: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TablesReport {
    pub cells: Vec<CellResult>,
    pub pass: bool,
}

impl TablesReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

/// All cells from the embedded data file.
pub fn load_cells() -> Vec<TableCell> {
    serde_json::from_str(TABLE_DATA).expect("embedded table data must parse")
}

/// Table ids present in the data file, in order.
pub fn table_ids() -> Vec<String> {
    let mut ids = Vec::new();
    for cell in load_cells() {
        if !ids.contains(&cell.table) {
            ids.push(cell.table.clone());
        }
    }
    ids
}

enum Computed {
    Exact(Rational),
    Decimal(f64),
    VectorF(Vec<f64>),
    Ok,
}

fn compute(op: &CellOp) -> Result<Computed> {
    match op {
        CellOp::Eval {
            topology,
            strategy,
            metric,
        } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            let r = evaluate_strategy(&t, &s)?;
            let v = match metric {
                Metric::Duration => &r.duration,
                Metric::Escape => &r.escape_rate,
                _ => {
                    return Err(Error::InvalidArgument(
                        "eval cells use duration or escape".into(),
                    ))
                }
            };
            Ok(match v {
                Value::Exact(r) => Computed::Exact(r.clone()),
                Value::Certified { value, .. } => Computed::Decimal(*value),
            })
        }
        CellOp::RandomOpen { n, metric } => {
            let (escape, duration) = random_open_solve(*n)?;
            Ok(Computed::Exact(match metric {
                Metric::Escape => escape,
                Metric::Duration => duration,
                _ => {
                    return Err(Error::InvalidArgument(
                        "random_open cells use duration or escape".into(),
                    ))
                }
            }))
        }
        CellOp::Tltr { n, metric } => {
            let t = Topology::parse(&format!("line:{n}:exits"))?;
            let s = twice_left_twice_right(*n)?;
            let r = evaluate_strategy(&t, &s)?;
            let v = match metric {
                Metric::Duration => &r.duration,
                Metric::Escape => &r.escape_rate,
                _ => {
                    return Err(Error::InvalidArgument(
                        "tltr cells use duration or escape".into(),
                    ))
                }
            };
            Ok(match v {
                Value::Exact(r) => Computed::Exact(r.clone()),
                Value::Certified { value, .. } => Computed::Decimal(*value),
            })
        }
        CellOp::E2dAvg { m } => Ok(Computed::Exact(e2d_avg(*m)?)),
        CellOp::Profile {
            topology,
            strategy,
            metric,
        } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            let (v, decay) = asymptotic_profile(&t, &s)?;
            match metric {
                Metric::Vector => Ok(Computed::VectorF(v)),
                Metric::Decay => Ok(Computed::Decimal(decay)),
                _ => Err(Error::InvalidArgument(
                    "profile cells use vector or decay".into(),
                )),
            }
        }
        CellOp::ProfileNext { topology, strategy } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(strategy, &t)?;
            let (mut v, _) = asymptotic_profile(&t, &s)?;
            let first = *s
                .cycle
                .first()
                .ok_or_else(|| Error::InvalidArgument("cyclic strategy required".into()))?;
            v[first - 1] = 0.0;
            let kernel = move_kernel(&t);
            let mut next = vec![0.0; v.len()];
            for (i, mass) in v.iter().enumerate() {
                for (dest, p) in &kernel[i] {
                    if let Dest::Box(b) = dest {
                        next[b - 1] += mass * p.to_f64().unwrap();
                    }
                }
            }
            let total: f64 = next.iter().sum();
            for x in &mut next {
                *x /= total;
            }
            Ok(Computed::VectorF(next))
        }
        CellOp::CycleEigenvalues { topology, cycle } => {
            let t = Topology::parse(topology)?;
            let s = parse_strategy(&format!("({cycle})"), &t)?;
            let cm = crate::dynamics::cycle_map(&t, &s.cycle);
            let p = char_poly(&cm.matrix);
            let mut roots: Vec<f64> = real_roots_in(&p, 1e-4, 1.0, 1e-12);
            roots.retain(|r| *r > 1e-4);
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(Computed::VectorF(roots))
        }
        CellOp::T7Propagation => t7_propagation().map(|_| Computed::Ok),
    }
}

/// The published 4-step propagation table for the cycle 2,6,6,2 on the
/// 7-box exit line: each box content at step 4i+5 as a linear form of the
/// contents at step 4i+1. Verified exactly against the cycle map.
fn t7_propagation() -> Result<()> {
    use crate::numerics::rat;
    let t = Topology::parse("line:7:exits")?;
    let cm = crate::dynamics::cycle_map(&t, &[2, 6, 6, 2]);
    // coefficients[target box][source box] * 1/16; sources are boxes 2..=7
    let rows: [(usize, [i64; 6]); 7] = [
        (1, [0, 0, 0, 0, 0, 0]),
        (2, [0, 0, 4, 0, 1, 0]),
        (3, [0, 3, 0, 2, 0, 0]),
        (4, [0, 0, 5, 0, 2, 0]),
        (5, [0, 4, 0, 3, 0, 0]),
        (6, [0, 0, 2, 0, 1, 0]),
        (7, [0, 1, 0, 1, 0, 0]),
    ];
    for (target, coeffs) in rows {
        for (k, c) in coeffs.iter().enumerate() {
            let source = k + 2;
            let got = &cm.matrix[(target - 1, source - 1)];
            let want = rat(*c, 16);
            if *got != want {
                return Err(Error::InvalidArgument(format!(
                    "propagation mismatch into box {target} from box {source}: {got} vs {want}"
                )));
            }
        }
    }
    Ok(())
}

fn check_cell(cell: &TableCell) -> CellResult {
    let computed = compute(&cell.op);
    let (computed_str, diff, pass) = match computed {
        Err(e) => (format!("error: {e}"), "-".to_string(), false),
        Ok(Computed::Ok) => {
            let pass = cell.expected == "ok";
            ("ok".to_string(), "-".to_string(), pass)
        }
        Ok(Computed::Exact(r)) => match cell.tol {
            None => match parse_rational(&cell.expected) {
                Ok(want) => {
                    let pass = r == want;
                    let diff = if pass {
                        "0".to_string()
                    } else {
                        crate::numerics::format_rational(&(&r - &want))
                    };
                    (crate::numerics::format_rational(&r), diff, pass)
                }
                Err(_) => (crate::numerics::format_rational(&r), "-".into(), false),
            },
            Some(tol) => {
                let got = r.to_f64().unwrap();
                decimal_check(got, &cell.expected, tol)
            }
        },
        Ok(Computed::Decimal(got)) => match cell.tol {
            Some(tol) => decimal_check(got, &cell.expected, tol),
            None => (format!("{got}"), "-".into(), false),
        },
        Ok(Computed::VectorF(v)) => {
            let tol = cell.tol.unwrap_or(0.0);
            let want: Vec<f64> = cell
                .expected
                .split(',')
                .filter_map(|x| x.trim().parse().ok())
                .collect();
            let computed_str = v
                .iter()
                .map(|x| format!("{x:.5}"))
                .collect::<Vec<_>>()
                .join(",");
            if want.len() != v.len() {
                (computed_str, "length mismatch".into(), false)
            } else {
                let max_diff = v
                    .iter()
                    .zip(&want)
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                (computed_str, format!("{max_diff:.2e}"), max_diff <= tol)
            }
        }
    };
    CellResult {
        table: cell.table.clone(),
        label: cell.label.clone(),
        expected: cell.expected.clone(),
        computed: computed_str,
        diff,
        pass,
    }
}

fn decimal_check(got: f64, expected: &str, tol: f64) -> (String, String, bool) {
    match expected.trim().parse::<f64>() {
        Ok(want) => {
            let diff = (got - want).abs();
            (format!("{got:.5}"), format!("{diff:.2e}"), diff <= tol)
        }
        Err(_) => (format!("{got:.5}"), "-".into(), false),
    }
}

/// Recomputes and diffs every cell of the requested tables (all tables when
/// `ids` is empty).
pub fn reproduce_tables(ids: &[String]) -> Result<TablesReport> {
    let cells = load_cells();
    let known = table_ids();
    for id in ids {
        if !known.contains(id) {
            return Err(Error::InvalidArgument(format!(
                "unknown table {id:?}; known: {}",
                known.join(", ")
            )));
        }
    }
    let selected: Vec<&TableCell> = cells
        .iter()
        .filter(|c| ids.is_empty() || ids.contains(&c.table))
        .collect();
    let results: Vec<CellResult> = selected.iter().map(|c| check_cell(c)).collect();
    let pass = results.iter().all(|c| c.pass);
    Ok(TablesReport {
        cells: results,
        pass,
    })
}
