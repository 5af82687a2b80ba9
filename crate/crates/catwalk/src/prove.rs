//! Deviation-testing certificates of local optimality.
//!
//! For each step of a candidate strategy up to a horizon, every alternative
//! opening is followed by a bounded search whose threshold is the
//! candidate's exact value. An alternative is refuted when every line below
//! it is cut by a sound bound exceeding that value - which settles it for
//! good, not just within the lookahead. Equal-value completions are
//! recorded as ties (equivalent optima); surviving undecided lines make the
//! record inconclusive rather than being papered over.

use num::{ToPrimitive, Zero};
use serde::Serialize;

use crate::dynamics::{play_trace, StepTrace};
use crate::evaluate::{detect_scaled_repetition, evaluate_strategy};
use crate::numerics::{rat_int, Rational};
use crate::search::{search_optimal, Objective, SearchConfig, SearchRoot};
use crate::strategy::Strategy;
use crate::topology::{symmetries, BoxId, Permutation, Topology};
use crate::{Error, Result};

/// How one (step, alternative box) deviation was settled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeviationOutcome {
    /// Every completion's bound exceeded the candidate value, latest after
    /// the given absolute step.
    Refuted { by_step: usize },
    /// The deviation reaches an equal-value strategy.
    Tie { equivalent: Strategy },
    /// Undecided lines survived the lookahead.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationRecord {
    pub step: usize,
    pub alternative: BoxId,
    pub outcome: DeviationOutcome,
}

/// Scaled repetition backing the extension of a finite certificate.
#[derive(Debug, Clone, Serialize)]
pub enum RepetitionNote {
    /// The normalized distribution repeats exactly.
    Exact {
        t0: usize,
        period: usize,
        #[serde(serialize_with = "crate::dynamics::ser_rational")]
        factor: Rational,
    },
    /// The normalized distribution approaches a cycle numerically.
    Approximate {
        t0: usize,
        period: usize,
        max_delta: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalityCertificate {
    pub candidate: Strategy,
    pub objective: Objective,
    #[serde(serialize_with = "crate::dynamics::ser_rational")]
    pub value: Rational,
    pub horizon: usize,
    pub lookahead: usize,
    pub records: Vec<DeviationRecord>,
    /// Alternatives identified with the candidate's own move by a symmetry
    /// fixing the game so far; they are mirror strategies, not deviations.
    pub skipped_symmetric: Vec<(usize, BoxId)>,
    pub repetition: Option<RepetitionNote>,
    /// True when no record is inconclusive.
    pub complete: bool,
}

impl OptimalityCertificate {
    /// Largest refutation step over all refuted deviations.
    pub fn max_refutation_step(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| match r.outcome {
                DeviationOutcome::Refuted { by_step } => Some(by_step),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

/// Either a certificate, or a strictly better completion found at some
/// deviation.
#[derive(Debug, Clone, Serialize)]
pub enum ProveOutcome {
    Certificate(OptimalityCertificate),
    Counterexample {
        step: usize,
        alternative: BoxId,
        strategy: Strategy,
        #[serde(serialize_with = "crate::dynamics::ser_rational")]
        value: Rational,
    },
}

/// Default deviation lookahead.
pub const DEFAULT_LOOKAHEAD: usize = 20;

/// Tests every deviation of `candidate` up to `horizon` steps against the
/// candidate's exact value, searching `lookahead` steps past each deviation.
pub fn verify_local_optimality(
    t: &Topology,
    candidate: &Strategy,
    horizon: usize,
    lookahead: usize,
) -> Result<ProveOutcome> {
    if horizon < 1 || lookahead < 1 {
        return Err(Error::InvalidArgument(
            "horizon and lookahead must be at least 1".into(),
        ));
    }
    let objective = if t.exits {
        Objective::MinEscape
    } else {
        Objective::MinDuration
    };
    let eval = evaluate_strategy(t, candidate)?;
    let value = match objective {
        Objective::MinEscape => eval.escape_rate.exact().cloned(),
        Objective::MinDuration => eval.duration.exact().cloned(),
    }
    .ok_or_else(|| {
        Error::InvalidArgument("candidate must evaluate to an exact value".into())
    })?;

    let trace = play_trace(t, candidate, horizon)?;
    if trace.steps.len() < horizon {
        return Err(Error::InvalidArgument(format!(
            "candidate resolves after {} steps, shorten the horizon",
            trace.steps.len()
        )));
    }
    let perms = symmetries(t);

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut duration_acc = Rational::zero();
    for tau in 1..=horizon {
        let cand_box = candidate.box_at(tau)?;
        let opened_so_far: Vec<BoxId> = (1..tau)
            .map(|s| candidate.box_at(s))
            .collect::<Result<_>>()?;
        let stabilizer: Vec<&Permutation> = perms
            .iter()
            .filter(|sigma| opened_so_far.iter().all(|&b| sigma[b - 1] == b))
            .collect();
        let pre_state = trace.state_after(tau - 1).clone();

        let mut tested: Vec<BoxId> = Vec::new();
        for alt in 1..=t.boxes() {
            if alt == cand_box {
                continue;
            }
            // a symmetry fixing the play so far maps this alternative onto
            // the candidate's move or onto an already tested alternative
            if stabilizer.iter().any(|s| s[alt - 1] == cand_box) {
                skipped.push((tau, alt));
                continue;
            }
            if stabilizer
                .iter()
                .any(|s| tested.contains(&s[alt - 1]))
            {
                skipped.push((tau, alt));
                continue;
            }
            tested.push(alt);

            let mut cfg = SearchConfig::new(objective, tau - 1 + lookahead);
            cfg.incumbent = Some(value.clone());
            cfg.fixed_threshold = true;
            cfg.collect_ties = true;
            cfg.symmetry_reduction = false;
            cfg.root = Some(SearchRoot {
                state: pre_state.clone(),
                step: tau,
                duration_acc: duration_acc.clone(),
                pre_openings: opened_so_far.clone(),
                forced_first: Some(alt),
                avoid_first: None,
                replayable: true,
            });
            let out = search_optimal(t, cfg)?;

            if out.improved_on_threshold {
                let best = out
                    .optima
                    .iter()
                    .find(|f| f.value < value)
                    .or(out.best.as_ref());
                if let Some(best) = best {
                    return Ok(ProveOutcome::Counterexample {
                        step: tau,
                        alternative: alt,
                        strategy: best.strategy.clone(),
                        value: best.value.clone(),
                    });
                }
            }
            let tie = out.optima.iter().find(|f| f.value == value).cloned();
            let outcome = if let Some(tie) = tie {
                DeviationOutcome::Tie {
                    equivalent: tie.strategy,
                }
            } else if out.frontier == 0 {
                DeviationOutcome::Refuted {
                    by_step: out.max_prune_step,
                }
            } else {
                DeviationOutcome::Inconclusive
            };
            records.push(DeviationRecord {
                step: tau,
                alternative: alt,
                outcome,
            });
        }
        let rec = &trace.steps[tau - 1];
        duration_acc += (&rec.caught + &rec.escaped) * rat_int(tau as i64);
    }

    let repetition = repetition_note(t, candidate, horizon);
    let complete = records
        .iter()
        .all(|r| r.outcome != DeviationOutcome::Inconclusive);
    Ok(ProveOutcome::Certificate(OptimalityCertificate {
        candidate: candidate.clone(),
        objective,
        value,
        horizon,
        lookahead,
        records,
        skipped_symmetric: skipped,
        repetition,
        complete,
    }))
}

/// Exact repetition if present, else the tightest numeric recurrence of the
/// normalized distribution with a period matching the strategy cycle.
fn repetition_note(t: &Topology, s: &Strategy, horizon: usize) -> Option<RepetitionNote> {
    let span = horizon + 4 * s.cycle.len().max(1) + 8;
    let trace = play_trace(t, s, span).ok()?;
    if let Some(cert) = detect_scaled_repetition(&trace, 12) {
        return Some(RepetitionNote::Exact {
            t0: cert.t0,
            period: cert.period,
            factor: cert.factor,
        });
    }
    approximate_repetition(&trace, 12)
}

fn approximate_repetition(trace: &StepTrace, max_period: usize) -> Option<RepetitionNote> {
    use num::Zero;
    let len = trace.steps.len();
    let normalized = |k: usize| -> Option<Vec<f64>> {
        let d = trace.state_after(k);
        let m = d.inbox_mass();
        if m.is_zero() {
            return None;
        }
        let mf = m.to_f64()?;
        Some(d.inbox.iter().map(|x| x.to_f64().unwrap() / mf).collect())
    };
    let mut best: Option<(usize, usize, f64)> = None;
    for t0 in 0..len {
        let a = match normalized(t0) {
            Some(a) => a,
            None => continue,
        };
        for period in 1..=max_period.min(len - t0) {
            if let Some(l) = trace.cycle_len {
                if period % l != 0 {
                    continue;
                }
            }
            let b = match normalized(t0 + period) {
                Some(b) => b,
                None => continue,
            };
            let delta = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
            if delta < 1e-6 {
                let better = match best {
                    Some((_, _, d)) => delta < d,
                    None => true,
                };
                if better {
                    best = Some((t0, period, delta));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(t0, period, max_delta)| RepetitionNote::Approximate {
        t0,
        period,
        max_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rat;
    use crate::strategy::parse_strategy;

    fn topo(s: &str) -> Topology {
        Topology::parse(s).unwrap()
    }

    #[test]
    fn line4_exits_certificate_refutes_by_step_16() {
        let t = topo("line:4:exits");
        let s = parse_strategy("(14414114)", &t).unwrap();
        match verify_local_optimality(&t, &s, 11, DEFAULT_LOOKAHEAD).unwrap() {
            ProveOutcome::Certificate(cert) => {
                assert!(cert.complete, "certificate incomplete: {:?}", cert.records);
                assert!(
                    cert.records
                        .iter()
                        .all(|r| matches!(r.outcome, DeviationOutcome::Refuted { .. })),
                    "unexpected ties: {:?}",
                    cert.records
                );
                assert!(
                    cert.max_refutation_step() <= 16,
                    "latest refutation at {}",
                    cert.max_refutation_step()
                );
                assert!(matches!(
                    cert.repetition,
                    Some(RepetitionNote::Exact { period: 8, .. })
                ));
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn line5_min_duration_certificate() {
        let t = topo("line:5");
        let s = parse_strategy("(2442)", &t).unwrap();
        match verify_local_optimality(&t, &s, 5, DEFAULT_LOOKAHEAD).unwrap() {
            ProveOutcome::Certificate(cert) => {
                assert!(cert.complete);
                assert_eq!(cert.value, rat(44, 15));
                match cert.repetition {
                    Some(RepetitionNote::Exact { t0, period, .. }) => {
                        assert_eq!((t0, period), (2, 4));
                    }
                    other => panic!("expected exact repetition, got {other:?}"),
                }
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_candidate_is_worse() {
        // changing one digit of the fastest-catch opening sequence makes
        // the game longer
        let t = topo("line:8");
        let s = parse_strategy("preset:s8_fast", &t).unwrap();
        let base = evaluate_strategy(&t, &s).unwrap().duration.to_f64();
        for (pos, replacement) in [(3usize, 1usize), (40, 8), (70, 3)] {
            let mut corrupted = s.clone();
            assert_ne!(corrupted.prefix[pos], replacement);
            corrupted.prefix[pos] = replacement;
            let worse = evaluate_strategy(&t, &corrupted).unwrap().duration.to_f64();
            assert!(
                worse > base + 1e-4,
                "corruption at {pos} gives {worse} vs {base}"
            );
        }
    }
}
