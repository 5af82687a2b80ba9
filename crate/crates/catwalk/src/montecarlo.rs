//! Seedable stochastic playouts cross-checking the exact results.
//!
//! Trials are grouped into fixed-size batches; batch `i` draws from a
//! ChaCha8 stream selected by `i`, so the merged report depends only on the
//! seed and trial count, never on the number of worker threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::evaluate::evaluate_strategy;
use crate::strategy::Strategy;
use crate::topology::{move_kernel, Dest, Topology};
use crate::{Error, Result};

/// Trials per RNG stream.
const BATCH_SIZE: u64 = 1 << 16;

/// Default per-trial step cap.
pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub trials: u64,
    pub caught: u64,
    pub escaped: u64,
    /// Trials cut off at the step cap or by a finite strategy running out.
    pub truncated: u64,
    /// Mean duration over terminated trials.
    pub mean_duration: f64,
    /// Unbiased variance of the duration over terminated trials.
    pub duration_variance: f64,
    /// (duration, count), sorted by duration.
    pub histogram: Vec<(usize, u64)>,
    pub seed: u64,
    pub max_steps: usize,
    /// PRNG identity, recorded for reproducibility.
    pub generator: &'static str,
}

impl SimReport {
    pub fn escape_frequency(&self) -> f64 {
        self.escaped as f64 / self.trials as f64
    }

    /// Standard error of the mean duration.
    pub fn duration_se(&self) -> f64 {
        let n = (self.caught + self.escaped) as f64;
        (self.duration_variance / n).sqrt()
    }
}

#[derive(Default)]
struct Tally {
    caught: u64,
    escaped: u64,
    truncated: u64,
    dur_sum: u128,
    dur_sq_sum: u128,
    histogram: BTreeMap<usize, u64>,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.caught += other.caught;
        self.escaped += other.escaped;
        self.truncated += other.truncated;
        self.dur_sum += other.dur_sum;
        self.dur_sq_sum += other.dur_sq_sum;
        for (d, c) in other.histogram {
            *self.histogram.entry(d).or_insert(0) += c;
        }
    }
}

/// Per-box sampling table: cumulative probability thresholds.
struct SampledKernel {
    /// `rows[i]` holds (cumulative, destination) with destination 0 = escape.
    rows: Vec<Vec<(f64, usize)>>,
}

impl SampledKernel {
    fn new(t: &Topology) -> Self {
        use num::ToPrimitive;
        let rows = move_kernel(t)
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|(dest, p)| {
                        acc += p.to_f64().unwrap();
                        let code = match dest {
                            Dest::Box(b) => *b,
                            Dest::Escape => 0,
                        };
                        (acc, code)
                    })
                    .collect()
            })
            .collect();
        SampledKernel { rows }
    }

    fn sample(&self, from: usize, rng: &mut ChaCha8Rng) -> usize {
        let row = &self.rows[from - 1];
        let r: f64 = rng.gen();
        for (cum, dest) in row {
            if r < *cum {
                return *dest;
            }
        }
        row.last().unwrap().1
    }
}

fn run_batch(
    t: &Topology,
    kernel: &SampledKernel,
    s: &Strategy,
    trials: u64,
    seed: u64,
    stream: u64,
    max_steps: usize,
) -> Tally {
    let n = t.boxes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut tally = Tally::default();
    'trial: for _ in 0..trials {
        let mut cat = rng.gen_range(1..=n);
        for step in 1..=max_steps {
            let opened = match s.box_at(step) {
                Ok(b) => b,
                Err(_) => {
                    tally.truncated += 1;
                    continue 'trial;
                }
            };
            if opened == cat {
                tally.caught += 1;
                tally.dur_sum += step as u128;
                tally.dur_sq_sum += (step as u128) * (step as u128);
                *tally.histogram.entry(step).or_insert(0) += 1;
                continue 'trial;
            }
            cat = kernel.sample(cat, &mut rng);
            if cat == 0 {
                tally.escaped += 1;
                tally.dur_sum += step as u128;
                tally.dur_sq_sum += (step as u128) * (step as u128);
                *tally.histogram.entry(step).or_insert(0) += 1;
                continue 'trial;
            }
        }
        tally.truncated += 1;
    }
    tally
}

/// Plays `trials` independent games and tallies outcomes. Deterministic in
/// `(seed, trials, max_steps)`; `threads` only distributes the work.
pub fn simulate(
    t: &Topology,
    s: &Strategy,
    trials: u64,
    seed: u64,
    max_steps: usize,
    threads: usize,
) -> Result<SimReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let kernel = SampledKernel::new(t);
    let batches: Vec<(u64, u64)> = (0..trials.div_ceil(BATCH_SIZE))
        .map(|i| (i, BATCH_SIZE.min(trials - i * BATCH_SIZE)))
        .collect();

    let tally = if threads <= 1 {
        let mut total = Tally::default();
        for &(stream, count) in &batches {
            total.merge(run_batch(t, &kernel, s, count, seed, stream, max_steps));
        }
        total
    } else {
        let chunks: Vec<Vec<(u64, u64)>> = (0..threads)
            .map(|w| {
                batches
                    .iter()
                    .copied()
                    .filter(|(i, _)| (*i as usize) % threads == w)
                    .collect()
            })
            .collect();
        let per_worker: Vec<Vec<(u64, Tally)>> = std::thread::scope(|scope| {
            let kernel = &kernel;
            let mut handles = Vec::new();
            for chunk in chunks {
                handles.push(scope.spawn(move || {
                    chunk
                        .into_iter()
                        .map(|(stream, count)| {
                            (
                                stream,
                                run_batch(t, kernel, s, count, seed, stream, max_steps),
                            )
                        })
                        .collect()
                }));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        // merge in stream order so the report is thread-count independent
        let mut all: Vec<(u64, Tally)> = per_worker.into_iter().flatten().collect();
        all.sort_by_key(|(stream, _)| *stream);
        let mut total = Tally::default();
        for (_, t) in all {
            total.merge(t);
        }
        total
    };

    let terminated = tally.caught + tally.escaped;
    let mean = if terminated > 0 {
        tally.dur_sum as f64 / terminated as f64
    } else {
        f64::NAN
    };
    let variance = if terminated > 1 {
        let n = terminated as f64;
        (tally.dur_sq_sum as f64 - n * mean * mean) / (n - 1.0)
    } else {
        f64::NAN
    };
    Ok(SimReport {
        trials,
        caught: tally.caught,
        escaped: tally.escaped,
        truncated: tally.truncated,
        mean_duration: mean,
        duration_variance: variance,
        histogram: tally.histogram.into_iter().collect(),
        seed,
        max_steps,
        generator: "chacha8-per-batch-stream",
    })
}

/// Outcome of comparing a simulation against the exact evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub report: SimReport,
    pub exact_duration: f64,
    pub exact_escape_rate: f64,
    pub duration_diff: f64,
    pub duration_se: f64,
    pub escape_diff: f64,
    pub escape_se: f64,
    pub pass: bool,
}

/// Simulates and requires agreement with the exact evaluation within three
/// standard errors on both the mean duration and the escape frequency.
pub fn crosscheck(t: &Topology, s: &Strategy, trials: u64, seed: u64) -> Result<CrosscheckReport> {
    let exact = evaluate_strategy(t, s)?;
    let report = simulate(t, s, trials, seed, DEFAULT_MAX_STEPS, 1)?;
    let exact_duration = exact.duration.to_f64();
    let exact_escape = exact.escape_rate.to_f64();
    let duration_se = report.duration_se();
    let escape_se = (exact_escape * (1.0 - exact_escape) / trials as f64)
        .sqrt()
        .max(f64::EPSILON);
    let duration_diff = (report.mean_duration - exact_duration).abs();
    let escape_diff = (report.escape_frequency() - exact_escape).abs();
    let pass = duration_diff < 3.0 * duration_se
        && (escape_diff < 3.0 * escape_se || exact_escape == 0.0 && report.escaped == 0);
    Ok(CrosscheckReport {
        report,
        exact_duration,
        exact_escape_rate: exact_escape,
        duration_diff,
        duration_se,
        escape_diff,
        escape_se,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::parse_strategy;

    fn topo(s: &str) -> Topology {
        Topology::parse(s).unwrap()
    }

    #[test]
    fn two_box_game_always_ends_by_step_two() {
        let t = topo("line:2");
        let s = parse_strategy("11", &t).unwrap();
        let r = simulate(&t, &s, 40_000, 9, 10, 1).unwrap();
        assert_eq!(r.truncated, 0);
        assert_eq!(r.caught, r.trials);
        assert!(r.histogram.iter().all(|(d, _)| *d <= 2));
        assert!((r.mean_duration - 1.5).abs() < 3.0 * r.duration_se());
    }

    #[test]
    fn same_seed_gives_identical_reports() {
        let t = topo("ring:3");
        let s = parse_strategy("(1)", &t).unwrap();
        let a = simulate(&t, &s, 100_000, 7, 1000, 1).unwrap();
        let b = simulate(&t, &s, 100_000, 7, 1000, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let t = topo("line:4:exits");
        let s = parse_strategy("(14414114)", &t).unwrap();
        let a = simulate(&t, &s, 200_000, 42, 1000, 1).unwrap();
        let b = simulate(&t, &s, 200_000, 42, 1000, 4).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn crosscheck_small_cases() {
        let t = topo("ring:3");
        let s = parse_strategy("(1)", &t).unwrap();
        let r = crosscheck(&t, &s, 200_000, 7).unwrap();
        assert!(r.pass, "{r:?}");

        let t = topo("line:7:exits");
        let s = parse_strategy("1661(2266)", &t).unwrap();
        let r = crosscheck(&t, &s, 200_000, 42).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn truncation_counts_exhausted_strategies() {
        let t = topo("line:5");
        let s = parse_strategy("22", &t).unwrap();
        let r = simulate(&t, &s, 10_000, 3, 100, 1).unwrap();
        assert!(r.truncated > 0);
        assert_eq!(r.caught + r.escaped + r.truncated, r.trials);
    }
}
