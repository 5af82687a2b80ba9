//! Branch-and-prune search over opening sequences: minimum expected duration
//! on closed graphs, minimum escape rate on graphs with exits.
//!
//! The search walks the tree of opening choices depth first, carrying the
//! exact residence distribution. Nodes are cut when a sound lower bound
//! exceeds the incumbent. Upper bounds come from two kinds of completed
//! candidates: lines that resolve all mass within the horizon, and cyclic
//! promotions - whenever the tail of the current line repeats an opening
//! window, the window is adopted as a cycle and the resulting strategy is
//! evaluated exactly.

use std::collections::HashSet;
use std::sync::Mutex;

use num::Zero;
use serde::Serialize;

use crate::dynamics::{apply_move, apply_open, play_trace, uniform_init, Distribution};
use crate::evaluate::{
    detect_scaled_repetition, evaluate_strategy, EvalResult, RepetitionCertificate, Termination,
    Value,
};
use crate::numerics::{rat_int, Rational};
use crate::strategy::{format_strategy, sweep_strategy, twice_left_twice_right, Strategy};
use crate::topology::{move_kernel, BoxId, Dest, MoveKernel, Topology, TopologyKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objective {
    MinDuration,
    MinEscape,
}

/// Root override: start the search mid-game instead of at the uniform
/// initial distribution. Used by the prover to test deviations and by the
/// asymptotic analyses to play from a synthetic profile.
#[derive(Debug, Clone)]
pub struct SearchRoot {
    /// State the player sees before opening at `step`.
    pub state: Distribution,
    /// 1-based absolute index of the next opening.
    pub step: usize,
    /// Step-weighted termination mass accumulated before `step`.
    pub duration_acc: Rational,
    /// Openings played before `step` (prepended to promoted strategies).
    pub pre_openings: Vec<BoxId>,
    /// Force this box at `step` (deviation under test).
    pub forced_first: Option<BoxId>,
    /// Forbid this box at `step`.
    pub avoid_first: Option<BoxId>,
    /// Whether replaying `pre_openings` from the uniform start reproduces
    /// `state`; promotion needs this to evaluate candidates from scratch.
    pub replayable: bool,
}

impl SearchRoot {
    /// Root reached by playing `pre_openings` from the uniform start.
    pub fn replayed(
        state: Distribution,
        step: usize,
        duration_acc: Rational,
        pre_openings: Vec<BoxId>,
    ) -> Self {
        SearchRoot {
            state,
            step,
            duration_acc,
            pre_openings,
            forced_first: None,
            avoid_first: None,
            replayable: true,
        }
    }

    /// Root at an arbitrary synthetic state; cyclic promotion is disabled.
    pub fn synthetic(state: Distribution) -> Self {
        SearchRoot {
            state,
            step: 1,
            duration_acc: Rational::zero(),
            pre_openings: Vec::new(),
            forced_first: None,
            avoid_first: None,
            replayable: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub objective: Objective,
    /// Absolute step horizon.
    pub maxdepth: usize,
    /// Warm-start upper bound; defaults to an evaluated baseline strategy.
    pub incumbent: Option<Rational>,
    pub symmetry_reduction: bool,
    /// Keep the threshold fixed at the given incumbent instead of improving
    /// it (deviation refutation mode).
    pub fixed_threshold: bool,
    /// Collect every candidate within `tie_tolerance` of the best value.
    pub collect_ties: bool,
    pub tie_tolerance: Rational,
    /// Longest opening window promoted to a cycle; 0 disables promotion.
    pub max_promote_period: usize,
    /// Skip openings of currently empty boxes (dominated for both
    /// objectives).
    pub prune_dominated: bool,
    /// Worker threads; 1 reproduces node counts deterministically.
    pub threads: usize,
    pub root: Option<SearchRoot>,
}

impl SearchConfig {
    pub fn new(objective: Objective, maxdepth: usize) -> Self {
        SearchConfig {
            objective,
            maxdepth,
            incumbent: None,
            symmetry_reduction: true,
            fixed_threshold: false,
            collect_ties: false,
            tie_tolerance: Rational::zero(),
            max_promote_period: 12,
            prune_dominated: true,
            threads: 1,
            root: None,
        }
    }
}

/// A completed candidate strategy with its exact value.
#[derive(Debug, Clone, Serialize)]
pub struct FoundStrategy {
    pub strategy: Strategy,
    #[serde(serialize_with = "crate::dynamics::ser_rational")]
    pub value: Rational,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    /// Best candidate (smallest value, ties broken lexicographically).
    pub best: Option<FoundStrategy>,
    /// All candidates within the tie tolerance of the best, sorted.
    pub optima: Vec<FoundStrategy>,
    /// Sound lower bound on every strategy in the searched class: the
    /// minimum of surviving frontier bounds and the best value itself.
    #[serde(serialize_with = "ser_opt_rational")]
    pub lower_bound: Option<Rational>,
    pub nodes: u64,
    pub pruned: u64,
    /// Lines alive at the depth horizon.
    pub frontier: u64,
    /// Deepest completed step at which a line was refuted.
    pub max_prune_step: usize,
    /// A completion strictly better than a fixed threshold was found.
    pub improved_on_threshold: bool,
    /// Repetition certificate of the best candidate, when exact.
    pub certificate: Option<RepetitionCertificate>,
}

fn ser_opt_rational<S: serde::Serializer>(
    r: &Option<Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&crate::numerics::format_rational(r)),
        None => s.serialize_none(),
    }
}

/// Sound lower bound on the objective over all completions of a node.
///
/// Escaped mass only grows, so it bounds the escape rate. For the duration,
/// with the next opening at `step`, every unit of in-box mass terminates at
/// step `step` or later; `duration_so_far` is the node's step-weighted
/// termination ledger.
pub fn lower_bound(
    d: &Distribution,
    step: usize,
    objective: Objective,
    duration_so_far: &Rational,
) -> Rational {
    match objective {
        Objective::MinEscape => d.escaped.clone(),
        Objective::MinDuration => duration_so_far + d.inbox_mass() * rat_int(step as i64),
    }
}

struct Shared {
    /// Best known upper bound, improved monotonically.
    incumbent: Mutex<Option<Rational>>,
}

#[derive(Default)]
struct Stats {
    found: Vec<FoundStrategy>,
    nodes: u64,
    pruned: u64,
    frontier: u64,
    max_prune_step: usize,
    improved_on_threshold: bool,
    min_frontier_lb: Option<Rational>,
}

impl Stats {
    fn merge(&mut self, other: Stats) {
        self.found.extend(other.found);
        self.nodes += other.nodes;
        self.pruned += other.pruned;
        self.frontier += other.frontier;
        self.max_prune_step = self.max_prune_step.max(other.max_prune_step);
        self.improved_on_threshold |= other.improved_on_threshold;
        if let Some(lb) = other.min_frontier_lb {
            let keep = match &self.min_frontier_lb {
                Some(cur) => lb < *cur,
                None => true,
            };
            if keep {
                self.min_frontier_lb = Some(lb);
            }
        }
    }
}

struct Searcher<'a> {
    t: &'a Topology,
    kernel: &'a MoveKernel,
    escape_prob: &'a [Rational],
    cfg: &'a SearchConfig,
    shared: &'a Shared,
    forced_first: Option<BoxId>,
    opens: Vec<BoxId>,
    seen: HashSet<String>,
    stats: Stats,
}

impl<'a> Searcher<'a> {
    fn threshold(&self) -> Option<Rational> {
        let inc = self.shared.incumbent.lock().unwrap().clone();
        inc.map(|v| {
            if self.cfg.collect_ties {
                v + &self.cfg.tie_tolerance
            } else {
                v
            }
        })
    }

    /// Pruning bound: [`lower_bound`] sharpened by one step of forced leak
    /// (escape games) or by the best single catch (closed duration games).
    fn prune_bound(&self, d: &Distribution, step: usize, dur: &Rational) -> Rational {
        match self.cfg.objective {
            Objective::MinEscape => {
                // the next move leaks from every exit-adjacent box except
                // the one the player protects
                let mut total = Rational::zero();
                let mut best = Rational::zero();
                for (i, m) in d.inbox.iter().enumerate() {
                    if m.is_zero() || self.escape_prob[i].is_zero() {
                        continue;
                    }
                    let leak = m * &self.escape_prob[i];
                    if leak > best {
                        best = leak.clone();
                    }
                    total += leak;
                }
                &d.escaped + total - best
            }
            Objective::MinDuration => {
                if self.t.exits {
                    return lower_bound(d, step, self.cfg.objective, dur);
                }
                // catch at most the fullest box now, the rest waits a step
                let m = d.inbox_mass();
                let mu = d.inbox.iter().max().cloned().unwrap_or_else(Rational::zero);
                dur + rat_int(step as i64) * &mu + rat_int(step as i64 + 1) * (m - mu)
            }
        }
    }

    fn objective_value(&self, eval: &EvalResult) -> Option<Rational> {
        let v = match self.cfg.objective {
            Objective::MinDuration => &eval.duration,
            Objective::MinEscape => &eval.escape_rate,
        };
        v.exact().cloned()
    }

    fn consider(&mut self, strategy: Strategy, eval: EvalResult) {
        let value = match self.objective_value(&eval) {
            Some(v) => v,
            None => return,
        };
        {
            let mut inc = self.shared.incumbent.lock().unwrap();
            let improved = match inc.as_ref() {
                Some(best) => value < *best,
                None => true,
            };
            if improved {
                if self.cfg.fixed_threshold {
                    self.stats.improved_on_threshold = true;
                } else {
                    *inc = Some(value.clone());
                }
            }
        }
        let keep = match self.threshold() {
            Some(th) => value <= th,
            None => true,
        };
        if keep {
            self.stats.found.push(FoundStrategy {
                strategy,
                value,
                eval,
            });
        }
    }

    fn replayable(&self) -> bool {
        self.cfg.root.as_ref().map(|r| r.replayable).unwrap_or(true)
    }

    /// Promotes periodic opening windows of the current line to cyclic
    /// strategies and evaluates them exactly.
    fn try_promotions(&mut self) {
        if !self.replayable() {
            return;
        }
        let len = self.opens.len();
        for p in 1..=self.cfg.max_promote_period {
            if len < 2 * p {
                break;
            }
            if self.opens[len - p..] != self.opens[len - 2 * p..len - p] {
                continue;
            }
            let candidate = Strategy::new(
                self.opens[..len - p].to_vec(),
                self.opens[len - p..].to_vec(),
            )
            .canonicalize();
            let key = format_strategy(&candidate);
            if !self.seen.insert(key) {
                continue;
            }
            if let Ok(eval) = evaluate_strategy(self.t, &candidate) {
                self.consider(candidate, eval);
            }
        }
    }

    fn candidate_boxes(&self, step: usize, d: &Distribution) -> Vec<BoxId> {
        if let Some(b) = self.forced_at(step) {
            return vec![b];
        }
        let n = self.t.boxes();
        let root = self.cfg.root.as_ref();
        let avoid = root.and_then(|r| if step == r.step { r.avoid_first } else { None });
        let at_game_start = step == 1 && root.is_none();
        let allowed: Vec<BoxId> = (1..=n)
            .filter(|&b| {
                if Some(b) == avoid {
                    return false;
                }
                if at_game_start && self.cfg.symmetry_reduction && !self.first_step_allowed(b) {
                    return false;
                }
                true
            })
            .collect();
        if self.cfg.prune_dominated {
            let live: Vec<BoxId> = allowed
                .iter()
                .copied()
                .filter(|&b| !d.inbox[b - 1].is_zero())
                .collect();
            if !live.is_empty() {
                return live;
            }
        }
        allowed
    }

    fn forced_at(&self, step: usize) -> Option<BoxId> {
        if step != self.root_step() {
            return None;
        }
        self.forced_first
            .or_else(|| self.cfg.root.as_ref().and_then(|r| r.forced_first))
    }

    fn root_step(&self) -> usize {
        self.cfg.root.as_ref().map(|r| r.step).unwrap_or(1)
    }

    fn first_step_allowed(&self, b: BoxId) -> bool {
        match self.t.kind {
            TopologyKind::Line => b <= self.t.size.div_ceil(2),
            TopologyKind::Ring => b == 1,
            TopologyKind::Grid2xM => b <= self.t.size.div_ceil(2),
        }
    }

    /// Depth-first expansion; `state` is what the player sees before opening
    /// at absolute step `step`.
    fn dfs(&mut self, state: &Distribution, step: usize, duration_acc: &Rational) {
        if step > self.cfg.maxdepth {
            self.stats.frontier += 1;
            let lb = lower_bound(state, step, self.cfg.objective, duration_acc);
            let keep = match &self.stats.min_frontier_lb {
                Some(cur) => lb < *cur,
                None => true,
            };
            if keep {
                self.stats.min_frontier_lb = Some(lb);
            }
            return;
        }
        for b in self.candidate_boxes(step, state) {
            self.stats.nodes += 1;
            let (opened, caught_now) = apply_open(state, b);
            let (child, escaped_now) = apply_move(&opened, self.kernel);
            let dur = duration_acc + (caught_now + escaped_now) * rat_int(step as i64);
            self.opens.push(b);
            if child.inbox_mass().is_zero() {
                let candidate = Strategy::new(self.opens.clone(), Vec::new());
                if self.replayable() {
                    if let Ok(eval) = evaluate_strategy(self.t, &candidate) {
                        self.consider(candidate, eval);
                    }
                } else {
                    let eval = EvalResult {
                        duration: Value::Exact(dur.clone()),
                        escape_rate: Value::Exact(child.escaped.clone()),
                        caught_rate: Value::Exact(child.caught.clone()),
                        exact: true,
                        termination: Termination::FinitePrefix,
                    };
                    self.consider(candidate, eval);
                }
            } else {
                self.try_promotions();
                let bound = self.prune_bound(&child, step + 1, &dur);
                let cut = match self.threshold() {
                    Some(th) => bound > th,
                    None => false,
                };
                if cut {
                    self.stats.pruned += 1;
                    self.stats.max_prune_step = self.stats.max_prune_step.max(step);
                } else {
                    self.dfs(&child, step + 1, &dur);
                }
            }
            self.opens.pop();
        }
    }
}

/// Default warm-start strategy for a topology and objective.
fn warm_start(t: &Topology, objective: Objective) -> Option<Strategy> {
    match (objective, t.kind, t.exits) {
        (Objective::MinDuration, TopologyKind::Line, false) if t.size > 2 => {
            sweep_strategy(t.size).ok()
        }
        (Objective::MinDuration, TopologyKind::Line, true) if t.size >= 4 => {
            twice_left_twice_right(t.size).ok()
        }
        (Objective::MinEscape, TopologyKind::Line, true) if t.size >= 4 => {
            twice_left_twice_right(t.size).ok()
        }
        (Objective::MinEscape, TopologyKind::Line, true) => {
            Some(Strategy::new(vec![2, 2], Vec::new()))
        }
        (_, TopologyKind::Ring, _) | (_, TopologyKind::Grid2xM, _) => {
            Some(Strategy::new(Vec::new(), vec![1]))
        }
        _ => None,
    }
}

fn cmp_infinite(a: &Strategy, b: &Strategy) -> std::cmp::Ordering {
    let horizon = (a.prefix.len() + a.cycle.len().max(1))
        .max(b.prefix.len() + b.cycle.len().max(1))
        * 2
        + 4;
    for step in 1..=horizon {
        let x = a.box_at(step).ok();
        let y = b.box_at(step).ok();
        match (x, y) {
            (None, None) => return std::cmp::Ordering::Equal,
            (None, Some(_)) => return std::cmp::Ordering::Less,
            (Some(_), None) => return std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => match x.cmp(&y) {
                std::cmp::Ordering::Equal => {}
                other => return other,
            },
        }
    }
    std::cmp::Ordering::Equal
}

/// Runs the search. See [`SearchConfig`] for the knobs.
pub fn search_optimal(t: &Topology, cfg: SearchConfig) -> Result<SearchOutcome> {
    if cfg.objective == Objective::MinEscape && !t.exits {
        return Err(Error::InvalidArgument(
            "escape minimization needs a topology with exits".into(),
        ));
    }
    if cfg.maxdepth < 1 {
        return Err(Error::InvalidArgument("maxdepth must be at least 1".into()));
    }
    let incumbent = match (&cfg.incumbent, cfg.fixed_threshold) {
        (Some(v), _) => Some(v.clone()),
        (None, true) => {
            return Err(Error::InvalidArgument(
                "a fixed threshold needs an incumbent".into(),
            ))
        }
        (None, false) => warm_start(t, cfg.objective).and_then(|s| {
            evaluate_strategy(t, &s)
                .ok()
                .and_then(|e| match cfg.objective {
                    Objective::MinDuration => e.duration.exact().cloned(),
                    Objective::MinEscape => e.escape_rate.exact().cloned(),
                })
        }),
    };
    let shared = Shared {
        incumbent: Mutex::new(incumbent),
    };

    let kernel = move_kernel(t);
    let escape_prob: Vec<Rational> = kernel
        .iter()
        .map(|row| {
            row.iter()
                .filter(|(d, _)| *d == Dest::Escape)
                .fold(Rational::zero(), |s, (_, p)| s + p)
        })
        .collect();

    let (root_state, root_step, root_dur, pre_openings) = match &cfg.root {
        Some(r) => (
            r.state.clone(),
            r.step,
            r.duration_acc.clone(),
            r.pre_openings.clone(),
        ),
        None => (uniform_init(t), 1, Rational::zero(), Vec::new()),
    };

    let mut stats = if cfg.threads <= 1 {
        let mut searcher = Searcher {
            t,
            kernel: &kernel,
            escape_prob: &escape_prob,
            cfg: &cfg,
            shared: &shared,
            forced_first: None,
            opens: pre_openings.clone(),
            seen: HashSet::new(),
            stats: Stats::default(),
        };
        searcher.dfs(&root_state, root_step, &root_dur);
        searcher.stats
    } else {
        // split the root's subtrees over worker threads: the incumbent is
        // shared and only improves; results merge in subtree order
        let probe = Searcher {
            t,
            kernel: &kernel,
            escape_prob: &escape_prob,
            cfg: &cfg,
            shared: &shared,
            forced_first: None,
            opens: pre_openings.clone(),
            seen: HashSet::new(),
            stats: Stats::default(),
        };
        let firsts = probe.candidate_boxes(root_step, &root_state);
        drop(probe);
        let per_first: Vec<Stats> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &b in &firsts {
                let kernel = &kernel;
                let escape_prob = &escape_prob;
                let cfg = &cfg;
                let shared = &shared;
                let root_state = &root_state;
                let root_dur = &root_dur;
                let pre_openings = &pre_openings;
                handles.push(scope.spawn(move || {
                    let mut s = Searcher {
                        t,
                        kernel,
                        escape_prob,
                        cfg,
                        shared,
                        forced_first: Some(b),
                        opens: pre_openings.clone(),
                        seen: HashSet::new(),
                        stats: Stats::default(),
                    };
                    s.dfs(root_state, root_step, root_dur);
                    s.stats
                }));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut total = Stats::default();
        for s in per_first {
            total.merge(s);
        }
        total
    };

    // Rank candidates: by value, then by the opening sequence.
    stats.found.sort_by(|a, b| {
        a.value
            .cmp(&b.value)
            .then_with(|| cmp_infinite(&a.strategy, &b.strategy))
    });
    stats.found.dedup_by(|a, b| {
        a.value == b.value && cmp_infinite(&a.strategy, &b.strategy) == std::cmp::Ordering::Equal
    });

    let best = stats.found.first().cloned();
    let optima: Vec<FoundStrategy> = match &best {
        Some(b) => {
            let cutoff = &b.value + &cfg.tie_tolerance;
            stats
                .found
                .iter()
                .filter(|f| f.value <= cutoff)
                .cloned()
                .collect()
        }
        None => Vec::new(),
    };
    let certificate = best.as_ref().and_then(|b| {
        if b.strategy.cycle.is_empty() || cfg.root.is_some() {
            return None;
        }
        let horizon = cfg.maxdepth + 3 * b.strategy.cycle.len();
        play_trace(t, &b.strategy, horizon)
            .ok()
            .and_then(|tr| detect_scaled_repetition(&tr, cfg.max_promote_period.max(12)))
    });
    let lower_bound = match (&best, &stats.min_frontier_lb) {
        (Some(b), Some(f)) => Some(b.value.clone().min(f.clone())),
        (Some(b), None) => Some(b.value.clone()),
        (None, Some(f)) => Some(f.clone()),
        (None, None) => None,
    };

    Ok(SearchOutcome {
        best,
        optima,
        lower_bound,
        nodes: stats.nodes,
        pruned: stats.pruned,
        frontier: stats.frontier,
        max_prune_step: stats.max_prune_step,
        improved_on_threshold: stats.improved_on_threshold,
        certificate,
    })
}
