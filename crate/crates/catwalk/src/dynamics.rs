//! Exact forward propagation of the cat's residence distribution under the
//! open and move operators, step traces, and the exact linear map of one
//! strategy cycle.

use num::{One, Zero};
use serde::Serialize;

use crate::numerics::{rat, RationalMatrix, Rational};
use crate::strategy::Strategy;
use crate::topology::{move_kernel, BoxId, Dest, MoveKernel, Topology};
use crate::{Error, Result};

/// Where the probability mass lives: still in boxes, caught, or escaped.
/// `inbox[i]` is the mass in box `i + 1`. The three parts always sum to 1
/// for a full game distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    pub inbox: Vec<Rational>,
    pub caught: Rational,
    pub escaped: Rational,
}

impl Distribution {
    pub fn new(inbox: Vec<Rational>) -> Self {
        Distribution {
            inbox,
            caught: Rational::zero(),
            escaped: Rational::zero(),
        }
    }

    /// Mass still inside boxes.
    pub fn inbox_mass(&self) -> Rational {
        self.inbox.iter().fold(Rational::zero(), |s, x| s + x)
    }

    pub fn total(&self) -> Rational {
        self.inbox_mass() + &self.caught + &self.escaped
    }

    /// Inbox vector scaled to total mass 1, or None when nothing is left.
    pub fn normalized_inbox(&self) -> Option<Vec<Rational>> {
        let m = self.inbox_mass();
        if m.is_zero() {
            return None;
        }
        Some(self.inbox.iter().map(|x| x / &m).collect())
    }
}

/// Uniform initial residence: the cat is assigned a random box.
pub fn uniform_init(t: &Topology) -> Distribution {
    let n = t.boxes();
    Distribution::new(vec![rat(1, n as i64); n])
}

/// Opens box `b`: its mass moves to `caught`. Returns the caught mass.
pub fn apply_open(d: &Distribution, b: BoxId) -> (Distribution, Rational) {
    let mut out = d.clone();
    let got = std::mem::replace(&mut out.inbox[b - 1], Rational::zero());
    out.caught += &got;
    (out, got)
}

/// One random-walk move: kernel-weighted redistribution, escape flow goes to
/// `escaped`. Returns the newly escaped mass.
pub fn apply_move(d: &Distribution, kernel: &MoveKernel) -> (Distribution, Rational) {
    let n = d.inbox.len();
    let mut inbox = vec![Rational::zero(); n];
    let mut escaped_now = Rational::zero();
    for (i, mass) in d.inbox.iter().enumerate() {
        if mass.is_zero() {
            continue;
        }
        for (dest, p) in &kernel[i] {
            let flow = mass * p;
            match dest {
                Dest::Box(b) => inbox[b - 1] += flow,
                Dest::Escape => escaped_now += flow,
            }
        }
    }
    let out = Distribution {
        inbox,
        caught: d.caught.clone(),
        escaped: &d.escaped + &escaped_now,
    };
    (out, escaped_now)
}

/// Ledger entry for one game step.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub opened: BoxId,
    /// Mass caught by this step's opening.
    #[serde(serialize_with = "crate::dynamics::ser_rational")]
    pub caught: Rational,
    /// Mass escaped by this step's move.
    #[serde(serialize_with = "crate::dynamics::ser_rational")]
    pub escaped: Rational,
    /// Post-move distribution (skipped in JSON dumps of whole games).
    #[serde(skip)]
    pub dist: Distribution,
}

pub(crate) fn ser_rational<S: serde::Serializer>(
    r: &Rational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::numerics::format_rational(r))
}

/// Play-by-play of a game: one record per step, each step being
/// open-then-move.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub initial: Distribution,
    pub steps: Vec<StepRecord>,
    /// Cycle length of the strategy that produced the trace, if any.
    pub cycle_len: Option<usize>,
}

impl StepTrace {
    /// Post-move distribution after `step` (step 0 is the initial state).
    pub fn state_after(&self, step: usize) -> &Distribution {
        if step == 0 {
            &self.initial
        } else {
            &self.steps[step - 1].dist
        }
    }
}

/// Plays `steps` steps of a strategy from the uniform initial distribution.
pub fn play_trace(t: &Topology, s: &Strategy, steps: usize) -> Result<StepTrace> {
    play_trace_from(t, uniform_init(t), s, steps)
}

/// Plays from an arbitrary initial distribution.
///
/// A finite strategy that runs out while box mass remains is an error; once
/// all mass is resolved the trace simply stops early.
pub fn play_trace_from(
    t: &Topology,
    init: Distribution,
    s: &Strategy,
    steps: usize,
) -> Result<StepTrace> {
    let kernel = move_kernel(t);
    let mut cur = init.clone();
    let mut records = Vec::with_capacity(steps);
    for step in 1..=steps {
        if cur.inbox_mass().is_zero() {
            break;
        }
        let b = match s.box_at(step) {
            Ok(b) => b,
            Err(Error::StrategyExhausted { .. }) => {
                return Err(Error::StrategyExhausted { step });
            }
            Err(e) => return Err(e),
        };
        let (opened, caught_now) = apply_open(&cur, b);
        let (moved, escaped_now) = apply_move(&opened, &kernel);
        cur = moved.clone();
        records.push(StepRecord {
            step,
            opened: b,
            caught: caught_now,
            escaped: escaped_now,
            dist: moved,
        });
    }
    Ok(StepTrace {
        initial: init,
        steps: records,
        cycle_len: if s.cycle.is_empty() {
            None
        } else {
            Some(s.cycle.len())
        },
    })
}

/// Exact linear map of one full strategy cycle.
///
/// `matrix[(i, j)]` is the mass arriving in box `i + 1` per unit mass that
/// was in box `j + 1` when the cycle started. `caught_w`, `escaped_w` and
/// `duration_w` are linear functionals of the entering mass: total caught
/// and escaped mass over the cycle, and termination mass weighted by its
/// 1-based step offset inside the cycle.
#[derive(Debug, Clone)]
pub struct CycleMap {
    pub matrix: RationalMatrix,
    pub caught_w: Vec<Rational>,
    pub escaped_w: Vec<Rational>,
    pub duration_w: Vec<Rational>,
    pub cycle: Vec<BoxId>,
}

/// Composes the (open, move) operators of one cycle into a [`CycleMap`].
///
/// Built column by column from unit masses, so the functionals are exact by
/// construction.
pub fn cycle_map(t: &Topology, cycle: &[BoxId]) -> CycleMap {
    assert!(!cycle.is_empty(), "cycle must be nonempty");
    let n = t.boxes();
    let kernel = move_kernel(t);
    let mut matrix = RationalMatrix::zero(n, n);
    let mut caught_w = vec![Rational::zero(); n];
    let mut escaped_w = vec![Rational::zero(); n];
    let mut duration_w = vec![Rational::zero(); n];
    for j in 0..n {
        let mut inbox = vec![Rational::zero(); n];
        inbox[j] = Rational::one();
        let mut d = Distribution::new(inbox);
        for (offset, &b) in cycle.iter().enumerate() {
            let (opened, caught_now) = apply_open(&d, b);
            let (moved, escaped_now) = apply_move(&opened, &kernel);
            let weight = rat((offset + 1) as i64, 1);
            caught_w[j] += &caught_now;
            escaped_w[j] += &escaped_now;
            duration_w[j] += (caught_now + escaped_now) * weight;
            d = moved;
        }
        for i in 0..n {
            matrix[(i, j)] = d.inbox[i].clone();
        }
    }
    CycleMap {
        matrix,
        caught_w,
        escaped_w,
        duration_w,
        cycle: cycle.to_vec(),
    }
}
