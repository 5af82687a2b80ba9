//! Box graphs the cat walks on: lines, rings and 2xm grids, with or without
//! exit doors, plus their symmetry groups.
//!
//! Boxes are numbered from 1. On the grid the upper row is 1..m and the lower
//! row m+1..2m. Move probabilities are exact rationals: each available
//! direction is equally likely, and on graphs with exits a missing neighbour
//! becomes an escape door.

use serde::Serialize;

use crate::numerics::{rat, Rational};
use crate::{Error, Result};

/// 1-based box index.
pub type BoxId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TopologyKind {
    Line,
    Ring,
    Grid2xM,
}

/// Where a move can lead: another box, or out through an exit door.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Box(BoxId),
    Escape,
}

/// One of the three box-graph families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Topology {
    pub kind: TopologyKind,
    /// n for line/ring, m for the 2xm grid.
    pub size: usize,
    pub exits: bool,
}

/// Per-box move distribution; `kernel[i]` lists `(destination, probability)`
/// for box `i + 1`.
pub type MoveKernel = Vec<Vec<(Dest, Rational)>>;

/// A box permutation: `perm[i]` is the image of box `i + 1`.
pub type Permutation = Vec<BoxId>;

/// Validates and builds a topology.
pub fn build_topology(kind: TopologyKind, size: usize, exits: bool) -> Result<Topology> {
    if size < 2 {
        return Err(Error::Topology(format!(
            "size {size} too small, need at least 2"
        )));
    }
    if kind == TopologyKind::Ring && exits {
        return Err(Error::Topology("a ring has no exits".into()));
    }
    Ok(Topology { kind, size, exits })
}

impl Topology {
    /// Total number of boxes.
    pub fn boxes(&self) -> usize {
        match self.kind {
            TopologyKind::Line | TopologyKind::Ring => self.size,
            TopologyKind::Grid2xM => 2 * self.size,
        }
    }

    /// Parses a spec string: "line:5", "line:5:exits", "ring:6",
    /// "grid:2x4", "grid:2x4:exits".
    pub fn parse(text: &str) -> Result<Topology> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let bad = || Error::Topology(format!("cannot parse topology {text:?}"));
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad());
        }
        let exits = match parts.get(2) {
            None => false,
            Some(&"exits") => true,
            Some(_) => return Err(bad()),
        };
        let (kind, size) = match parts[0] {
            "line" => (TopologyKind::Line, parts[1].parse().map_err(|_| bad())?),
            "ring" => (TopologyKind::Ring, parts[1].parse().map_err(|_| bad())?),
            "grid" => {
                let (rows, m) = parts[1].split_once('x').ok_or_else(bad)?;
                if rows != "2" {
                    return Err(Error::Topology(format!(
                        "only 2xm grids are supported, got {} rows",
                        rows
                    )));
                }
                (TopologyKind::Grid2xM, m.parse().map_err(|_| bad())?)
            }
            _ => return Err(bad()),
        };
        build_topology(kind, size, exits)
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            TopologyKind::Line => write!(f, "line:{}", self.size)?,
            TopologyKind::Ring => write!(f, "ring:{}", self.size)?,
            TopologyKind::Grid2xM => write!(f, "grid:2x{}", self.size)?,
        }
        if self.exits {
            write!(f, ":exits")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Topology> {
        Topology::parse(s)
    }
}

/// Exact move kernel of a topology.
///
/// Line interior box i goes to i-1 / i+1 with probability 1/2 each; the end
/// boxes go to their single neighbour (no exits) or escape with probability
/// 1/2 (exits). Ring boxes always have two neighbours. Grid boxes move to
/// each actual neighbour with probability 1/d without exits; with exits all
/// four compass directions are available and each missing neighbour is an
/// escape door at probability 1/4.
pub fn move_kernel(t: &Topology) -> MoveKernel {
    let n = t.boxes();
    let mut kernel = Vec::with_capacity(n);
    for b in 1..=n {
        let dests: Vec<Dest> = match t.kind {
            TopologyKind::Line => {
                let mut d = Vec::new();
                if b > 1 {
                    d.push(Dest::Box(b - 1));
                } else if t.exits {
                    d.push(Dest::Escape);
                }
                if b < n {
                    d.push(Dest::Box(b + 1));
                } else if t.exits {
                    d.push(Dest::Escape);
                }
                d
            }
            TopologyKind::Ring => {
                let left = if b == 1 { n } else { b - 1 };
                let right = if b == n { 1 } else { b + 1 };
                if left == right {
                    vec![Dest::Box(left)]
                } else {
                    vec![Dest::Box(right), Dest::Box(left)]
                }
            }
            TopologyKind::Grid2xM => {
                let m = t.size;
                let (row, col) = if b <= m { (0, b) } else { (1, b - m) };
                let north = if row == 0 { None } else { Some(b - m) };
                let south = if row == 0 { Some(b + m) } else { None };
                let west = if col > 1 { Some(b - 1) } else { None };
                let east = if col < m { Some(b + 1) } else { None };
                let mut d = Vec::new();
                for nb in [north, east, south, west] {
                    match nb {
                        Some(x) => d.push(Dest::Box(x)),
                        None if t.exits => d.push(Dest::Escape),
                        None => {}
                    }
                }
                d
            }
        };
        let p = rat(1, dests.len() as i64);
        kernel.push(dests.into_iter().map(|d| (d, p.clone())).collect());
    }
    kernel
}

/// All graph symmetries as box permutations.
///
/// Line: identity and the mirror i -> n+1-i. Grid: the four-element group of
/// horizontal/vertical flips. Ring: the dihedral group of order 2n
/// (duplicates that collapse for n = 2 are removed).
pub fn symmetries(t: &Topology) -> Vec<Permutation> {
    let n = t.boxes();
    let mut perms: Vec<Permutation> = Vec::new();
    match t.kind {
        TopologyKind::Line => {
            perms.push((1..=n).collect());
            perms.push((1..=n).rev().collect());
        }
        TopologyKind::Ring => {
            for k in 0..n {
                // rotation by k
                perms.push((0..n).map(|i| (i + k) % n + 1).collect());
                // reflection composed with rotation by k
                perms.push((0..n).map(|i| (k + n - i) % n + 1).collect());
            }
            perms.sort();
            perms.dedup();
        }
        TopologyKind::Grid2xM => {
            let m = t.size;
            let h = |b: usize| -> usize {
                if b <= m {
                    m + 1 - b
                } else {
                    m + (m + 1 - (b - m))
                }
            };
            let v = |b: usize| -> usize { if b <= m { b + m } else { b - m } };
            perms.push((1..=n).collect());
            perms.push((1..=n).map(h).collect());
            perms.push((1..=n).map(v).collect());
            perms.push((1..=n).map(|b| v(h(b))).collect());
        }
    }
    perms
}
