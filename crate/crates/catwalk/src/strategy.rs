//! Opening strategies: a finite prefix of box openings followed by an
//! optional infinitely repeated cycle, written "2552(33)" or in comma form
//! "2,5,5,2(3,3)". The parenthesised suffix is the repeated cycle.

use serde::Serialize;

use crate::topology::{BoxId, Permutation, Topology};
use crate::{Error, Result};

/// An opening strategy bound to some topology size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Strategy {
    pub prefix: Vec<BoxId>,
    /// Empty means the strategy is finite.
    pub cycle: Vec<BoxId>,
}

impl Strategy {
    pub fn new(prefix: Vec<BoxId>, cycle: Vec<BoxId>) -> Self {
        Strategy { prefix, cycle }
    }

    pub fn is_finite(&self) -> bool {
        self.cycle.is_empty()
    }

    /// Box opened at `step` (1-based). Finite strategies run out.
    pub fn box_at(&self, step: usize) -> Result<BoxId> {
        if step == 0 {
            return Err(Error::InvalidArgument("steps are 1-based".into()));
        }
        if step <= self.prefix.len() {
            return Ok(self.prefix[step - 1]);
        }
        if self.cycle.is_empty() {
            return Err(Error::StrategyExhausted { step });
        }
        Ok(self.cycle[(step - 1 - self.prefix.len()) % self.cycle.len()])
    }

    /// Applies a box permutation elementwise, yielding the mirror strategy.
    pub fn mirrored(&self, sigma: &Permutation) -> Strategy {
        Strategy {
            prefix: self.prefix.iter().map(|&b| sigma[b - 1]).collect(),
            cycle: self.cycle.iter().map(|&b| sigma[b - 1]).collect(),
        }
    }

    /// Canonical form with the same infinite opening sequence: the cycle is
    /// reduced to its primitive period and prefix openings that merely
    /// pre-rotate the cycle are absorbed into it. "24(4224)" becomes
    /// "(2442)".
    pub fn canonicalize(&self) -> Strategy {
        let mut prefix = self.prefix.clone();
        let mut cycle = self.cycle.clone();
        if !cycle.is_empty() {
            // primitive period
            let l = cycle.len();
            for p in 1..l {
                if l % p == 0 && (0..l).all(|i| cycle[i] == cycle[i % p]) {
                    cycle.truncate(p);
                    break;
                }
            }
            // absorb prefix tail into the cycle
            while let Some(&last) = prefix.last() {
                if *cycle.last().unwrap() == last {
                    prefix.pop();
                    let tail = cycle.pop().unwrap();
                    cycle.insert(0, tail);
                } else {
                    break;
                }
            }
        }
        Strategy { prefix, cycle }
    }

    /// First `len` opened boxes (errors if the strategy is shorter).
    pub fn openings(&self, len: usize) -> Result<Vec<BoxId>> {
        (1..=len).map(|s| self.box_at(s)).collect()
    }
}

/// Parses strategy text against a topology.
///
/// Compact digit form ("2332", "1661(2266)") is accepted when every box
/// index fits a single digit, i.e. for topologies of at most 9 boxes; comma
/// form ("2,5,5,2(3,3)") always works. `preset:NAME` resolves the long
/// strategies shipped with the crate.
pub fn parse_strategy(text: &str, t: &Topology) -> Result<Strategy> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("empty strategy".into()));
    }
    if let Some(name) = text.strip_prefix("preset:") {
        let resolved = preset(name)
            .ok_or_else(|| Error::Parse(format!("unknown preset {name:?}")))?;
        return parse_strategy(&resolved, t);
    }
    let n = t.boxes();

    let (head, cycle_text) = match text.find('(') {
        Some(open) => {
            let rest = &text[open + 1..];
            let close = rest
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unbalanced parentheses in {text:?}")))?;
            if !rest[close + 1..].trim().is_empty() {
                return Err(Error::Parse(format!(
                    "trailing characters after cycle in {text:?}"
                )));
            }
            (&text[..open], &rest[..close])
        }
        None => {
            if text.contains(')') {
                return Err(Error::Parse(format!("unbalanced parentheses in {text:?}")));
            }
            (text, "")
        }
    };

    let parse_part = |part: &str| -> Result<Vec<BoxId>> {
        let part = part.trim();
        if part.is_empty() {
            return Ok(Vec::new());
        }
        let ids: Vec<BoxId> = if part.contains(',') {
            part.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("invalid box index {tok:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            if n > 9 {
                return Err(Error::Parse(format!(
                    "digit form is ambiguous with {n} boxes; use the comma form"
                )));
            }
            part.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::Parse(format!("invalid digit {c:?}")))
                })
                .collect::<Result<_>>()?
        };
        for &b in &ids {
            if b < 1 || b > n {
                return Err(Error::BoxOutOfRange { box_id: b, boxes: n });
            }
        }
        Ok(ids)
    };

    let prefix = parse_part(head)?;
    let cycle = parse_part(cycle_text)?;
    if text.contains('(') && cycle.is_empty() {
        return Err(Error::Parse(format!("empty cycle in {text:?}")));
    }
    if prefix.is_empty() && cycle.is_empty() {
        return Err(Error::Parse(format!("no openings in {text:?}")));
    }
    Ok(Strategy { prefix, cycle })
}

/// Canonical text form; digit form when every index is a single digit.
pub fn format_strategy(s: &Strategy) -> String {
    let digits = s
        .prefix
        .iter()
        .chain(s.cycle.iter())
        .all(|&b| (1..=9).contains(&b));
    let join = |ids: &[BoxId]| -> String {
        if digits {
            ids.iter().map(|b| b.to_string()).collect()
        } else {
            ids.iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
    };
    let mut out = join(&s.prefix);
    if !s.cycle.is_empty() {
        out.push('(');
        out.push_str(&join(&s.cycle));
        out.push(')');
    }
    out
}

/// The classic guaranteed-catch sweep 2,3,...,n-1,n-1,...,3,2 for a closed
/// line of n > 2 boxes; the cat is found within 2n-4 steps.
pub fn sweep_strategy(n: usize) -> Result<Strategy> {
    if n <= 2 {
        return Err(Error::InvalidArgument(format!(
            "sweep needs n > 2, got {n}"
        )));
    }
    let up: Vec<BoxId> = (2..=n - 1).collect();
    let mut prefix = up.clone();
    prefix.extend(up.into_iter().rev());
    Ok(Strategy::new(prefix, Vec::new()))
}

/// The "twice left - twice right" family 1,(n-1),(n-1),1 then repeating
/// 2,2,(n-1),(n-1), for exit lines with n >= 4 boxes.
pub fn twice_left_twice_right(n: usize) -> Result<Strategy> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "twice-left-twice-right needs n >= 4, got {n}"
        )));
    }
    Ok(Strategy::new(
        vec![1, n - 1, n - 1, 1],
        vec![2, 2, n - 1, n - 1],
    ))
}

/// 87 known opening steps of the fastest-catch strategy for the closed
/// 8-box line.
const S8_FAST: &str = "47527425774224774224774472472552744725527447255274\
                       4725527447255274257752472552742577524";

/// Escape-minimizing strategy for the 8-box exit line: 9 opening steps, then
/// a repeated 22-step block.
const S8R_PREFIX: &str = "177122477";
const S8R_CYCLE: &str = "2347187237762236818761";

/// Escape-minimizing strategy for the 9-box exit line: 28 opening steps, then
/// a repeated 52-step block.
const S9_PREFIX: &str = "1829825881238258298723428763";
const S9_CYCLE: &str = "9298723458817181238765281318123876522939298723458297";

/// Resolves a preset name to strategy text.
pub fn preset(name: &str) -> Option<String> {
    match name {
        "s8" | "s8_fast" => Some(S8_FAST.to_string()),
        "s8r" => Some(format!("{S8R_PREFIX}({S8R_CYCLE})")),
        "s9" => Some(format!("{S9_PREFIX}({S9_CYCLE})")),
        "s9r" => Some(format!("({S9_CYCLE})")),
        _ => None,
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 4] = ["s8_fast", "s8r", "s9", "s9r"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, TopologyKind};

    fn topo(s: &str) -> Topology {
        Topology::parse(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        let s = parse_strategy("2332", &topo("line:4")).unwrap();
        assert_eq!(s, Strategy::new(vec![2, 3, 3, 2], vec![]));

        let s = parse_strategy("1661(2266)", &topo("line:7:exits")).unwrap();
        assert_eq!(s, Strategy::new(vec![1, 6, 6, 1], vec![2, 2, 6, 6]));

        let s = parse_strategy("(1)", &topo("ring:3")).unwrap();
        assert_eq!(s, Strategy::new(vec![], vec![1]));

        let s = parse_strategy("2,5,5,2(3,3)", &topo("line:5")).unwrap();
        assert_eq!(s, Strategy::new(vec![2, 5, 5, 2], vec![3, 3]));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_strategy("29", &topo("line:4")),
            Err(Error::BoxOutOfRange { box_id: 9, boxes: 4 })
        ));
        assert!(parse_strategy("2(33", &topo("line:4")).is_err());
        assert!(parse_strategy("2)33(", &topo("line:4")).is_err());
        assert!(parse_strategy("()", &topo("line:4")).is_err());
        assert!(parse_strategy("", &topo("line:4")).is_err());
        // a 10-box topology rejects the digit form
        let g = build_topology(TopologyKind::Grid2xM, 5, false).unwrap();
        assert!(parse_strategy("12", &g).is_err());
        assert!(parse_strategy("1,2,10", &g).is_ok());
    }

    #[test]
    fn format_examples() {
        let s = Strategy::new(vec![1, 7, 2, 8], vec![2, 7, 7, 2]);
        assert_eq!(format_strategy(&s), "1728(2772)");
        assert_eq!(format_strategy(&Strategy::new(vec![], vec![1])), "(1)");
        assert_eq!(format_strategy(&Strategy::new(vec![2], vec![])), "2");
        let wide = Strategy::new(vec![1, 10], vec![12]);
        assert_eq!(format_strategy(&wide), "1,10(12)");
    }

    #[test]
    fn roundtrip_both_forms() {
        let t = topo("line:7:exits");
        for text in ["1661(2266)", "22", "(2442)", "1,6,6,1(2,2,6,6)"] {
            let s = parse_strategy(text, &t).unwrap();
            let s2 = parse_strategy(&format_strategy(&s), &t).unwrap();
            assert_eq!(s, s2);
        }
    }

    #[test]
    fn mirror_examples() {
        let t = topo("line:4:exits");
        let s = parse_strategy("(14414114)", &t).unwrap();
        let sigma = crate::topology::symmetries(&t)[1].clone();
        assert_eq!(
            format_strategy(&s.mirrored(&sigma)),
            "(41141441)"
        );

        let t5 = topo("line:5");
        let s = parse_strategy("(2442)", &t5).unwrap();
        let sigma = crate::topology::symmetries(&t5)[1].clone();
        assert_eq!(format_strategy(&s.mirrored(&sigma)), "(4224)");

        let id: Vec<usize> = (1..=5).collect();
        assert_eq!(s.mirrored(&id), s);
    }

    #[test]
    fn box_at_prefix_cycle_and_exhaustion() {
        let t = topo("line:7:exits");
        let s = parse_strategy("1661(2266)", &t).unwrap();
        assert_eq!(s.box_at(5).unwrap(), 2);
        assert_eq!(s.box_at(9).unwrap(), 2);
        assert_eq!(s.box_at(8).unwrap(), 6);
        let fin = parse_strategy("22", &topo("line:3")).unwrap();
        assert!(matches!(
            fin.box_at(3),
            Err(Error::StrategyExhausted { step: 3 })
        ));
    }

    #[test]
    fn cycle_indexing_identity() {
        let s = Strategy::new(vec![1, 6, 6, 1], vec![2, 2, 6, 6]);
        let k = s.prefix.len();
        let l = s.cycle.len();
        for j in 0..5 {
            for r in 0..l {
                assert_eq!(s.box_at(k + j * l + r + 1).unwrap(), s.cycle[r]);
            }
        }
    }

    #[test]
    fn sweep_examples() {
        assert_eq!(
            sweep_strategy(4).unwrap(),
            Strategy::new(vec![2, 3, 3, 2], vec![])
        );
        assert_eq!(
            sweep_strategy(5).unwrap(),
            Strategy::new(vec![2, 3, 4, 4, 3, 2], vec![])
        );
        assert_eq!(sweep_strategy(3).unwrap(), Strategy::new(vec![2, 2], vec![]));
        assert!(sweep_strategy(2).is_err());
    }

    #[test]
    fn twice_left_twice_right_examples() {
        let t = topo("line:7:exits");
        assert_eq!(
            twice_left_twice_right(7).unwrap(),
            parse_strategy("1661(2266)", &t).unwrap()
        );
        let t9 = topo("line:9:exits");
        assert_eq!(
            twice_left_twice_right(9).unwrap(),
            parse_strategy("1881(2288)", &t9).unwrap()
        );
        let t4 = topo("line:4:exits");
        assert_eq!(
            twice_left_twice_right(4).unwrap(),
            parse_strategy("1331(2233)", &t4).unwrap()
        );
        assert!(twice_left_twice_right(3).is_err());
    }

    #[test]
    fn canonicalization_collapses_rotations() {
        let s = Strategy::new(vec![2, 4], vec![4, 2, 2, 4]);
        assert_eq!(format_strategy(&s.canonicalize()), "(2442)");
        let s = Strategy::new(vec![2, 5, 5], vec![2, 5, 5, 2, 5, 5]);
        assert_eq!(format_strategy(&s.canonicalize()), "(255)");
        let s = Strategy::new(vec![2, 2], vec![]);
        assert_eq!(s.canonicalize(), s);
    }

    #[test]
    fn preset_digit_counts() {
        let t8 = topo("line:8");
        let s8 = parse_strategy("preset:s8_fast", &t8).unwrap();
        assert_eq!(s8.prefix.len(), 87);
        assert!(s8.is_finite());

        let t8e = topo("line:8:exits");
        let s8r = parse_strategy("preset:s8r", &t8e).unwrap();
        assert_eq!(s8r.prefix.len(), 9);
        assert_eq!(s8r.cycle.len(), 22);

        let t9 = topo("line:9:exits");
        let s9 = parse_strategy("preset:s9", &t9).unwrap();
        assert_eq!(s9.prefix.len(), 28);
        assert_eq!(s9.cycle.len(), 52);
        let s9r = parse_strategy("preset:s9r", &t9).unwrap();
        assert_eq!(s9r.cycle.len(), 52);

        assert!(parse_strategy("preset:nope", &t8).is_err());
    }
}
