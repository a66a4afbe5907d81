//! Neighboring inputs and brute-force sensitivity oracles.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::{Event, LabeledHistogram};
use crate::tree::{levels, Cell};

/// Two event streams equal except at one round, where one side is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPair {
    a: Vec<Event>,
    b: Vec<Event>,
    round: Option<usize>,
}

impl StreamPair {
    pub fn new(a: Vec<Event>, b: Vec<Event>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::NotNeighbors(format!(
                "lengths differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        match diff.as_slice() {
            [] => Ok(StreamPair { a, b, round: None }),
            [i] if a[*i].is_empty() || b[*i].is_empty() => Ok(StreamPair {
                round: Some(i + 1),
                a,
                b,
            }),
            [i] => Err(Error::NotNeighbors(format!(
                "round {} differs but neither side is empty",
                i + 1
            ))),
            _ => Err(Error::NotNeighbors(format!(
                "{} rounds differ, expected at most one",
                diff.len()
            ))),
        }
    }

    /// `stream` against itself with round `t` (1-based) emptied.
    pub fn drop_round(stream: Vec<Event>, t: usize) -> Result<Self> {
        if t == 0 || t > stream.len() {
            return Err(Error::param(
                "t",
                format!("round {t} outside 1..={}", stream.len()),
            ));
        }
        let mut b = stream.clone();
        b[t - 1] = Event::new();
        StreamPair::new(stream, b)
    }

    pub fn stream(&self, b: bool) -> &[Event] {
        if b {
            &self.b
        } else {
            &self.a
        }
    }

    /// 1-based round where the streams differ, if any.
    pub fn differing_round(&self) -> Option<usize> {
        self.round
    }

    /// Items of the differing event.
    pub fn differing_items(&self) -> Event {
        match self.round {
            Some(t) => self.a[t - 1].union(&self.b[t - 1]).cloned().collect(),
            None => Event::new(),
        }
    }

    /// Items that occur in exactly one of the two streams.
    pub fn fresh_items(&self) -> Event {
        let seen = |s: &[Event], u: &String| s.iter().any(|e| e.contains(u));
        self.differing_items()
            .into_iter()
            .filter(|u| seen(&self.a, u) != seen(&self.b, u))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Two histograms where one dominates the other, differing in at most
/// `delta0` bins by at most 1 each. This is what one event changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramPair {
    h0: LabeledHistogram,
    h1: LabeledHistogram,
    delta0: usize,
}

impl HistogramPair {
    pub fn new(h0: LabeledHistogram, h1: LabeledHistogram, delta0: usize) -> Result<Self> {
        let h0 = h0.positive();
        let h1 = h1.positive();
        let (changed, max) = h0.diff(&h1);
        if changed > delta0 || max > 1 {
            return Err(Error::NotNeighbors(format!(
                "{changed} bins differ by up to {max}, allowed {delta0} bins by 1"
            )));
        }
        let ge = |x: &LabeledHistogram, y: &LabeledHistogram| y.iter().all(|(u, c)| x.get(u) >= c);
        if !ge(&h0, &h1) && !ge(&h1, &h0) {
            return Err(Error::NotNeighbors(
                "neither histogram dominates the other".into(),
            ));
        }
        Ok(HistogramPair { h0, h1, delta0 })
    }

    pub fn get(&self, b: bool) -> &LabeledHistogram {
        if b {
            &self.h1
        } else {
            &self.h0
        }
    }

    pub fn delta0(&self) -> usize {
        self.delta0
    }
}

/// Running counts of a 0/1 stream, each prefix summed from scratch.
pub fn brute_force_prefix(stream: &[u8]) -> Vec<u64> {
    (1..=stream.len())
        .map(|t| stream[..t].iter().map(|&x| u64::from(x)).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CellDiff {
    pub cells_changed: usize,
    pub max_diff: u64,
}

/// Compare the partial histogram tables of both streams cell by cell.
/// Cells run over the full tree for horizon `t_max`; rounds past the end of
/// a stream count as empty.
pub fn brute_force_cell_diff(pair: &StreamPair, r: usize, t_max: usize) -> Result<CellDiff> {
    if r < 2 || t_max == 0 {
        return Err(Error::param("r", "need r >= 2 and t_max >= 1"));
    }
    if pair.len() > t_max {
        return Err(Error::StreamTooLong {
            len: pair.len(),
            t_max,
        });
    }
    let cell_hist = |s: &[Event], c: Cell| {
        let (lo, hi) = c.interval(r);
        let hi = (hi as usize).min(s.len());
        LabeledHistogram::of_events(s.get(lo as usize - 1..hi).unwrap_or(&[]))
    };
    let mut out = CellDiff {
        cells_changed: 0,
        max_diff: 0,
    };
    let mut width = 1usize;
    for level in 1..=levels(t_max as u64, r as u64) {
        for j in 1..=(t_max / width) as u64 {
            let c = Cell::new(level, j);
            let (n, m) = cell_hist(pair.stream(false), c).diff(&cell_hist(pair.stream(true), c));
            if n > 0 {
                out.cells_changed += 1;
                out.max_diff = out.max_diff.max(m);
            }
        }
        width = width.saturating_mul(r);
    }
    Ok(out)
}
