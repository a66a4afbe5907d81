//! Histograms, event streams and released outputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One round's event: the set of items contributed at that round.
pub type Event = BTreeSet<String>;

/// Build an event from anything yielding labels.
pub fn event<I, S>(items: I) -> Event
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    items.into_iter().map(Into::into).collect()
}

/// Descending by value, then ascending by label.
pub fn desc_then_label(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Map from label to non-negative count. Iteration order is lexicographic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledHistogram {
    counts: BTreeMap<String, u64>,
}

impl LabeledHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        LabeledHistogram {
            counts: pairs.into_iter().map(|(l, c)| (l.into(), c)).collect(),
        }
    }

    /// Histogram of a stream prefix, over the labels that occur in it.
    pub fn of_events<'a, I>(events: I) -> Self
    where
        I: IntoIterator<Item = &'a Event>,
    {
        let mut h = LabeledHistogram::new();
        for e in events {
            h.add_event(e);
        }
        h
    }

    /// Histogram of a stream prefix over a fixed domain; zero counts kept.
    pub fn of_events_over<'a, I>(domain: &[String], events: I) -> Self
    where
        I: IntoIterator<Item = &'a Event>,
    {
        let mut h = LabeledHistogram::from_pairs(domain.iter().map(|u| (u.clone(), 0)));
        for e in events {
            h.add_event(e);
        }
        h
    }

    pub fn add_event(&mut self, e: &Event) {
        for u in e {
            *self.counts.entry(u.clone()).or_insert(0) += 1;
        }
    }

    pub fn add(&mut self, label: &str, by: u64) {
        *self.counts.entry(label.to_owned()).or_insert(0) += by;
    }

    pub fn insert(&mut self, label: impl Into<String>, count: u64) {
        self.counts.insert(label.into(), count);
    }

    /// Count of `label`; 0 when absent.
    pub fn get(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.counts.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(l, c)| (l.as_str(), *c))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Entries sorted by count descending, ties by label ascending.
    pub fn sorted_desc(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Largest count and the first label attaining it (lexicographic).
    pub fn argmax(&self) -> Option<(&str, u64)> {
        self.sorted_desc().into_iter().next()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// Number of labels whose counts differ, and the largest difference.
    pub fn diff(&self, other: &LabeledHistogram) -> (usize, u64) {
        let labels: BTreeSet<&str> = self.labels().chain(other.labels()).collect();
        let mut changed = 0;
        let mut max = 0;
        for l in labels {
            let d = self.get(l).abs_diff(other.get(l));
            if d > 0 {
                changed += 1;
                max = max.max(d);
            }
        }
        (changed, max)
    }

    /// Drop zero-count labels.
    pub fn positive(&self) -> LabeledHistogram {
        LabeledHistogram {
            counts: self
                .counts
                .iter()
                .filter(|(_, c)| **c > 0)
                .map(|(l, c)| (l.clone(), *c))
                .collect(),
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for LabeledHistogram {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        LabeledHistogram::from_pairs(iter)
    }
}

/// A released (noisy) histogram: labels with real-valued counts, sorted
/// descending with a lexicographic tie-break. `bottom` marks an explicit
/// `⊥` in the output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoisyRelease {
    pub entries: Vec<(String, f64)>,
    pub bottom: bool,
}

impl NoisyRelease {
    pub fn new(mut entries: Vec<(String, f64)>, bottom: bool) -> Self {
        entries.sort_by(|a, b| desc_then_label((&a.0, a.1), (&b.0, b.1)));
        NoisyRelease { entries, bottom }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.get(label).is_some()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    /// Highest released entry.
    pub fn top(&self) -> Option<(&str, f64)> {
        self.entries.first().map(|(l, v)| (l.as_str(), *v))
    }
}

/// Per-round releases, index 0 holding round 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSequence {
    pub rounds: Vec<NoisyRelease>,
}

impl ReleaseSequence {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Release at round `t` (1-based).
    pub fn round(&self, t: usize) -> &NoisyRelease {
        &self.rounds[t - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &NoisyRelease> {
        self.rounds.iter()
    }

    /// Every label released in some round.
    pub fn released_labels(&self) -> BTreeSet<&str> {
        self.rounds.iter().flat_map(|r| r.labels()).collect()
    }
}

impl FromIterator<NoisyRelease> for ReleaseSequence {
    fn from_iter<I: IntoIterator<Item = NoisyRelease>>(iter: I) -> Self {
        ReleaseSequence {
            rounds: iter.into_iter().collect(),
        }
    }
}

/// Exact running histograms `h(omega_{1:t})` for every `t`, over the labels
/// seen so far.
pub fn running_histograms(stream: &[Event]) -> Vec<LabeledHistogram> {
    let mut h = LabeledHistogram::new();
    stream
        .iter()
        .map(|e| {
            h.add_event(e);
            h.clone()
        })
        .collect()
}

/// Check the common stream preconditions.
pub fn check_stream(
    stream: &[Event],
    t_max: usize,
    delta0: Option<usize>,
    domain: Option<&BTreeSet<String>>,
) -> Result<()> {
    if stream.len() > t_max {
        return Err(Error::StreamTooLong {
            len: stream.len(),
            t_max,
        });
    }
    for (i, e) in stream.iter().enumerate() {
        if let Some(d0) = delta0 {
            if e.len() > d0 {
                return Err(Error::EventTooLarge {
                    round: i + 1,
                    size: e.len(),
                    delta0: d0,
                });
            }
        }
        if let Some(dom) = domain {
            if let Some(u) = e.iter().find(|u| !dom.contains(*u)) {
                return Err(Error::ItemOutsideDomain {
                    label: u.clone(),
                    round: i + 1,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_desc_breaks_ties_by_label() {
        let h = LabeledHistogram::from_pairs([("b", 5), ("a", 5), ("c", 7)]);
        assert_eq!(h.sorted_desc(), vec![("c", 7), ("a", 5), ("b", 5)]);
        assert_eq!(h.argmax(), Some(("c", 7)));
    }

    #[test]
    fn release_is_sorted() {
        let r = NoisyRelease::new(
            vec![("x".into(), 1.0), ("b".into(), 3.0), ("a".into(), 3.0)],
            false,
        );
        let labels: Vec<&str> = r.labels().collect();
        assert_eq!(labels, ["a", "b", "x"]);
    }

    #[test]
    fn running_counts() {
        let s = vec![event(["a"]), event(["a", "b"]), event(["b"])];
        let hs = running_histograms(&s);
        assert_eq!(hs[2], LabeledHistogram::from_pairs([("a", 2), ("b", 2)]));
        assert_eq!(hs[0].get("b"), 0);
    }

    #[test]
    fn stream_checks() {
        let s = vec![event(["a", "b"]), Event::new()];
        assert!(check_stream(&s, 2, Some(2), None).is_ok());
        assert!(matches!(
            check_stream(&s, 1, None, None),
            Err(Error::StreamTooLong { .. })
        ));
        assert!(matches!(
            check_stream(&s, 2, Some(1), None),
            Err(Error::EventTooLarge { round: 1, .. })
        ));
        let dom: BTreeSet<String> = ["a".to_string()].into();
        assert!(matches!(
            check_stream(&s, 2, None, Some(&dom)),
            Err(Error::ItemOutsideDomain { .. })
        ));
    }

    #[test]
    fn diff_counts_changed_bins() {
        let a = LabeledHistogram::from_pairs([("a", 3), ("b", 1)]);
        let b = LabeledHistogram::from_pairs([("a", 2), ("c", 1)]);
        assert_eq!(a.diff(&b), (3, 1));
        assert_eq!(a.diff(&a), (0, 0));
    }
}
