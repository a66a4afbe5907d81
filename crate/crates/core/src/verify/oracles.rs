//! Two-neighbor proof mechanisms.
//!
//! These take both neighbors and a bit `b`, relabel the two histograms onto
//! a common label set, and add Gaussian noise to the side picked by `b`.
//! They exist to check the relabeling invariants and to compare the real
//! mechanisms against them on outcomes both neighbors can produce.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::{Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::meta::PartialHistogramTable;
use crate::noise::{NoiseSource, StreamId};
use crate::tree::{decompose, Cell, TreeParams};
use crate::unknown_continual::m_delta;
use crate::unknown_oneshot::gauss_threshold;
use crate::verify::neighbors::{HistogramPair, StreamPair};

/// Labels of a relabeled histogram. `Dummy(j)` is the padding label `⊤_j`,
/// `Bad(l)` the shared label `B_l` given to the `l`-th uncommon entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum OracleLabel {
    Item(String),
    Dummy(usize),
    Bad(usize),
    Bottom,
}

impl OracleLabel {
    fn key(&self, id: StreamId) -> StreamId {
        match self {
            OracleLabel::Item(u) => id.label(u),
            OracleLabel::Dummy(j) => id.sub("dummy").aux(*j as u64),
            OracleLabel::Bad(l) => id.sub("bad").aux(*l as u64),
            OracleLabel::Bottom => id.sub("bottom"),
        }
    }

    fn count(&self, h: &LabeledHistogram) -> u64 {
        match self {
            OracleLabel::Item(u) => h.get(u),
            _ => 0,
        }
    }
}

/// A histogram over oracle labels, in construction order.
pub type OracleHistogram = Vec<(OracleLabel, f64)>;

/// `D̄^k(h)` without `⊥`: the top `k` positive items, padded with
/// `⊤_1, ..., ⊤_{k-p}` when only `p < k` items are positive.
pub fn padded_domain(h: &LabeledHistogram, k: usize) -> Vec<OracleLabel> {
    let mut out: Vec<OracleLabel> = h
        .sorted_desc()
        .into_iter()
        .filter(|(_, c)| *c > 0)
        .take(k)
        .map(|(u, _)| OracleLabel::Item(u.to_owned()))
        .collect();
    let p = out.len();
    out.extend((1..=k - p).map(OracleLabel::Dummy));
    out
}

/// `h_(k+1)`: the count of the `(k+1)`-th item, 0 if there is none.
fn cut(h: &LabeledHistogram, k: usize) -> u64 {
    h.sorted_desc().get(k).map_or(0, |e| e.1)
}

/// Noiseless relabeled histograms `v^(0)` and `v^(1)` of one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelabeledPair {
    pub v0: OracleHistogram,
    pub v1: OracleHistogram,
    /// Uncommon entries per side.
    pub bad: usize,
}

impl RelabeledPair {
    pub fn get(&self, b: bool) -> &OracleHistogram {
        if b {
            &self.v1
        } else {
            &self.v0
        }
    }

    fn as_map(v: &OracleHistogram) -> BTreeMap<&OracleLabel, f64> {
        v.iter().map(|(l, c)| (l, *c)).collect()
    }

    /// Both sides carry exactly the same labels.
    pub fn aligned(&self) -> bool {
        let a: BTreeSet<_> = self.v0.iter().map(|e| &e.0).collect();
        let b: BTreeSet<_> = self.v1.iter().map(|e| &e.0).collect();
        a == b && a.len() == self.v0.len() && b.len() == self.v1.len()
    }

    /// Aligned bins whose counts differ, `⊥` included, and the largest gap.
    pub fn changed(&self) -> (usize, f64) {
        let a = Self::as_map(&self.v0);
        let b = Self::as_map(&self.v1);
        let mut n = 0;
        let mut gap = 0.0f64;
        for (l, x) in &a {
            let y = b.get(l).copied().unwrap_or(0.0);
            if x != &y {
                n += 1;
                gap = gap.max((x - y).abs());
            }
        }
        (n, gap)
    }

    /// Check the invariants a Gaussian mechanism on `v` relies on.
    pub fn check(&self, delta0: usize) -> std::result::Result<(), String> {
        if !self.aligned() {
            return Err("label sets differ".into());
        }
        if self.bad > delta0 {
            return Err(format!("{} bad labels, delta0 = {delta0}", self.bad));
        }
        let (n, gap) = self.changed();
        if n > delta0 {
            return Err(format!("{n} bins changed, delta0 = {delta0}"));
        }
        if gap > 1.0 + 1e-12 {
            return Err(format!("count gap {gap}"));
        }
        Ok(())
    }
}

/// Relabel a pair over the limited padded domains `D̄^k(h^(b))`.
///
/// Common labels keep their counts, the `l`-th uncommon entry of each side
/// (in padded-domain order) becomes `B_l`, and `⊥` gets
/// `h_(k+1) + 1 + sqrt(2) tau Phi^{-1}(1 - delta)`.
pub fn relabel_limited(
    pair: &HistogramPair,
    k_bar: usize,
    tau: f64,
    delta: f64,
) -> Result<RelabeledPair> {
    if k_bar == 0 {
        return Err(Error::param("k_bar", "must be at least 1"));
    }
    let d0 = padded_domain(pair.get(false), k_bar);
    let d1 = padded_domain(pair.get(true), k_bar);
    let side = |b: bool| -> Result<OracleHistogram> {
        let h = pair.get(b);
        let (mine, other) = if b { (&d1, &d0) } else { (&d0, &d1) };
        let mut v: OracleHistogram = mine
            .iter()
            .filter(|l| other.contains(l))
            .map(|l| (l.clone(), l.count(h) as f64))
            .collect();
        let uncommon = mine.iter().filter(|l| !other.contains(l));
        v.extend(
            uncommon
                .enumerate()
                .map(|(i, l)| (OracleLabel::Bad(i + 1), l.count(h) as f64)),
        );
        v.push((
            OracleLabel::Bottom,
            gauss_threshold(cut(h, k_bar), tau, delta)?,
        ));
        Ok(v)
    };
    Ok(RelabeledPair {
        v0: side(false)?,
        v1: side(true)?,
        bad: d0.iter().filter(|l| !d1.contains(l)).count(),
    })
}

/// Relabel a pair over the full padded domains `D̄^d(h^(b))`.
///
/// An uncommon item keeps its label when its count is at least the other
/// side's. An uncommon dummy takes, in order, the next real label from the
/// set of items that occur on one side only, with count 0.
pub fn relabel_full(pair: &HistogramPair, d_bar: usize) -> Result<RelabeledPair> {
    let support = |b: bool| pair.get(b).iter().filter(|(_, c)| *c > 0).count();
    let need = support(false).max(support(true));
    if d_bar < need {
        return Err(Error::param(
            "d_bar",
            format!("{d_bar} is below the support size {need}"),
        ));
    }
    let d0 = padded_domain(pair.get(false), d_bar);
    let d1 = padded_domain(pair.get(true), d_bar);
    let mut pool: Vec<&OracleLabel> = d0
        .iter()
        .filter(|l| !d1.contains(l))
        .chain(d1.iter().filter(|l| !d0.contains(l)))
        .filter(|l| matches!(l, OracleLabel::Item(_)))
        .collect();
    pool.sort();
    let side = |b: bool| -> Result<OracleHistogram> {
        let (h, g) = (pair.get(b), pair.get(!b));
        let (mine, other) = if b { (&d1, &d0) } else { (&d0, &d1) };
        let mut v: OracleHistogram = mine
            .iter()
            .filter(|l| other.contains(l))
            .map(|l| (l.clone(), l.count(h) as f64))
            .collect();
        let mut free = pool.iter();
        for l in mine.iter().filter(|l| !other.contains(l)) {
            match l {
                OracleLabel::Item(_) if l.count(h) >= l.count(g) => {
                    v.push((l.clone(), l.count(h) as f64))
                }
                _ => {
                    let a = free.find(|a| !mine.contains(a)).ok_or_else(|| {
                        Error::NotNeighbors("no free label for an uncommon entry".into())
                    })?;
                    v.push(((*a).clone(), 0.0));
                }
            }
        }
        Ok(v)
    };
    Ok(RelabeledPair {
        v0: side(false)?,
        v1: side(true)?,
        bad: d0.iter().filter(|l| !d1.contains(l)).count(),
    })
}

fn add_noise(v: &OracleHistogram, tau: f64, src: &NoiseSource, id: StreamId) -> OracleHistogram {
    v.iter()
        .map(|(l, c)| (l.clone(), c + src.gaussian(l.key(id), tau)))
        .collect()
}

/// Gaussian mechanism over the limited relabeled domain, side `b`.
#[allow(clippy::too_many_arguments)]
pub fn gauss_mech_bot(
    b: bool,
    pair: &HistogramPair,
    k_bar: usize,
    tau: f64,
    delta: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<OracleHistogram> {
    let v = relabel_limited(pair, k_bar, tau, delta)?;
    Ok(add_noise(v.get(b), tau, src, id))
}

/// Gaussian mechanism over the full relabeled domain, side `b`.
pub fn gauss_mech_full(
    b: bool,
    pair: &HistogramPair,
    d_bar: usize,
    tau: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<OracleHistogram> {
    let v = relabel_full(pair, d_bar)?;
    Ok(add_noise(v.get(b), tau, src, id))
}

/// Keep entries strictly above `⊥`, drop `⊥` and dummies, sort descending.
pub fn above_bottom(v: &OracleHistogram) -> OracleHistogram {
    let bot = v
        .iter()
        .find(|e| e.0 == OracleLabel::Bottom)
        .map_or(f64::NEG_INFINITY, |e| e.1);
    let mut out: OracleHistogram = v
        .iter()
        .filter(|(l, x)| matches!(l, OracleLabel::Item(_) | OracleLabel::Bad(_)) && *x > bot)
        .cloned()
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// The one-shot mechanism on a padded domain: every padding label gets
/// noise too, and is dropped after the cut at `⊥`.
pub fn unk_gauss_top(
    h: &LabeledHistogram,
    k_bar: usize,
    tau: f64,
    delta: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<NoisyRelease> {
    let pair = HistogramPair::new(h.clone(), h.clone(), 1)?;
    let v = gauss_mech_bot(false, &pair, k_bar, tau, delta, src, id)?;
    Ok(to_release(&above_bottom(&v)))
}

fn to_release(v: &OracleHistogram) -> NoisyRelease {
    let entries = v
        .iter()
        .filter_map(|(l, x)| match l {
            OracleLabel::Item(u) => Some((u.clone(), *x)),
            _ => None,
        })
        .collect();
    NoisyRelease::new(entries, false)
}

/// Per-cell state of the continual oracle: noisy values by item, and the
/// remaining padding values, largest index last.
#[derive(Debug, Clone)]
struct CellState {
    items: BTreeMap<String, f64>,
    dummies: Vec<f64>,
}

/// The continual unknown-domain mechanism built from per-cell full-domain
/// Gaussian mechanisms on side `b` of a stream pair.
///
/// Each cell of the table gets `gauss_mech_full` at scale `sqrt(L_r) tau`.
/// At round `t`, every item seen by round `t` in either stream takes over
/// the highest-index padding value in each prefix cell that lacks it; the
/// cells are summed and the items side `b` has seen that clear `m_delta`
/// are released.
#[allow(clippy::too_many_arguments)]
pub fn unk_base_oracle(
    b: bool,
    pair: &StreamPair,
    d_bar: usize,
    params: TreeParams,
    delta: f64,
    delta0: usize,
    src: &NoiseSource,
    id: StreamId,
) -> Result<ReleaseSequence> {
    if pair.len() > params.t_max {
        return Err(Error::StreamTooLong {
            len: pair.len(),
            t_max: params.t_max,
        });
    }
    let m = m_delta(&params, delta)?;
    let t0 = PartialHistogramTable::build(pair.stream(false), &params, None)?;
    let t1 = PartialHistogramTable::build(pair.stream(true), &params, None)?;
    let mut cells: HashMap<Cell, CellState> = HashMap::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut own: BTreeSet<String> = BTreeSet::new();
    let mut rounds = Vec::with_capacity(pair.len());
    for t in 1..=pair.len() {
        for s in [false, true] {
            seen.extend(pair.stream(s)[t - 1].iter().cloned());
        }
        own.extend(pair.stream(b)[t - 1].iter().cloned());
        let prefix = decompose(t as u64, params.r)?.cells;
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for c in &prefix {
            if !cells.contains_key(c) {
                let empty = LabeledHistogram::new();
                let cp = HistogramPair::new(
                    t0.get(*c).unwrap_or(&empty).clone(),
                    t1.get(*c).unwrap_or(&empty).clone(),
                    delta0,
                )?;
                let v = gauss_mech_full(b, &cp, d_bar, params.cell_sigma(), src, c.stream(id))?;
                let mut st = CellState {
                    items: BTreeMap::new(),
                    dummies: Vec::new(),
                };
                let mut dummies: Vec<(usize, f64)> = Vec::new();
                for (l, x) in v {
                    match l {
                        OracleLabel::Item(u) => {
                            st.items.insert(u, x);
                        }
                        OracleLabel::Dummy(j) => dummies.push((j, x)),
                        _ => unreachable!("full-domain relabeling yields items and dummies only"),
                    }
                }
                dummies.sort_by_key(|e| e.0);
                st.dummies = dummies.into_iter().map(|e| e.1).collect();
                cells.insert(*c, st);
            }
            let st = cells.get_mut(c).expect("cell inserted above");
            for u in &seen {
                if !st.items.contains_key(u) {
                    let x = st.dummies.pop().ok_or_else(|| {
                        Error::param("d_bar", format!("too small for {} items", seen.len()))
                    })?;
                    st.items.insert(u.clone(), x);
                }
            }
            for u in &seen {
                let x = st.items[u];
                match sums.get_mut(u.as_str()) {
                    Some(s) => *s += x,
                    None => {
                        sums.insert(u.as_str(), 0.0 + x);
                    }
                }
            }
        }
        // A label side b has not seen sits in a dummy slot here; drop it
        // like any other dummy.
        let entries = sums
            .into_iter()
            .filter(|(u, v)| *v > m && own.contains(*u))
            .map(|(u, v)| (u.to_owned(), v))
            .collect();
        rounds.push(NoisyRelease::new(entries, false));
    }
    Ok(rounds.into_iter().collect())
}

/// The continual mechanism with every cell padded to `d_bar` labels.
pub fn unk_base_top(
    stream: &[Event],
    d_bar: usize,
    params: TreeParams,
    delta: f64,
    delta0: usize,
    src: &NoiseSource,
    id: StreamId,
) -> Result<ReleaseSequence> {
    let pair = StreamPair::new(stream.to_vec(), stream.to_vec())?;
    unk_base_oracle(false, &pair, d_bar, params, delta, delta0, src, id)
}
