//! Partial histogram tables with a one-shot mechanism applied per cell.
//!
//! Needs the whole stream up front. Each cell of the base-r table holds the
//! histogram of its substream; the per-cell mechanism runs at scale
//! `sqrt(L_r) tau` (and `delta / L_r` for the unknown-domain quadrants), and
//! the release at round `t` sums the noisy cell releases over `I_t(r)`.
//!
//! A label missing from some contributing cell's release counts as 0 there.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::accounting::Quadrant;
use crate::error::{check_open_unit, Error, Result};
use crate::histogram::{check_stream, Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::known::{known_gauss, known_gumbel_topk};
use crate::noise::{NoiseSource, StreamId};
use crate::tree::{decompose, Cell, TreeParams};
use crate::unknown_oneshot::{unk_gauss, unk_gumbel, LimitedHistogram};

/// Histogram of every complete cell's substream.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialHistogramTable {
    r: usize,
    t_max: usize,
    cells: BTreeMap<Cell, LabeledHistogram>,
}

impl PartialHistogramTable {
    /// Build over `stream` (at most `params.t_max` rounds). With a `domain`,
    /// every cell lists every domain label, zero counts included.
    pub fn build(stream: &[Event], params: &TreeParams, domain: Option<&[String]>) -> Result<Self> {
        check_stream(stream, params.t_max, None, None)?;
        let r = params.r as u64;
        let n = stream.len() as u64;
        let mut cells = BTreeMap::new();
        let mut width = 1u64;
        for level in 1..=params.levels {
            for j in 1..=n / width {
                let lo = ((j - 1) * width) as usize;
                let hi = (j * width) as usize;
                let slice = &stream[lo..hi];
                let h = match domain {
                    Some(d) => LabeledHistogram::of_events_over(d, slice),
                    None => LabeledHistogram::of_events(slice),
                };
                cells.insert(Cell::new(level, j), h);
            }
            width = width.saturating_mul(r);
        }
        Ok(PartialHistogramTable {
            r: params.r,
            t_max: params.t_max,
            cells,
        })
    }

    pub fn get(&self, cell: Cell) -> Option<&LabeledHistogram> {
        self.cells.get(&cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, &LabeledHistogram)> {
        self.cells.iter().map(|(c, h)| (*c, h))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }
}

/// Which per-cell mechanism to use, plus what it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantSelector {
    pub quadrant: Quadrant,
    /// Required for the known-domain quadrants, rejected otherwise.
    pub domain: Option<Vec<String>>,
    /// Cut-off for the unknown-domain quadrants.
    pub k_bar: Option<usize>,
}

impl QuadrantSelector {
    pub fn known(quadrant: Quadrant, domain: Vec<String>) -> Self {
        QuadrantSelector {
            quadrant,
            domain: Some(domain),
            k_bar: None,
        }
    }

    pub fn unknown(quadrant: Quadrant, k_bar: usize) -> Self {
        QuadrantSelector {
            quadrant,
            domain: None,
            k_bar: Some(k_bar),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.quadrant.code();
        match (self.quadrant.domain_known(), &self.domain, self.k_bar) {
            (true, None, _) => {
                return Err(Error::Usage(format!("quadrant {q} needs a domain")));
            }
            (false, Some(_), _) => {
                return Err(Error::Usage(format!(
                    "quadrant {q} is for unknown domains; do not pass a domain"
                )));
            }
            (false, None, None) | (false, None, Some(0)) => {
                return Err(Error::Usage(format!("quadrant {q} needs k_bar >= 1")));
            }
            _ => {}
        }
        match self.quadrant {
            Quadrant::KnownRestricted { delta0 } | Quadrant::UnknownRestricted { delta0 }
                if delta0 == 0 =>
            {
                Err(Error::param("delta0", "must be at least 1"))
            }
            Quadrant::KnownUnrestricted { k } | Quadrant::UnknownUnrestricted { k } if k == 0 => {
                Err(Error::param("k", "must be at least 1"))
            }
            Quadrant::KnownUnrestricted { k } => {
                let d = self.domain.as_ref().map_or(0, Vec::len);
                if k > d {
                    Err(Error::KTooLarge { k, available: d })
                } else {
                    Ok(())
                }
            }
            Quadrant::UnknownUnrestricted { k } => {
                let kb = self.k_bar.unwrap_or(0);
                if k > kb {
                    Err(Error::KTooLarge { k, available: kb })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Meta mechanism over a fixed stream, noising cells on first use.
///
/// Cell `(i, j)` uses the id `id.cell(i, j)` for its one-shot mechanism,
/// so in the known restricted quadrant label `u` of that cell draws from
/// the same key as a [`KnownBase`](crate::known::KnownBase) counter built
/// with the same `id`.
#[derive(Debug, Clone)]
pub struct Meta {
    table: PartialHistogramTable,
    selector: QuadrantSelector,
    params: TreeParams,
    delta: f64,
    src: NoiseSource,
    id: StreamId,
    cache: HashMap<Cell, NoisyRelease>,
    len: usize,
}

impl Meta {
    /// `delta` is only read by the unknown-domain quadrants.
    pub fn new(
        stream: &[Event],
        selector: QuadrantSelector,
        params: TreeParams,
        delta: f64,
        src: NoiseSource,
        id: StreamId,
    ) -> Result<Self> {
        selector.validate()?;
        let delta0 = match selector.quadrant {
            Quadrant::KnownRestricted { delta0 } | Quadrant::UnknownRestricted { delta0 } => {
                Some(delta0)
            }
            _ => None,
        };
        let dom: Option<BTreeSet<String>> = selector
            .domain
            .as_ref()
            .map(|d| d.iter().cloned().collect());
        check_stream(stream, params.t_max, delta0, dom.as_ref())?;
        if !selector.quadrant.domain_known() {
            check_open_unit("delta", delta)?;
        }
        let domain: Option<Vec<String>> = dom.map(|d| d.into_iter().collect());
        let table = PartialHistogramTable::build(stream, &params, domain.as_deref())?;
        Ok(Meta {
            table,
            selector,
            params,
            delta,
            src,
            id,
            cache: HashMap::new(),
            len: stream.len(),
        })
    }

    pub fn table(&self) -> &PartialHistogramTable {
        &self.table
    }

    /// Per-cell noise scale `sqrt(L_r) tau`.
    pub fn cell_tau(&self) -> f64 {
        self.params.cell_sigma()
    }

    /// Noisy release of one cell, computed on first request.
    pub fn cell_release(&mut self, cell: Cell) -> Result<&NoisyRelease> {
        if !self.cache.contains_key(&cell) {
            let h = self
                .table
                .get(cell)
                .ok_or_else(|| Error::Usage(format!("cell {cell:?} is outside the stream")))?;
            let tau = self.params.cell_sigma();
            let cell_delta = self.delta / f64::from(self.params.levels);
            let id = cell.stream(self.id);
            let rel = match self.selector.quadrant {
                Quadrant::KnownRestricted { .. } => known_gauss(h, tau, &self.src, id)?,
                Quadrant::KnownUnrestricted { k } => known_gumbel_topk(h, k, tau, &self.src, id)?,
                Quadrant::UnknownRestricted { .. } => {
                    let lim = LimitedHistogram::from_histogram(h, self.k_bar());
                    unk_gauss(&lim, tau, cell_delta, &self.src, id)?
                }
                Quadrant::UnknownUnrestricted { k } => {
                    let lim = LimitedHistogram::from_histogram(h, self.k_bar());
                    unk_gumbel(&lim, k, tau, cell_delta, &self.src, id)?
                }
            };
            self.cache.insert(cell, rel);
        }
        Ok(&self.cache[&cell])
    }

    fn k_bar(&self) -> usize {
        self.selector.k_bar.unwrap_or(0)
    }

    /// Aggregated release at round `t` (1-based).
    pub fn release_at(&mut self, t: usize) -> Result<NoisyRelease> {
        if t == 0 || t > self.len {
            return Err(Error::HorizonExceeded {
                round: t,
                t_max: self.len,
            });
        }
        let cells = decompose(t as u64, self.params.r)?.cells;
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for c in cells {
            for (u, v) in &self.cell_release(c)?.entries {
                match sums.get_mut(u) {
                    Some(s) => *s += v,
                    None => {
                        sums.insert(u.clone(), 0.0 + v);
                    }
                }
            }
        }
        Ok(NoisyRelease::new(sums.into_iter().collect(), false))
    }
}

/// Releases for every round of `stream`.
pub fn meta_run(
    stream: &[Event],
    selector: QuadrantSelector,
    params: TreeParams,
    delta: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<ReleaseSequence> {
    let mut m = Meta::new(stream, selector, params, delta, *src, id)?;
    (1..=stream.len()).map(|t| m.release_at(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{event, running_histograms};
    use crate::known::known_base;
    use crate::noise::StreamId;

    fn dom(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("u{i}")).collect()
    }

    fn stream(seed: u64, d: usize, t: usize, max: usize) -> Vec<Event> {
        use rand::Rng;
        let mut rng = NoiseSource::new(seed).rng(StreamId::root("ms"));
        (0..t)
            .map(|_| {
                let n = rng.random_range(0..=max);
                event((0..n).map(|_| format!("u{}", rng.random_range(0..d))))
            })
            .collect()
    }

    #[test]
    fn cells_match_brute_force() {
        for r in [2usize, 3, 4] {
            let s = stream(r as u64, 5, 64, 3);
            let p = TreeParams::new(64, r, 1.0).unwrap();
            let tab = PartialHistogramTable::build(&s, &p, None).unwrap();
            for (c, h) in tab.iter() {
                let (lo, hi) = c.interval(r);
                let want = LabeledHistogram::of_events(&s[lo as usize - 1..hi as usize]);
                assert_eq!(h, &want);
            }
            let n: usize = (1..=p.levels).map(|i| p.cells_on_level(i) as usize).sum();
            assert_eq!(tab.len(), n);
        }
    }

    #[test]
    fn known_restricted_noiseless_and_matches_known_base() {
        let d = dom(4);
        let s = stream(1, 4, 50, 2);
        let sel = QuadrantSelector::known(Quadrant::KnownRestricted { delta0: 2 }, d.clone());
        let p0 = TreeParams::new(50, 3, 0.0).unwrap();
        let src = NoiseSource::new(3);
        let id = StreamId::root("known-base");
        let out = meta_run(&s, sel.clone(), p0, 0.1, &src, id).unwrap();
        for (r, h) in out.iter().zip(running_histograms(&s)) {
            for u in &d {
                assert_eq!(r.get(u).unwrap(), h.get(u) as f64);
            }
        }
        let p = p0.with_tau(1.3).unwrap();
        let a = meta_run(&s, sel, p, 0.1, &src, id).unwrap();
        let b = known_base(&s, &d, 2, p, &src, id).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_cell_suppression() {
        // Every cell count is 1, so with tau = 0 every cell is suppressed.
        let s: Vec<Event> = (0..8).map(|t| event([format!("x{t}")])).collect();
        let sel = QuadrantSelector::unknown(Quadrant::UnknownRestricted { delta0: 1 }, 3);
        let p = TreeParams::new(8, 2, 0.0).unwrap();
        let out = meta_run(&s, sel, p, 0.1, &NoiseSource::new(0), StreamId::root("m")).unwrap();
        assert!(out.iter().all(NoisyRelease::is_empty));
    }

    #[test]
    fn unknown_noiseless_truncation() {
        let s: Vec<Event> = (0..16)
            .map(|_| event(["a", "b"]))
            .chain((0..16).map(|_| event(["a"])))
            .collect();
        let sel = QuadrantSelector::unknown(Quadrant::UnknownRestricted { delta0: 2 }, 4);
        let p = TreeParams::new(32, 2, 0.0).unwrap();
        let out = meta_run(&s, sel, p, 0.1, &NoiseSource::new(0), StreamId::root("m")).unwrap();
        // Round 32 is a single cell with a: 32, b: 16.
        assert_eq!(out.round(32).get("a"), Some(32.0));
        assert_eq!(out.round(32).get("b"), Some(16.0));
        // Round 3: cells [1,2] (a:2, b:2) and [3,3] (a:1, b:1, both suppressed).
        assert_eq!(out.round(3).get("a"), Some(2.0));
    }

    #[test]
    fn known_unrestricted_noiseless_argmax() {
        let d = dom(3);
        let s: Vec<Event> = (0..9)
            .map(|t| {
                event(if t % 3 == 0 {
                    vec!["u0", "u1"]
                } else {
                    vec!["u0"]
                })
            })
            .collect();
        let sel = QuadrantSelector::known(Quadrant::KnownUnrestricted { k: 1 }, d);
        let p = TreeParams::new(9, 3, 0.0).unwrap();
        let out = meta_run(&s, sel, p, 0.1, &NoiseSource::new(0), StreamId::root("m")).unwrap();
        for (t, r) in out.iter().enumerate() {
            assert_eq!(r.top().unwrap(), ("u0", (t + 1) as f64));
        }
    }

    #[test]
    fn selector_mismatches() {
        let s = vec![event(["a"])];
        let p = TreeParams::new(1, 2, 1.0).unwrap();
        let src = NoiseSource::new(0);
        let id = StreamId::root("m");
        let bad = [
            QuadrantSelector {
                quadrant: Quadrant::KnownRestricted { delta0: 1 },
                domain: None,
                k_bar: None,
            },
            QuadrantSelector {
                quadrant: Quadrant::UnknownRestricted { delta0: 1 },
                domain: Some(vec!["a".into()]),
                k_bar: Some(2),
            },
            QuadrantSelector::unknown(Quadrant::UnknownUnrestricted { k: 3 }, 2),
            QuadrantSelector::unknown(Quadrant::UnknownRestricted { delta0: 1 }, 0),
        ];
        for sel in bad {
            let e = meta_run(&s, sel, p, 0.1, &src, id).unwrap_err();
            assert!(e.is_usage());
        }
    }

    #[test]
    fn lazy_cells() {
        let s = stream(4, 3, 40, 2);
        let sel = QuadrantSelector::known(Quadrant::KnownRestricted { delta0: 2 }, dom(3));
        let p = TreeParams::new(40, 2, 1.0).unwrap();
        let mut m = Meta::new(&s, sel, p, 0.1, NoiseSource::new(1), StreamId::root("m")).unwrap();
        m.release_at(8).unwrap();
        assert_eq!(m.cache.len(), 1);
        m.release_at(7).unwrap();
        assert_eq!(m.cache.len(), 4);
    }
}
