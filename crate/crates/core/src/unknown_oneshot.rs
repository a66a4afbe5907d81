//! One-shot unknown-domain releases with a data-dependent noisy threshold.
//!
//! Both mechanisms only see the `k_bar + 1` highest counts. Items whose
//! noisy value does not clear the noisy `⊥` value are suppressed.

use crate::error::{check_open_unit, check_tau, Error, Result};
use crate::histogram::{LabeledHistogram, NoisyRelease};
use crate::noise::{normal_upper_quantile, NoiseSource, StreamId};

/// The top `min(k_bar + 1, #positive)` entries of a histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitedHistogram {
    top: Vec<(String, u64)>,
    k_bar: usize,
}

impl LimitedHistogram {
    /// Keep positive counts only; ties at the cut go to the smaller label.
    pub fn from_histogram(h: &LabeledHistogram, k_bar: usize) -> Self {
        let top = h
            .sorted_desc()
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .take(k_bar + 1)
            .map(|(u, c)| (u.to_owned(), c))
            .collect();
        LimitedHistogram { top, k_bar }
    }

    pub fn k_bar(&self) -> usize {
        self.k_bar
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.top
    }

    /// The first `k_bar` entries, the ones that may be released.
    pub fn head(&self) -> &[(String, u64)] {
        &self.top[..self.top.len().min(self.k_bar)]
    }

    /// `h_(k_bar + 1)`, or 0 when fewer than `k_bar + 1` items are positive.
    pub fn cut(&self) -> u64 {
        self.top.get(self.k_bar).map_or(0, |e| e.1)
    }
}

/// `h_⊥ = h_(k_bar+1) + 1 + sqrt(2) tau Phi^{-1}(1 - delta)`.
pub fn gauss_threshold(cut: u64, tau: f64, delta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_open_unit("delta", delta)?;
    Ok(cut as f64 + 1.0 + std::f64::consts::SQRT_2 * tau * normal_upper_quantile(delta)?)
}

/// `h_⊥ = h_(k_bar+1) + 1 + tau ln(1/delta)`.
pub fn gumbel_threshold(cut: u64, tau: f64, delta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_open_unit("delta", delta)?;
    Ok(cut as f64 + 1.0 - tau * delta.ln())
}

/// Gaussian release of the top `k_bar` items above a noisy threshold.
///
/// `v_⊥` draws from `id.sub("bottom")`, item `u` from `id.label(u)`.
pub fn unk_gauss(
    h: &LimitedHistogram,
    tau: f64,
    delta: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<NoisyRelease> {
    let v_bot = gauss_threshold(h.cut(), tau, delta)? + src.gaussian(id.sub("bottom"), tau);
    let entries = h
        .head()
        .iter()
        .map(|(u, c)| (u.clone(), *c as f64 + src.gaussian(id.label(u), tau)))
        .filter(|(_, v)| *v > v_bot)
        .collect();
    Ok(NoisyRelease::new(entries, false))
}

/// Gumbel race among the top `k_bar` items with counts above the cut,
/// against a Gumbel-noised `⊥`. Winners get fresh Gaussian counts.
///
/// When fewer than `k` items beat `⊥`, all of them are released and the
/// release carries `bottom = true`.
pub fn unk_gumbel(
    h: &LimitedHistogram,
    k: usize,
    tau: f64,
    delta: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<NoisyRelease> {
    if k > h.k_bar() {
        return Err(Error::KTooLarge {
            k,
            available: h.k_bar(),
        });
    }
    let cut = h.cut();
    let v_bot = gumbel_threshold(cut, tau, delta)? + src.gumbel(id.sub("bottom"), tau / 2.0);
    let sel = id.sub("select");
    let mut race: Vec<(&str, f64)> = h
        .head()
        .iter()
        .filter(|(_, c)| *c > cut)
        .map(|(u, c)| (u.as_str(), *c as f64 + src.gumbel(sel.label(u), tau / 2.0)))
        .filter(|(_, v)| *v > v_bot)
        .collect();
    race.sort_by(|a, b| crate::histogram::desc_then_label(*a, *b));
    let short = race.len() < k;
    let cnt = id.sub("count");
    let lookup = |u: &str| h.entries().iter().find(|e| e.0 == u).map_or(0, |e| e.1);
    let entries = race
        .into_iter()
        .take(k)
        .map(|(u, _)| {
            (
                u.to_owned(),
                lookup(u) as f64 + src.gaussian(cnt.label(u), tau),
            )
        })
        .collect();
    Ok(NoisyRelease::new(entries, short))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim(counts: &[u64], k_bar: usize) -> LimitedHistogram {
        let h: LabeledHistogram = counts
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("i{}", i + 1), *c))
            .collect();
        LimitedHistogram::from_histogram(&h, k_bar)
    }

    fn pairs(r: &NoisyRelease) -> Vec<(&str, f64)> {
        r.entries.iter().map(|(l, v)| (l.as_str(), *v)).collect()
    }

    #[test]
    fn limited_histogram_shape() {
        let h = LabeledHistogram::from_pairs([("a", 3), ("b", 0), ("c", 3), ("d", 1), ("e", 2)]);
        let l = LimitedHistogram::from_histogram(&h, 2);
        assert_eq!(l.entries().len(), 3);
        assert_eq!(l.head()[0].0, "a");
        assert_eq!(l.head()[1].0, "c");
        assert_eq!(l.cut(), 2);
        let l = LimitedHistogram::from_histogram(&h, 10);
        assert_eq!(l.entries().len(), 4);
        assert_eq!(l.cut(), 0);
    }

    #[test]
    fn gauss_noiseless_half_delta() {
        let src = NoiseSource::new(0);
        let r = unk_gauss(&lim(&[10, 8, 5], 2), 0.0, 0.5, &src, StreamId::root("ug")).unwrap();
        assert_eq!(pairs(&r), vec![("i1", 10.0), ("i2", 8.0)]);
        // Threshold 7 + 0: the count 7 ties and is suppressed.
        let r = unk_gauss(&lim(&[10, 7, 6], 2), 0.0, 0.5, &src, StreamId::root("ug")).unwrap();
        assert_eq!(pairs(&r), vec![("i1", 10.0)]);
    }

    #[test]
    fn gauss_threshold_value() {
        let v = gauss_threshold(5, 1.0, 0.01).unwrap();
        assert!((v - (6.0 + std::f64::consts::SQRT_2 * 2.326_347_874_040_841)).abs() < 1e-9);
        assert!((v - 9.29).abs() < 0.005);
        for d in [0.5, 0.1, 1e-6] {
            assert!(gauss_threshold(3, 2.0, d).unwrap() >= 4.0);
        }
    }

    #[test]
    fn gumbel_noiseless_and_guard() {
        let src = NoiseSource::new(0);
        let id = StreamId::root("gb");
        let r = unk_gumbel(&lim(&[10, 8, 5, 3], 3), 2, 0.0, 0.3, &src, id).unwrap();
        assert_eq!(pairs(&r), vec![("i1", 10.0), ("i2", 8.0)]);
        assert!(!r.bottom);
        let r = unk_gumbel(&lim(&[4, 4, 4, 4], 3), 1, 1.0, 0.1, &src, id).unwrap();
        assert!(r.is_empty());
        assert!(r.bottom);
        assert!(matches!(
            unk_gumbel(&lim(&[4, 3], 1), 2, 1.0, 0.1, &src, id),
            Err(Error::KTooLarge { .. })
        ));
    }

    #[test]
    fn suppression_soundness_and_no_foreign_labels() {
        let h = lim(&[12, 9, 9, 7, 4, 2], 4);
        let src = NoiseSource::new(17);
        for trial in 0..2000 {
            let id = StreamId::root("ss").aux(trial);
            let r = unk_gauss(&h, 2.0, 0.05, &src, id).unwrap();
            let v_bot =
                gauss_threshold(h.cut(), 2.0, 0.05).unwrap() + src.gaussian(id.sub("bottom"), 2.0);
            for (u, v) in &r.entries {
                assert!(*v > v_bot);
                assert!(h.head().iter().any(|e| &e.0 == u));
            }
            let g = unk_gumbel(&h, 3, 2.0, 0.05, &src, id).unwrap();
            assert!(g.len() <= 3);
            assert!(g.labels().all(|u| h.head().iter().any(|e| e.0 == u)));
        }
    }

    #[test]
    fn bottom_frequency_grows_as_delta_shrinks() {
        let h = lim(&[9, 8, 6, 3], 3);
        let src = NoiseSource::new(2);
        let freq = |delta: f64| {
            (0..20_000u64)
                .filter(|&t| {
                    unk_gumbel(&h, 2, 1.0, delta, &src, StreamId::root("bf").aux(t))
                        .unwrap()
                        .bottom
                })
                .count()
        };
        let f: Vec<usize> = [0.1, 0.01, 0.001].iter().map(|d| freq(*d)).collect();
        assert!(f[0] < f[1] && f[1] < f[2], "{f:?}");
    }
}
