//! Known-domain mechanisms: one-shot Gaussian and Gumbel top-k releases,
//! and the continual per-item tree counter.

use std::collections::BTreeSet;

use crate::error::{check_tau, Error, Result};
use crate::histogram::{check_stream, Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::noise::{NoiseSource, StreamId};
use crate::tree::{IncrementalCounter, TreeParams};

/// Every label of `h` (zero counts included) with `N(0, tau^2)` added.
/// Label `u` draws from `id.label(u)`.
pub fn known_gauss(
    h: &LabeledHistogram,
    tau: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<NoisyRelease> {
    check_tau(tau)?;
    let entries = h
        .iter()
        .map(|(u, c)| (u.to_owned(), c as f64 + src.gaussian(id.label(u), tau)))
        .collect();
    Ok(NoisyRelease::new(entries, false))
}

/// Gumbel-max top-`k` selection at scale `tau / 2`, labels only, ordered by
/// noisy score. Ties in the noisy score go to the smaller label.
pub fn gumbel_select(
    h: &LabeledHistogram,
    k: usize,
    tau: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<Vec<String>> {
    check_tau(tau)?;
    if k > h.len() {
        return Err(Error::KTooLarge {
            k,
            available: h.len(),
        });
    }
    let sel = id.sub("select");
    let mut scored: Vec<(&str, f64)> = h
        .iter()
        .map(|(u, c)| (u, c as f64 + src.gumbel(sel.label(u), tau / 2.0)))
        .collect();
    scored.sort_by(|a, b| crate::histogram::desc_then_label(*a, *b));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(u, _)| u.to_owned())
        .collect())
}

/// Select `k` labels by [`gumbel_select`] and release their counts with
/// fresh `N(0, tau^2)` noise drawn from `id.sub("count").label(u)`.
pub fn known_gumbel_topk(
    h: &LabeledHistogram,
    k: usize,
    tau: f64,
    src: &NoiseSource,
    id: StreamId,
) -> Result<NoisyRelease> {
    let chosen = gumbel_select(h, k, tau, src, id)?;
    let cnt = id.sub("count");
    let entries = chosen
        .into_iter()
        .map(|u| {
            let v = h.get(&u) as f64 + src.gaussian(cnt.label(&u), tau);
            (u, v)
        })
        .collect();
    Ok(NoisyRelease::new(entries, false))
}

/// Running histogram over a known domain: one tree counter per item.
///
/// Item `u`'s tree draws cell noise from `id.label(u).cell(i, j)`.
#[derive(Debug, Clone)]
pub struct KnownBase {
    domain: Vec<String>,
    counters: Vec<IncrementalCounter>,
    delta0: usize,
    t: usize,
    t_max: usize,
}

impl KnownBase {
    pub fn new<I, S>(
        domain: I,
        delta0: usize,
        params: TreeParams,
        src: NoiseSource,
        id: StreamId,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let domain: Vec<String> = domain
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if delta0 == 0 {
            return Err(Error::param("delta0", "must be at least 1"));
        }
        let counters = domain
            .iter()
            .map(|u| IncrementalCounter::new(params, src, id.label(u)))
            .collect();
        Ok(KnownBase {
            domain,
            counters,
            delta0,
            t: 0,
            t_max: params.t_max,
        })
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    /// Consume round `t + 1` and release the noisy count of every item.
    pub fn step(&mut self, event: &Event) -> Result<NoisyRelease> {
        let round = self.t + 1;
        if round > self.t_max {
            return Err(Error::HorizonExceeded {
                round,
                t_max: self.t_max,
            });
        }
        if event.len() > self.delta0 {
            return Err(Error::EventTooLarge {
                round,
                size: event.len(),
                delta0: self.delta0,
            });
        }
        if let Some(u) = event.iter().find(|u| self.domain.binary_search(u).is_err()) {
            return Err(Error::ItemOutsideDomain {
                label: u.clone(),
                round,
            });
        }
        self.t = round;
        let mut entries = Vec::with_capacity(self.domain.len());
        for (u, c) in self.domain.iter().zip(self.counters.iter_mut()) {
            let y = c.step(event.contains(u))?;
            entries.push((u.clone(), y));
        }
        Ok(NoisyRelease::new(entries, false))
    }

    /// Current noisy count of `label`, if it is in the domain.
    pub fn noisy_count(&self, label: &str) -> Option<f64> {
        let i = self
            .domain
            .binary_search_by(|u| u.as_str().cmp(label))
            .ok()?;
        Some(self.counters[i].current())
    }
}

/// Run [`KnownBase`] over a whole stream.
pub fn known_base(
    stream: &[Event],
    domain: &[String],
    delta0: usize,
    params: TreeParams,
    src: &NoiseSource,
    id: StreamId,
) -> Result<ReleaseSequence> {
    let dom: BTreeSet<String> = domain.iter().cloned().collect();
    check_stream(stream, params.t_max, Some(delta0), Some(&dom))?;
    let mut m = KnownBase::new(domain.iter().cloned(), delta0, params, *src, id)?;
    stream.iter().map(|e| m.step(e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{event, running_histograms};
    use crate::tree;

    fn h3() -> LabeledHistogram {
        LabeledHistogram::from_pairs([("a", 10), ("b", 5), ("c", 1)])
    }

    #[test]
    fn gauss_noiseless_is_identity() {
        let r = known_gauss(&h3(), 0.0, &NoiseSource::new(1), StreamId::root("g")).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.get("a"), Some(10.0));
        assert_eq!(r.get("c"), Some(1.0));
    }

    #[test]
    fn gauss_is_unbiased() {
        let h = LabeledHistogram::from_pairs([("a", 5)]);
        let src = NoiseSource::new(7);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|i| {
                known_gauss(&h, 1.0, &src, StreamId::root("g").aux(i))
                    .unwrap()
                    .get("a")
                    .unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn gumbel_noiseless_argmax_and_ties() {
        let src = NoiseSource::new(1);
        let id = StreamId::root("k");
        let r = known_gumbel_topk(&h3(), 1, 0.0, &src, id).unwrap();
        assert_eq!(r.entries, vec![("a".to_string(), 10.0)]);
        let tie = LabeledHistogram::from_pairs([("b", 5), ("a", 5)]);
        let r = known_gumbel_topk(&tie, 1, 0.0, &src, id).unwrap();
        assert_eq!(r.top().unwrap().0, "a");
        assert!(matches!(
            known_gumbel_topk(&h3(), 4, 1.0, &src, id),
            Err(Error::KTooLarge { k: 4, available: 3 })
        ));
    }

    #[test]
    fn gumbel_selection_matches_softmax() {
        let h = LabeledHistogram::from_pairs([("a", 2), ("b", 1), ("c", 0)]);
        let tau = 2.0;
        let w: Vec<f64> = [2.0f64, 1.0, 0.0]
            .iter()
            .map(|x| (2.0 * x / tau).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let src = NoiseSource::new(11);
        let n = 1_000_000u64;
        let mut wins = [0u64; 3];
        for i in 0..n {
            let s = gumbel_select(&h, 1, tau, &src, StreamId::root("sm").aux(i)).unwrap();
            wins[(s[0].as_bytes()[0] - b'a') as usize] += 1;
        }
        for j in 0..3 {
            let p = w[j] / z;
            let f = wins[j] as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * sd, "item {j}: {f} vs {p}");
        }
    }

    #[test]
    fn gumbel_utility_tail() {
        // Pr[h_selected > 10 - tau ln(d / beta)] >= 1 - beta.
        let (tau, beta) = (2.0, 0.05);
        let cut = 10.0 - tau * (3.0f64 / beta).ln();
        let src = NoiseSource::new(5);
        let n = 100_000u64;
        let good = (0..n)
            .filter(|&i| {
                let s = gumbel_select(&h3(), 1, tau, &src, StreamId::root("u").aux(i)).unwrap();
                h3().get(&s[0]) as f64 > cut
            })
            .count();
        assert!(good as f64 / n as f64 >= 1.0 - beta);
    }

    #[test]
    fn known_base_hand_example() {
        let dom = vec!["a".to_string(), "b".to_string()];
        let s = vec![event(["a"]), event(["a", "b"]), event(["b"])];
        let p = TreeParams::new(3, 2, 0.0).unwrap();
        let out = known_base(&s, &dom, 2, p, &NoiseSource::new(0), StreamId::root("kb")).unwrap();
        let got: Vec<(f64, f64)> = out
            .iter()
            .map(|r| (r.get("a").unwrap(), r.get("b").unwrap()))
            .collect();
        assert_eq!(got, vec![(1.0, 0.0), (2.0, 1.0), (2.0, 2.0)]);
    }

    #[test]
    fn known_base_rejects_bad_events() {
        let dom = vec!["a".to_string(), "b".to_string()];
        let p = TreeParams::new(3, 2, 1.0).unwrap();
        let src = NoiseSource::new(0);
        let id = StreamId::root("kb");
        assert!(matches!(
            known_base(&[event(["z"])], &dom, 2, p, &src, id),
            Err(Error::ItemOutsideDomain { .. })
        ));
        assert!(matches!(
            known_base(&[event(["a", "b"])], &dom, 1, p, &src, id),
            Err(Error::EventTooLarge { .. })
        ));
    }

    #[test]
    fn known_base_matches_standalone_tree() {
        let dom: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s: Vec<Event> = (0..40)
            .map(|t| match t % 4 {
                0 => event(["a"]),
                1 => event(["a", "c"]),
                2 => Event::new(),
                _ => event(["b", "c"]),
            })
            .collect();
        let p = TreeParams::new(40, 3, 1.5).unwrap();
        let src = NoiseSource::new(21);
        let id = StreamId::root("kb");
        let out = known_base(&s, &dom, 2, p, &src, id).unwrap();
        for u in &dom {
            let bits: Vec<u8> = s.iter().map(|e| u8::from(e.contains(u))).collect();
            let y = tree::run(&bits, &p, &src, id.label(u)).unwrap();
            for (t, r) in out.iter().enumerate() {
                assert_eq!(r.get(u).unwrap().to_bits(), y[t].to_bits());
            }
        }
        // Exact counts at tau = 0.
        let p0 = p.with_tau(0.0).unwrap();
        let exact = known_base(&s, &dom, 2, p0, &src, id).unwrap();
        for (r, h) in exact.iter().zip(running_histograms(&s)) {
            for u in &dom {
                assert_eq!(r.get(u).unwrap(), h.get(u) as f64);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        // Renaming labels while renaming the noise keys gives the same values.
        let src = NoiseSource::new(3);
        let h = LabeledHistogram::from_pairs([("a", 4), ("b", 2)]);
        let g = LabeledHistogram::from_pairs([("b", 4), ("a", 2)]);
        let id = StreamId::root("perm");
        let rh = known_gauss(&h, 1.0, &src, id).unwrap();
        let rg = known_gauss(&g, 1.0, &src, id).unwrap();
        // Noise follows the label; so h_a + Z_a vs g_a + Z_a differ by 2.
        assert!((rh.get("a").unwrap() - rg.get("a").unwrap() - 2.0).abs() < 1e-12);
        let sh = gumbel_select(&h, 2, 1.0, &src, id).unwrap();
        let sh0 = gumbel_select(&h, 2, 0.0, &src, id).unwrap();
        let sg0 = gumbel_select(&g, 2, 0.0, &src, id).unwrap();
        assert_eq!(sh0, vec!["a", "b"]);
        assert_eq!(sg0, vec!["b", "a"]);
        assert_eq!(sh.len(), 2);
    }
}
