//! Continual top-k over a known domain with arbitrary event sizes.
//!
//! A Gumbel-max selection picks the current top-k, tree counters report
//! their running counts, and a sparse-vector test with a noisy threshold
//! decides when to reselect. At most `s` reselections happen; after that
//! the last selection keeps being reported.
//!
//! Counters are kept in aggregate form: the count of a selected item at
//! round `t` is its true running count plus the sum of keyed cell noise over
//! the cells covering `[1, t]`. This has the same distribution as restarting
//! a tree over the item's whole bit stream, and only needs running counts.

use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};
use crate::histogram::{desc_then_label, Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::known::gumbel_select;
use crate::noise::{laplace, NoiseSource, StreamId};
use crate::tree::{levels, prefix_noise, TreeParams};

/// Per-round threshold margins `eta_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta {
    Constant(f64),
    PerRound(Vec<f64>),
}

impl Eta {
    /// `eta_t` for 1-based round `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Eta::Constant(v) => *v,
            Eta::PerRound(v) => v[t - 1],
        }
    }

    fn check(&self, t_max: usize) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            Eta::Constant(v) if ok(*v) => Ok(()),
            Eta::PerRound(v) if v.len() >= t_max && v.iter().all(|x| ok(*x)) => Ok(()),
            _ => Err(Error::param(
                "eta",
                "margins must be finite, non-negative and cover every round",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGumbConfig {
    /// Switch budget.
    pub s: usize,
    pub k: usize,
    pub eta: Eta,
    pub tau: f64,
    /// Base of the internal counters.
    pub r: usize,
}

impl SparseGumbConfig {
    pub fn new(s: usize, k: usize, eta: Eta, tau: f64) -> Self {
        SparseGumbConfig {
            s,
            k,
            eta,
            tau,
            r: 2,
        }
    }

    pub fn tau1(&self) -> f64 {
        (self.s as f64).sqrt() * self.tau
    }

    pub fn tau2(&self) -> f64 {
        ((self.s + 1) as f64).sqrt() * self.tau
    }
}

/// `alpha_1 + alpha_BM + alpha_AT`, taking `alpha_2 = alpha_1`.
pub fn recommended_eta(cfg: &SparseGumbConfig, d: usize, t_max: usize, beta: f64) -> Result<f64> {
    crate::error::check_open_unit("beta", beta)?;
    check_tau(cfg.tau)?;
    if d == 0 || t_max == 0 || cfg.r < 2 {
        return Err(Error::param(
            "d",
            "domain, horizon and base must be positive",
        ));
    }
    let (tau, s) = (cfg.tau, cfg.s as f64);
    let (d, t) = (d as f64, t_max as f64);
    let l = f64::from(levels(t_max as u64, cfg.r as u64));
    let alpha1 = s.sqrt() * tau * (d / beta).ln();
    let alpha_bm = tau * l * (2.0 * (s + 1.0) * (cfg.r - 1) as f64 * (6.0 * t / beta).ln()).sqrt();
    let alpha_at = 8.0 * tau * s.sqrt() * (6.0 * d * t / beta).ln();
    Ok(alpha1 + alpha_bm + alpha_at)
}

/// One row of the per-round log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLog {
    pub t: usize,
    pub selected: Vec<String>,
    pub counts: Vec<f64>,
    /// A reselection happened at this round (round 1 counts as one).
    pub switched: bool,
}

/// Streaming state.
///
/// Epoch `e` (the `e`-th selection, from 0) keys its selection noise,
/// threshold noise and counters with `aux(e)`. The query noise of round `t`
/// is drawn in lexicographic scan order from `id.sub("query").aux(t)`.
#[derive(Debug, Clone)]
pub struct SparseGumb {
    cfg: SparseGumbConfig,
    tree: TreeParams,
    domain: Vec<String>,
    counts: Vec<u64>,
    selected: Vec<usize>,
    remaining: usize,
    epoch: u64,
    z: f64,
    src: NoiseSource,
    id: StreamId,
    t: usize,
    selections: usize,
    tree_instances: usize,
}

impl SparseGumb {
    pub fn new<I, S>(
        domain: I,
        t_max: usize,
        cfg: SparseGumbConfig,
        src: NoiseSource,
        id: StreamId,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut domain: Vec<String> = domain.into_iter().map(Into::into).collect();
        domain.sort();
        domain.dedup();
        if cfg.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if cfg.k > domain.len() {
            return Err(Error::KTooLarge {
                k: cfg.k,
                available: domain.len(),
            });
        }
        check_tau(cfg.tau)?;
        cfg.eta.check(t_max)?;
        let tree = TreeParams::new(t_max, cfg.r, cfg.tau2())?;
        let counts = vec![0; domain.len()];
        Ok(SparseGumb {
            remaining: cfg.s,
            cfg,
            tree,
            domain,
            counts,
            selected: Vec::new(),
            epoch: 0,
            z: 0.0,
            src,
            id,
            t: 0,
            selections: 0,
            tree_instances: 0,
        })
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    /// Gumbel selections performed so far.
    pub fn selections(&self) -> usize {
        self.selections
    }

    /// Counter instances started so far.
    pub fn tree_instances(&self) -> usize {
        self.tree_instances
    }

    pub fn remaining_switches(&self) -> usize {
        self.remaining
    }

    /// Current selection, in selection order.
    pub fn selected(&self) -> Vec<&str> {
        self.selected
            .iter()
            .map(|&i| self.domain[i].as_str())
            .collect()
    }

    fn histogram(&self) -> LabeledHistogram {
        self.domain
            .iter()
            .cloned()
            .zip(self.counts.iter().copied())
            .collect()
    }

    fn reselect(&mut self, epoch: u64) -> Result<()> {
        let h = self.histogram();
        let chosen = gumbel_select(
            &h,
            self.cfg.k,
            self.cfg.tau2(),
            &self.src,
            self.id.aux(epoch).sub("epoch"),
        )?;
        self.selected = chosen
            .iter()
            .map(|u| {
                self.domain
                    .binary_search(u)
                    .expect("selected label is in the domain")
            })
            .collect();
        self.epoch = epoch;
        self.z = self
            .src
            .laplace(self.id.sub("threshold").aux(epoch), 2.0 * self.cfg.tau1());
        self.selections += 1;
        self.tree_instances += self.cfg.k;
        Ok(())
    }

    fn noisy(&self, i: usize) -> Result<f64> {
        let key = self.id.sub("tree").aux(self.epoch).label(&self.domain[i]);
        Ok(self.counts[i] as f64 + prefix_noise(&self.tree, &self.src, key, self.t as u64)?)
    }

    /// Consume the next event; returns the round's log row.
    pub fn step(&mut self, event: &Event) -> Result<RoundLog> {
        let round = self.t + 1;
        if round > self.tree.t_max {
            return Err(Error::HorizonExceeded {
                round,
                t_max: self.tree.t_max,
            });
        }
        let mut idx = Vec::with_capacity(event.len());
        for u in event {
            match self.domain.binary_search(u) {
                Ok(i) => idx.push(i),
                Err(_) => {
                    return Err(Error::ItemOutsideDomain {
                        label: u.clone(),
                        round,
                    })
                }
            }
        }
        self.t = round;
        for i in idx {
            self.counts[i] += 1;
        }
        let mut switched = false;
        if round == 1 {
            self.reselect(0)?;
            switched = true;
        } else if self.remaining > 0 {
            let mut min = f64::INFINITY;
            for &i in &self.selected {
                min = min.min(self.noisy(i)?);
            }
            let m_hat = min + self.cfg.eta.at(round) + self.z;
            let mut rng = self.src.rng(self.id.sub("query").aux(round as u64));
            let scale = 4.0 * self.cfg.tau1();
            for u in 0..self.domain.len() {
                if self.selected.contains(&u) {
                    continue;
                }
                let q = self.counts[u] as f64 + laplace(&mut rng, scale);
                if q > m_hat {
                    let next = self.epoch + 1;
                    self.reselect(next)?;
                    self.remaining -= 1;
                    switched = true;
                    break;
                }
            }
        }
        let mut rows: Vec<(String, f64)> = Vec::with_capacity(self.cfg.k);
        for &i in &self.selected {
            rows.push((self.domain[i].clone(), self.noisy(i)?));
        }
        Ok(RoundLog {
            t: round,
            selected: rows.iter().map(|r| r.0.clone()).collect(),
            counts: rows.iter().map(|r| r.1).collect(),
            switched,
        })
    }
}

/// Output of a whole-stream run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseGumbRun {
    pub releases: ReleaseSequence,
    pub log: Vec<RoundLog>,
    pub selections: usize,
    pub tree_instances: usize,
}

pub fn sparse_gumb_run(
    stream: &[Event],
    domain: &[String],
    cfg: &SparseGumbConfig,
    src: &NoiseSource,
    id: StreamId,
) -> Result<SparseGumbRun> {
    let t_max = stream.len().max(1);
    let mut m = SparseGumb::new(domain.iter().cloned(), t_max, cfg.clone(), *src, id)?;
    let mut log = Vec::with_capacity(stream.len());
    for e in stream {
        log.push(m.step(e)?);
    }
    let releases = log
        .iter()
        .map(|row| {
            NoisyRelease::new(
                row.selected
                    .iter()
                    .cloned()
                    .zip(row.counts.iter().copied())
                    .collect(),
                false,
            )
        })
        .collect();
    Ok(SparseGumbRun {
        releases,
        log,
        selections: m.selections(),
        tree_instances: m.tree_instances(),
    })
}

/// Per-round top-1 error and its maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `|h_hat_t^{selected} - h_t^{argmax}|` per round.
    pub trace: Vec<f64>,
    pub err: f64,
}

/// Error of top-1 releases against the true stream.
pub fn error_metric(releases: &ReleaseSequence, stream: &[Event]) -> Result<ErrorReport> {
    if releases.len() != stream.len() {
        return Err(Error::Usage(format!(
            "{} releases for {} rounds",
            releases.len(),
            stream.len()
        )));
    }
    let mut h = LabeledHistogram::new();
    let mut trace = Vec::with_capacity(stream.len());
    for (t, (r, e)) in releases.iter().zip(stream).enumerate() {
        h.add_event(e);
        if r.len() != 1 {
            return Err(Error::Usage(format!(
                "round {} has {} released items; the error is defined for top-1 only",
                t + 1,
                r.len()
            )));
        }
        let (_, v) = r.top().expect("one entry");
        trace.push((v - h.max_count() as f64).abs());
    }
    let err = trace.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport { trace, err })
}

/// The true top-`k` labels of `h` with the label tie-break.
pub fn true_topk(h: &LabeledHistogram, k: usize) -> Vec<String> {
    let mut v: Vec<(&str, f64)> = h.iter().map(|(u, c)| (u, c as f64)).collect();
    v.sort_by(|a, b| desc_then_label(*a, *b));
    v.into_iter().take(k).map(|(u, _)| u.to_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::event;
    use proptest::prelude::*;
    use rand::Rng;

    fn dom(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("u{i:02}")).collect()
    }

    #[test]
    fn recommended_eta_terms() {
        let cfg = SparseGumbConfig::new(1, 1, Eta::Constant(0.0), 1.0);
        let got = recommended_eta(&cfg, 100, 1000, 0.05).unwrap();
        // L_2(1000) = 10.
        let a1 = (100.0f64 / 0.05).ln();
        let abm = 10.0 * (2.0 * 2.0 * (6000.0f64 / 0.05).ln()).sqrt();
        let aat = 8.0 * (600_000.0f64 / 0.05).ln();
        assert!((got - (a1 + abm + aat)).abs() < 1e-9);
        assert!((got - 206.400_868_757_083_5).abs() < 1e-9, "{got}");
        let zero = SparseGumbConfig::new(1, 1, Eta::Constant(0.0), 0.0);
        assert_eq!(recommended_eta(&zero, 100, 1000, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn recommended_eta_monotone() {
        let base = |s: usize| SparseGumbConfig::new(s, 1, Eta::Constant(0.0), 1.0);
        let mut prev = 0.0;
        for s in 0..6 {
            let v = recommended_eta(&base(s), 50, 500, 0.05).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let c = base(2);
        for (a, b) in [(10, 20), (20, 100)] {
            assert!(
                recommended_eta(&c, a, 500, 0.05).unwrap()
                    <= recommended_eta(&c, b, 500, 0.05).unwrap()
            );
            assert!(
                recommended_eta(&c, 50, a * 10, 0.05).unwrap()
                    <= recommended_eta(&c, 50, b * 10, 0.05).unwrap()
            );
        }
        assert!(
            recommended_eta(&c, 50, 500, 0.1).unwrap()
                <= recommended_eta(&c, 50, 500, 0.01).unwrap()
        );
    }

    fn random_stream(seed: u64, d: usize, t: usize) -> Vec<Event> {
        let mut rng = NoiseSource::new(seed).rng(StreamId::root("rs"));
        (0..t)
            .map(|_| {
                let n = rng.random_range(0..=d.min(3));
                event((0..n).map(|_| format!("u{:02}", rng.random_range(0..d))))
            })
            .collect()
    }

    #[test]
    fn noiseless_tracks_true_argmax() {
        for seed in 0..100 {
            let s = random_stream(seed, 6, 60);
            let cfg = SparseGumbConfig::new(60, 1, Eta::Constant(0.0), 0.0);
            let run = sparse_gumb_run(
                &s,
                &dom(6),
                &cfg,
                &NoiseSource::new(seed),
                StreamId::root("sg"),
            )
            .unwrap();
            let rep = error_metric(&run.releases, &s).unwrap();
            assert_eq!(rep.err, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn static_stream_rarely_switches() {
        let d = 10;
        let s: Vec<Event> = (0..200).map(|_| event(["u00"])).collect();
        let mut cfg = SparseGumbConfig::new(3, 1, Eta::Constant(0.0), 1.0);
        cfg.eta = Eta::Constant(recommended_eta(&cfg, d, 200, 0.01).unwrap());
        let src = NoiseSource::new(3);
        let trials = 500u64;
        let quiet = (0..trials)
            .filter(|&i| {
                let run =
                    sparse_gumb_run(&s, &dom(d), &cfg, &src, StreamId::root("st").aux(i)).unwrap();
                run.selections == 1
            })
            .count();
        assert!(quiet as f64 / trials as f64 >= 0.99);
    }

    #[test]
    fn budget_counters_on_adversarial_stream() {
        // Every round a different item jumps ahead.
        let d = 8;
        let s: Vec<Event> = (0..120)
            .map(|t| event((0..=(t % d)).map(|i| format!("u{:02}", (t + i) % d))))
            .collect();
        for sw in [0, 1, 3, 7] {
            let cfg = SparseGumbConfig::new(sw, 2, Eta::Constant(0.0), 0.5);
            let run = sparse_gumb_run(
                &s,
                &dom(d),
                &cfg,
                &NoiseSource::new(5),
                StreamId::root("ad"),
            )
            .unwrap();
            assert!(run.selections <= sw + 1);
            assert!(run.tree_instances <= (sw + 1) * 2);
            assert_eq!(
                run.log.iter().filter(|r| r.switched).count(),
                run.selections
            );
            assert!(run.releases.iter().all(|r| r.len() == 2));
        }
    }

    #[test]
    fn threshold_noise_fixed_between_switches() {
        let d = 5;
        let s: Vec<Event> = (0..50).map(|t| event([format!("u{:02}", t % d)])).collect();
        let cfg = SparseGumbConfig::new(2, 1, Eta::Constant(5.0), 1.0);
        let mut m =
            SparseGumb::new(dom(d), 50, cfg, NoiseSource::new(1), StreamId::root("z")).unwrap();
        let mut last = None;
        for e in &s {
            let row = m.step(e).unwrap();
            if row.switched {
                last = Some(m.z);
            } else {
                assert_eq!(Some(m.z), last);
            }
        }
    }

    #[test]
    fn exhausted_budget_keeps_reporting() {
        let d = 4;
        let s: Vec<Event> = (0..80)
            .map(|t| {
                event([format!(
                    "u{:02}",
                    usize::from(t >= 5) + usize::from(t >= 30)
                )])
            })
            .collect();
        let cfg = SparseGumbConfig::new(1, 1, Eta::Constant(0.0), 0.0);
        let run = sparse_gumb_run(
            &s,
            &dom(d),
            &cfg,
            &NoiseSource::new(0),
            StreamId::root("ex"),
        )
        .unwrap();
        assert_eq!(run.selections, 2);
        assert_eq!(run.releases.len(), 80);
        let last_switch = run.log.iter().rposition(|r| r.switched).unwrap();
        let sel = &run.log[last_switch].selected;
        assert!(run.log[last_switch..].iter().all(|r| &r.selected == sel));
    }

    #[test]
    fn error_metric_examples() {
        let s = vec![event(["a"]), event(["a", "b"]), event(["b"])];
        let exact: ReleaseSequence = [1.0, 2.0, 2.0]
            .iter()
            .map(|v| NoisyRelease::new(vec![("a".into(), *v)], false))
            .collect();
        assert_eq!(error_metric(&exact, &s).unwrap().err, 0.0);
        let off: ReleaseSequence = [1.0, 2.0, 2.0]
            .iter()
            .map(|v| NoisyRelease::new(vec![("b".into(), v + 1.5)], false))
            .collect();
        let rep = error_metric(&off, &s).unwrap();
        assert_eq!(rep.trace, vec![1.5, 1.5, 1.5]);
        assert_eq!(rep.err, 1.5);
        let two: ReleaseSequence = vec![NoisyRelease::new(
            vec![("a".into(), 1.0), ("b".into(), 0.0)],
            false,
        )]
        .into_iter()
        .collect();
        assert!(error_metric(&two, &s[..1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn error_metric_matches_definition(seed in 0u64..10_000) {
            let s = random_stream(seed, 5, 40);
            let cfg = SparseGumbConfig::new(2, 1, Eta::Constant(1.0), 1.0);
            let run = sparse_gumb_run(&s, &dom(5), &cfg, &NoiseSource::new(seed), StreamId::root("p")).unwrap();
            let rep = error_metric(&run.releases, &s).unwrap();
            // Independent evaluation: segments between selections, brute-force counts.
            let starts: Vec<usize> = run.log.iter().enumerate().filter(|(_, r)| r.switched).map(|(i, _)| i).collect();
            let mut err = 0.0f64;
            for (n, &a) in starts.iter().enumerate() {
                let b = starts.get(n + 1).copied().unwrap_or(s.len());
                for t in a..b {
                    let best = dom(5).iter().map(|u| s[..=t].iter().filter(|e| e.contains(u)).count()).max().unwrap();
                    err = err.max((run.log[t].counts[0] - best as f64).abs());
                }
            }
            prop_assert!((rep.err - err).abs() < 1e-9);
        }
    }
}
