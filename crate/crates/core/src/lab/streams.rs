//! Synthetic event streams.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Event;
use crate::noise::{NoiseSource, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    Zipf,
    SwitchingZipf,
    Assumption1,
    Adversarial,
    File,
}

/// Interval gaps for Assumption-1 streams, `alpha1 < alpha2 < alpha3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alphas {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Alphas {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1 < alpha2 && alpha2 < alpha3) {
            return Err(Error::param(
                "alphas",
                format!("need 0 < alpha1 < alpha2 < alpha3, got {alpha1}, {alpha2}, {alpha3}"),
            ));
        }
        Ok(Alphas {
            alpha1,
            alpha2,
            alpha3,
        })
    }
}

fn default_exponent() -> f64 {
    1.0
}

fn default_period() -> usize {
    10
}

fn default_extra() -> usize {
    10
}

/// Description of a synthetic stream. Every round carries one item except
/// for `file` streams, which are read verbatim.
///
/// * `zipf`: item of rank `k` has mass proportional to `k^-zipf_exponent`.
/// * `switching-zipf`: Zipf, but after the `p`-th entry of `switch_times`
///   the ranking is rotated by `shifts[p]` (default `p + 1`), so rank 1 goes
///   to item `shift`.
/// * `assumption1`: `d` round-robin rounds, then `phases` phases in which
///   one fresh item arrives every round until it leads the previous leader
///   by `alpha3` for `extra` rounds.
/// * `adversarial`: the item alternates between the first two labels every
///   `period` rounds, so the lead keeps changing hands.
/// * `file`: one round per line, items separated by commas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    #[serde(default)]
    pub d: usize,
    #[serde(default, rename = "t")]
    pub t_max: usize,
    #[serde(default = "default_exponent")]
    pub zipf_exponent: f64,
    #[serde(default)]
    pub switch_times: Vec<usize>,
    #[serde(default)]
    pub shifts: Vec<usize>,
    #[serde(default)]
    pub phases: usize,
    #[serde(default)]
    pub alphas: Option<Alphas>,
    #[serde(default = "default_extra")]
    pub extra: usize,
    #[serde(default = "default_period")]
    pub period: usize,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl StreamSpec {
    fn base(kind: StreamKind, d: usize, t_max: usize, seed: u64) -> Self {
        StreamSpec {
            kind,
            d,
            t_max,
            zipf_exponent: 1.0,
            switch_times: Vec::new(),
            shifts: Vec::new(),
            phases: 0,
            alphas: None,
            extra: default_extra(),
            period: default_period(),
            path: None,
            seed,
        }
    }

    pub fn zipf(d: usize, t_max: usize, exponent: f64, seed: u64) -> Self {
        StreamSpec {
            zipf_exponent: exponent,
            ..Self::base(StreamKind::Zipf, d, t_max, seed)
        }
    }

    pub fn switching_zipf(
        d: usize,
        t_max: usize,
        exponent: f64,
        switch_times: Vec<usize>,
        seed: u64,
    ) -> Self {
        StreamSpec {
            zipf_exponent: exponent,
            switch_times,
            ..Self::base(StreamKind::SwitchingZipf, d, t_max, seed)
        }
    }

    /// `t_max` is derived from the phases; see [`assumption1_length`].
    pub fn assumption1(d: usize, phases: usize, alphas: Alphas) -> Self {
        StreamSpec {
            phases,
            alphas: Some(alphas),
            ..Self::base(StreamKind::Assumption1, d, 0, 0)
        }
    }

    pub fn adversarial(d: usize, t_max: usize, period: usize) -> Self {
        StreamSpec {
            period,
            ..Self::base(StreamKind::Adversarial, d, t_max, 0)
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        StreamSpec {
            path: Some(path.into()),
            ..Self::base(StreamKind::File, 0, 0, 0)
        }
    }

    /// Labels `u0..u{d-1}`, zero-padded so lexicographic order is numeric.
    pub fn domain(&self) -> Vec<String> {
        domain_labels(self.d)
    }

    fn check(&self) -> Result<()> {
        if self.kind != StreamKind::File && self.d == 0 {
            return Err(Error::param("d", "domain size must be at least 1"));
        }
        match self.kind {
            StreamKind::Zipf | StreamKind::SwitchingZipf | StreamKind::Adversarial
                if self.t_max == 0 =>
            {
                Err(Error::param("t", "stream length must be at least 1"))
            }
            StreamKind::Zipf | StreamKind::SwitchingZipf if !(self.zipf_exponent > 0.0) => {
                Err(Error::param(
                    "zipf_exponent",
                    format!("must be positive, got {}", self.zipf_exponent),
                ))
            }
            StreamKind::SwitchingZipf if self.switch_times.windows(2).any(|w| w[0] >= w[1]) => {
                Err(Error::param("switch_times", "must be strictly increasing"))
            }
            StreamKind::Assumption1 if self.alphas.is_none() || self.phases == 0 => Err(
                Error::param("alphas", "assumption1 needs alphas and at least one phase"),
            ),
            StreamKind::Assumption1 if self.d < self.phases + 1 => Err(Error::param(
                "d",
                format!(
                    "need more items than phases, got d={} phases={}",
                    self.d, self.phases
                ),
            )),
            StreamKind::Adversarial if self.d < 2 || self.period == 0 => Err(Error::param(
                "d",
                "adversarial streams need d >= 2 and period >= 1",
            )),
            StreamKind::File if self.path.is_none() => {
                Err(Error::param("path", "file streams need a path"))
            }
            _ => Ok(()),
        }
    }
}

pub fn domain_labels(d: usize) -> Vec<String> {
    let w = d.saturating_sub(1).to_string().len();
    (0..d).map(|i| format!("u{i:0w$}")).collect()
}

/// Length of the Assumption-1 stream for `d` items, `phases` phases and
/// gaps `alphas`: phase `l` lasts `l * (ceil(alpha3) + extra)` rounds.
pub fn assumption1_length(d: usize, phases: usize, alphas: &Alphas, extra: usize) -> usize {
    let p = alphas.alpha3.ceil() as usize + extra;
    d + p * phases * (phases + 1) / 2
}

/// Generate the stream described by `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &StreamSpec) -> Result<Vec<Event>> {
    spec.check()?;
    let labels = spec.domain();
    let one = |i: usize| -> Event { [labels[i].clone()].into_iter().collect() };
    let src = NoiseSource::new(spec.seed);
    match spec.kind {
        StreamKind::Zipf | StreamKind::SwitchingZipf => {
            let z = Zipf::new(spec.d as f64, spec.zipf_exponent)
                .map_err(|e| Error::param("zipf_exponent", e.to_string()))?;
            let mut rng = src.rng(StreamId::root("zipf-stream"));
            Ok((1..=spec.t_max)
                .map(|t| {
                    let rank = z.sample(&mut rng) as usize - 1;
                    let phase = spec.switch_times.iter().filter(|&&s| t > s).count();
                    let shift = match phase {
                        0 => 0,
                        p => spec.shifts.get(p - 1).copied().unwrap_or(p),
                    };
                    one((rank + shift) % spec.d)
                })
                .collect())
        }
        StreamKind::Assumption1 => {
            let a = spec.alphas.expect("checked");
            let p = a.alpha3.ceil() as usize + spec.extra;
            let mut out: Vec<Event> = (0..spec.d).map(one).collect();
            for l in 1..=spec.phases {
                out.extend(std::iter::repeat_n(one(l - 1), l * p));
            }
            Ok(out)
        }
        StreamKind::Adversarial => Ok((0..spec.t_max)
            .map(|t| one((t / spec.period) % 2))
            .collect()),
        StreamKind::File => {
            let path = spec.path.as_ref().expect("checked");
            let text = std::fs::read_to_string(path)?;
            Ok(parse_stream(&text))
        }
    }
}

/// One round per line; items separated by commas; blank lines are empty rounds.
pub fn parse_stream(text: &str) -> Vec<Event> {
    text.lines()
        .map(|line| {
            line.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect()
        })
        .collect()
}

/// Interval decomposition found for an Assumption-1 stream. Rounds are
/// 1-based and intervals inclusive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    /// `B_0`, empty when `None`.
    pub b0: Option<(usize, usize)>,
    /// `(A_l, cluster, first round of A'_l, B_l)` per phase.
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase {
    pub a: (usize, usize),
    pub cluster: Vec<String>,
    pub a_prime: usize,
    pub b: (usize, usize),
}

/// Check that `stream` splits into `B_0, A_1, B_1, ..., A_n, B_n` with
/// `n <= s` as Assumption 1 requires, and return the split.
///
/// The search is greedy: `B_0` is the longest valid prefix, each `A_l` is
/// the maximal run of constant `S_t(alpha1)` containing the first round not
/// yet covered, and each `B_l` is extended from the start of `A_l` as far as
/// its condition holds.
pub fn validate_assumption1(
    stream: &[Event],
    domain: &[String],
    s: usize,
    alphas: &Alphas,
) -> Result<Decomposition> {
    let fail = |msg: String| Err(Error::param("stream", msg));
    let n = stream.len();
    let mut sorted: Vec<&String> = domain.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut hs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut h = vec![0.0; sorted.len()];
    for (i, e) in stream.iter().enumerate() {
        for u in e {
            match sorted.binary_search(&u) {
                Ok(j) => h[j] += 1.0,
                Err(_) => {
                    return Err(Error::ItemOutsideDomain {
                        label: u.clone(),
                        round: i + 1,
                    })
                }
            }
        }
        hs.push(h.clone());
    }
    let max_of = |c: &[f64]| c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread_ok = |t: usize| {
        let c = &hs[t - 1];
        max_of(c) - c.iter().copied().fold(f64::INFINITY, f64::min) <= alphas.alpha2
    };
    // S_t(alpha1): items within alpha1 of the maximum.
    let cluster = |t: usize| -> Vec<usize> {
        let c = &hs[t - 1];
        let m = max_of(c);
        (0..c.len())
            .filter(|&j| c[j] >= m - alphas.alpha1)
            .collect()
    };
    let gap = |t: usize, cl: &[usize]| {
        let c = &hs[t - 1];
        let inside = cl.iter().map(|&j| c[j]).fold(f64::INFINITY, f64::min);
        let outside = (0..c.len())
            .filter(|j| !cl.contains(j))
            .map(|j| c[j])
            .fold(f64::NEG_INFINITY, f64::max);
        inside - outside
    };
    let b_ok = |t: usize, cl: &[usize]| {
        let c = &hs[t - 1];
        cl.iter().all(|&u| {
            let others = (0..c.len())
                .filter(|&v| v != u)
                .map(|v| c[v])
                .fold(f64::NEG_INFINITY, f64::max);
            c[u] >= others - alphas.alpha2
        })
    };
    let mut covered = 0;
    while covered < n && spread_ok(covered + 1) {
        covered += 1;
    }
    let b0 = (covered > 0).then_some((1, covered));
    let mut phases = Vec::new();
    while covered < n {
        if phases.len() == s {
            return fail(format!(
                "rounds {}..={n} are not covered by {s} phases",
                covered + 1
            ));
        }
        let t = covered + 1;
        let c = cluster(t);
        let (mut lo, mut hi) = (t, t);
        while lo > 1 && cluster(lo - 1) == c {
            lo -= 1;
        }
        while hi < n && cluster(hi + 1) == c {
            hi += 1;
        }
        let Some(a_prime) = (lo..=hi).find(|&t| gap(t, &c) >= alphas.alpha3) else {
            return fail(format!(
                "phase {} ({lo}..={hi}) never leads by alpha3 = {}",
                phases.len() + 1,
                alphas.alpha3
            ));
        };
        if !b_ok(lo, &c) {
            return fail(format!(
                "round {lo} violates the B condition of its own phase"
            ));
        }
        let mut end = lo;
        while end < n && b_ok(end + 1, &c) {
            end += 1;
        }
        if end < hi {
            return fail(format!(
                "B condition fails inside phase {}",
                phases.len() + 1
            ));
        }
        phases.push(Phase {
            a: (lo, hi),
            cluster: c.iter().map(|&j| sorted[j].clone()).collect(),
            a_prime,
            b: (lo, end),
        });
        covered = end;
    }
    Ok(Decomposition { b0, phases })
}

/// Uniform random 0/1 background, used by tests and sweeps.
pub fn random_events(
    src: &NoiseSource,
    domain: &[String],
    t_max: usize,
    max_size: usize,
) -> Vec<Event> {
    let mut rng = src.rng(StreamId::root("random-events"));
    (0..t_max)
        .map(|_| {
            let k = rng.random_range(0..=max_size.min(domain.len()));
            (0..k)
                .map(|_| domain[rng.random_range(0..domain.len())].clone())
                .collect()
        })
        .collect()
}
