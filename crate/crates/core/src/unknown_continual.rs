//! Continual histograms over an unknown domain.
//!
//! Every item seen so far gets tree noise on its running count; only items
//! whose noisy count exceeds `m_delta` are shown. Noise for an (item, cell)
//! pair is recomputed from its key, so the state is one count per item.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{check_open_unit, Error, Result};
use crate::histogram::{check_stream, Event, NoisyRelease, ReleaseSequence};
use crate::noise::{normal_cdf, normal_sf, normal_upper_quantile, NoiseSource, StreamId};
use crate::tree::{prefix_noise, Cell, TreeParams};

/// `m_delta = tau L_r sqrt(r - 1) Phi^{-1}(1 - delta / T) + 1`.
pub fn m_delta(params: &TreeParams, delta: f64) -> Result<f64> {
    check_open_unit("delta", delta)?;
    let q = normal_upper_quantile(delta / params.t_max as f64)?;
    Ok(params.tau * f64::from(params.levels) * ((params.r - 1) as f64).sqrt() * q + 1.0)
}

fn spread(params: &TreeParams) -> f64 {
    ((params.r - 1) as f64).sqrt() * f64::from(params.levels)
}

/// Lower bound on `Pr[u in D_t]` when `h_t^u = m_delta + c tau`.
pub fn discovery_probability_bound(c: f64, params: &TreeParams) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    Ok(normal_cdf(c / spread(params)))
}

/// Upper bound on `Pr[|h - h_hat| >= eta tau | u released]` when
/// `h_t^u = m_delta + c tau`.
pub fn conditional_error_bound(c: f64, eta: f64, params: &TreeParams) -> Result<f64> {
    if !(c > 0.0 && c < eta) {
        return Err(Error::param(
            "c",
            format!("need 0 < c < eta, got c={c}, eta={eta}"),
        ));
    }
    let s = spread(params);
    Ok(normal_sf(eta / s) / normal_cdf(c / s))
}

/// Streaming state of the unknown-domain continual mechanism.
///
/// Item `u` draws cell noise from `id.label(u).cell(i, j)`.
#[derive(Debug, Clone)]
pub struct UnkBase {
    params: TreeParams,
    delta0: usize,
    m: f64,
    src: NoiseSource,
    id: StreamId,
    counts: BTreeMap<String, u64>,
    persistent: bool,
    discovered: BTreeSet<String>,
    t: usize,
}

impl UnkBase {
    pub fn new(
        params: TreeParams,
        delta: f64,
        delta0: usize,
        src: NoiseSource,
        id: StreamId,
    ) -> Result<Self> {
        if delta0 == 0 {
            return Err(Error::param("delta0", "must be at least 1"));
        }
        Ok(UnkBase {
            params,
            delta0,
            m: m_delta(&params, delta)?,
            src,
            id,
            counts: BTreeMap::new(),
            persistent: false,
            discovered: BTreeSet::new(),
            t: 0,
        })
    }

    /// Keep showing items once they have crossed the threshold.
    pub fn with_persistent_discovery(mut self, on: bool) -> Self {
        self.persistent = on;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.m
    }

    pub fn round(&self) -> usize {
        self.t
    }

    /// Labels seen so far with their true counts.
    pub fn seen(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(u, c)| (u.as_str(), *c))
    }

    /// The noise realization for `(label, cell)`. Rounds sharing a cell use
    /// this same value.
    pub fn cell_noise(&self, label: &str, cell: Cell) -> f64 {
        self.src
            .gaussian(cell.stream(self.id.label(label)), self.params.cell_sigma())
    }

    /// Noisy running count of `label` at the current round.
    pub fn noisy_count(&self, label: &str) -> Result<f64> {
        let h = self.counts.get(label).copied().unwrap_or(0) as f64;
        if self.t == 0 {
            return Ok(h);
        }
        Ok(h + prefix_noise(&self.params, &self.src, self.id.label(label), self.t as u64)?)
    }

    pub fn step(&mut self, event: &Event) -> Result<NoisyRelease> {
        let round = self.t + 1;
        if round > self.params.t_max {
            return Err(Error::HorizonExceeded {
                round,
                t_max: self.params.t_max,
            });
        }
        if event.len() > self.delta0 {
            return Err(Error::EventTooLarge {
                round,
                size: event.len(),
                delta0: self.delta0,
            });
        }
        self.t = round;
        for u in event {
            *self.counts.entry(u.clone()).or_insert(0) += 1;
        }
        let mut entries = Vec::new();
        for (u, c) in &self.counts {
            let v =
                *c as f64 + prefix_noise(&self.params, &self.src, self.id.label(u), round as u64)?;
            let above = v > self.m;
            if above && self.persistent {
                self.discovered.insert(u.clone());
            }
            if above || (self.persistent && self.discovered.contains(u)) {
                entries.push((u.clone(), v));
            }
        }
        Ok(NoisyRelease::new(entries, false))
    }
}

/// Run [`UnkBase`] over a whole stream.
pub fn unk_base(
    stream: &[Event],
    params: TreeParams,
    delta: f64,
    delta0: usize,
    src: &NoiseSource,
    id: StreamId,
) -> Result<ReleaseSequence> {
    check_stream(stream, params.t_max, Some(delta0), None)?;
    let mut m = UnkBase::new(params, delta, delta0, *src, id)?;
    stream.iter().map(|e| m.step(e)).collect()
}
