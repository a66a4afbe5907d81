//! Experiment harness: base-noise table, error traces on switching Zipf
//! streams, and utility scaling on Assumption-1 streams.
//!
//! Trials run in parallel; every reduction happens in trial order, so the
//! output only depends on the configuration.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{mechanism_budget, Mechanism, PrivacyParams, Quadrant};
use crate::error::{check_open_unit, check_tau, Error, Result};
use crate::histogram::{Event, NoisyRelease, ReleaseSequence};
use crate::known::known_base;
use crate::lab::streams::{assumption1_length, generate, validate_assumption1, Alphas, StreamSpec};
use crate::meta::{meta_run, QuadrantSelector};
use crate::noise::{NoiseSource, StreamId};
use crate::topk_continual::{
    error_metric, recommended_eta, sparse_gumb_run, Eta, SparseGumbConfig,
};
use crate::tree::{base_sweep, levels, optimal_base, TreeParams};

/// One series of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub series: String,
    pub mechanism: String,
    pub params: serde_json::Value,
    /// Mean error per round over the trials.
    pub trace: Vec<f64>,
    /// Mean over trials of `Err(T)`, the largest per-round error.
    pub err: f64,
    /// Not written to any file, so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseNoiseRow {
    pub t_max: u64,
    pub r: u64,
    pub levels: u32,
    /// `sqrt(r - 1) L_r`, the worst-case prefix std in units of `tau`.
    pub std_factor: f64,
    pub ratio_vs_base2: f64,
}

/// Geometric grid from `lo` to `hi` inclusive with `per_decade` points per
/// factor of ten, rounded and deduplicated.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (a, b) = ((lo.max(1) as f64).log10(), (hi.max(1) as f64).log10());
    let n = ((b - a) * per_decade as f64).round() as usize;
    let mut v: Vec<u64> = (0..=n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / n.max(1) as f64).round() as u64)
        .collect();
    v.dedup();
    v
}

/// Std factors for every `r` in `[2, min(T, r_max)]` at each `T`.
pub fn base_noise(t_grid: &[u64], r_max: u64) -> Result<Vec<BaseNoiseRow>> {
    let mut out = Vec::new();
    for &t in t_grid {
        for row in base_sweep(t, r_max)? {
            out.push(BaseNoiseRow {
                t_max: row.t_max,
                r: row.r,
                levels: row.levels,
                std_factor: (row.objective as f64).sqrt(),
                ratio_vs_base2: row.std_ratio_vs_base2,
            });
        }
    }
    Ok(out)
}

/// Best base at each `T`, with its std ratio against base 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalBaseRow {
    pub t_max: u64,
    pub r: u64,
    pub ratio_vs_base2: f64,
}

pub fn optimal_bases(t_grid: &[u64]) -> Result<Vec<OptimalBaseRow>> {
    t_grid
        .iter()
        .map(|&t| {
            let (r, obj) = optimal_base(t)?;
            let o2 = crate::tree::base_objective(t, 2) as f64;
            Ok(OptimalBaseRow {
                t_max: t,
                r,
                ratio_vs_base2: (obj as f64 / o2).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig4Config {
    pub d: usize,
    pub t_max: usize,
    pub switch_times: Vec<usize>,
    pub zipf_exponent: f64,
    /// Base noise scale before the equal-budget scalings.
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
    pub s_values: Vec<usize>,
    /// Multiples of the recommended margin to sweep.
    pub eta_factors: Vec<f64>,
    /// Failure probability fed to the recommended margin.
    pub beta: f64,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Fig4Config {
            d: 100,
            t_max: 1000,
            switch_times: vec![300, 600],
            zipf_exponent: 1.0,
            tau: 1.0,
            trials: 200,
            seed: 0,
            s_values: vec![1, 3, 5],
            eta_factors: vec![0.25, 0.5, 1.0, 2.0],
            beta: 0.05,
        }
    }
}

/// Mechanism and scaled `tau` for each compared family: all three come to
/// `1 / (2 tau^2)`-zCDP.
pub fn equal_budget_scalings(d: usize, tau: f64) -> [(Mechanism, f64); 3] {
    [
        (Mechanism::KnownBase { delta0: d }, tau * (d as f64).sqrt()),
        (
            Mechanism::Meta {
                quadrant: Quadrant::KnownUnrestricted { k: 1 },
            },
            tau * 2f64.sqrt(),
        ),
        (Mechanism::SparseGumb { k: 1 }, tau * 6f64.sqrt()),
    ]
}

/// zCDP `rho` of each scaled family, in the order of [`equal_budget_scalings`].
pub fn equal_budget_rhos(d: usize, tau: f64) -> Result<Vec<f64>> {
    equal_budget_scalings(d, tau)
        .iter()
        .map(|&(m, t)| Ok(mechanism_budget(m, &PrivacyParams::new(t, 0.5, 0.5)?).rho))
        .collect()
}

/// Reduce every round to its highest noisy entry.
pub fn top1(releases: &ReleaseSequence) -> ReleaseSequence {
    releases
        .iter()
        .map(|r| {
            NoisyRelease::new(
                r.top()
                    .map(|(u, v)| (u.to_owned(), v))
                    .into_iter()
                    .collect(),
                false,
            )
        })
        .collect()
}

type Runner = Box<dyn Fn(&[Event], &NoiseSource) -> Result<ReleaseSequence> + Sync>;

struct SeriesSpec {
    series: String,
    mechanism: Mechanism,
    params: serde_json::Value,
    run: Runner,
}

fn check_fig4(cfg: &Fig4Config) -> Result<()> {
    check_tau(cfg.tau)?;
    check_open_unit("beta", cfg.beta)?;
    if cfg.trials == 0 || cfg.t_max == 0 || cfg.d == 0 {
        return Err(Error::param(
            "trials",
            "trials, t_max and d must be positive",
        ));
    }
    if cfg.s_values.is_empty()
        || cfg
            .eta_factors
            .iter()
            .any(|f| !(f.is_finite() && *f >= 0.0))
    {
        return Err(Error::param(
            "eta_factors",
            "need at least one s and non-negative factors",
        ));
    }
    Ok(())
}

fn fig4_series(cfg: &Fig4Config) -> Result<Vec<SeriesSpec>> {
    let domain = crate::lab::streams::domain_labels(cfg.d);
    let [(kb, kb_tau), (meta, meta_tau), (sg, sg_tau)] = equal_budget_scalings(cfg.d, cfg.tau);
    let mut out = Vec::new();
    for &s in &cfg.s_values {
        let rec = recommended_eta(
            &SparseGumbConfig::new(s, 1, Eta::Constant(0.0), sg_tau),
            cfg.d,
            cfg.t_max,
            cfg.beta,
        )?;
        for &f in &cfg.eta_factors {
            let sc = SparseGumbConfig::new(s, 1, Eta::Constant(f * rec), sg_tau);
            let dom = domain.clone();
            out.push(SeriesSpec {
                series: format!("sparse-gumb-s{s}-x{f}"),
                mechanism: sg,
                params: serde_json::json!({ "s": s, "k": 1, "eta": f * rec, "eta_factor": f, "tau": sg_tau, "r": 2 }),
                run: Box::new(move |stream, src| {
                    Ok(sparse_gumb_run(stream, &dom, &sc, src, StreamId::root("fig4-sparse-gumb"))?.releases)
                }),
            });
        }
    }
    let (t_max, d) = (cfg.t_max, cfg.d);
    let dom = domain.clone();
    out.push(SeriesSpec {
        series: "known-base".into(),
        mechanism: kb,
        params: serde_json::json!({ "delta0": d, "tau": kb_tau, "r": 2 }),
        run: Box::new(move |stream, src| {
            let p = TreeParams::new(t_max, 2, kb_tau)?;
            Ok(top1(&known_base(
                stream,
                &dom,
                d,
                p,
                src,
                StreamId::root("fig4-known-base"),
            )?))
        }),
    });
    out.push(SeriesSpec {
        series: "meta-ku".into(),
        mechanism: meta,
        params: serde_json::json!({ "quadrant": "ku", "k": 1, "tau": meta_tau, "r": 2 }),
        run: Box::new(move |stream, src| {
            let p = TreeParams::new(t_max, 2, meta_tau)?;
            let sel = QuadrantSelector::known(Quadrant::KnownUnrestricted { k: 1 }, domain.clone());
            Ok(top1(&meta_run(
                stream,
                sel,
                p,
                0.5,
                src,
                StreamId::root("fig4-meta"),
            )?))
        }),
    });
    Ok(out)
}

/// Mean error traces of SparseGumb (every `s` and margin), KnownBase and
/// the known-domain top-1 meta mechanism on switching Zipf streams. A fresh
/// stream is drawn per trial and shared by all series.
pub fn fig4(cfg: &Fig4Config) -> Result<Vec<ExperimentResult>> {
    check_fig4(cfg)?;
    let series = fig4_series(cfg)?;
    let root = NoiseSource::new(cfg.seed);
    let start = Instant::now();
    let per_trial: Vec<Vec<(Vec<f64>, f64)>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let src = root.fork(i);
            let spec = StreamSpec::switching_zipf(
                cfg.d,
                cfg.t_max,
                cfg.zipf_exponent,
                cfg.switch_times.clone(),
                src.seed(),
            );
            let stream = generate(&spec)?;
            series
                .iter()
                .map(|sp| {
                    let rel = (sp.run)(&stream, &src)?;
                    let e = error_metric(&rel, &stream)?;
                    Ok((e.trace, e.err))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let secs = start.elapsed().as_secs_f64();
    let n = cfg.trials as f64;
    Ok(series
        .iter()
        .enumerate()
        .map(|(j, sp)| {
            let mut trace = vec![0.0; cfg.t_max];
            let mut err = 0.0;
            for trial in &per_trial {
                for (acc, x) in trace.iter_mut().zip(&trial[j].0) {
                    *acc += x;
                }
                err += trial[j].1;
            }
            trace.iter_mut().for_each(|x| *x /= n);
            ExperimentResult {
                series: sp.series.clone(),
                mechanism: sp.mechanism.name().into(),
                params: sp.params.clone(),
                trace,
                err: err / n,
                wall_clock_secs: secs,
                seed: cfg.seed,
                trials: cfg.trials,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTraceRow {
    pub series: String,
    pub mechanism: String,
    pub s: Option<usize>,
    pub eta: Option<f64>,
    pub t: usize,
    pub mean_error: f64,
}

pub fn error_trace_rows(results: &[ExperimentResult]) -> Vec<ErrorTraceRow> {
    results
        .iter()
        .flat_map(|r| {
            let s = r
                .params
                .get("s")
                .and_then(|v| v.as_u64())
                .map(|v| v as usize);
            let eta = r.params.get("eta").and_then(|v| v.as_f64());
            r.trace
                .iter()
                .enumerate()
                .map(move |(i, &e)| ErrorTraceRow {
                    series: r.series.clone(),
                    mechanism: r.mechanism.clone(),
                    s,
                    eta,
                    t: i + 1,
                    mean_error: e,
                })
        })
        .collect()
}

/// Mean of `trace` over the 1-based rounds `from..=to`.
pub fn window_mean(trace: &[f64], from: usize, to: usize) -> f64 {
    let w = &trace[from - 1..to];
    w.iter().sum::<f64>() / w.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub s_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub beta: f64,
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
    /// Constant in `Err(T) <= C tau sqrt(s) ln^{3/2}(dT/beta)`.
    pub constant: f64,
    /// Rounds each phase runs past its `alpha3` lead.
    pub extra: usize,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig {
            s_values: vec![1, 2, 3],
            d_values: vec![10, 30, 100],
            beta: 0.02,
            tau: 1.0,
            trials: 200,
            seed: 0,
            constant: 16.0,
            extra: 10,
        }
    }
}

/// Gap parameters, margin and length of an Assumption-1 stream built for
/// SparseGumb with `s` switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assumption1Plan {
    pub alphas: Alphas,
    pub alpha_bm: f64,
    pub alpha_at: f64,
    pub eta: f64,
    pub t_max: usize,
}

/// `alpha1 = sqrt(s) tau ln(d/beta)`, `alpha2 = 2 alpha1`,
/// `alpha3 = alpha2 + 2 alpha_BM + 2 alpha_AT + 1` and
/// `eta = alpha2 + alpha_BM + alpha_AT`, with the horizon inside the logs
/// raised until it covers the stream.
pub fn assumption1_plan(
    d: usize,
    s: usize,
    tau: f64,
    beta: f64,
    extra: usize,
) -> Result<Assumption1Plan> {
    check_tau(tau)?;
    check_open_unit("beta", beta)?;
    if s == 0 || d <= s {
        return Err(Error::param(
            "s",
            format!("need 1 <= s < d, got s={s} d={d}"),
        ));
    }
    let sf = s as f64;
    let alpha1 = sf.sqrt() * tau * (d as f64 / beta).ln();
    let alpha2 = 2.0 * alpha1;
    let mut horizon = d;
    loop {
        let t = horizon as f64;
        let l = f64::from(levels(horizon as u64, 2));
        let alpha_bm = tau * l * (2.0 * (sf + 1.0) * (6.0 * t / beta).ln()).sqrt();
        let alpha_at = 8.0 * tau * sf.sqrt() * (6.0 * d as f64 * t / beta).ln();
        let alpha3 = alpha2 + 2.0 * alpha_bm + 2.0 * alpha_at + 1.0;
        let alphas = Alphas::new(alpha1, alpha2, alpha3)?;
        let len = assumption1_length(d, s, &alphas, extra);
        if len <= horizon {
            return Ok(Assumption1Plan {
                alphas,
                alpha_bm,
                alpha_at,
                eta: alpha2 + alpha_bm + alpha_at,
                t_max: len,
            });
        }
        horizon = len;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub s: usize,
    pub d: usize,
    pub t_max: usize,
    pub eta: f64,
    pub alpha3: f64,
    pub trials: usize,
    /// `tau sqrt(s) ln^{3/2}(dT/beta)`.
    pub unit: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub failures: usize,
    pub failure_fraction: f64,
    /// `s beta`.
    pub allowed: f64,
    pub passed: bool,
}

/// `Err(T)` of SparseGumb on validated Assumption-1 streams, in units of
/// `tau sqrt(s) ln^{3/2}(dT/beta)`, over the `(s, d)` grid.
pub fn utility(cfg: &UtilityConfig) -> Result<Vec<UtilityRow>> {
    if cfg.trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    let root = NoiseSource::new(cfg.seed);
    let mut rows = Vec::new();
    for &s in &cfg.s_values {
        for &d in &cfg.d_values {
            let plan = assumption1_plan(d, s, cfg.tau, cfg.beta, cfg.extra)?;
            let mut spec = StreamSpec::assumption1(d, s, plan.alphas);
            spec.extra = cfg.extra;
            let stream = generate(&spec)?;
            validate_assumption1(&stream, &spec.domain(), s, &plan.alphas)?;
            let domain = spec.domain();
            let sc = SparseGumbConfig::new(s, 1, Eta::Constant(plan.eta), cfg.tau);
            let unit = cfg.tau
                * (s as f64).sqrt()
                * (d as f64 * stream.len() as f64 / cfg.beta).ln().powf(1.5);
            let cell = root.fork((s as u64) << 32 | d as u64);
            let errs: Vec<f64> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|i| {
                    let run = sparse_gumb_run(
                        &stream,
                        &domain,
                        &sc,
                        &cell.fork(i),
                        StreamId::root("utility"),
                    )?;
                    Ok(error_metric(&run.releases, &stream)?.err)
                })
                .collect::<Result<_>>()?;
            let ratios: Vec<f64> = errs.iter().map(|e| e / unit).collect();
            let failures = ratios.iter().filter(|&&x| x > cfg.constant).count();
            let n = cfg.trials as f64;
            let allowed = s as f64 * cfg.beta;
            rows.push(UtilityRow {
                s,
                d,
                t_max: stream.len(),
                eta: plan.eta,
                alpha3: plan.alphas.alpha3,
                trials: cfg.trials,
                unit,
                mean_ratio: ratios.iter().sum::<f64>() / n,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                failures,
                failure_fraction: failures as f64 / n,
                allowed,
                passed: failures as f64 / n <= allowed,
            });
        }
    }
    Ok(rows)
}
