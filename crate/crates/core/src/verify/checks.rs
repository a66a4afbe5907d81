//! Verification checks with serializable reports.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::{event, Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::noise::{NoiseSource, StreamId};
use crate::tree::{levels, TreeParams};
use crate::unknown_continual::unk_base;
use crate::unknown_oneshot::{unk_gauss, LimitedHistogram};
use crate::verify::neighbors::{brute_force_cell_diff, HistogramPair, StreamPair};
use crate::verify::oracles::{
    above_bottom, gauss_mech_bot, relabel_full, relabel_limited, unk_base_oracle, unk_base_top,
    unk_gauss_top, OracleLabel,
};
use crate::verify::stats::{clopper_pearson_upper, ks_two_sample, KsResult, ProportionCheck};

/// Significance of every two-sample test.
pub const ALPHA: f64 = 0.01;
/// Confidence of every one-sided Clopper-Pearson bound.
pub const CONFIDENCE: f64 = 0.99;
/// Binomial tolerance, in standard errors.
pub const K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Sensitivity,
    BadOutcomesUnkgauss,
    BadOutcomesUnkbase,
    GoodEquivalence,
    DummyEquivalence,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Sensitivity,
        Check::BadOutcomesUnkgauss,
        Check::BadOutcomesUnkbase,
        Check::GoodEquivalence,
        Check::DummyEquivalence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Check::Sensitivity => "sensitivity",
            Check::BadOutcomesUnkgauss => "bad-outcomes-unkgauss",
            Check::BadOutcomesUnkbase => "bad-outcomes-unkbase",
            Check::GoodEquivalence => "good-equivalence",
            Check::DummyEquivalence => "dummy-equivalence",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Usage(format!("unknown check {name:?}")))
    }
}

/// Outcome of one check, ready for JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub passed: bool,
    pub trials: u64,
    pub seed: u64,
    pub details: serde_json::Value,
}

/// Run a check. `trials` only matters for the Monte Carlo checks.
pub fn run_check(check: Check, trials: u64, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let (passed, details) = match check {
        Check::Sensitivity => {
            let tree = tree_sweep(64, &[2, 3, 4], seed)?;
            let relabel = relabel_sweep(5, 3)?;
            let ok = tree.passed && relabel.passed;
            (ok, serde_json::json!({ "tree": tree, "relabel": relabel }))
        }
        Check::BadOutcomesUnkgauss => {
            let r = bad_outcomes_unk_gauss(trials, seed)?;
            (r.passed, serde_json::to_value(r)?)
        }
        Check::BadOutcomesUnkbase => {
            let r = bad_outcomes_unk_base(trials, seed)?;
            (r.passed, serde_json::to_value(r)?)
        }
        Check::GoodEquivalence => {
            let g = good_equivalence_unk_gauss(trials, seed)?;
            let b = good_equivalence_unk_base(trials, seed)?;
            let ok = g.iter().chain(&b).all(|c| c.passed);
            (ok, serde_json::json!({ "unk_gauss": g, "unk_base": b }))
        }
        Check::DummyEquivalence => {
            let g = dummy_equivalence_unk_gauss(trials, seed)?;
            let b = dummy_equivalence_unk_base(trials, seed)?;
            (
                g.passed && b.passed,
                serde_json::json!({ "unk_gauss": g, "unk_base": b }),
            )
        }
    };
    Ok(CheckReport {
        check,
        passed,
        trials,
        seed,
        details,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeSweep {
    pub pairs: u64,
    pub violations: u64,
    pub worst_cells_over_levels: f64,
    pub passed: bool,
}

fn bit_stream(bits: impl IntoIterator<Item = bool>) -> Vec<Event> {
    bits.into_iter()
        .map(|b| if b { event(["1"]) } else { Event::new() })
        .collect()
}

/// Neighbor sweep over the partial-sum table for every `T <= max_t` and
/// base in `bases`. Every stream of length at most 10 is tried; longer
/// lengths use the all-ones stream and two random 0/1 streams, each with
/// every nonempty round dropped in turn.
pub fn tree_sweep(max_t: usize, bases: &[usize], seed: u64) -> Result<TreeSweep> {
    let src = NoiseSource::new(seed);
    let jobs: Vec<(usize, usize)> = (1..=max_t)
        .flat_map(|t| bases.iter().map(move |&r| (t, r)))
        .collect();
    let per: Vec<Result<(u64, u64, f64)>> = jobs
        .par_iter()
        .map(|&(t_max, r)| {
            let mut backgrounds: Vec<Vec<Event>> = Vec::new();
            if t_max <= 10 {
                for mask in 0u32..(1 << t_max) {
                    backgrounds.push(bit_stream((0..t_max).map(|i| mask >> i & 1 == 1)));
                }
            } else {
                backgrounds.push(bit_stream(std::iter::repeat_n(true, t_max)));
                for k in 0..2u64 {
                    let mut rng = src.rng(
                        StreamId::root("tree-sweep")
                            .cell(r as u32, t_max as u64)
                            .aux(k),
                    );
                    backgrounds.push(bit_stream((0..t_max).map(|_| rng.random_bool(0.5))));
                }
            }
            let l = levels(t_max as u64, r as u64) as f64;
            let (mut pairs, mut bad, mut worst) = (0u64, 0u64, 0.0f64);
            for s in backgrounds {
                for t in 1..=t_max {
                    if s[t - 1].is_empty() {
                        continue;
                    }
                    let p = StreamPair::drop_round(s.clone(), t)?;
                    let d = brute_force_cell_diff(&p, r, t_max)?;
                    pairs += 1;
                    worst = worst.max(d.cells_changed as f64 / l);
                    if d.cells_changed as f64 > l || d.max_diff > 1 {
                        bad += 1;
                    }
                }
            }
            Ok((pairs, bad, worst))
        })
        .collect();
    let mut out = TreeSweep {
        pairs: 0,
        violations: 0,
        worst_cells_over_levels: 0.0,
        passed: false,
    };
    for p in per {
        let (n, b, w) = p?;
        out.pairs += n;
        out.violations += b;
        out.worst_cells_over_levels = out.worst_cells_over_levels.max(w);
    }
    out.passed = out.violations == 0 && out.pairs > 0;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RelabelSweep {
    pub pairs: u64,
    pub max_bad_over_delta0: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Every dominated pair over `d` labels with counts up to `max_count`,
/// relabeled over limited domains (every `k_bar <= d`) and full domains
/// (`d_bar` in `{d, d + 2}`), in both orientations.
pub fn relabel_sweep(d: usize, max_count: u64) -> Result<RelabelSweep> {
    let names: Vec<String> = (0..d)
        .map(|i| ((b'a' + i as u8) as char).to_string())
        .collect();
    let base = max_count + 1;
    let total = base.pow(d as u32);
    let mut out = RelabelSweep {
        pairs: 0,
        max_bad_over_delta0: 0.0,
        violations: Vec::new(),
        passed: false,
    };
    for code in 0..total {
        let counts: Vec<u64> = (0..d).map(|i| code / base.pow(i as u32) % base).collect();
        let support: Vec<usize> = (0..d).filter(|&i| counts[i] > 0).collect();
        for sub in 1u32..(1 << support.len()) {
            let dropped: Vec<usize> = (0..support.len())
                .filter(|j| sub >> j & 1 == 1)
                .map(|j| support[j])
                .collect();
            let delta0 = dropped.len();
            let h0: LabeledHistogram = names.iter().cloned().zip(counts.iter().copied()).collect();
            let h1: LabeledHistogram = names
                .iter()
                .enumerate()
                .map(|(i, u)| (u.clone(), counts[i] - u64::from(dropped.contains(&i))))
                .collect();
            for (x, y) in [(&h0, &h1), (&h1, &h0)] {
                let pair = HistogramPair::new(x.clone(), y.clone(), delta0)?;
                let mut verdicts = Vec::new();
                for k in 1..=d {
                    let v = relabel_limited(&pair, k, 1.0, 0.1)?;
                    out.max_bad_over_delta0 =
                        out.max_bad_over_delta0.max(v.bad as f64 / delta0 as f64);
                    verdicts.push((format!("k_bar={k}"), v.check(delta0)));
                }
                for d_bar in [d, d + 2] {
                    let v = relabel_full(&pair, d_bar)?;
                    out.max_bad_over_delta0 =
                        out.max_bad_over_delta0.max(v.bad as f64 / delta0 as f64);
                    verdicts.push((format!("d_bar={d_bar}"), v.check(delta0)));
                }
                out.pairs += 1;
                for (what, v) in verdicts {
                    if let Err(e) = v {
                        if out.violations.len() < 20 {
                            out.violations.push(format!("{x:?} vs {y:?}, {what}: {e}"));
                        }
                    }
                }
            }
        }
    }
    out.passed = out.violations.is_empty() && out.pairs > 0;
    Ok(out)
}

/// Frequency of an event with its one-sided upper bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub side: u8,
    pub hits: u64,
    pub trials: u64,
    pub frequency: f64,
    pub cp_upper: f64,
    pub bound: f64,
    pub passed: bool,
}

impl BoundRow {
    fn new(side: u8, hits: u64, trials: u64, bound: f64) -> Result<Self> {
        let cp_upper = clopper_pearson_upper(hits, trials, CONFIDENCE)?;
        Ok(BoundRow {
            side,
            hits,
            trials,
            frequency: hits as f64 / trials as f64,
            cp_upper,
            bound,
            passed: cp_upper <= bound,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BadOutcomeReport {
    pub instance: String,
    pub rows: Vec<BoundRow>,
    pub passed: bool,
}

/// `(h0, h1, k_bar, tau, delta, delta0)`: `h1` adds the event `{d, x}` to
/// `h0`, which moves `d` into the top three.
pub fn unk_gauss_bad_instance() -> (HistogramPair, usize, f64, f64) {
    let h0 = LabeledHistogram::from_pairs([("a", 9), ("b", 9), ("c", 2), ("d", 2)]);
    let h1 = LabeledHistogram::from_pairs([("a", 9), ("b", 9), ("c", 2), ("d", 3), ("x", 1)]);
    (
        HistogramPair::new(h0, h1, 2).expect("valid pair"),
        3,
        1.0,
        0.02,
    )
}

fn count_hits<F>(trials: u64, f: F) -> Result<u64>
where
    F: Fn(u64) -> Result<bool> + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(i).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Frequency with which the one-shot mechanism releases a label the other
/// neighbor could not release.
pub fn bad_outcomes_unk_gauss(trials: u64, seed: u64) -> Result<BadOutcomeReport> {
    let (pair, k_bar, tau, delta) = unk_gauss_bad_instance();
    let src = NoiseSource::new(seed);
    let bound = pair.delta0() as f64 * delta;
    let mut rows = Vec::new();
    for b in [false, true] {
        let lim = LimitedHistogram::from_histogram(pair.get(b), k_bar);
        let other = LimitedHistogram::from_histogram(pair.get(!b), k_bar);
        let allowed: BTreeSet<&str> = other.head().iter().map(|e| e.0.as_str()).collect();
        let hits = count_hits(trials, |i| {
            let r = unk_gauss(&lim, tau, delta, &src.fork(i), StreamId::root("bad-ug"))?;
            let bad = r.labels().any(|u| !allowed.contains(u));
            Ok(bad)
        })?;
        rows.push(BoundRow::new(u8::from(b), hits, trials, bound)?);
    }
    Ok(BadOutcomeReport {
        instance: "h0={a:9,b:9,c:2,d:2} h1={a:9,b:9,c:2,d:3,x:1} k_bar=3 tau=1 delta=0.02 delta0=2"
            .into(),
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

/// A 32-round stream over `a` and `b`, with the fresh event `{x, y}` at
/// round 9 dropped on the second side.
pub fn unk_base_bad_instance() -> (StreamPair, TreeParams, f64) {
    let s: Vec<Event> = (1..=32)
        .map(|t| match t {
            9 => event(["x", "y"]),
            t if t % 3 == 0 => event(["a", "b"]),
            t if t % 2 == 0 => event(["b"]),
            _ => event(["a"]),
        })
        .collect();
    let pair = StreamPair::drop_round(s, 9).expect("valid pair");
    (
        pair,
        TreeParams::new(32, 2, 1.0).expect("valid params"),
        0.05,
    )
}

fn released_any(out: &ReleaseSequence, labels: &Event) -> bool {
    out.iter().any(|r| r.labels().any(|u| labels.contains(u)))
}

/// Frequency with which the continual mechanism ever releases an item that
/// only one neighbor contains.
pub fn bad_outcomes_unk_base(trials: u64, seed: u64) -> Result<BadOutcomeReport> {
    let (pair, params, delta) = unk_base_bad_instance();
    let delta0 = 2;
    let fresh = pair.fresh_items();
    let src = NoiseSource::new(seed);
    let mut rows = Vec::new();
    for b in [false, true] {
        let s = pair.stream(b);
        let hits = count_hits(trials, |i| {
            let out = unk_base(
                s,
                params,
                delta,
                delta0,
                &src.fork(i),
                StreamId::root("bad-ub"),
            )?;
            Ok(released_any(&out, &fresh))
        })?;
        rows.push(BoundRow::new(
            u8::from(b),
            hits,
            trials,
            delta0 as f64 * delta,
        )?);
    }
    Ok(BadOutcomeReport {
        instance: "T=32 r=2 tau=1 delta=0.05 delta0=2, fresh {x,y} at round 9".into(),
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

/// Summary of one trial: whether the outcome is good, which tracked labels
/// were released, and a real statistic for the KS test.
#[derive(Debug, Clone)]
struct Trial {
    good: bool,
    hits: Vec<bool>,
    stat: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FreqRow {
    pub event: String,
    pub mechanism: f64,
    pub oracle: f64,
    pub z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub name: String,
    pub side: u8,
    pub rows: Vec<FreqRow>,
    pub ks: Option<KsResult>,
    pub passed: bool,
}

/// Compare two trial sets: `Pr[good]`, `Pr[good and label released]` per
/// tracked label, and a KS test on the statistic over good trials.
fn compare(
    name: &str,
    side: bool,
    labels: &[&str],
    m: &[Trial],
    a: &[Trial],
) -> Result<Comparison> {
    let (nm, na) = (m.len() as u64, a.len() as u64);
    let count =
        |ts: &[Trial], f: &dyn Fn(&Trial) -> bool| ts.iter().filter(|t| f(t)).count() as u64;
    let mut rows = Vec::new();
    let mut push = |event: String, f: &dyn Fn(&Trial) -> bool| {
        let c = ProportionCheck::new(count(m, f), nm, count(a, f), na);
        rows.push(FreqRow {
            event,
            mechanism: c.p1,
            oracle: c.p2,
            z: c.z,
            passed: c.within(K_SIGMA),
        });
    };
    push("good".into(), &|t| t.good);
    for (i, u) in labels.iter().enumerate() {
        push(format!("good and {u} released"), &|t| t.good && t.hits[i]);
    }
    let stats = |ts: &[Trial]| -> Vec<f64> {
        ts.iter()
            .filter(|t| t.good)
            .filter_map(|t| t.stat)
            .collect()
    };
    let (sm, sa) = (stats(m), stats(a));
    let ks = if sm.len() >= 50 && sa.len() >= 50 {
        Some(ks_two_sample(&sm, &sa, ALPHA)?)
    } else {
        None
    };
    let passed = rows.iter().all(|r| r.passed) && ks.is_none_or(|k| !k.reject);
    Ok(Comparison {
        name: name.into(),
        side: u8::from(side),
        rows,
        ks,
        passed,
    })
}

fn trials_of<F>(trials: u64, f: F) -> Result<Vec<Trial>>
where
    F: Fn(u64) -> Result<Trial> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

fn summarize(r: &NoisyRelease, labels: &[&str], good: bool) -> Trial {
    Trial {
        good,
        hits: labels.iter().map(|u| r.contains(u)).collect(),
        stat: r.top().map(|e| e.1),
    }
}

/// `(h0, h1, k_bar, tau, delta)` over four items: `h1` adds `{c, x}`, which
/// swaps `b` and `c` in the top two.
pub fn unk_gauss_good_instance() -> (HistogramPair, usize, f64, f64) {
    let h0 = LabeledHistogram::from_pairs([("a", 4), ("b", 2), ("c", 2)]);
    let h1 = LabeledHistogram::from_pairs([("a", 4), ("b", 2), ("c", 3), ("x", 1)]);
    (
        HistogramPair::new(h0, h1, 2).expect("valid pair"),
        2,
        1.0,
        0.1,
    )
}

/// Same shape with a shared top two and a low threshold: `h1` raises the
/// cut, so only `⊥` moves.
pub fn unk_gauss_shared_top_instance() -> (HistogramPair, usize, f64, f64) {
    let h0 = LabeledHistogram::from_pairs([("a", 4), ("b", 3), ("c", 1)]);
    let h1 = LabeledHistogram::from_pairs([("a", 4), ("b", 3), ("c", 2), ("x", 1)]);
    (
        HistogramPair::new(h0, h1, 2).expect("valid pair"),
        2,
        1.0,
        0.4,
    )
}

/// The one-shot mechanism against the post-processed limited-domain oracle,
/// restricted to outcomes both neighbors can produce.
pub fn good_equivalence_unk_gauss(trials: u64, seed: u64) -> Result<Vec<Comparison>> {
    let src = NoiseSource::new(seed);
    let labels = ["a", "b", "c", "x"];
    let mut out = Vec::new();
    let instances = [
        (
            "unk_gauss vs limited-domain oracle",
            unk_gauss_good_instance(),
        ),
        (
            "unk_gauss vs limited-domain oracle, shared top",
            unk_gauss_shared_top_instance(),
        ),
    ];
    for (name, (pair, k_bar, tau, delta)) in instances {
        for b in [false, true] {
            let lim = LimitedHistogram::from_histogram(pair.get(b), k_bar);
            let other = LimitedHistogram::from_histogram(pair.get(!b), k_bar);
            let allowed: BTreeSet<&str> = other.head().iter().map(|e| e.0.as_str()).collect();
            let m = trials_of(trials, |i| {
                let r = unk_gauss(&lim, tau, delta, &src.fork(i), StreamId::root("ge-m"))?;
                let good = r.labels().all(|u| allowed.contains(u));
                Ok(summarize(&r, &labels, good))
            })?;
            let a = trials_of(trials, |i| {
                let v = gauss_mech_bot(
                    b,
                    &pair,
                    k_bar,
                    tau,
                    delta,
                    &src.fork(i),
                    StreamId::root("ge-a"),
                )?;
                let kept = above_bottom(&v);
                let good = !kept.iter().any(|e| matches!(e.0, OracleLabel::Bad(_)));
                let entries = kept
                    .into_iter()
                    .filter_map(|(l, x)| match l {
                        OracleLabel::Item(u) => Some((u, x)),
                        _ => None,
                    })
                    .collect();
                Ok(summarize(&NoisyRelease::new(entries, false), &labels, good))
            })?;
            out.push(compare(name, b, &labels, &m, &a)?);
        }
    }
    Ok(out)
}

/// An 8-round stream over `a` and `b` with the fresh item `x` at round 3,
/// dropped on the second side.
pub fn unk_base_good_instance() -> (StreamPair, TreeParams, f64, usize) {
    let s = vec![
        event(["a"]),
        event(["a", "b"]),
        event(["a", "x"]),
        event(["a"]),
        event(["b"]),
        event(["a"]),
        event(["a", "b"]),
        event(["a"]),
    ];
    let pair = StreamPair::drop_round(s, 3).expect("valid pair");
    (
        pair,
        TreeParams::new(8, 2, 0.25).expect("valid params"),
        0.5,
        2,
    )
}

fn final_round_summary(out: &ReleaseSequence, labels: &[&str], good: bool) -> Trial {
    let last = out.round(out.len());
    Trial {
        good,
        hits: labels.iter().map(|u| last.contains(u)).collect(),
        stat: Some(last.entries.iter().map(|e| e.1).sum()),
    }
}

/// The continual mechanism against the per-cell full-domain oracle,
/// restricted to outcomes both neighbors can produce.
pub fn good_equivalence_unk_base(trials: u64, seed: u64) -> Result<Vec<Comparison>> {
    let (pair, params, delta, delta0) = unk_base_good_instance();
    let fresh = pair.fresh_items();
    let src = NoiseSource::new(seed);
    let labels = ["a", "b"];
    let d_bar = 5;
    let mut out = Vec::new();
    for b in [false, true] {
        let s = pair.stream(b);
        let m = trials_of(trials, |i| {
            let r = unk_base(
                s,
                params,
                delta,
                delta0,
                &src.fork(i),
                StreamId::root("ge-ub"),
            )?;
            Ok(final_round_summary(&r, &labels, !released_any(&r, &fresh)))
        })?;
        let a = trials_of(trials, |i| {
            let r = unk_base_oracle(
                b,
                &pair,
                d_bar,
                params,
                delta,
                delta0,
                &src.fork(i),
                StreamId::root("ge-ob"),
            )?;
            Ok(final_round_summary(&r, &labels, !released_any(&r, &fresh)))
        })?;
        out.push(compare(
            "unk_base vs per-cell full-domain oracle",
            b,
            &labels,
            &m,
            &a,
        )?);
    }
    Ok(out)
}

/// The one-shot mechanism against its padded variant on a histogram with
/// fewer positive items than `k_bar`.
pub fn dummy_equivalence_unk_gauss(trials: u64, seed: u64) -> Result<Comparison> {
    let h = LabeledHistogram::from_pairs([("a", 5), ("b", 3)]);
    let (k_bar, tau, delta) = (4, 1.0, 0.1);
    let src = NoiseSource::new(seed);
    let labels = ["a", "b"];
    let lim = LimitedHistogram::from_histogram(&h, k_bar);
    let m = trials_of(trials, |i| {
        let r = unk_gauss(&lim, tau, delta, &src.fork(i), StreamId::root("de-m"))?;
        Ok(summarize(&r, &labels, true))
    })?;
    let a = trials_of(trials, |i| {
        let r = unk_gauss_top(&h, k_bar, tau, delta, &src.fork(i), StreamId::root("de-a"))?;
        Ok(summarize(&r, &labels, true))
    })?;
    compare("unk_gauss vs padded", false, &labels, &m, &a)
}

/// The continual mechanism against the variant padding every cell.
pub fn dummy_equivalence_unk_base(trials: u64, seed: u64) -> Result<Comparison> {
    let s: Vec<Event> = (1..=16)
        .map(|t| match t % 4 {
            0 => event(["a", "c"]),
            1 => event(["a"]),
            2 => event(["b"]),
            _ => event(["a", "b"]),
        })
        .collect();
    let params = TreeParams::new(16, 2, 0.3)?;
    let (delta, delta0, d_bar) = (0.3, 2, 6);
    let src = NoiseSource::new(seed);
    let labels = ["a", "b", "c"];
    let m = trials_of(trials, |i| {
        let r = unk_base(
            &s,
            params,
            delta,
            delta0,
            &src.fork(i),
            StreamId::root("de-ub"),
        )?;
        Ok(final_round_summary(&r, &labels, true))
    })?;
    let a = trials_of(trials, |i| {
        let r = unk_base_top(
            &s,
            d_bar,
            params,
            delta,
            delta0,
            &src.fork(i),
            StreamId::root("de-top"),
        )?;
        Ok(final_round_summary(&r, &labels, true))
    })?;
    compare("unk_base vs padded", false, &labels, &m, &a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(Check::from_name(c.name()).unwrap(), c);
        }
        assert!(Check::from_name("nope").unwrap_err().is_usage());
    }

    #[test]
    fn small_tree_sweep_passes() {
        let r = tree_sweep(12, &[2, 3], 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_cells_over_levels <= 1.0);
    }

    #[test]
    fn small_relabel_sweep_passes() {
        let r = relabel_sweep(3, 2).unwrap();
        assert!(r.passed, "{:?}", r.violations);
        assert!(r.max_bad_over_delta0 <= 1.0);
    }

    #[test]
    fn instances_have_fresh_items() {
        let (p, ..) = unk_base_bad_instance();
        assert_eq!(p.fresh_items(), event(["x", "y"]));
        let (p, ..) = unk_base_good_instance();
        assert_eq!(p.fresh_items(), event(["x"]));
    }

    #[test]
    fn quick_monte_carlo_checks_run() {
        for c in [
            Check::BadOutcomesUnkgauss,
            Check::GoodEquivalence,
            Check::DummyEquivalence,
        ] {
            let r = run_check(c, 2000, 5).unwrap();
            assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
    }
}
