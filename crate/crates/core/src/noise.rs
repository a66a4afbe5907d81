//! Keyed, reproducible noise.
//!
//! Every random quantity a mechanism uses is addressed by a [`StreamId`]: a
//! structured key naming the mechanism, the item label, the table cell and an
//! auxiliary counter (round, switch epoch, trial). A draw is a pure function
//! of `(seed, StreamId)`, so a mechanism that needs "the same realization as
//! before" for a `(label, cell)` pair recomputes it instead of storing it.
//!
//! Draws are reproducible bit-for-bit on a given build. They are not promised
//! to match across platforms because the transcendental functions used by the
//! samplers are platform dependent.

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub mod normal;

pub use normal::{normal_cdf, normal_quantile, normal_sf, normal_upper_quantile};

/// The generator behind every keyed stream.
pub type NoiseRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a string (FNV-1a followed by a SplitMix finalizer).
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Structured key identifying one noise stream.
///
/// The fields are independent coordinates, so the order in which the
/// builder methods are called does not matter: `root("m").label("a").cell(1, 2)`
/// and `root("m").cell(1, 2).label("a")` name the same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    mechanism: u64,
    label: u64,
    level: u32,
    cell: u64,
    aux: u64,
}

impl StreamId {
    pub fn root(mechanism: &str) -> Self {
        StreamId {
            mechanism: hash_str(mechanism),
            label: 0,
            level: 0,
            cell: 0,
            aux: 0,
        }
    }

    pub fn label(self, label: &str) -> Self {
        StreamId {
            label: hash_str(label) | 1,
            ..self
        }
    }

    /// Address cell `index` (1-based) on tree `level` (1-based).
    pub fn cell(self, level: u32, index: u64) -> Self {
        StreamId {
            level,
            cell: index,
            ..self
        }
    }

    /// Auxiliary counter: round number, switch epoch, bottom marker, etc.
    pub fn aux(self, aux: u64) -> Self {
        StreamId { aux, ..self }
    }

    /// Same stream with a different auxiliary tag mixed into the mechanism id.
    pub fn sub(self, tag: &str) -> Self {
        StreamId {
            mechanism: mix64(self.mechanism ^ hash_str(tag)),
            ..self
        }
    }

    fn key(&self, seed: u64) -> [u8; 32] {
        let words = [
            mix64(seed),
            self.mechanism,
            self.label,
            mix64(u64::from(self.level) ^ mix64(self.cell ^ mix64(self.aux))),
        ];
        let mut out = [0u8; 32];
        for (chunk, w) in out.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        out
    }
}

/// Seeded source of keyed noise. Cheap to copy; carries no mutable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent source for Monte Carlo trial `trial`.
    pub fn fork(&self, trial: u64) -> NoiseSource {
        NoiseSource {
            seed: mix64(self.seed ^ mix64(trial.wrapping_add(0x5eed))),
        }
    }

    /// Sequential generator for the stream `id`. Use when a mechanism needs
    /// many draws in a fixed order (a scan over items, a trial).
    pub fn rng(&self, id: StreamId) -> NoiseRng {
        NoiseRng::from_seed(id.key(self.seed))
    }

    /// One draw from N(0, sigma^2); exactly 0 when `sigma == 0`.
    pub fn gaussian(&self, id: StreamId, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        gaussian(&mut self.rng(id), sigma)
    }

    /// One draw from Laplace(0, scale); exactly 0 when `scale == 0`.
    pub fn laplace(&self, id: StreamId, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        laplace(&mut self.rng(id), scale)
    }

    /// One draw from Gumbel(0, scale); exactly 0 when `scale == 0`.
    pub fn gumbel(&self, id: StreamId, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        gumbel(&mut self.rng(id), scale)
    }

    /// One uniform draw on the open interval (0, 1).
    pub fn uniform(&self, id: StreamId) -> f64 {
        Open01.sample(&mut self.rng(id))
    }
}

pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Inverse-CDF Laplace sampler. Variance is `2 * scale^2`.
pub fn laplace<R: rand::Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = Open01.sample(rng);
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

/// `-scale * ln(-ln U)` with `U` on the open unit interval. Mean is
/// `scale * EULER_GAMMA`.
pub fn gumbel<R: rand::Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = Open01.sample(rng);
    -scale * (-u.ln()).ln()
}

/// Euler–Mascheroni constant, the mean of a standard Gumbel variable.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn zero_scale_is_exactly_zero() {
        let src = NoiseSource::new(3);
        let id = StreamId::root("t");
        assert_eq!(src.gaussian(id, 0.0), 0.0);
        assert_eq!(src.laplace(id, 0.0), 0.0);
        assert_eq!(src.gumbel(id, 0.0), 0.0);
    }

    #[test]
    fn keyed_draws_are_deterministic() {
        let src = NoiseSource::new(42);
        let id = StreamId::root("m").label("apple").cell(3, 7).aux(11);
        assert_eq!(src.gaussian(id, 1.0), src.gaussian(id, 1.0));
        assert_eq!(
            NoiseSource::new(42).laplace(id, 2.0),
            NoiseSource::new(42).laplace(id, 2.0)
        );
        assert_ne!(src.gaussian(id, 1.0), src.gaussian(id.aux(12), 1.0));
        assert_ne!(
            src.gaussian(id, 1.0),
            NoiseSource::new(43).gaussian(id, 1.0)
        );
    }

    #[test]
    fn builder_order_is_irrelevant() {
        let a = StreamId::root("m").label("x").cell(2, 5).aux(1);
        let b = StreamId::root("m").aux(1).cell(2, 5).label("x");
        assert_eq!(a, b);
        assert_ne!(
            StreamId::root("m").cell(1, 2),
            StreamId::root("m").cell(2, 1)
        );
    }

    #[test]
    fn gaussian_moments() {
        let src = NoiseSource::new(1);
        let mut rng = src.rng(StreamId::root("moments"));
        let xs: Vec<f64> = (0..1_000_000).map(|_| gaussian(&mut rng, 1.0)).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn laplace_moments_and_median() {
        let src = NoiseSource::new(2);
        let mut rng = src.rng(StreamId::root("laplace"));
        let mut xs: Vec<f64> = (0..1_000_000).map(|_| laplace(&mut rng, 1.0)).collect();
        let (_, var) = moments(&xs);
        assert!((var - 2.0).abs() < 0.03, "var {var}");
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        assert!(median.abs() < 0.01, "median {median}");
    }

    #[test]
    fn gumbel_mean_is_euler_gamma() {
        let src = NoiseSource::new(3);
        let mut rng = src.rng(StreamId::root("gumbel"));
        let xs: Vec<f64> = (0..1_000_000).map(|_| gumbel(&mut rng, 1.0)).collect();
        let (mean, _) = moments(&xs);
        assert!((mean - EULER_GAMMA).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gumbel_argmax_of_ties_is_uniform() {
        let src = NoiseSource::new(4);
        let mut rng = src.rng(StreamId::root("argmax"));
        let n = 1_000_000;
        let mut wins = [0u32; 3];
        for _ in 0..n {
            let g: Vec<f64> = (0..3).map(|_| gumbel(&mut rng, 1.0)).collect();
            let best = (0..3).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
            wins[best] += 1;
        }
        for w in wins {
            let f = f64::from(w) / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{wins:?}");
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let src = NoiseSource::new(5);
        let n = 100_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let base = StreamId::root("corr").aux(i);
                (
                    src.gaussian(base.label("a"), 1.0),
                    src.gaussian(base.label("b"), 1.0),
                )
            })
            .collect();
        let (ma, mb) = pairs
            .iter()
            .fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
        let (ma, mb) = (ma / n as f64, mb / n as f64);
        let cov: f64 = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>();
        let va: f64 = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum::<f64>();
        let vb: f64 = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum::<f64>();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() <= 0.01, "corr {corr}");
    }
}
