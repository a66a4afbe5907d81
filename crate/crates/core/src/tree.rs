//! Base-r partial-sum tree for running counts.
//!
//! Level `i` (1-based) holds cells of width `r^(i-1)`; cell `(i, j)` covers
//! stream positions `((j-1) r^(i-1), j r^(i-1)]`. The prefix sum at `t` is the
//! sum of the cells named by the base-`r` digits of `t`: for digit `s_j`,
//! the `s_j` consecutive level-`(j+1)` cells ending at index `t / r^j`.
//!
//! Every cell gets independent `N(0, L_r tau^2)` noise. Only cells that some
//! prefix actually uses are ever sampled, which leaves the output
//! distribution unchanged.

use serde::Serialize;

use crate::error::{check_tau, Error, Result};
use crate::noise::{NoiseSource, StreamId};

/// `floor(log_r t) + 1`, by repeated multiplication.
pub fn levels(t: u64, r: u64) -> u32 {
    assert!(r >= 2 && t >= 1, "levels needs r >= 2 and t >= 1");
    let mut l = 1;
    let mut p = r;
    while p <= t {
        l += 1;
        match p.checked_mul(r) {
            Some(next) => p = next,
            None => break,
        }
    }
    l
}

/// `r^e`, saturating at `u64::MAX`.
fn pow(r: u64, e: u32) -> u64 {
    r.checked_pow(e).unwrap_or(u64::MAX)
}

/// Horizon, base and noise scale of one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeParams {
    pub t_max: usize,
    pub r: usize,
    pub tau: f64,
    pub levels: u32,
}

impl TreeParams {
    pub fn new(t_max: usize, r: usize, tau: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::param("t_max", "must be at least 1"));
        }
        if r < 2 || (r > t_max && t_max >= 2) {
            return Err(Error::param(
                "r",
                format!("base must lie in [2, {}], got {r}", t_max.max(2)),
            ));
        }
        check_tau(tau)?;
        Ok(TreeParams {
            t_max,
            r,
            tau,
            levels: levels(t_max as u64, r as u64),
        })
    }

    /// Standard deviation of each cell's noise, `sqrt(L_r) tau`.
    pub fn cell_sigma(&self) -> f64 {
        f64::from(self.levels).sqrt() * self.tau
    }

    /// Worst-case standard deviation of a prefix, `sqrt(r-1) L_r tau`.
    pub fn worst_case_sigma(&self) -> f64 {
        ((self.r - 1) as f64).sqrt() * f64::from(self.levels) * self.tau
    }

    /// Number of cells on level `level`.
    pub fn cells_on_level(&self, level: u32) -> u64 {
        self.t_max as u64 / pow(self.r as u64, level - 1)
    }

    /// Same tree with a different noise scale.
    pub fn with_tau(self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(TreeParams { tau, ..self })
    }
}

/// A cell of the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub level: u32,
    pub index: u64,
}

impl Cell {
    pub fn new(level: u32, index: u64) -> Self {
        Cell { level, index }
    }

    /// Inclusive 1-based interval of stream positions covered by the cell.
    pub fn interval(&self, r: usize) -> (u64, u64) {
        let w = pow(r as u64, self.level - 1);
        ((self.index - 1) * w + 1, self.index * w)
    }

    /// Stream id of this cell's noise under `base`.
    pub fn stream(&self, base: StreamId) -> StreamId {
        base.cell(self.level, self.index)
    }
}

/// Base-`r` digits of `t` and the cells whose sums make up its prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DigitDecomposition {
    pub t: u64,
    /// `digits[j]` is `s_j(t; r)`, least significant first.
    pub digits: Vec<u64>,
    /// Cells from the highest level down, increasing index within a level.
    pub cells: Vec<Cell>,
}

/// Digits and prefix cells of `t` in base `r`.
pub fn decompose(t: u64, r: usize) -> Result<DigitDecomposition> {
    if t == 0 {
        return Err(Error::param("t", "rounds are 1-based"));
    }
    if r < 2 {
        return Err(Error::param("r", format!("base must be >= 2, got {r}")));
    }
    let r = r as u64;
    let mut digits = Vec::new();
    let mut rest = t;
    while rest > 0 {
        digits.push(rest % r);
        rest /= r;
    }
    let mut cells = Vec::with_capacity(digits.iter().sum::<u64>() as usize);
    for (j, &s) in digits.iter().enumerate().rev() {
        if s == 0 {
            continue;
        }
        let end = t / pow(r, j as u32);
        for idx in (end - s + 1)..=end {
            cells.push(Cell::new(j as u32 + 1, idx));
        }
    }
    Ok(DigitDecomposition { t, digits, cells })
}

/// Exact interval sums of a bit stream, per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartialSumTable {
    pub r: usize,
    pub t_max: usize,
    /// `cells[i-1][j-1]` is the sum for cell `(i, j)`.
    pub cells: Vec<Vec<u64>>,
}

impl PartialSumTable {
    pub fn get(&self, cell: Cell) -> Option<u64> {
        self.cells
            .get(cell.level as usize - 1)?
            .get(cell.index as usize - 1)
            .copied()
    }

    pub fn levels(&self) -> u32 {
        self.cells.len() as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, u64)> + '_ {
        self.cells.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, &v)| (Cell::new(i as u32 + 1, j as u64 + 1), v))
        })
    }
}

fn check_bits(stream: &[u8], t_max: usize) -> Result<()> {
    if stream.len() > t_max {
        return Err(Error::StreamTooLong {
            len: stream.len(),
            t_max,
        });
    }
    if let Some(i) = stream.iter().position(|&b| b > 1) {
        return Err(Error::param(
            "stream",
            format!("entry {} is {}, expected 0 or 1", i + 1, stream[i]),
        ));
    }
    Ok(())
}

/// Populate the partial-sum table. Positions past the end of `stream`
/// count as zero.
pub fn build_table(stream: &[u8], params: &TreeParams) -> Result<PartialSumTable> {
    check_bits(stream, params.t_max)?;
    let mut prefix = vec![0u64; params.t_max + 1];
    for t in 1..=params.t_max {
        prefix[t] = prefix[t - 1] + u64::from(stream.get(t - 1).copied().unwrap_or(0));
    }
    let cells = (1..=params.levels)
        .map(|i| {
            let w = pow(params.r as u64, i - 1) as usize;
            (1..=params.cells_on_level(i) as usize)
                .map(|j| prefix[j * w] - prefix[(j - 1) * w])
                .collect()
        })
        .collect();
    Ok(PartialSumTable {
        r: params.r,
        t_max: params.t_max,
        cells,
    })
}

/// Noisy prefix sums `y_hat_1..y_hat_n` for a bit stream of length `n`.
/// Cell `(i, j)`'s noise is the keyed draw at `id.cell(i, j)`.
pub fn run(
    stream: &[u8],
    params: &TreeParams,
    src: &NoiseSource,
    id: StreamId,
) -> Result<Vec<f64>> {
    let table = build_table(stream, params)?;
    let sigma = params.cell_sigma();
    (1..=stream.len() as u64)
        .map(|t| {
            let d = decompose(t, params.r)?;
            let mut y = 0.0;
            for c in &d.cells {
                let p = table.get(*c).expect("cell inside table") as f64;
                y += p + src.gaussian(c.stream(id), sigma);
            }
            Ok(y)
        })
        .collect()
}

/// `sum over I_t(r)` of the keyed cell noises, in decomposition order.
///
/// A tree over any stream has `y_hat_t = y_t + prefix_noise(t)`, so
/// mechanisms that keep exact running counts use this instead of a table.
pub fn prefix_noise(params: &TreeParams, src: &NoiseSource, id: StreamId, t: u64) -> Result<f64> {
    if t as usize > params.t_max {
        return Err(Error::HorizonExceeded {
            round: t as usize,
            t_max: params.t_max,
        });
    }
    let sigma = params.cell_sigma();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    Ok(decompose(t, params.r)?
        .cells
        .iter()
        .map(|c| src.gaussian(c.stream(id), sigma))
        .sum())
}

/// Streaming form of [`run`]: same output bit for bit, keeping only the
/// closed cells of each level's current parent block plus one open
/// accumulator per level.
#[derive(Debug, Clone)]
pub struct IncrementalCounter {
    params: TreeParams,
    src: NoiseSource,
    id: StreamId,
    t: u64,
    widths: Vec<u64>,
    open: Vec<u64>,
    closed: Vec<Vec<f64>>,
}

impl IncrementalCounter {
    pub fn new(params: TreeParams, src: NoiseSource, id: StreamId) -> Self {
        let l = params.levels as usize;
        IncrementalCounter {
            params,
            src,
            id,
            t: 0,
            widths: (0..l as u32).map(|i| pow(params.r as u64, i)).collect(),
            open: vec![0; l],
            closed: vec![Vec::with_capacity(params.r - 1); l],
        }
    }

    /// Rounds consumed so far.
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    /// Feed round `t + 1`'s bit and return `y_hat_{t+1}`.
    pub fn step(&mut self, bit: bool) -> Result<f64> {
        self.step_count(u64::from(bit))
    }

    /// As [`step`](Self::step) but with an arbitrary non-negative increment,
    /// for counters over aggregated inputs.
    pub fn step_count(&mut self, x: u64) -> Result<f64> {
        if self.t as usize >= self.params.t_max {
            return Err(Error::HorizonExceeded {
                round: self.t as usize + 1,
                t_max: self.params.t_max,
            });
        }
        self.t += 1;
        let t = self.t;
        let sigma = self.params.cell_sigma();
        for (i, &w) in self.widths.iter().enumerate() {
            self.open[i] += x;
            if !t.is_multiple_of(w) {
                continue;
            }
            let j = t / w;
            let sum = std::mem::take(&mut self.open[i]);
            if j.is_multiple_of(self.params.r as u64) {
                // Block complete; the parent cell now covers it.
                self.closed[i].clear();
            } else {
                let z = self.src.gaussian(self.id.cell(i as u32 + 1, j), sigma);
                self.closed[i].push(sum as f64 + z);
            }
        }
        Ok(self.current())
    }

    /// `y_hat_t` for the current round (0 before the first step).
    pub fn current(&self) -> f64 {
        let mut y = 0.0;
        for level in self.closed.iter().rev() {
            for v in level {
                y += v;
            }
        }
        y
    }

    /// Cells currently held: closed noisy cells plus open accumulators.
    pub fn active_cells(&self) -> usize {
        self.closed.iter().map(Vec::len).sum::<usize>() + self.open.len()
    }
}

/// `(r - 1) L_r^2`, the worst-case prefix variance in units of `tau^2`.
pub fn base_objective(t_max: u64, r: u64) -> u64 {
    let l = u64::from(levels(t_max, r));
    (r - 1) * l * l
}

/// Minimiser of [`base_objective`] over `r in [2, T]`, smallest `r` on ties.
///
/// Since `L_r >= 2` for every `r <= T`, the objective is at least `4(r-1)`,
/// so the scan stops once that exceeds the best value found.
pub fn optimal_base(t_max: u64) -> Result<(u64, u64)> {
    if t_max < 2 {
        return Err(Error::param("t_max", format!("must be >= 2, got {t_max}")));
    }
    let mut best = (2, base_objective(t_max, 2));
    let mut r = 3;
    while r <= t_max && 4 * (r - 1) <= best.1 {
        let obj = base_objective(t_max, r);
        if obj < best.1 {
            best = (r, obj);
        }
        r += 1;
    }
    Ok(best)
}

/// One row of the base sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseRow {
    pub t_max: u64,
    pub r: u64,
    pub levels: u32,
    pub objective: u64,
    /// `sqrt(objective(r) / objective(2))`.
    pub std_ratio_vs_base2: f64,
}

/// Rows for every `r` in `[2, min(T, r_max)]`.
pub fn base_sweep(t_max: u64, r_max: u64) -> Result<Vec<BaseRow>> {
    if t_max < 2 {
        return Err(Error::param("t_max", format!("must be >= 2, got {t_max}")));
    }
    let o2 = base_objective(t_max, 2) as f64;
    Ok((2..=t_max.min(r_max.max(2)))
        .map(|r| {
            let objective = base_objective(t_max, r);
            BaseRow {
                t_max,
                r,
                levels: levels(t_max, r),
                objective,
                std_ratio_vs_base2: (objective as f64 / o2).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn levels_at_powers() {
        assert_eq!(levels(1024, 2), 11);
        assert_eq!(levels(1023, 2), 10);
        assert_eq!(levels(27, 3), 4);
        assert_eq!(levels(26, 3), 3);
        assert_eq!(levels(1, 2), 1);
        assert_eq!(levels(u64::MAX, 2), 64);
        assert_eq!(levels(1_000_000, 1_000_000), 2);
    }

    #[test]
    fn all_ones_table() {
        let p = TreeParams::new(4, 2, 0.0).unwrap();
        let t = build_table(&[1, 1, 1, 1], &p).unwrap();
        assert_eq!(t.cells, vec![vec![1, 1, 1, 1], vec![2, 2], vec![4]]);
        let z = build_table(&[0, 0, 0, 0], &p).unwrap();
        assert!(z.iter().all(|(_, v)| v == 0));
    }

    #[test]
    fn rejects_bad_streams() {
        let p = TreeParams::new(4, 2, 0.0).unwrap();
        assert!(matches!(
            build_table(&[1; 5], &p),
            Err(Error::StreamTooLong { .. })
        ));
        assert!(build_table(&[2], &p).is_err());
        assert!(TreeParams::new(4, 5, 1.0).is_err());
        assert!(TreeParams::new(4, 1, 1.0).is_err());
        assert!(TreeParams::new(4, 2, -1.0).is_err());
    }

    #[test]
    fn decompose_examples() {
        let d = decompose(7, 2).unwrap();
        assert_eq!(d.digits, vec![1, 1, 1]);
        let iv: Vec<_> = d.cells.iter().map(|c| c.interval(2)).collect();
        assert_eq!(iv, vec![(1, 4), (5, 6), (7, 7)]);

        let d = decompose(5, 3).unwrap();
        assert_eq!(d.digits, vec![2, 1]);
        let iv: Vec<_> = d.cells.iter().map(|c| c.interval(3)).collect();
        assert_eq!(iv, vec![(1, 3), (4, 4), (5, 5)]);

        let d = decompose(81, 3).unwrap();
        assert_eq!(d.cells, vec![Cell::new(5, 1)]);
        assert!(decompose(0, 2).is_err());
    }

    #[test]
    fn cover_property_exhaustive() {
        for r in 2..=10 {
            for t in 1..=1000u64 {
                let d = decompose(t, r).unwrap();
                let value: u64 = d
                    .digits
                    .iter()
                    .enumerate()
                    .map(|(j, s)| s * (r as u64).pow(j as u32))
                    .sum();
                assert_eq!(value, t);
                assert_eq!(d.cells.len() as u64, d.digits.iter().sum::<u64>());
                let l = levels(t, r as u64) as usize;
                assert!(d.cells.len() <= (r - 1) * l);
                let mut next = 1;
                for c in &d.cells {
                    let (a, b) = c.interval(r);
                    assert_eq!(a, next, "t={t} r={r}");
                    next = b + 1;
                }
                assert_eq!(next, t + 1);
            }
        }
    }

    #[test]
    fn noiseless_run_is_exact() {
        let p = TreeParams::new(4, 3, 0.0).unwrap();
        let y = run(&[1, 1, 1, 1], &p, &NoiseSource::new(1), StreamId::root("t")).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn incremental_first_bit() {
        let p = TreeParams::new(8, 2, 0.0).unwrap();
        let mut c = IncrementalCounter::new(p, NoiseSource::new(1), StreamId::root("t"));
        assert_eq!(c.step(true).unwrap(), 1.0);
    }

    #[test]
    fn incremental_rejects_past_horizon() {
        let p = TreeParams::new(2, 2, 1.0).unwrap();
        let mut c = IncrementalCounter::new(p, NoiseSource::new(1), StreamId::root("t"));
        c.step(true).unwrap();
        c.step(false).unwrap();
        assert!(matches!(
            c.step(true),
            Err(Error::HorizonExceeded { round: 3, .. })
        ));
    }

    #[test]
    fn variance_at_t_max() {
        // L_2(1024) = 11 and t = 1024 uses one cell, so Var = 11.
        // t = 1023 uses ten cells: Var = 110.
        let p = TreeParams::new(1024, 2, 1.0).unwrap();
        let src = NoiseSource::new(99);
        let n = 10_000;
        for (t, want) in [(1024u64, 11.0), (1023, 110.0)] {
            let cells = decompose(t, 2).unwrap().cells;
            let xs: Vec<f64> = (0..n)
                .map(|trial| {
                    let id = StreamId::root("var").aux(trial);
                    cells
                        .iter()
                        .map(|c| src.gaussian(c.stream(id), p.cell_sigma()))
                        .sum()
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            assert!((var / want - 1.0).abs() < 0.1, "t={t} var={var}");
            assert!(want <= 121.0);
        }
    }

    #[test]
    fn optimal_base_small() {
        assert_eq!(optimal_base(2).unwrap(), (2, 4));
        assert!(optimal_base(1).is_err());
        let brute = (2..=1024u64)
            .map(|r| (base_objective(1024, r), r))
            .min()
            .unwrap();
        assert_eq!(optimal_base(1024).unwrap(), (brute.1, brute.0));
    }

    #[test]
    fn sweep_t16_rows() {
        // Hand enumeration: L_2 = 5, L_3 = 3, L_4 = 3.
        let rows = base_sweep(16, 4).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].levels, rows[0].objective), (5, 25));
        assert_eq!((rows[1].levels, rows[1].objective), (3, 18));
        assert_eq!((rows[2].levels, rows[2].objective), (3, 27));
        assert_eq!(base_sweep(2, 10).unwrap()[0].std_ratio_vs_base2, 1.0);
    }

    proptest! {
        #[test]
        fn incremental_matches_batch(
            bits in proptest::collection::vec(0u8..2, 1..=81),
            r in 2usize..=3,
            tau in 0.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let p = TreeParams::new(81, r, tau).unwrap();
            let src = NoiseSource::new(seed);
            let id = StreamId::root("eq");
            let batch = run(&bits, &p, &src, id).unwrap();
            let mut c = IncrementalCounter::new(p, src, id);
            for (t, &b) in bits.iter().enumerate() {
                let y = c.step(b == 1).unwrap();
                prop_assert_eq!(y.to_bits(), batch[t].to_bits());
                prop_assert!(c.active_cells() <= r * p.levels as usize);
            }
        }

        #[test]
        fn parent_equals_sum_of_children(
            bits in proptest::collection::vec(0u8..2, 1..=100),
            r in 2usize..=10,
        ) {
            let p = TreeParams::new(100, r, 0.0).unwrap();
            let tab = build_table(&bits, &p).unwrap();
            for (c, v) in tab.iter() {
                let (a, b) = c.interval(r);
                let brute: u64 = (a..=b).map(|i| u64::from(bits.get(i as usize - 1).copied().unwrap_or(0))).sum();
                prop_assert_eq!(v, brute);
                if c.level > 1 {
                    let kids: u64 = (1..=r as u64)
                        .map(|k| tab.get(Cell::new(c.level - 1, (c.index - 1) * r as u64 + k)).unwrap())
                        .sum();
                    prop_assert_eq!(v, kids);
                }
            }
        }
    }
}
