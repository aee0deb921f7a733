use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

/// Attempts at placing one run before giving up on runs altogether.
const PLACEMENT_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    Random,
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub rate: f64,
    /// Inclusive run-length range, long-term mode only.
    pub term_range: (usize, usize),
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn apply(&self, series: &MultivariateSeries) -> Result<GroundTruthPair> {
        match self.mode {
            CorruptionMode::Random => inject_random(series, self.rate, self.seed),
            CorruptionMode::LongTerm => {
                inject_long_term(series, self.rate, self.term_range, self.seed)
            }
        }
    }
}

/// A corrupted series together with the values it hides.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPair {
    pub corrupted: MultivariateSeries,
    /// Values of the source series; `NaN` where the source was missing.
    pub truth: Array2<f64>,
    /// 1 where a known value was hidden.
    pub eval_mask: Array2<u8>,
}

impl GroundTruthPair {
    pub fn eval_count(&self) -> usize {
        self.eval_mask.iter().filter(|&&b| b == 1).count()
    }

    /// Puts every hidden value back.
    pub fn restore(&self) -> Result<MultivariateSeries> {
        let mut values = self.corrupted.values().clone();
        let mut mask = self.corrupted.mask().clone();
        for ((r, c), &e) in self.eval_mask.indexed_iter() {
            if e == 1 {
                values[[r, c]] = self.truth[[r, c]];
                mask[[r, c]] = 1;
            }
        }
        self.corrupted.with_values(values, mask)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "missing rate must lie in (0, 1), got {rate}"
        )));
    }
    Ok(())
}

struct Hider<'a> {
    series: &'a MultivariateSeries,
    hidden: Array2<bool>,
    left: Vec<usize>,
}

impl<'a> Hider<'a> {
    fn new(series: &'a MultivariateSeries) -> Self {
        Self {
            series,
            hidden: Array2::from_elem(series.mask().dim(), false),
            left: (0..series.n_vars())
                .map(|c| series.observed_in_var(c))
                .collect(),
        }
    }

    fn available(&self, r: usize, c: usize) -> bool {
        self.series.is_observed(r, c) && !self.hidden[[r, c]]
    }

    fn hide(&mut self, r: usize, c: usize) {
        self.hidden[[r, c]] = true;
        self.left[c] -= 1;
    }

    fn finish(self) -> Result<GroundTruthPair> {
        let mut mask = self.series.mask().clone();
        let mut eval_mask = Array2::zeros(mask.dim());
        for ((r, c), &h) in self.hidden.indexed_iter() {
            if h {
                mask[[r, c]] = 0;
                eval_mask[[r, c]] = 1;
            }
        }
        let corrupted = self
            .series
            .with_values(self.series.values().clone(), mask)?;
        Ok(GroundTruthPair {
            corrupted,
            truth: self.series.values().clone(),
            eval_mask,
        })
    }
}

/// Number of cells that can be hidden while every variable keeps one
/// observation.
fn capacity(series: &MultivariateSeries) -> usize {
    (0..series.n_vars())
        .map(|c| series.observed_in_var(c).saturating_sub(1))
        .sum()
}

/// Hides `round(rate * observed)` observed cells chosen uniformly without
/// replacement. No variable loses its last observation.
pub fn inject_random(series: &MultivariateSeries, rate: f64, seed: u64) -> Result<GroundTruthPair> {
    check_rate(rate)?;
    let budget = (rate * series.observed_count() as f64).round() as usize;
    if budget > capacity(series) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} would leave a variable with zero observations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<(usize, usize)> = series
        .mask()
        .indexed_iter()
        .filter(|(_, &b)| b == 1)
        .map(|(rc, _)| rc)
        .collect();
    cells.shuffle(&mut rng);

    let mut hider = Hider::new(series);
    let mut remaining = budget;
    for (r, c) in cells {
        if remaining == 0 {
            break;
        }
        if hider.left[c] > 1 {
            hider.hide(r, c);
            remaining -= 1;
        }
    }
    debug_assert_eq!(remaining, 0);
    hider.finish()
}

/// Hides `round(rate * observed)` cells, mostly as runs whose lengths are
/// drawn uniformly from `term_range` (inclusive) and placed per variable at
/// random non-overlapping, non-touching positions. Whatever budget is left
/// below the minimum run length is hidden as random single cells.
pub fn inject_long_term(
    series: &MultivariateSeries,
    rate: f64,
    term_range: (usize, usize),
    seed: u64,
) -> Result<GroundTruthPair> {
    check_rate(rate)?;
    let (lo, hi) = term_range;
    let n = series.len();
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "bad term range [{lo}, {hi}]"
        )));
    }
    if lo > n {
        return Err(Error::InvalidArgument(format!(
            "minimum term {lo} exceeds series length {n}"
        )));
    }
    let budget = (rate * series.observed_count() as f64).round() as usize;
    if budget > capacity(series) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} would leave a variable with zero observations"
        )));
    }
    let m = series.n_vars();
    let separate = lo > 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hider = Hider::new(series);
    let mut remaining = budget;

    'runs: while remaining >= lo {
        let len = rng.random_range(lo..=hi.min(remaining).min(n));
        for _ in 0..PLACEMENT_ATTEMPTS {
            let c = rng.random_range(0..m);
            let start = rng.random_range(0..=n - len);
            if hider.left[c] <= len {
                continue;
            }
            let fits = (start..start + len).all(|r| hider.available(r, c));
            let touches = separate
                && ((start > 0 && hider.hidden[[start - 1, c]])
                    || (start + len < n && hider.hidden[[start + len, c]]));
            if fits && !touches {
                (start..start + len).for_each(|r| hider.hide(r, c));
                remaining -= len;
                continue 'runs;
            }
        }
        break;
    }

    if remaining > 0 {
        let near_run = |h: &Hider, r: usize, c: usize| {
            separate && ((r > 0 && h.hidden[[r - 1, c]]) || (r + 1 < n && h.hidden[[r + 1, c]]))
        };
        let mut cells: Vec<(usize, usize)> = series
            .mask()
            .indexed_iter()
            .filter(|(_, &b)| b == 1)
            .map(|(rc, _)| rc)
            .filter(|&(r, c)| hider.available(r, c))
            .collect();
        cells.shuffle(&mut rng);
        // cells not touching a run first
        let (free, touching): (Vec<_>, Vec<_>) = cells
            .into_iter()
            .partition(|&(r, c)| !near_run(&hider, r, c));
        for (r, c) in free.into_iter().chain(touching) {
            if remaining == 0 {
                break;
            }
            if hider.available(r, c) && hider.left[c] > 1 {
                hider.hide(r, c);
                remaining -= 1;
            }
        }
    }
    if remaining > 0 {
        return Err(Error::InvalidArgument(format!(
            "could not hide {budget} cells at rate {rate}"
        )));
    }
    hider.finish()
}
