//! Incomplete multivariate time series, masks, time gaps, normalization and
//! windowing.
//!
//! The mask is the single source of truth for which cells exist. Missing
//! cells hold `NaN` in storage and no computation in this crate reads them.

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value written to every cell whose mask is 0.
pub const MISSING: f64 = f64::NAN;

/// Timestamps, an `N x M` value matrix and its `N x M` observation mask.
#[derive(Debug, Clone)]
pub struct MultivariateSeries {
    timestamps: Vec<f64>,
    values: Array2<f64>,
    mask: Array2<u8>,
    variable_names: Vec<String>,
}

impl MultivariateSeries {
    /// Validates and builds a series, writing the missing sentinel into every
    /// masked-out cell.
    pub fn new(
        timestamps: Vec<f64>,
        mut values: Array2<f64>,
        mask: Array2<u8>,
        variable_names: Vec<String>,
    ) -> Result<Self> {
        let n = timestamps.len();
        let m = variable_names.len();
        if n == 0 || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "series needs at least one row and one variable (got {n} x {m})"
            )));
        }
        if values.dim() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "values are {:?}, expected ({n}, {m})",
                values.dim()
            )));
        }
        if mask.dim() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {:?}, expected ({n}, {m})",
                mask.dim()
            )));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("timestamps".into()));
        }
        for (row, pair) in timestamps.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::NonIncreasingTimestamps { row: row + 1 });
            }
        }
        for ((row, col), &value) in mask.indexed_iter() {
            if value > 1 {
                return Err(Error::MaskNotBinary { row, col, value });
            }
        }
        for ((row, col), v) in values.indexed_iter_mut() {
            if mask[[row, col]] == 0 {
                *v = MISSING;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "observed value at ({row}, {col})"
                )));
            }
        }
        Ok(Self {
            timestamps,
            values,
            mask,
            variable_names,
        })
    }

    /// Fully observed series.
    pub fn fully_observed(
        timestamps: Vec<f64>,
        values: Array2<f64>,
        variable_names: Vec<String>,
    ) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), 1u8);
        Self::new(timestamps, values, mask, variable_names)
    }

    /// Names `x0, x1, ...` for `m` variables.
    pub fn default_names(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("x{j}")).collect()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<u8> {
        &self.mask
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[[row, col]] == 1
    }

    /// Observed value, or `None` for a missing cell.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.is_observed(row, col).then(|| self.values[[row, col]])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b == 1).count()
    }

    pub fn observed_in_var(&self, col: usize) -> usize {
        self.mask.column(col).iter().filter(|&&b| b == 1).count()
    }

    /// Mask as `0.0 / 1.0` floats.
    pub fn mask_f64(&self) -> Array2<f64> {
        self.mask.mapv(f64::from)
    }

    /// Values with missing cells replaced by `fill`.
    pub fn values_filled(&self, fill: f64) -> Array2<f64> {
        let mut out = self.values.clone();
        for ((r, c), v) in out.indexed_iter_mut() {
            if self.mask[[r, c]] == 0 {
                *v = fill;
            }
        }
        out
    }

    /// Rows `start..end` as a new series.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} invalid for length {}",
                self.len()
            )));
        }
        Ok(Self {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values.slice(s![start..end, ..]).to_owned(),
            mask: self.mask.slice(s![start..end, ..]).to_owned(),
            variable_names: self.variable_names.clone(),
        })
    }

    /// Time-reversed copy. Timestamps become `t_last - t_{N-1-n}` so they
    /// stay strictly increasing and start at zero.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let last = self.timestamps[n - 1];
        let timestamps = (0..n).map(|i| last - self.timestamps[n - 1 - i]).collect();
        Self {
            timestamps,
            values: self.values.slice(s![..;-1, ..]).to_owned(),
            mask: self.mask.slice(s![..;-1, ..]).to_owned(),
            variable_names: self.variable_names.clone(),
        }
    }

    /// Same shape and names with new values and mask.
    pub fn with_values(&self, values: Array2<f64>, mask: Array2<u8>) -> Result<Self> {
        Self::new(
            self.timestamps.clone(),
            values,
            mask,
            self.variable_names.clone(),
        )
    }

    pub(crate) fn column_observed(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let vals: ArrayView1<f64> = self.values.column(col);
        let mask = self.mask.column(col);
        (0..self.len())
            .filter(move |&n| mask[n] == 1)
            .map(move |n| (n, vals[n]))
    }
}

/// Equality ignores the stored content of missing cells.
impl PartialEq for MultivariateSeries {
    fn eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.variable_names == other.variable_names
            && self.mask == other.mask
            && self
                .values
                .indexed_iter()
                .all(|((r, c), v)| self.mask[[r, c]] == 0 || *v == other.values[[r, c]])
    }
}

/// Per-variable elapsed time since the last observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGapMatrix {
    pub deltas: Array2<f64>,
}

impl TimeGapMatrix {
    /// Mean of all gaps with `n > 0`, across every column.
    pub fn mean_positive_rows(&self) -> Option<f64> {
        let (n, m) = self.deltas.dim();
        if n < 2 {
            return None;
        }
        let sum: f64 = self.deltas.slice(s![1.., ..]).iter().sum();
        Some(sum / ((n - 1) * m) as f64)
    }

    /// Mean of the gaps of one column with `n > 0`.
    pub fn column_mean(&self, col: usize) -> Option<f64> {
        let n = self.deltas.nrows();
        if n < 2 {
            return None;
        }
        let sum: f64 = self.deltas.slice(s![1.., col]).iter().sum();
        Some(sum / (n - 1) as f64)
    }
}

/// Time gaps: 0 at the first row; the step size after an observed cell;
/// accumulated step sizes across a run of missing cells.
pub fn time_gap(series: &MultivariateSeries) -> TimeGapMatrix {
    let (n, m) = (series.len(), series.n_vars());
    let ts = series.timestamps();
    let mut deltas = Array2::zeros((n, m));
    for col in 0..m {
        for row in 1..n {
            let step = ts[row] - ts[row - 1];
            deltas[[row, col]] = if series.is_observed(row - 1, col) {
                step
            } else {
                deltas[[row - 1, col]] + step
            };
        }
    }
    TimeGapMatrix { deltas }
}

/// Per-variable mean and sample standard deviation of observed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn from_series(series: &MultivariateSeries) -> Result<Self> {
        let m = series.n_vars();
        let mut mean = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        for col in 0..m {
            let obs: Vec<f64> = series.column_observed(col).map(|(_, v)| v).collect();
            let name = series.variable_names()[col].clone();
            if obs.len() < 2 {
                return Err(Error::TooFewObservations {
                    variable: name,
                    required: 2,
                });
            }
            let mu = obs.iter().sum::<f64>() / obs.len() as f64;
            let var = obs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) || sd <= f64::EPSILON * mu.abs().max(1.0) {
                return Err(Error::ZeroSpread { variable: name });
            }
            mean.push(mu);
            std.push(sd);
        }
        Ok(Self { mean, std })
    }

    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn forward(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    #[inline]
    pub fn inverse(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }

    /// Maps a full `N x M` matrix from model space back to data space.
    pub fn inverse_matrix(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut out = z.clone();
        for ((_, c), v) in out.indexed_iter_mut() {
            *v = self.inverse(c, *v);
        }
        out
    }

    pub fn forward_matrix(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for ((_, c), v) in out.indexed_iter_mut() {
            *v = self.forward(c, *v);
        }
        out
    }
}

/// Z-scores the observed entries of each variable.
pub fn normalize(series: &MultivariateSeries) -> Result<(MultivariateSeries, NormalizationStats)> {
    let stats = NormalizationStats::from_series(series)?;
    let normalized = apply_stats(series, &stats)?;
    Ok((normalized, stats))
}

/// Applies existing statistics to a (possibly different) series.
pub fn apply_stats(
    series: &MultivariateSeries,
    stats: &NormalizationStats,
) -> Result<MultivariateSeries> {
    check_stats(series, stats)?;
    let mut values = series.values().clone();
    for ((r, c), v) in values.indexed_iter_mut() {
        if series.is_observed(r, c) {
            *v = stats.forward(c, *v);
        }
    }
    series.with_values(values, series.mask().clone())
}

/// Inverse of [`normalize`] on observed entries.
pub fn denormalize(
    series: &MultivariateSeries,
    stats: &NormalizationStats,
) -> Result<MultivariateSeries> {
    check_stats(series, stats)?;
    let mut values = series.values().clone();
    for ((r, c), v) in values.indexed_iter_mut() {
        if series.is_observed(r, c) {
            *v = stats.inverse(c, *v);
        }
    }
    series.with_values(values, series.mask().clone())
}

fn check_stats(series: &MultivariateSeries, stats: &NormalizationStats) -> Result<()> {
    if stats.n_vars() != series.n_vars() {
        return Err(Error::VariableCountMismatch {
            expected: stats.n_vars(),
            got: series.n_vars(),
        });
    }
    Ok(())
}

/// Consecutive windows of `len` rows at the given stride; a trailing partial
/// window is dropped.
pub fn split_windows(
    series: &MultivariateSeries,
    len: usize,
    stride: usize,
) -> Result<Vec<MultivariateSeries>> {
    if len == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window length and stride must be positive".into(),
        ));
    }
    let n = series.len();
    if len > n {
        return Err(Error::WindowTooLong { len, n });
    }
    (0..=n - len)
        .step_by(stride)
        .map(|start| series.slice_rows(start, start + len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn one_var(ts: &[f64], vals: &[f64], mask: &[u8]) -> MultivariateSeries {
        let n = ts.len();
        MultivariateSeries::new(
            ts.to_vec(),
            Array2::from_shape_vec((n, 1), vals.to_vec()).unwrap(),
            Array2::from_shape_vec((n, 1), mask.to_vec()).unwrap(),
            vec!["a".into()],
        )
        .unwrap()
    }

    #[test]
    fn fully_observed_has_no_sentinels() {
        let s = one_var(&[0., 1., 2.], &[1., 2., 3.], &[1, 1, 1]);
        assert!(s.values().iter().all(|v| v.is_finite()));
        assert_eq!(s.observed_count(), 3);
    }

    #[test]
    fn rejects_repeated_timestamp() {
        let err = MultivariateSeries::new(
            vec![0., 0., 1.],
            Array2::zeros((3, 1)),
            Array2::ones((3, 1)),
            vec!["a".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-increasing timestamps"));
    }

    #[test]
    fn rejects_non_binary_mask() {
        let err = MultivariateSeries::new(
            vec![0., 1.],
            Array2::zeros((2, 1)),
            array![[1u8], [2u8]],
            vec!["a".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("mask not binary"));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let err = MultivariateSeries::new(
            vec![0., 1., 2.],
            Array2::zeros((2, 1)),
            Array2::ones((2, 1)),
            vec!["a".into()],
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sentinel_written_at_missing() {
        let s = one_var(&[0., 1.], &[5., 7.], &[1, 0]);
        assert!(s.values()[[1, 0]].is_nan());
        assert_eq!(s.get(1, 0), None);
    }

    #[test]
    fn time_gap_examples() {
        let s = one_var(&[0., 1., 2., 3.], &[0.; 4], &[1, 0, 0, 1]);
        assert_eq!(time_gap(&s).deltas.column(0).to_vec(), vec![0., 1., 2., 3.]);

        let s = one_var(&[0., 2., 5.], &[0.; 3], &[1, 1, 1]);
        assert_eq!(time_gap(&s).deltas.column(0).to_vec(), vec![0., 2., 3.]);

        let s = one_var(&[0., 1., 4., 6.], &[0.; 4], &[0, 1, 0, 0]);
        assert_eq!(time_gap(&s).deltas.column(0).to_vec(), vec![0., 1., 3., 5.]);
    }

    #[test]
    fn normalize_two_points_uses_sample_std() {
        let s = one_var(&[0., 1., 2.], &[2., 0., 4.], &[1, 0, 1]);
        let (z, stats) = normalize(&s).unwrap();
        assert_abs_diff_eq!(stats.mean[0], 3.0);
        assert_abs_diff_eq!(stats.std[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(z.values()[[0, 0]], -0.7071067811865475, epsilon = 1e-12);
        assert_abs_diff_eq!(z.values()[[2, 0]], 0.7071067811865475, epsilon = 1e-12);
        assert!(z.values()[[1, 0]].is_nan());
    }

    #[test]
    fn normalize_rejects_constant_column() {
        let s = one_var(&[0., 1., 2.], &[3., 3., 3.], &[1, 1, 1]);
        let err = normalize(&s).unwrap_err();
        assert!(err.to_string().contains("zero spread"));
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn windows() {
        let n = 100;
        let s = MultivariateSeries::fully_observed(
            (0..n).map(f64::from).collect(),
            Array2::zeros((n as usize, 2)),
            MultivariateSeries::default_names(2),
        )
        .unwrap();
        let w = split_windows(&s, 40, 40).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].timestamps()[0], 40.0);
        assert_eq!(w[1].timestamps()[39], 79.0);

        let s40 = s.slice_rows(0, 40).unwrap();
        let w = split_windows(&s40, 40, 40).unwrap();
        assert_eq!(w, vec![s40.clone()]);

        let s37 = s.slice_rows(0, 37).unwrap();
        assert_eq!(split_windows(&s37, 36, 1).unwrap().len(), 2);
        assert!(matches!(
            split_windows(&s37, 38, 1),
            Err(Error::WindowTooLong { .. })
        ));
    }

    #[test]
    fn reversed_keeps_increasing_time() {
        let s = one_var(&[0., 1., 4.], &[1., 2., 3.], &[1, 0, 1]);
        let r = s.reversed();
        assert_eq!(r.timestamps(), &[0., 3., 4.]);
        assert_eq!(r.get(0, 0), Some(3.0));
        assert_eq!(r.get(1, 0), None);
        assert_eq!(r.reversed(), s);
    }
}
