use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grbf::blend_observed;
use crate::par;
use crate::series::MultivariateSeries;

pub const DEFAULT_K: usize = 10;

fn column_means(series: &MultivariateSeries) -> Result<Vec<f64>> {
    (0..series.n_vars())
        .map(|c| {
            let obs: Vec<f64> = series.column_observed(c).map(|(_, v)| v).collect();
            if obs.is_empty() {
                Err(Error::TooFewObservations {
                    variable: series.variable_names()[c].clone(),
                    required: 1,
                })
            } else {
                Ok(obs.iter().sum::<f64>() / obs.len() as f64)
            }
        })
        .collect()
}

/// Fills each missing cell with its variable's observed mean.
pub fn mean_baseline(series: &MultivariateSeries) -> Result<MultivariateSeries> {
    let means = column_means(series)?;
    let fill = Array2::from_shape_fn(series.values().dim(), |(_, c)| means[c]);
    blend_observed(series, &fill)
}

/// Root mean squared difference over dimensions observed in both rows;
/// infinite when they share none.
pub fn row_distance(series: &MultivariateSeries, a: usize, b: usize) -> f64 {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for c in 0..series.n_vars() {
        if let (Some(x), Some(y)) = (series.get(a, c), series.get(b, c)) {
            sum += (x - y) * (x - y);
            shared += 1;
        }
    }
    if shared == 0 {
        f64::INFINITY
    } else {
        (sum / shared as f64).sqrt()
    }
}

/// Fills each missing cell with the mean of that variable over the `k`
/// nearest rows observing it (ties broken by row index). Rows with no shared
/// observed dimension sit at infinite distance but remain eligible; the
/// variable mean is used only when no other row observes the variable.
pub fn knn_baseline(series: &MultivariateSeries, k: usize) -> Result<MultivariateSeries> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let means = column_means(series)?;
    let (n, m) = series.values().dim();
    let rows = par::map_range(n, |r| {
        let mut out = vec![f64::NAN; m];
        let missing: Vec<usize> = (0..m).filter(|&c| !series.is_observed(r, c)).collect();
        if missing.is_empty() {
            return out;
        }
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&o| o != r)
            .map(|o| (row_distance(series, r, o), o))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for c in missing {
            let donors: Vec<f64> = others
                .iter()
                .filter_map(|&(_, o)| series.get(o, c))
                .take(k)
                .collect();
            out[c] = if donors.is_empty() {
                means[c]
            } else {
                donors.iter().sum::<f64>() / donors.len() as f64
            };
        }
        out
    });
    let fill = Array2::from_shape_fn((n, m), |(r, c)| rows[r][c]);
    blend_observed(series, &fill)
}
