//! Shared Gaussian RBF banks and the per-variable continuous functions they
//! realize.
//!
//! A basis is `exp(-(t - c)^2 / sigma)`, with `sigma` in squared time units.
//! All variables share centers and widths; each variable owns one weight
//! column.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::series::{MultivariateSeries, NormalizationStats};

/// Widths are clamped to at least this value after every update.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Single Gaussian basis evaluated at `t`.
pub fn grbf_eval(center: f64, sigma: f64, t: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(gaussian(center, sigma, t))
}

#[inline]
pub(crate) fn gaussian(center: f64, sigma: f64, t: f64) -> f64 {
    let d = t - center;
    (-(d * d) / sigma).exp()
}

/// Centers, widths and a `K x M` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GrbfBank {
    pub centers: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub weights: Array2<f64>,
    /// Exclusive end index of each training stage, in order.
    pub stage_boundaries: Vec<usize>,
}

impl GrbfBank {
    pub fn empty(n_vars: usize) -> Self {
        Self {
            centers: Vec::new(),
            sigmas: Vec::new(),
            weights: Array2::zeros((0, n_vars)),
            stage_boundaries: Vec::new(),
        }
    }

    pub fn new(centers: Vec<f64>, sigmas: Vec<f64>, weights: Array2<f64>) -> Result<Self> {
        let k = centers.len();
        let bank = Self {
            stage_boundaries: if k > 0 { vec![k] } else { vec![] },
            centers,
            sigmas,
            weights,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centers.len();
        if self.sigmas.len() != k || self.weights.nrows() != k {
            return Err(Error::DimensionMismatch(format!(
                "bank has {k} centers, {} sigmas, {} weight rows",
                self.sigmas.len(),
                self.weights.nrows()
            )));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::InvalidArgument(format!("non-positive sigma {s}")));
        }
        if self
            .centers
            .iter()
            .chain(&self.sigmas)
            .any(|v| !v.is_finite())
            || self.weights.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("bank parameters".into()));
        }
        let mut prev = 0;
        for &b in &self.stage_boundaries {
            if b < prev || b > k {
                return Err(Error::InvalidArgument(format!(
                    "bad stage boundary {b} for {k} bases"
                )));
            }
            prev = b;
        }
        Ok(())
    }

    pub fn n_bases(&self) -> usize {
        self.centers.len()
    }

    pub fn n_vars(&self) -> usize {
        self.weights.ncols()
    }

    /// Index ranges of each stage.
    pub fn stage_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.stage_boundaries
            .iter()
            .map(|&end| {
                let r = start..end;
                start = end;
                r
            })
            .collect()
    }

    /// Appends bases as a new stage and returns their index range.
    pub fn push_stage(
        &mut self,
        centers: &[f64],
        sigmas: &[f64],
        weights: &Array2<f64>,
    ) -> std::ops::Range<usize> {
        let start = self.n_bases();
        self.centers.extend_from_slice(centers);
        self.sigmas.extend_from_slice(sigmas);
        let mut w = Array2::zeros((start + centers.len(), self.n_vars()));
        w.slice_mut(ndarray::s![..start, ..]).assign(&self.weights);
        w.slice_mut(ndarray::s![start.., ..]).assign(weights);
        self.weights = w;
        let end = self.n_bases();
        self.stage_boundaries.push(end);
        start..end
    }

    /// Sum of the bases in `range` for variable `var` at time `t`.
    pub(crate) fn eval_range(&self, range: std::ops::Range<usize>, t: f64, var: usize) -> f64 {
        range
            .map(|k| self.weights[[k, var]] * gaussian(self.centers[k], self.sigmas[k], t))
            .sum()
    }

    /// Row of all variables at `t`, restricted to `range`.
    pub(crate) fn eval_row_range(&self, range: std::ops::Range<usize>, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in range {
            let phi = gaussian(self.centers[k], self.sigmas[k], t);
            for (v, w) in out.iter_mut().zip(self.weights.row(k)) {
                *v += w * phi;
            }
        }
    }

    /// `N x M` evaluation of the bases in `range` at each timestamp.
    pub(crate) fn eval_series_range(
        &self,
        range: std::ops::Range<usize>,
        timestamps: &[f64],
    ) -> Array2<f64> {
        let m = self.n_vars();
        let mut out = Array2::zeros((timestamps.len(), m));
        let data = out
            .as_slice_mut()
            .expect("freshly allocated array is contiguous");
        par::for_each_row_mut(data, m, |n, row| {
            self.eval_row_range(range.clone(), timestamps[n], row)
        });
        out
    }
}

/// Weighted sum of every basis for variable `var` at time `t`.
pub fn cf_eval(bank: &GrbfBank, t: f64, var: usize) -> Result<f64> {
    if var >= bank.n_vars() {
        return Err(Error::IndexOutOfRange {
            index: var,
            size: bank.n_vars(),
        });
    }
    Ok(bank.eval_range(0..bank.n_bases(), t, var))
}

/// `N x M` matrix of [`cf_eval`] at every timestamp and variable.
pub fn cf_eval_series(bank: &GrbfBank, timestamps: &[f64]) -> Array2<f64> {
    bank.eval_series_range(0..bank.n_bases(), timestamps)
}

/// A fitted bank with the metadata needed to read it in data units.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousFunction {
    pub bank: GrbfBank,
    pub variable_names: Vec<String>,
    /// When present the bank lives in z-scored space.
    pub normalization: Option<NormalizationStats>,
}

impl ContinuousFunction {
    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    /// Model-space evaluation (what the bank itself computes).
    pub fn eval_model(&self, timestamps: &[f64]) -> Array2<f64> {
        cf_eval_series(&self.bank, timestamps)
    }

    /// Evaluation in data units.
    pub fn eval(&self, timestamps: &[f64]) -> Array2<f64> {
        let z = self.eval_model(timestamps);
        match &self.normalization {
            Some(stats) => stats.inverse_matrix(&z),
            None => z,
        }
    }

    /// Keeps observed cells and fills missing ones with the function value.
    pub fn impute(&self, series: &MultivariateSeries) -> Result<MultivariateSeries> {
        if series.n_vars() != self.n_vars() {
            return Err(Error::VariableCountMismatch {
                expected: self.n_vars(),
                got: series.n_vars(),
            });
        }
        let cf = self.eval(series.timestamps());
        blend_observed(series, &cf)
    }
}

/// Imputes with a bare bank (model units).
pub fn impute_with_cf(series: &MultivariateSeries, bank: &GrbfBank) -> Result<MultivariateSeries> {
    if series.n_vars() != bank.n_vars() {
        return Err(Error::VariableCountMismatch {
            expected: bank.n_vars(),
            got: series.n_vars(),
        });
    }
    let cf = cf_eval_series(bank, series.timestamps());
    blend_observed(series, &cf)
}

/// Observed cells from `series`, remaining cells from `fill`; fully observed
/// output.
pub(crate) fn blend_observed(
    series: &MultivariateSeries,
    fill: &Array2<f64>,
) -> Result<MultivariateSeries> {
    let mut values = fill.clone();
    for ((r, c), v) in values.indexed_iter_mut() {
        if series.is_observed(r, c) {
            *v = series.values()[[r, c]];
        }
    }
    let mask = Array2::from_elem(values.dim(), 1u8);
    series.with_values(values, mask)
}

pub const BANK_FORMAT: &str = "grbf-bank";
pub const BANK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BankFile {
    format: String,
    version: u32,
    variable_names: Vec<String>,
    centers: Vec<f64>,
    sigmas: Vec<f64>,
    /// One row per basis.
    weights: Vec<Vec<f64>>,
    stage_boundaries: Vec<usize>,
    normalization: Option<NormalizationStats>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Reads the `format`/`version` header of a versioned JSON document.
pub(crate) fn check_header(
    path: &Path,
    value: &serde_json::Value,
    format: &str,
    version: u32,
) -> Result<()> {
    let header: Header = serde_json::from_value(value.clone()).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        msg: format!("missing format/version header: {e}"),
    })?;
    if header.format != format {
        return Err(Error::Malformed {
            path: path.to_owned(),
            msg: format!("expected format `{format}`, found `{}`", header.format),
        });
    }
    if header.version != version {
        return Err(Error::Version {
            format: format.into(),
            found: header.version,
            expected: version,
        });
    }
    Ok(())
}

pub(crate) fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a continuous function as versioned JSON.
pub fn save_bank(cf: &ContinuousFunction, path: impl AsRef<Path>) -> Result<()> {
    let bank = &cf.bank;
    let file = BankFile {
        format: BANK_FORMAT.into(),
        version: BANK_VERSION,
        variable_names: cf.variable_names.clone(),
        centers: bank.centers.clone(),
        sigmas: bank.sigmas.clone(),
        weights: bank
            .weights
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        stage_boundaries: bank.stage_boundaries.clone(),
        normalization: cf.normalization.clone(),
    };
    write_json(path.as_ref(), &file)
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ContinuousFunction> {
    let path = path.as_ref();
    let value = read_json(path)?;
    check_header(path, &value, BANK_FORMAT, BANK_VERSION)?;
    let file: BankFile = serde_json::from_value(value).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    let m = file.variable_names.len();
    let k = file.weights.len();
    if file.weights.iter().any(|r| r.len() != m) {
        return Err(Error::Malformed {
            path: path.to_owned(),
            msg: format!("weight rows must have {m} entries"),
        });
    }
    let weights =
        Array2::from_shape_vec((k, m), file.weights.concat()).map_err(|e| Error::Malformed {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
    let bank = GrbfBank {
        centers: file.centers,
        sigmas: file.sigmas,
        weights,
        stage_boundaries: file.stage_boundaries,
    };
    bank.validate().map_err(|e| Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    if let Some(stats) = &file.normalization {
        if stats.n_vars() != m || stats.std.len() != m {
            return Err(Error::Malformed {
                path: path.to_owned(),
                msg: "normalization stats do not match variable count".into(),
            });
        }
    }
    Ok(ContinuousFunction {
        bank,
        variable_names: file.variable_names,
        normalization: file.normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn basis_values() {
        assert_eq!(grbf_eval(5.0, 2.0, 5.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            grbf_eval(0.0, 4.0, 2.0).unwrap(),
            0.36787944117144233,
            epsilon = 1e-15
        );
        assert_eq!(
            grbf_eval(0.0, 1.0, 3.0).unwrap(),
            grbf_eval(0.0, 1.0, -3.0).unwrap()
        );
        assert!(grbf_eval(0.0, 0.0, 1.0).is_err());
        assert!(grbf_eval(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn cf_examples() {
        let zero = GrbfBank::new(vec![0.0, 3.0], vec![1.0, 2.0], Array2::zeros((2, 2))).unwrap();
        assert_eq!(cf_eval(&zero, 1.7, 1).unwrap(), 0.0);

        let single = GrbfBank::new(vec![2.0], vec![1.0], array![[3.5]]).unwrap();
        assert_eq!(cf_eval(&single, 2.0, 0).unwrap(), 3.5);

        let two = GrbfBank::new(vec![0.0, 1.0], vec![1.0, 1.0], array![[1.0], [2.0]]).unwrap();
        // term-by-term: 1*e^-0.25 + 2*e^-0.25
        let oracle = 1.0 * (-0.25f64).exp() + 2.0 * (-0.25f64).exp();
        assert_abs_diff_eq!(cf_eval(&two, 0.5, 0).unwrap(), oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle, 2.33640, epsilon = 1e-5);

        assert!(matches!(
            cf_eval(&two, 0.5, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn series_eval_matches_pointwise() {
        let bank = GrbfBank::new(
            vec![0.3, 1.1, 2.9],
            vec![0.5, 1.5, 0.8],
            array![[1.0, -2.0], [0.5, 0.25], [-1.5, 3.0]],
        )
        .unwrap();
        let ts = [0.0, 1.3, 2.2];
        let mat = cf_eval_series(&bank, &ts);
        for (n, &t) in ts.iter().enumerate() {
            for m in 0..2 {
                assert_abs_diff_eq!(mat[[n, m]], cf_eval(&bank, t, m).unwrap(), epsilon = 1e-12);
            }
        }
        let single = cf_eval_series(&bank, &[1.3]);
        assert_eq!(single.row(0), mat.row(1));
        let permuted = cf_eval_series(&bank, &[2.2, 0.0, 1.3]);
        assert_eq!(permuted.row(0), mat.row(2));
        assert_eq!(permuted.row(1), mat.row(0));
    }

    #[test]
    fn impute_blends_by_mask() {
        let bank = GrbfBank::new(vec![1.0], vec![2.0], array![[2.0, -1.0]]).unwrap();
        let ts = vec![0.0, 1.0, 2.0];
        let vals = array![[10.0, 20.0], [11.0, 21.0], [12.0, 22.0]];
        let names = MultivariateSeries::default_names(2);

        let full =
            MultivariateSeries::fully_observed(ts.clone(), vals.clone(), names.clone()).unwrap();
        assert_eq!(impute_with_cf(&full, &bank).unwrap(), full);

        let none = MultivariateSeries::new(
            ts.clone(),
            vals.clone(),
            Array2::zeros((3, 2)),
            names.clone(),
        )
        .unwrap();
        let out = impute_with_cf(&none, &bank).unwrap();
        assert_eq!(out.values(), &cf_eval_series(&bank, &ts));
        assert!(out.mask().iter().all(|&b| b == 1));

        let mask = array![[1u8, 0], [0, 1], [1, 1]];
        let mixed = MultivariateSeries::new(ts.clone(), vals.clone(), mask.clone(), names).unwrap();
        let out = impute_with_cf(&mixed, &bank).unwrap();
        let cf = cf_eval_series(&bank, &ts);
        for r in 0..3 {
            for c in 0..2 {
                let expect = if mask[[r, c]] == 1 {
                    vals[[r, c]]
                } else {
                    cf[[r, c]]
                };
                assert_eq!(out.values()[[r, c]], expect);
            }
        }
    }

    #[test]
    fn impute_rejects_wrong_width() {
        let bank = GrbfBank::new(vec![1.0], vec![2.0], array![[2.0]]).unwrap();
        let s = MultivariateSeries::fully_observed(
            vec![0.0],
            array![[1.0, 2.0]],
            MultivariateSeries::default_names(2),
        )
        .unwrap();
        assert!(matches!(
            impute_with_cf(&s, &bank),
            Err(Error::VariableCountMismatch { .. })
        ));
    }

    #[test]
    fn weights_of_one_variable_do_not_leak() {
        let mut bank = GrbfBank::new(
            vec![0.0, 2.0],
            vec![1.0, 3.0],
            array![[1.0, 4.0], [2.0, -1.0]],
        )
        .unwrap();
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let before = cf_eval_series(&bank, &ts);
        bank.weights[[0, 0]] = 100.0;
        bank.weights[[1, 0]] = -7.0;
        let after = cf_eval_series(&bank, &ts);
        assert_eq!(before.column(1), after.column(1));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        let mut bank = GrbfBank::new(
            vec![0.1, 1.0 / 3.0],
            vec![std::f64::consts::PI, 1e-7],
            array![[1.0 / 7.0, -2.5e-17], [3.0, 0.2]],
        )
        .unwrap();
        bank.stage_boundaries = vec![1, 2];
        let cf = ContinuousFunction {
            bank,
            variable_names: vec!["a".into(), "b".into()],
            normalization: Some(NormalizationStats {
                mean: vec![0.1, 2.0 / 3.0],
                std: vec![1.5, 0.7],
            }),
        };
        save_bank(&cf, &path).unwrap();
        let back = load_bank(&path).unwrap();
        assert_eq!(back, cf);
        for (a, b) in back.bank.sigmas.iter().zip(&cf.bank.sigmas) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_bank(&path), Err(Error::Malformed { .. })));

        fs::write(&path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
        assert!(matches!(
            load_bank(&path),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
