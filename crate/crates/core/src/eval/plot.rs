use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grbf::ContinuousFunction;
use crate::series::MultivariateSeries;

/// CF samples per timestamp interval.
pub const CF_DENSITY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    /// Continuous-function sample.
    Cf,
    /// Observed input value.
    Observed,
    /// Imputed value at an evaluated (or missing) cell.
    Imputed,
}

/// One row of the tidy plot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub kind: PlotKind,
    pub variable: String,
    pub t: f64,
    pub value: f64,
    pub truth: Option<f64>,
}

/// Sample times: `CF_DENSITY` per interval starting at each timestamp; the
/// last timestamp reuses the preceding spacing (1 for a single timestamp).
pub fn cf_sample_times(timestamps: &[f64]) -> Vec<f64> {
    let n = timestamps.len();
    let mut out = Vec::with_capacity(n * CF_DENSITY);
    for i in 0..n {
        let spacing = if i + 1 < n {
            timestamps[i + 1] - timestamps[i]
        } else if n > 1 {
            timestamps[n - 1] - timestamps[n - 2]
        } else {
            1.0
        };
        for j in 0..CF_DENSITY {
            out.push(timestamps[i] + j as f64 / CF_DENSITY as f64 * spacing);
        }
    }
    out
}

/// Builds the plot table: dense CF samples for every variable, every observed
/// cell, and every evaluated cell (every missing cell when `eval` is absent)
/// with its imputed value and truth.
pub fn plot_rows(
    series: &MultivariateSeries,
    cf: &ContinuousFunction,
    imputed: &Array2<f64>,
    eval: Option<(&Array2<f64>, &Array2<u8>)>,
) -> Result<Vec<PlotRow>> {
    if imputed.dim() != series.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "imputed {:?}, series {:?}",
            imputed.dim(),
            series.values().dim()
        )));
    }
    if cf.n_vars() != series.n_vars() {
        return Err(Error::VariableCountMismatch {
            expected: series.n_vars(),
            got: cf.n_vars(),
        });
    }
    let names = series.variable_names();
    let ts = series.timestamps();
    let times = cf_sample_times(ts);
    let samples = cf.eval(&times);
    let mut rows = Vec::new();
    for (c, name) in names.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            rows.push(PlotRow {
                kind: PlotKind::Cf,
                variable: name.clone(),
                t,
                value: samples[[i, c]],
                truth: None,
            });
        }
    }
    for (c, name) in names.iter().enumerate() {
        for (r, &t) in ts.iter().enumerate() {
            if let Some(v) = series.get(r, c) {
                rows.push(PlotRow {
                    kind: PlotKind::Observed,
                    variable: name.clone(),
                    t,
                    value: v,
                    truth: None,
                });
            }
        }
    }
    for (c, name) in names.iter().enumerate() {
        for (r, &t) in ts.iter().enumerate() {
            let (take, truth) = match eval {
                Some((truth, mask)) => (mask[[r, c]] == 1, Some(truth[[r, c]])),
                None => (!series.is_observed(r, c), None),
            };
            if take {
                rows.push(PlotRow {
                    kind: PlotKind::Imputed,
                    variable: name.clone(),
                    t,
                    value: imputed[[r, c]],
                    truth,
                });
            }
        }
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: impl ToString) -> Error {
    Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    }
}

/// Writes the plot table as CSV with columns `kind,variable,t,value,truth`.
pub fn emit_plot_data(
    path: impl AsRef<Path>,
    series: &MultivariateSeries,
    cf: &ContinuousFunction,
    imputed: &Array2<f64>,
    eval: Option<(&Array2<f64>, &Array2<u8>)>,
) -> Result<usize> {
    let path = path.as_ref();
    let rows = plot_rows(series, cf, imputed, eval)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}

pub fn load_plot_data(path: impl AsRef<Path>) -> Result<Vec<PlotRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grbf::{cf_eval_series, GrbfBank};
    use ndarray::array;

    fn fixture() -> (MultivariateSeries, ContinuousFunction) {
        let s = MultivariateSeries::new(
            vec![0.0, 1.0, 3.0],
            array![[1.0, 2.0], [0.0, 4.0], [3.0, 0.0]],
            array![[1u8, 1], [0, 1], [1, 0]],
            MultivariateSeries::default_names(2),
        )
        .unwrap();
        let bank = GrbfBank::new(
            vec![0.5, 2.0],
            vec![1.0, 2.0],
            array![[1.0, -1.0], [0.5, 2.0]],
        )
        .unwrap();
        let cf = ContinuousFunction {
            bank,
            variable_names: s.variable_names().to_vec(),
            normalization: None,
        };
        (s, cf)
    }

    #[test]
    fn row_count_and_round_trip() {
        let (s, cf) = fixture();
        let imputed = array![[1.0, 2.0], [0.7, 4.0], [3.0, 0.1]];
        let truth = array![[1.0, 2.0], [0.5, 4.0], [3.0, 0.2]];
        let eval = array![[0u8, 0], [1, 0], [0, 1]];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plot.csv");
        let n = emit_plot_data(&p, &s, &cf, &imputed, Some((&truth, &eval))).unwrap();
        assert_eq!(n, CF_DENSITY * 3 * 2 + 4 + 2);
        let rows = load_plot_data(&p).unwrap();
        assert_eq!(rows.len(), n);
        assert_eq!(
            rows,
            plot_rows(&s, &cf, &imputed, Some((&truth, &eval))).unwrap()
        );
        let imp: Vec<_> = rows
            .iter()
            .filter(|r| r.kind == PlotKind::Imputed)
            .collect();
        assert_eq!(imp[0].truth, Some(0.5));
        assert_eq!(imp[0].value, 0.7);
    }

    #[test]
    fn samples_at_timestamps_match_batch_eval() {
        let (s, cf) = fixture();
        let rows = plot_rows(&s, &cf, &s.values_filled(0.0), None).unwrap();
        let direct = cf_eval_series(&cf.bank, s.timestamps());
        for (c, name) in s.variable_names().iter().enumerate() {
            for (r, &t) in s.timestamps().iter().enumerate() {
                let row = rows
                    .iter()
                    .find(|x| x.kind == PlotKind::Cf && &x.variable == name && x.t == t)
                    .unwrap();
                assert!((row.value - direct[[r, c]]).abs() < 1e-12);
            }
        }
        // without an eval mask every missing cell is listed
        assert_eq!(
            rows.iter().filter(|r| r.kind == PlotKind::Imputed).count(),
            2
        );
    }

    #[test]
    fn sample_times_extend_last_interval() {
        let t = cf_sample_times(&[0.0, 2.0]);
        assert_eq!(t.len(), 20);
        assert_eq!(t[1], 0.2);
        assert_eq!(t[10], 2.0);
        assert!((t[19] - 3.8).abs() < 1e-12);
    }
}
