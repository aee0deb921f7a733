use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Truth magnitudes below this are left out of MAPE.
pub const MAPE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mae: f64,
    /// `sum |p - g| / sum |g|`; absent when every truth value is 0.
    pub mre: Option<f64>,
    /// Absent when no evaluated truth clears the zero guard.
    pub mape: Option<f64>,
}

#[derive(Debug, Default)]
struct Acc {
    count: usize,
    abs_err: f64,
    abs_truth: f64,
    pct: f64,
    pct_count: usize,
}

impl Acc {
    fn push(&mut self, p: f64, g: f64) {
        let e = (p - g).abs();
        self.count += 1;
        self.abs_err += e;
        self.abs_truth += g.abs();
        if g.abs() >= MAPE_FLOOR {
            self.pct += e / g.abs();
            self.pct_count += 1;
        }
    }

    fn finish(&self) -> Metrics {
        Metrics {
            count: self.count,
            mae: if self.count > 0 {
                self.abs_err / self.count as f64
            } else {
                0.0
            },
            mre: (self.abs_truth > 0.0).then(|| self.abs_err / self.abs_truth),
            mape: (self.pct_count > 0).then(|| self.pct / self.pct_count as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub variable: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub pooled: Metrics,
    pub per_variable: Vec<VariableMetrics>,
    /// SHA-256 of the configuration that produced the imputation.
    pub config_fingerprint: Option<String>,
    pub seconds: Option<f64>,
}

/// Scores `imputed` against `truth` on cells where `eval_mask == 1`.
pub fn evaluate(
    imputed: &Array2<f64>,
    truth: &Array2<f64>,
    eval_mask: &Array2<u8>,
    names: &[String],
) -> Result<ImputationReport> {
    if imputed.dim() != truth.dim() || imputed.dim() != eval_mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?}, truth {:?}, eval mask {:?}",
            imputed.dim(),
            truth.dim(),
            eval_mask.dim()
        )));
    }
    if names.len() != imputed.ncols() {
        return Err(Error::VariableCountMismatch {
            expected: imputed.ncols(),
            got: names.len(),
        });
    }
    let mut pooled = Acc::default();
    let mut per: Vec<Acc> = (0..names.len()).map(|_| Acc::default()).collect();
    for ((r, c), &e) in eval_mask.indexed_iter() {
        if e != 1 {
            continue;
        }
        let (p, g) = (imputed[[r, c]], truth[[r, c]]);
        if !p.is_finite() || !g.is_finite() {
            return Err(Error::NonFinite(format!("evaluated cell ({r}, {c})")));
        }
        pooled.push(p, g);
        per[c].push(p, g);
    }
    if pooled.count == 0 {
        return Err(Error::EmptyEvalMask);
    }
    Ok(ImputationReport {
        pooled: pooled.finish(),
        per_variable: names
            .iter()
            .zip(&per)
            .map(|(n, a)| VariableMetrics {
                variable: n.clone(),
                metrics: a.finish(),
            })
            .collect(),
        config_fingerprint: None,
        seconds: None,
    })
}

/// Hex SHA-256 of the JSON form of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
