use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How initial widths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaInit {
    /// Mean of the time-gap matrix over rows after the first.
    TimeGapMean,
    /// `|N(0, 1)| + 1e-3`, one draw per basis.
    RandomUnitNormalAbs,
}

/// Shared bank across variables, or one independent bank per variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankMode {
    Shared,
    PerVariable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k_per_stage: usize,
    pub max_stages: usize,
    pub mape_threshold: f64,
    pub lr: f64,
    pub epochs_per_stage: usize,
    pub sigma_init_mode: SigmaInit,
    pub bank_mode: BankMode,
    pub seed: u64,
    /// Fit in z-scored space (the bank then carries the statistics).
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_per_stage: 32,
            max_stages: 8,
            mape_threshold: 0.05,
            lr: 0.2,
            epochs_per_stage: 2000,
            sigma_init_mode: SigmaInit::TimeGapMean,
            bank_mode: BankMode::Shared,
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_per_stage == 0 {
            return Err(Error::InvalidArgument(
                "k_per_stage must be positive".into(),
            ));
        }
        if self.max_stages == 0 {
            return Err(Error::InvalidArgument("max_stages must be positive".into()));
        }
        if !(self.mape_threshold > 0.0 && self.mape_threshold < 1.0) {
            return Err(Error::InvalidArgument(
                "mape_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        if self.epochs_per_stage == 0 {
            return Err(Error::InvalidArgument(
                "epochs_per_stage must be positive".into(),
            ));
        }
        Ok(())
    }
}
