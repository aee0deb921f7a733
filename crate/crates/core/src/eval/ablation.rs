use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::baselines::{knn_baseline, mean_baseline, DEFAULT_K};
use super::metrics::{evaluate, fingerprint, ImputationReport};
use crate::data::GroundTruthPair;
use crate::error::{Error, Result};
use crate::grbf::ContinuousFunction;
use crate::mim::{fit, BankMode, SigmaInit, TrainConfig};
use crate::mirnn::{fit_mirnn, impute_mirnn, MirnnConfig};
use crate::par;
use crate::series::MultivariateSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "MIM")]
    Mim,
    #[serde(rename = "MIM+RandomSigma")]
    MimRandomSigma,
    #[serde(rename = "MIS")]
    Mis,
    #[serde(rename = "MIS+RandomSigma")]
    MisRandomSigma,
    #[serde(rename = "MIRNN-CF")]
    MirnnCf,
    #[serde(rename = "Mean")]
    Mean,
    #[serde(rename = "KNN")]
    Knn,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Mim,
        Variant::MimRandomSigma,
        Variant::Mis,
        Variant::MisRandomSigma,
        Variant::MirnnCf,
        Variant::Mean,
        Variant::Knn,
    ];

    /// Short tag used on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Mim => "mim",
            Variant::MimRandomSigma => "mim-rand",
            Variant::Mis => "mis",
            Variant::MisRandomSigma => "mis-rand",
            Variant::MirnnCf => "mirnn",
            Variant::Mean => "mean",
            Variant::Knn => "knn",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Mim => "MIM",
            Variant::MimRandomSigma => "MIM+RandomSigma",
            Variant::Mis => "MIS",
            Variant::MisRandomSigma => "MIS+RandomSigma",
            Variant::MirnnCf => "MIRNN-CF",
            Variant::Mean => "Mean",
            Variant::Knn => "KNN",
        }
    }

    /// Whether the seed changes the outcome.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, Variant::Mean | Variant::Knn)
    }

    fn rbf_config(self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let (sigma, bank) = match self {
            Variant::MimRandomSigma => (SigmaInit::RandomUnitNormalAbs, BankMode::Shared),
            Variant::Mis => (SigmaInit::TimeGapMean, BankMode::PerVariable),
            Variant::MisRandomSigma => (SigmaInit::RandomUnitNormalAbs, BankMode::PerVariable),
            _ => (SigmaInit::TimeGapMean, BankMode::Shared),
        };
        TrainConfig {
            sigma_init_mode: sigma,
            bank_mode: bank,
            seed,
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == lower || v.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant `{s}` (expected one of {})",
                    Variant::ALL.map(|v| v.tag()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub rbf: TrainConfig,
    pub mirnn: MirnnConfig,
    pub knn_k: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rbf: TrainConfig::default(),
            mirnn: MirnnConfig::default(),
            knn_k: DEFAULT_K,
        }
    }
}

/// What one variant produced on one pair.
#[derive(Debug, Clone)]
pub struct VariantOutput {
    pub imputed: MultivariateSeries,
    /// The fitted continuous function, for RBF-based variants.
    pub function: Option<ContinuousFunction>,
    pub fingerprint: String,
}

/// Fits and applies one variant to the corrupted half of `pair`.
pub fn run_variant(
    pair: &GroundTruthPair,
    variant: Variant,
    seed: u64,
    config: &AblationConfig,
) -> Result<VariantOutput> {
    let series = &pair.corrupted;
    match variant {
        Variant::Mean => Ok(VariantOutput {
            imputed: mean_baseline(series)?,
            function: None,
            fingerprint: fingerprint(&("mean",))?,
        }),
        Variant::Knn => Ok(VariantOutput {
            imputed: knn_baseline(series, config.knn_k)?,
            function: None,
            fingerprint: fingerprint(&("knn", config.knn_k))?,
        }),
        Variant::MirnnCf => {
            let rbf = Variant::Mim.rbf_config(&config.rbf, seed);
            let mirnn = MirnnConfig {
                seed,
                ..config.mirnn.clone()
            };
            let function = fit(series, &rbf)?.function;
            let (model, _) = fit_mirnn(series, &function, &mirnn)?;
            Ok(VariantOutput {
                imputed: impute_mirnn(&model, series, &function)?,
                function: Some(function),
                fingerprint: fingerprint(&(&rbf, &mirnn))?,
            })
        }
        _ => {
            let rbf = variant.rbf_config(&config.rbf, seed);
            let function = fit(series, &rbf)?.function;
            Ok(VariantOutput {
                imputed: function.impute(series)?,
                function: Some(function),
                fingerprint: fingerprint(&rbf)?,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: Variant,
    /// `None` for deterministic variants, which run once.
    pub seed: Option<u64>,
    pub report: ImputationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFailure {
    pub variant: Variant,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub results: Vec<AblationResult>,
    pub failures: Vec<AblationFailure>,
}

/// Per-variant aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub mean_mae: f64,
    /// Population standard deviation over runs.
    pub std_mae: f64,
    pub mean_mre: Option<f64>,
}

impl AblationRun {
    pub fn summary(&self) -> Vec<VariantSummary> {
        let mut variants: Vec<Variant> = self.results.iter().map(|r| r.variant).collect();
        variants.sort();
        variants.dedup();
        variants
            .into_iter()
            .map(|v| {
                let reports: Vec<&ImputationReport> = self
                    .results
                    .iter()
                    .filter(|r| r.variant == v)
                    .map(|r| &r.report)
                    .collect();
                let n = reports.len() as f64;
                let maes: Vec<f64> = reports.iter().map(|r| r.pooled.mae).collect();
                let mean = maes.iter().sum::<f64>() / n;
                let var = maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
                let mres: Option<Vec<f64>> = reports.iter().map(|r| r.pooled.mre).collect();
                VariantSummary {
                    variant: v,
                    runs: reports.len(),
                    mean_mae: mean,
                    std_mae: var.sqrt(),
                    mean_mre: mres.map(|m| m.iter().sum::<f64>() / n),
                }
            })
            .collect()
    }

    pub fn mean_mae(&self, variant: Variant) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.variant == variant)
            .map(|s| s.mean_mae)
    }
}

/// Runs every requested variant on `pair`, stochastic ones once per seed.
/// Jobs run in parallel; results keep the order of `variants` then `seeds`.
/// Deterministic variants run once with `seed: None`; a failing job is
/// recorded, not fatal.
pub fn run_ablation(
    pair: &GroundTruthPair,
    variants: &[Variant],
    seeds: &[u64],
    config: &AblationConfig,
) -> Result<AblationRun> {
    run_ablation_with(pair, variants, seeds, config, |_, _, _| Ok(()))
}

/// [`run_ablation`], handing each job's output to `on_output` before it is
/// dropped. An error from the callback marks that job as failed.
pub fn run_ablation_with<F>(
    pair: &GroundTruthPair,
    variants: &[Variant],
    seeds: &[u64],
    config: &AblationConfig,
    on_output: F,
) -> Result<AblationRun>
where
    F: Fn(Variant, Option<u64>, &VariantOutput) -> Result<()> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one seed is required".into(),
        ));
    }
    let mut jobs: Vec<(Variant, Option<u64>)> = Vec::new();
    for &v in variants {
        if v.is_stochastic() {
            jobs.extend(seeds.iter().map(|&s| (v, Some(s))));
        } else {
            jobs.push((v, None));
        }
    }
    let names = pair.corrupted.variable_names().to_vec();
    let outcomes = par::map_slice(&jobs, |&(v, seed)| {
        let start = Instant::now();
        let out = run_variant(pair, v, seed.unwrap_or(seeds[0]), config)?;
        let mut report = evaluate(out.imputed.values(), &pair.truth, &pair.eval_mask, &names)?;
        report.seconds = Some(start.elapsed().as_secs_f64());
        on_output(v, seed, &out)?;
        report.config_fingerprint = Some(out.fingerprint);
        Ok::<_, Error>(report)
    });
    let mut run = AblationRun::default();
    for ((variant, seed), outcome) in jobs.into_iter().zip(outcomes) {
        match outcome {
            Ok(report) => run.results.push(AblationResult {
                variant,
                seed,
                report,
            }),
            Err(e) => run.failures.push(AblationFailure {
                variant,
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{inject_random, lorenz96, Lorenz96Config};

    fn pair() -> GroundTruthPair {
        let s = lorenz96(&Lorenz96Config {
            n: 60,
            ..Default::default()
        })
        .unwrap();
        inject_random(&s, 0.3, 1).unwrap()
    }

    #[test]
    fn parse_tags_and_labels() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("gan".parse::<Variant>().is_err());
        assert_eq!(
            serde_json::to_string(&Variant::MimRandomSigma).unwrap(),
            "\"MIM+RandomSigma\""
        );
    }

    #[test]
    fn mean_only_gives_single_report() {
        let run = run_ablation(
            &pair(),
            &[Variant::Mean],
            &[1, 2, 3],
            &AblationConfig::default(),
        )
        .unwrap();
        assert_eq!(run.results.len(), 1);
        assert!(run.failures.is_empty());
        assert_eq!(run.results[0].seed, None);
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = AblationConfig {
            rbf: TrainConfig {
                epochs_per_stage: 50,
                max_stages: 2,
                k_per_stage: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let p = pair();
        let strip = |mut r: AblationRun| {
            r.results.iter_mut().for_each(|x| x.report.seconds = None);
            r
        };
        let a = strip(run_ablation(&p, &[Variant::Mim, Variant::Knn], &[4, 5], &cfg).unwrap());
        let b = strip(run_ablation(&p, &[Variant::Mim, Variant::Knn], &[4, 5], &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.results.len(), 3);
        let s = a.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].variant, Variant::Mim);
        assert_eq!(s[0].runs, 2);
    }

    #[test]
    fn callback_sees_every_job_and_can_fail_it() {
        let seen = std::sync::Mutex::new(Vec::new());
        let run = run_ablation_with(
            &pair(),
            &[Variant::Mean, Variant::Knn],
            &[1],
            &AblationConfig::default(),
            |v, seed, out| {
                assert!(out.function.is_none());
                seen.lock().unwrap().push((v, seed));
                if v == Variant::Knn {
                    return Err(Error::InvalidArgument("disk full".into()));
                }
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen.into_inner().unwrap().len(), 2);
        assert_eq!(run.results.len(), 1);
        assert_eq!(run.failures[0].variant, Variant::Knn);
        assert!(run.failures[0].error.contains("disk full"));
    }

    #[test]
    fn failures_are_collected() {
        let cfg = AblationConfig {
            knn_k: 0,
            ..Default::default()
        };
        let run = run_ablation(&pair(), &[Variant::Knn, Variant::Mean], &[1], &cfg).unwrap();
        assert_eq!(run.failures.len(), 1);
        assert_eq!(run.failures[0].variant, Variant::Knn);
        assert_eq!(run.results.len(), 1);
    }
}
