use std::ops::Range;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BankMode, TrainConfig};
use super::init::{init_centers, init_sigmas, init_weights};
use crate::error::{Error, Result};
use crate::grbf::{gaussian, ContinuousFunction, GrbfBank, SIGMA_FLOOR};
use crate::par;
use crate::series::{normalize, time_gap, MultivariateSeries, NormalizationStats, TimeGapMatrix};

/// Truth values below this magnitude are left out of MAPE.
const MAPE_ZERO_GUARD: f64 = 1e-8;

/// Regression target of the current stage. Cells missing in the source
/// series are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTarget {
    pub values: Array2<f64>,
}

impl ResidualTarget {
    pub fn from_series(series: &MultivariateSeries) -> Self {
        Self {
            values: series.values().clone(),
        }
    }
}

/// Progress of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Variable name for per-variable pipelines, `None` for a shared bank.
    pub pipeline: Option<String>,
    pub stage: usize,
    pub n_bases: usize,
    pub epochs: usize,
    /// Masked mean squared error of the stage at its last step.
    pub final_loss: f64,
    /// Observed-cell MAPE of the cumulative function, data units.
    pub mape: f64,
    /// Observed-cell MAE of the cumulative function, data units.
    pub mae: f64,
}

/// Gradients of the masked MSE with respect to one stage's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGradient {
    pub weights: Array2<f64>,
    pub centers: Vec<f64>,
    pub sigmas: Vec<f64>,
}

fn observed_cells(series: &MultivariateSeries) -> Result<f64> {
    match series.observed_count() {
        0 => Err(Error::NoObservedData),
        c => Ok(c as f64),
    }
}

/// Masked residual `F - y` of the stage bases; zero at missing cells.
fn stage_errors(
    bank: &GrbfBank,
    range: Range<usize>,
    target: &ResidualTarget,
    series: &MultivariateSeries,
) -> Array2<f64> {
    let mut err = bank.eval_series_range(range, series.timestamps());
    for ((r, c), e) in err.indexed_iter_mut() {
        *e = if series.is_observed(r, c) {
            *e - target.values[[r, c]]
        } else {
            0.0
        };
    }
    err
}

/// `sum (y - F)^2 / C` over observed cells, `F` built from the stage bases.
pub fn stage_loss(
    bank: &GrbfBank,
    range: Range<usize>,
    target: &ResidualTarget,
    series: &MultivariateSeries,
) -> Result<f64> {
    let count = observed_cells(series)?;
    let err = stage_errors(bank, range, target, series);
    Ok(err.iter().map(|e| e * e).sum::<f64>() / count)
}

/// Loss and analytic gradients. Weight gradients are per variable; center and
/// width gradients sum over variables.
pub fn stage_gradient(
    bank: &GrbfBank,
    range: Range<usize>,
    target: &ResidualTarget,
    series: &MultivariateSeries,
) -> Result<(f64, StageGradient)> {
    check_range(bank, &range)?;
    let count = observed_cells(series)?;
    let err = stage_errors(bank, range.clone(), target, series);
    let loss = err.iter().map(|e| e * e).sum::<f64>() / count;
    let ts = series.timestamps();
    let m = bank.n_vars();
    let scale = 2.0 / count;

    let per_basis = par::map_range(range.len(), |i| {
        let k = range.start + i;
        let (c, s) = (bank.centers[k], bank.sigmas[k]);
        let w = bank.weights.row(k);
        let mut gw = vec![0.0; m];
        let (mut gc, mut gs) = (0.0, 0.0);
        for (n, &t) in ts.iter().enumerate() {
            let phi = gaussian(c, s, t);
            if phi == 0.0 {
                continue;
            }
            let e = err.row(n);
            let mut coupled = 0.0;
            for j in 0..m {
                gw[j] += e[j] * phi;
                coupled += e[j] * w[j];
            }
            let d = t - c;
            gc += coupled * phi * 2.0 * d / s;
            gs += coupled * phi * d * d / (s * s);
        }
        gw.iter_mut().for_each(|g| *g *= scale);
        (gw, gc * scale, gs * scale)
    });

    let k = range.len();
    let mut grad = StageGradient {
        weights: Array2::zeros((k, m)),
        centers: Vec::with_capacity(k),
        sigmas: Vec::with_capacity(k),
    };
    for (i, (gw, gc, gs)) in per_basis.into_iter().enumerate() {
        grad.weights
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&gw));
        grad.centers.push(gc);
        grad.sigmas.push(gs);
    }
    Ok((loss, grad))
}

fn check_range(bank: &GrbfBank, range: &Range<usize>) -> Result<()> {
    if range.end > bank.n_bases() || range.start > range.end {
        return Err(Error::InvalidArgument(format!(
            "stage range {range:?} outside bank of {} bases",
            bank.n_bases()
        )));
    }
    Ok(())
}

/// One full-batch gradient-descent step on the bases in `range`. Returns the
/// loss before the step.
pub fn grad_step(
    bank: &mut GrbfBank,
    range: Range<usize>,
    target: &ResidualTarget,
    series: &MultivariateSeries,
    lr: f64,
) -> Result<f64> {
    let (loss, grad) = stage_gradient(bank, range.clone(), target, series)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("stage loss ({loss})")));
    }
    if grad
        .weights
        .iter()
        .chain(&grad.centers)
        .chain(&grad.sigmas)
        .any(|g| !g.is_finite())
    {
        return Err(Error::NonFinite("RBF gradient".into()));
    }
    for (i, k) in range.enumerate() {
        for j in 0..bank.n_vars() {
            bank.weights[[k, j]] -= lr * grad.weights[[i, j]];
        }
        bank.centers[k] -= lr * grad.centers[i];
        bank.sigmas[k] = (bank.sigmas[k] - lr * grad.sigmas[i]).max(SIGMA_FLOOR);
    }
    Ok(loss)
}

/// Subtracts the contribution of the bases in `range` at observed cells.
pub fn update_residual(
    target: &ResidualTarget,
    bank: &GrbfBank,
    range: Range<usize>,
    series: &MultivariateSeries,
) -> ResidualTarget {
    let contribution = bank.eval_series_range(range, series.timestamps());
    let mut values = target.values.clone();
    for ((r, c), v) in values.indexed_iter_mut() {
        if series.is_observed(r, c) {
            *v -= contribution[[r, c]];
        }
    }
    ResidualTarget { values }
}

/// Observed-cell MAPE and MAE of `pred` against `series`, skipping
/// near-zero truths for MAPE.
pub fn observed_mape(series: &MultivariateSeries, pred: &Array2<f64>) -> (f64, f64) {
    let (mut ape, mut n_ape, mut ae, mut n_ae) = (0.0, 0usize, 0.0, 0usize);
    for ((r, c), &p) in pred.indexed_iter() {
        if let Some(g) = series.get(r, c) {
            let abs = (p - g).abs();
            ae += abs;
            n_ae += 1;
            if g.abs() >= MAPE_ZERO_GUARD {
                ape += abs / g.abs();
                n_ape += 1;
            }
        }
    }
    let mape = if n_ape == 0 { 0.0 } else { ape / n_ape as f64 };
    let mae = if n_ae == 0 { 0.0 } else { ae / n_ae as f64 };
    (mape, mae)
}

/// Adds one stage of `config.k_per_stage` bases initialized from `target`
/// and trains only those bases. `series` is the (possibly z-scored) training
/// series; `stats` maps it back to data units for the report.
#[allow(clippy::too_many_arguments)]
pub fn fit_stage(
    bank: &mut GrbfBank,
    target: &ResidualTarget,
    series: &MultivariateSeries,
    delta: &TimeGapMatrix,
    stats: Option<&NormalizationStats>,
    config: &TrainConfig,
    stage: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Range<usize>, StageReport)> {
    let centers = init_centers(target, series, config.k_per_stage)?;
    let weights = init_weights(target, series, &centers);
    let sigmas = init_sigmas(delta, config.sigma_init_mode, centers.len(), rng)?;
    let times: Vec<f64> = centers.iter().map(|c| c.time).collect();
    let range = bank.push_stage(&times, &sigmas, &weights);

    for _ in 0..config.epochs_per_stage {
        grad_step(bank, range.clone(), target, series, config.lr)?;
    }
    let final_loss = stage_loss(bank, range.clone(), target, series)?;

    let (mape, mae) = cumulative_error(bank, series, stats);
    Ok((
        range.clone(),
        StageReport {
            pipeline: None,
            stage,
            n_bases: range.len(),
            epochs: config.epochs_per_stage,
            final_loss,
            mape,
            mae,
        },
    ))
}

fn cumulative_error(
    bank: &GrbfBank,
    series: &MultivariateSeries,
    stats: Option<&NormalizationStats>,
) -> (f64, f64) {
    let model = bank.eval_series_range(0..bank.n_bases(), series.timestamps());
    match stats {
        Some(st) => {
            let pred = st.inverse_matrix(&model);
            let raw = crate::series::denormalize(series, st).expect("stats match series");
            observed_mape(&raw, &pred)
        }
        None => observed_mape(series, &model),
    }
}

/// Fitted function plus the per-stage reports.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub function: ContinuousFunction,
    pub reports: Vec<StageReport>,
}

/// Runs the stage loop on `series` (data units).
pub fn fit(series: &MultivariateSeries, config: &TrainConfig) -> Result<FitOutput> {
    config.validate()?;
    if series.observed_count() == 0 {
        return Err(Error::NoObservedData);
    }
    let (model_series, stats) = if config.normalize {
        let (z, st) = normalize(series)?;
        (z, Some(st))
    } else {
        (series.clone(), None)
    };

    let (bank, reports) = match config.bank_mode {
        BankMode::Shared => fit_shared(&model_series, stats.as_ref(), config, config.seed)?,
        BankMode::PerVariable => fit_per_variable(&model_series, stats.as_ref(), config)?,
    };
    Ok(FitOutput {
        function: ContinuousFunction {
            bank,
            variable_names: series.variable_names().to_vec(),
            normalization: stats,
        },
        reports,
    })
}

fn fit_shared(
    series: &MultivariateSeries,
    stats: Option<&NormalizationStats>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(GrbfBank, Vec<StageReport>)> {
    let delta = time_gap(series);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = GrbfBank::empty(series.n_vars());
    let mut target = ResidualTarget::from_series(series);
    let mut reports = Vec::new();
    for stage in 0..config.max_stages {
        let (range, report) = fit_stage(
            &mut bank, &target, series, &delta, stats, config, stage, &mut rng,
        )?;
        let done = report.mape <= config.mape_threshold;
        reports.push(report);
        if done {
            break;
        }
        target = update_residual(&target, &bank, range, series);
    }
    Ok((bank, reports))
}

fn column_stats(stats: Option<&NormalizationStats>, col: usize) -> Option<NormalizationStats> {
    stats.map(|s| NormalizationStats {
        mean: vec![s.mean[col]],
        std: vec![s.std[col]],
    })
}

/// Independent single-variable pipelines packed into one bank whose weight
/// matrix is block diagonal.
fn fit_per_variable(
    series: &MultivariateSeries,
    stats: Option<&NormalizationStats>,
    config: &TrainConfig,
) -> Result<(GrbfBank, Vec<StageReport>)> {
    let m = series.n_vars();
    let columns: Vec<usize> = (0..m).collect();
    let fitted = par::map_slice(&columns, |&col| -> Result<(GrbfBank, Vec<StageReport>)> {
        let values = series
            .values()
            .column(col)
            .to_owned()
            .insert_axis(ndarray::Axis(1));
        let mask = series
            .mask()
            .column(col)
            .to_owned()
            .insert_axis(ndarray::Axis(1));
        let name = series.variable_names()[col].clone();
        let single = MultivariateSeries::new(
            series.timestamps().to_vec(),
            values,
            mask,
            vec![name.clone()],
        )?;
        let seed = config
            .seed
            .wrapping_add((col as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let st = column_stats(stats, col);
        let (bank, mut reports) = fit_shared(&single, st.as_ref(), config, seed)?;
        reports
            .iter_mut()
            .for_each(|r| r.pipeline = Some(name.clone()));
        Ok((bank, reports))
    });

    let mut packed = GrbfBank::empty(m);
    let mut all_reports = Vec::new();
    for (col, result) in fitted.into_iter().enumerate() {
        let (bank, reports) = result?;
        for range in bank.stage_ranges() {
            let mut w = Array2::zeros((range.len(), m));
            w.column_mut(col)
                .assign(&bank.weights.slice(ndarray::s![range.clone(), 0]));
            packed.push_stage(&bank.centers[range.clone()], &bank.sigmas[range], &w);
        }
        all_reports.extend(reports);
    }
    Ok((packed, all_reports))
}
