use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{DirectionParams, MirnnParams, TensorFile};
use super::sequence::{bidirectional_forward, bidirectional_gradient, Window};
use crate::error::{Error, Result};
use crate::grbf::{blend_observed, check_header, read_json, write_json, ContinuousFunction};
use crate::par;
use crate::series::{apply_stats, MultivariateSeries, NormalizationStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirnnConfig {
    pub hidden_size: usize,
    /// Window length; series shorter than this use a single full window.
    pub window_len: usize,
    /// Step between training windows; defaults to `window_len`.
    pub train_stride: Option<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MirnnConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            window_len: 36,
            train_stride: None,
            batch_size: 64,
            epochs: 200,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl MirnnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("window_len", self.window_len),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.train_stride == Some(0) {
            return Err(Error::InvalidArgument(
                "train_stride must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Window starts at `0, stride, 2 stride, ...` plus, when the last one does
/// not reach the end, a final window aligned to the end.
pub fn window_starts(n: usize, len: usize, stride: usize) -> Vec<usize> {
    if len >= n {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=n - len).step_by(stride.max(1)).collect();
    if starts.last().is_none_or(|&s| s + len < n) {
        starts.push(n - len);
    }
    starts
}

struct Adam {
    m: MirnnParams,
    v: MirnnParams,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(like: &MirnnParams) -> Self {
        let (n, h) = (like.n_vars(), like.hidden_size());
        Self {
            m: MirnnParams::zeros(n, h),
            v: MirnnParams::zeros(n, h),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut MirnnParams, grad: &MirnnParams, lr: f64) {
        self.t += 1;
        self.m
            .zip_mut(grad, |m, g| *m = Self::B1 * *m + (1.0 - Self::B1) * g);
        self.v
            .zip_mut(grad, |v, g| *v = Self::B2 * *v + (1.0 - Self::B2) * g * g);
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        // update = m_hat / (sqrt(v_hat) + eps), built in a scratch copy
        let mut update = self.m.clone();
        update.zip_mut(&self.v, |u, v| {
            *u = (*u / c1) / ((v / c2).sqrt() + Self::EPS)
        });
        params.zip_mut(&update, |p, u| *p -= lr * u);
        params.zero_feature_diagonal();
    }
}

fn add_into(acc: &mut MirnnParams, g: &MirnnParams) {
    acc.zip_mut(g, |a, b| *a += b);
}

/// Mini-batch Adam on the mean window loss. Returns the mean total loss per
/// epoch (measured during the epoch's forward passes).
pub fn train(
    params: &mut MirnnParams,
    windows: &[Window],
    config: &MirnnConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no training windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_F00D);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut adam = Adam::new(params);
    let mut curve = Vec::with_capacity(config.epochs);
    params.zero_feature_diagonal();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let snapshot = &*params;
            let results = par::map_slice(batch, |&i| bidirectional_gradient(snapshot, &windows[i]));
            let mut grad = MirnnParams::zeros(params.n_vars(), params.hidden_size());
            for r in results {
                let (loss, g) = r.map_err(|e| match e {
                    Error::NonFinite(_) => Error::Divergence {
                        epoch,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                epoch_loss += loss.total;
                add_into(&mut grad, &g);
            }
            grad.scale(1.0 / batch.len() as f64);
            adam.step(params, &grad, config.lr);
        }
        let mean = epoch_loss / windows.len() as f64;
        if !mean.is_finite() || !params.forward.is_finite() || !params.backward.is_finite() {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        curve.push(mean);
    }
    Ok(curve)
}

/// A trained imputer and everything needed to apply it to new data.
#[derive(Debug, Clone, PartialEq)]
pub struct MirnnModel {
    pub params: MirnnParams,
    pub variable_names: Vec<String>,
    /// Statistics of the bank the model was trained with; inputs are
    /// z-scored with them and outputs mapped back.
    pub normalization: Option<NormalizationStats>,
    pub config: MirnnConfig,
}

fn model_scale(
    series: &MultivariateSeries,
    stats: Option<&NormalizationStats>,
) -> Result<MultivariateSeries> {
    match stats {
        Some(s) => apply_stats(series, s),
        None => Ok(series.clone()),
    }
}

fn build_windows(
    series: &MultivariateSeries,
    cf: &Array2<f64>,
    starts: &[usize],
    len: usize,
) -> Result<Vec<Window>> {
    let len = len.min(series.len());
    let built = par::map_slice(starts, |&s| {
        let w = series.slice_rows(s, s + len)?;
        Window::new(&w, cf.slice(ndarray::s![s..s + len, ..]).to_owned())
    });
    built.into_iter().collect()
}

fn check_vars(expected: usize, series: &MultivariateSeries) -> Result<()> {
    if series.n_vars() != expected {
        return Err(Error::VariableCountMismatch {
            expected,
            got: series.n_vars(),
        });
    }
    Ok(())
}

/// Fits the imputer on `series` using the continuous function `cf`.
pub fn fit_mirnn(
    series: &MultivariateSeries,
    cf: &ContinuousFunction,
    config: &MirnnConfig,
) -> Result<(MirnnModel, Vec<f64>)> {
    config.validate()?;
    check_vars(cf.n_vars(), series)?;
    let scaled = model_scale(series, cf.normalization.as_ref())?;
    let cf_data = cf.eval_model(series.timestamps());
    let len = config.window_len.min(series.len());
    let starts = window_starts(series.len(), len, config.train_stride.unwrap_or(len));
    let windows = build_windows(&scaled, &cf_data, &starts, len)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MirnnParams::init(series.n_vars(), config.hidden_size, &mut rng);
    let curve = train(&mut params, &windows, config)?;
    Ok((
        MirnnModel {
            params,
            variable_names: series.variable_names().to_vec(),
            normalization: cf.normalization.clone(),
            config: config.clone(),
        },
        curve,
    ))
}

/// Imputes every missing cell. Windows of the training length tile the
/// series; a final window aligned to the end covers any remainder, and only
/// rows no earlier window produced are taken from it. Observed cells are
/// copied from the input unchanged.
pub fn impute_mirnn(
    model: &MirnnModel,
    series: &MultivariateSeries,
    cf: &ContinuousFunction,
) -> Result<MultivariateSeries> {
    check_vars(model.params.n_vars(), series)?;
    check_vars(cf.n_vars(), series)?;
    let scaled = model_scale(series, model.normalization.as_ref())?;
    let cf_data = cf.eval_model(series.timestamps());
    let len = model.config.window_len.min(series.len());
    let starts = window_starts(series.len(), len, len);
    let windows = build_windows(&scaled, &cf_data, &starts, len)?;
    let outputs = par::map_slice(&windows, |w| bidirectional_forward(&model.params, w));

    let mut filled = Array2::zeros(series.values().dim());
    let mut done = 0;
    for (start, out) in starts.iter().zip(outputs) {
        let out = out?;
        for r in done.max(*start)..start + len {
            filled.row_mut(r).assign(&out.x_bar.row(r - start));
        }
        done = start + len;
    }
    let filled = match &model.normalization {
        Some(stats) => stats.inverse_matrix(&filled),
        None => filled,
    };
    blend_observed(series, &filled)
}

pub const MODEL_FORMAT: &str = "mirnn-cf";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    n_vars: usize,
    hidden_size: usize,
    variable_names: Vec<String>,
    config: MirnnConfig,
    normalization: Option<NormalizationStats>,
    forward: std::collections::BTreeMap<String, TensorFile>,
    backward: std::collections::BTreeMap<String, TensorFile>,
}

pub fn save_model(model: &MirnnModel, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        n_vars: model.params.n_vars(),
        hidden_size: model.params.hidden_size(),
        variable_names: model.variable_names.clone(),
        config: model.config.clone(),
        normalization: model.normalization.clone(),
        forward: model.params.forward.to_file(),
        backward: model.params.backward.to_file(),
    };
    write_json(path.as_ref(), &file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MirnnModel> {
    let path = path.as_ref();
    let value = read_json(path)?;
    check_header(path, &value, MODEL_FORMAT, MODEL_VERSION)?;
    let malformed = |msg: String| Error::Malformed {
        path: path.to_owned(),
        msg,
    };
    let file: ModelFile = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if file.variable_names.len() != file.n_vars {
        return Err(malformed("variable names do not match n_vars".into()));
    }
    let load = |t| {
        DirectionParams::from_file(file.n_vars, file.hidden_size, t)
            .map_err(|e| malformed(e.to_string()))
    };
    let params = MirnnParams {
        forward: load(&file.forward)?,
        backward: load(&file.backward)?,
    };
    if let Some(stats) = &file.normalization {
        if stats.n_vars() != file.n_vars || stats.std.len() != file.n_vars {
            return Err(malformed("normalization stats do not match n_vars".into()));
        }
    }
    Ok(MirnnModel {
        params,
        variable_names: file.variable_names,
        normalization: file.normalization,
        config: file.config,
    })
}
