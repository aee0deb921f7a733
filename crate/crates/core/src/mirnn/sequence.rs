use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::cell::{cell_backward, cell_forward, CellTrace, StepGrads, StepInput};
use super::params::{DirectionParams, MirnnParams};
use crate::error::{Error, Result};
use crate::series::{time_gap, MultivariateSeries};

/// One direction's inputs as dense matrices. Missing cells of `x` are 0 and
/// never influence anything, because every read is gated by `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionData {
    pub x: Array2<f64>,
    pub m: Array2<f64>,
    pub delta: Array2<f64>,
    pub cf: Array2<f64>,
}

impl DirectionData {
    pub fn from_series(series: &MultivariateSeries, cf: Array2<f64>) -> Result<Self> {
        if cf.dim() != series.values().dim() {
            return Err(Error::DimensionMismatch(format!(
                "CF data is {:?}, series is {:?}",
                cf.dim(),
                series.values().dim()
            )));
        }
        Ok(Self {
            x: series.values_filled(0.0),
            m: series.mask_f64(),
            delta: time_gap(series).deltas,
            cf,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.x.ncols()
    }

    fn step(&self, n: usize) -> StepInput<'_> {
        StepInput {
            x: self.x.row(n),
            m: self.m.row(n),
            delta: self.delta.row(n),
            cf: self.cf.row(n),
        }
    }

    fn observed(&self) -> usize {
        self.m.iter().filter(|&&v| v == 1.0).count()
    }
}

/// A window prepared for both directions; the backward data is the reversed
/// series with time gaps recomputed on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub forward: DirectionData,
    pub backward: DirectionData,
}

impl Window {
    /// `cf` holds the continuous function at the window's timestamps, on the
    /// same scale as `series`.
    pub fn new(series: &MultivariateSeries, cf: Array2<f64>) -> Result<Self> {
        let rev_cf = cf.slice(s![..;-1, ..]).to_owned();
        Ok(Self {
            forward: DirectionData::from_series(series, cf)?,
            backward: DirectionData::from_series(&series.reversed(), rev_cf)?,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Masked mean absolute errors of one direction's four estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionLoss {
    pub final_estimate: f64,
    pub historical: f64,
    pub feature: f64,
    pub cf_regression: f64,
}

impl DirectionLoss {
    pub fn sum(&self) -> f64 {
        self.final_estimate + self.historical + self.feature + self.cf_regression
    }
}

/// The five loss terms; estimation terms sum both directions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MirnnLoss {
    pub final_estimate: f64,
    pub historical: f64,
    pub feature: f64,
    pub cf_regression: f64,
    pub consistency: f64,
    pub total: f64,
}

impl MirnnLoss {
    fn combine(f: DirectionLoss, b: DirectionLoss, consistency: f64) -> Self {
        let final_estimate = f.final_estimate + b.final_estimate;
        let historical = f.historical + b.historical;
        let feature = f.feature + b.feature;
        let cf_regression = f.cf_regression + b.cf_regression;
        Self {
            final_estimate,
            historical,
            feature,
            cf_regression,
            consistency,
            total: final_estimate + historical + feature + cf_regression + consistency,
        }
    }
}

/// Mean of `|est - x|` over observed cells; 0 when nothing is observed.
fn masked_mae(data: &DirectionData, n: usize, est: &Array1<f64>, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for j in 0..data.n_vars() {
        if data.m[[n, j]] == 1.0 {
            sum += (est[j] - data.x[[n, j]]).abs();
        }
    }
    sum / count as f64
}

/// Subgradient of `|v|` with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn masked_mae_grad(data: &DirectionData, n: usize, est: &Array1<f64>, count: usize) -> Array1<f64> {
    if count == 0 {
        return Array1::zeros(data.n_vars());
    }
    let scale = 1.0 / count as f64;
    Array1::from_shape_fn(data.n_vars(), |j| {
        if data.m[[n, j]] == 1.0 {
            sign(est[j] - data.x[[n, j]]) * scale
        } else {
            0.0
        }
    })
}

/// Runs one direction from `h_0 = 0`.
pub fn sequence_forward(
    p: &DirectionParams,
    data: &DirectionData,
) -> Result<(Vec<CellTrace>, DirectionLoss)> {
    if data.n_vars() != p.n_vars() {
        return Err(Error::VariableCountMismatch {
            expected: p.n_vars(),
            got: data.n_vars(),
        });
    }
    let count = data.observed();
    let mut h = Array1::zeros(p.hidden_size());
    let mut traces = Vec::with_capacity(data.len());
    let mut loss = DirectionLoss::default();
    for n in 0..data.len() {
        let tr = cell_forward(p, &h, data.step(n))?;
        loss.final_estimate += masked_mae(data, n, &tr.x_tilde, count);
        loss.historical += masked_mae(data, n, &tr.x_hat, count);
        loss.feature += masked_mae(data, n, &tr.z_hat, count);
        loss.cf_regression += masked_mae(data, n, &tr.r_hat, count);
        h = tr.h.clone();
        traces.push(tr);
    }
    Ok((traces, loss))
}

fn x_bar_matrix(traces: &[CellTrace], m: usize) -> Array2<f64> {
    let mut out = Array2::zeros((traces.len(), m));
    for (n, tr) in traces.iter().enumerate() {
        out.row_mut(n).assign(&tr.x_bar);
    }
    out
}

/// Output of a bidirectional pass.
#[derive(Debug, Clone)]
pub struct BidirectionalOutput {
    /// Forward estimate averaged with the re-aligned backward estimate.
    pub x_bar: Array2<f64>,
    pub loss: MirnnLoss,
    pub forward: Vec<CellTrace>,
    /// In reversed time order.
    pub backward: Vec<CellTrace>,
}

pub fn bidirectional_forward(params: &MirnnParams, window: &Window) -> Result<BidirectionalOutput> {
    let (ft, fl) = sequence_forward(&params.forward, &window.forward)?;
    let (bt, bl) = sequence_forward(&params.backward, &window.backward)?;
    let m = window.forward.n_vars();
    let xf = x_bar_matrix(&ft, m);
    let xb = x_bar_matrix(&bt, m);
    let xb_aligned = xb.slice(s![..;-1, ..]);
    let cells = xf.len().max(1) as f64;
    let consistency = xf
        .iter()
        .zip(xb_aligned.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / cells;
    let mut x_bar = (&xf + &xb_aligned) * 0.5;
    // keep observed cells bit-exact rather than (x + x) / 2
    for ((r, c), v) in x_bar.indexed_iter_mut() {
        if window.forward.m[[r, c]] == 1.0 {
            *v = window.forward.x[[r, c]];
        }
    }
    Ok(BidirectionalOutput {
        x_bar,
        loss: MirnnLoss::combine(fl, bl, consistency),
        forward: ft,
        backward: bt,
    })
}

/// BPTT through one direction given extra gradients on `x_bar` per step.
fn sequence_backward(
    p: &DirectionParams,
    data: &DirectionData,
    traces: &[CellTrace],
    d_xbar: &Array2<f64>,
) -> DirectionParams {
    let count = data.observed();
    let mut g = DirectionParams::zeros(p.n_vars(), p.hidden_size());
    let mut dh = Array1::zeros(p.hidden_size());
    for n in (0..traces.len()).rev() {
        let tr = &traces[n];
        let up = StepGrads {
            h: dh,
            x_tilde: masked_mae_grad(data, n, &tr.x_tilde, count),
            x_hat: masked_mae_grad(data, n, &tr.x_hat, count),
            z_hat: masked_mae_grad(data, n, &tr.z_hat, count),
            r_hat: masked_mae_grad(data, n, &tr.r_hat, count),
            x_bar: d_xbar.row(n).to_owned(),
        };
        dh = cell_backward(p, tr, data.step(n), &up, &mut g);
    }
    g.zero_feature_diagonal();
    g
}

/// Total loss of one window and its gradient for both directions.
pub fn bidirectional_gradient(
    params: &MirnnParams,
    window: &Window,
) -> Result<(MirnnLoss, MirnnParams)> {
    let out = bidirectional_forward(params, window)?;
    let m = window.forward.n_vars();
    let n = window.len();
    let xf = x_bar_matrix(&out.forward, m);
    let xb = x_bar_matrix(&out.backward, m);
    let scale = 1.0 / (n * m).max(1) as f64;
    let mut d_f = Array2::zeros((n, m));
    let mut d_b = Array2::zeros((n, m));
    for r in 0..n {
        for c in 0..m {
            let s = sign(xf[[r, c]] - xb[[n - 1 - r, c]]) * scale;
            d_f[[r, c]] = s;
            d_b[[n - 1 - r, c]] = -s;
        }
    }
    let forward = sequence_backward(&params.forward, &window.forward, &out.forward, &d_f);
    let backward = sequence_backward(&params.backward, &window.backward, &out.backward, &d_b);
    Ok((out.loss, MirnnParams { forward, backward }))
}
