use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

/// States beyond this magnitude count as a blow-up.
const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lorenz96Config {
    /// Number of recorded states.
    pub n: usize,
    /// Number of variables (ring size).
    pub d: usize,
    pub forcing: f64,
    /// RK4 step, also the spacing between recorded states.
    pub dt: f64,
    /// Base size of the kick applied to one coordinate of the equilibrium.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Self {
            n: 200,
            d: 5,
            forcing: 8.0,
            dt: 0.05,
            perturbation: 0.01,
            seed: 0,
        }
    }
}

/// `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F` on a ring.
pub fn lorenz96_rhs(x: &[f64], forcing: f64, out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let ip1 = x[(i + 1) % d];
        let im1 = x[(i + d - 1) % d];
        let im2 = x[(i + d - 2) % d];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

/// One classical Runge-Kutta step.
pub fn rk4_step(x: &mut [f64], forcing: f64, dt: f64) {
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    lorenz96_rhs(x, forcing, &mut k1);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    lorenz96_rhs(&tmp, forcing, &mut k2);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    lorenz96_rhs(&tmp, forcing, &mut k3);
    for i in 0..d {
        tmp[i] = x[i] + dt * k3[i];
    }
    lorenz96_rhs(&tmp, forcing, &mut k4);
    for i in 0..d {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `steps` RK4 steps from `x0`, returning `steps + 1` states
/// (the initial one included).
pub fn integrate(x0: &[f64], forcing: f64, dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for step in 0..steps {
        rk4_step(&mut x, forcing, dt);
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(Error::BlowUp { step: step + 1 });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Fully observed Lorenz-96 trajectory. The start is the equilibrium
/// `(F, ..., F)` with one seeded coordinate kicked by
/// `perturbation * (1 + u)`, `u ~ U[0, 1)`. Row `n` is the state after `n`
/// steps; timestamps are the step indices.
pub fn lorenz96(cfg: &Lorenz96Config) -> Result<MultivariateSeries> {
    if cfg.d < 4 {
        return Err(Error::InvalidArgument(format!(
            "Lorenz-96 needs at least 4 variables, got {}",
            cfg.d
        )));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x0 = vec![cfg.forcing; cfg.d];
    let coord = rng.random_range(0..cfg.d);
    let u: f64 = rng.random();
    x0[coord] += cfg.perturbation * (1.0 + u);

    let states = integrate(&x0, cfg.forcing, cfg.dt, cfg.n - 1)?;
    let values = Array2::from_shape_fn((cfg.n, cfg.d), |(r, c)| states[r][c]);
    let timestamps = (0..cfg.n).map(|i| i as f64).collect();
    MultivariateSeries::fully_observed(timestamps, values, MultivariateSeries::default_names(cfg.d))
}
