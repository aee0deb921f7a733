use ndarray::{Array1, Array2, ArrayView1};

use super::params::DirectionParams;
use crate::error::{Error, Result};

/// One time step's inputs. `x` holds anything at missing cells; it is only
/// ever read through the mask.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub x: ArrayView1<'a, f64>,
    pub m: ArrayView1<'a, f64>,
    pub delta: ArrayView1<'a, f64>,
    pub cf: ArrayView1<'a, f64>,
}

/// Everything computed in one step, including what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    /// Historical estimate from the previous state.
    pub x_hat: Array1<f64>,
    /// Input completed with `x_hat`.
    pub x_c: Array1<f64>,
    /// Regression on CF data and `x_c`.
    pub r_hat: Array1<f64>,
    /// Input completed with `r_hat`.
    pub r_c: Array1<f64>,
    /// Feature estimate from the other variables of `r_c`.
    pub z_hat: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    /// `beta * z_hat + (1 - beta) * x_hat`.
    pub x_tilde: Array1<f64>,
    /// Input completed with `x_tilde`; equals `x` at observed cells.
    pub x_bar: Array1<f64>,
    pub h: Array1<f64>,
    pub(crate) h_prev: Array1<f64>,
    pub(crate) gamma_pre: Array1<f64>,
    pub(crate) h_decayed: Array1<f64>,
    pub(crate) update: Array1<f64>,
    pub(crate) reset: Array1<f64>,
    pub(crate) candidate: Array1<f64>,
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `m * a + (1 - m) * b`, taking `a` verbatim where `m == 1`.
fn complete(m: ArrayView1<f64>, a: ArrayView1<f64>, b: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(b.len(), |j| if m[j] == 1.0 { a[j] } else { b[j] })
}

fn check(v: &Array1<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn concat(a: &Array1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    a.iter().chain(b.iter()).copied().collect()
}

pub fn cell_forward(
    p: &DirectionParams,
    h_prev: &Array1<f64>,
    input: StepInput,
) -> Result<CellTrace> {
    let StepInput { x, m, delta, cf } = input;

    let x_hat = p.w_x.dot(h_prev) + &p.b_x;
    check(&x_hat, "historical estimate")?;
    let x_c = complete(m, x, &x_hat);

    let r_hat = p.w_cf.dot(&cf) + p.u_cf.dot(&x_c) + &p.b_cf;
    check(&r_hat, "CF regression")?;
    let r_c = complete(m, x, &r_hat);

    let z_hat = p.w_z.dot(&r_c) + &p.b_z;
    check(&z_hat, "feature estimate")?;

    let gamma_pre = p.w_gamma.dot(&delta) + &p.b_gamma;
    let gamma = gamma_pre.mapv(|a| (-a.max(0.0)).exp());
    check(&gamma, "temporal decay")?;

    let beta = (p.w_beta.dot(&concat(&gamma, m)) + &p.b_beta).mapv(sigmoid);
    check(&beta, "blend weight")?;

    let x_tilde = &beta * &z_hat + &(1.0 - &beta) * &x_hat;
    let x_bar = complete(m, x, &x_tilde);

    let u = concat(&x_bar, m);
    let h_decayed = &gamma * h_prev;
    let update = (p.gz_w.dot(&u) + p.gz_u.dot(&h_decayed) + &p.gz_b).mapv(sigmoid);
    let reset = (p.gr_w.dot(&u) + p.gr_u.dot(&h_decayed) + &p.gr_b).mapv(sigmoid);
    let candidate = (p.gh_w.dot(&u) + p.gh_u.dot(&(&reset * &h_decayed)) + &p.gh_b).mapv(f64::tanh);
    let h = &(1.0 - &update) * &candidate + &update * &h_decayed;
    check(&h, "recurrent state")?;

    Ok(CellTrace {
        x_hat,
        x_c,
        r_hat,
        r_c,
        z_hat,
        gamma,
        beta,
        x_tilde,
        x_bar,
        h,
        h_prev: h_prev.clone(),
        gamma_pre,
        h_decayed,
        update,
        reset,
        candidate,
    })
}

/// Upstream gradients arriving at one step.
#[derive(Debug, Clone)]
pub(crate) struct StepGrads {
    /// Into `h` from the following step.
    pub h: Array1<f64>,
    /// Direct loss gradients on the four estimates and on `x_bar`.
    pub x_tilde: Array1<f64>,
    pub x_hat: Array1<f64>,
    pub z_hat: Array1<f64>,
    pub r_hat: Array1<f64>,
    pub x_bar: Array1<f64>,
}

fn add_outer(g: &mut Array2<f64>, a: &Array1<f64>, b: ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = g.row_mut(i);
        row.scaled_add(ai, &b);
    }
}

fn gru_gate_grads(
    w: &mut Array2<f64>,
    u_mat: &mut Array2<f64>,
    b: &mut Array1<f64>,
    da: &Array1<f64>,
    u: &Array1<f64>,
    hp: &Array1<f64>,
) {
    add_outer(w, da, u.view());
    add_outer(u_mat, da, hp.view());
    *b += da;
}

/// Back-propagates one step, accumulating parameter gradients into `g` and
/// returning the gradient with respect to `h_prev`.
pub(crate) fn cell_backward(
    p: &DirectionParams,
    tr: &CellTrace,
    input: StepInput,
    up: &StepGrads,
    g: &mut DirectionParams,
) -> Array1<f64> {
    let StepInput { m, delta, cf, .. } = input;
    let n_vars = m.len();
    let miss = m.mapv(|v| 1.0 - v);

    // recurrent update
    let u = concat(&tr.x_bar, m);
    let hp = &tr.h_decayed;
    let d_cand = &up.h * &(1.0 - &tr.update);
    let d_update = &up.h * &(hp - &tr.candidate);
    let mut d_hp = &up.h * &tr.update;

    let da_h = &d_cand * &tr.candidate.mapv(|c| 1.0 - c * c);
    let reset_hp = &tr.reset * hp;
    add_outer(&mut g.gh_w, &da_h, u.view());
    add_outer(&mut g.gh_u, &da_h, reset_hp.view());
    g.gh_b += &da_h;
    let d_reset_hp = p.gh_u.t().dot(&da_h);
    let d_reset = &d_reset_hp * hp;
    d_hp += &(&d_reset_hp * &tr.reset);
    let mut du = p.gh_w.t().dot(&da_h);

    let da_r = &d_reset * &tr.reset.mapv(|r| r * (1.0 - r));
    gru_gate_grads(&mut g.gr_w, &mut g.gr_u, &mut g.gr_b, &da_r, &u, hp);
    du += &p.gr_w.t().dot(&da_r);
    d_hp += &p.gr_u.t().dot(&da_r);

    let da_z = &d_update * &tr.update.mapv(|z| z * (1.0 - z));
    gru_gate_grads(&mut g.gz_w, &mut g.gz_u, &mut g.gz_b, &da_z, &u, hp);
    du += &p.gz_w.t().dot(&da_z);
    d_hp += &p.gz_u.t().dot(&da_z);

    // completed input, then the blend
    let d_xbar = du.slice(ndarray::s![..n_vars]).to_owned() + &up.x_bar;
    let d_xtilde = &miss * &d_xbar + &up.x_tilde;
    let d_beta = &d_xtilde * &(&tr.z_hat - &tr.x_hat);
    let d_zhat = &d_xtilde * &tr.beta + &up.z_hat;
    let mut d_xhat = &d_xtilde * &(1.0 - &tr.beta) + &up.x_hat;

    let da_b = &d_beta * &tr.beta.mapv(|b| b * (1.0 - b));
    let gm = concat(&tr.gamma, m);
    add_outer(&mut g.w_beta, &da_b, gm.view());
    g.b_beta += &da_b;
    let d_gm = p.w_beta.t().dot(&da_b);
    let h = tr.gamma.len();
    let mut d_gamma = d_gm.slice(ndarray::s![..h]).to_owned();

    // decay of the previous state
    d_gamma += &(&d_hp * &tr.h_prev);
    let mut d_hprev = &d_hp * &tr.gamma;
    let da_g = Array1::from_shape_fn(h, |i| {
        if tr.gamma_pre[i] > 0.0 {
            -d_gamma[i] * tr.gamma[i]
        } else {
            0.0
        }
    });
    add_outer(&mut g.w_gamma, &da_g, delta);
    g.b_gamma += &da_g;

    // feature estimate
    add_outer(&mut g.w_z, &d_zhat, tr.r_c.view());
    g.b_z += &d_zhat;
    let d_rc = p.w_z.t().dot(&d_zhat);

    // CF regression
    let d_rhat = &miss * &d_rc + &up.r_hat;
    add_outer(&mut g.w_cf, &d_rhat, cf);
    add_outer(&mut g.u_cf, &d_rhat, tr.x_c.view());
    g.b_cf += &d_rhat;
    let d_xc = p.u_cf.t().dot(&d_rhat);
    d_xhat += &(&miss * &d_xc);

    // historical estimate
    add_outer(&mut g.w_x, &d_xhat, tr.h_prev.view());
    g.b_x += &d_xhat;
    d_hprev += &p.w_x.t().dot(&d_xhat);
    d_hprev
}
