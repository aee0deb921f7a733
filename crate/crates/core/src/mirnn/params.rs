use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one direction. `m` variables, `h` hidden units.
///
/// | field | shape | role |
/// |---|---|---|
/// | `w_x`, `b_x` | M×H, M | historical estimate from the previous state |
/// | `w_cf`, `u_cf`, `b_cf` | M×M, M×M, M | regression on CF data and the completed input |
/// | `w_z`, `b_z` | M×M (zero diagonal), M | feature estimate |
/// | `w_gamma`, `b_gamma` | H×M, H | temporal decay of the hidden state |
/// | `w_beta`, `b_beta` | M×(H+M), M | blend weight from `[decay; mask]` |
/// | `gz_*`, `gr_*`, `gh_*` | H×2M, H×H, H | update, reset and candidate gates |
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w_x: Array2<f64>,
    pub b_x: Array1<f64>,
    pub w_cf: Array2<f64>,
    pub u_cf: Array2<f64>,
    pub b_cf: Array1<f64>,
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_gamma: Array2<f64>,
    pub b_gamma: Array1<f64>,
    pub w_beta: Array2<f64>,
    pub b_beta: Array1<f64>,
    pub gz_w: Array2<f64>,
    pub gz_u: Array2<f64>,
    pub gz_b: Array1<f64>,
    pub gr_w: Array2<f64>,
    pub gr_u: Array2<f64>,
    pub gr_b: Array1<f64>,
    pub gh_w: Array2<f64>,
    pub gh_u: Array2<f64>,
    pub gh_b: Array1<f64>,
}

// Single list of tensor fields; everything that walks the parameters goes
// through it so names and order never drift.
macro_rules! with_fields {
    ($mac:ident) => {
        $mac!(
            w_x, b_x, w_cf, u_cf, b_cf, w_z, b_z, w_gamma, b_gamma, w_beta, b_beta, gz_w, gz_u,
            gz_b, gr_w, gr_u, gr_b, gh_w, gh_u, gh_b
        )
    };
}

impl DirectionParams {
    pub fn zeros(m: usize, h: usize) -> Self {
        let mat = |r, c| Array2::zeros((r, c));
        let vec = |n| Array1::zeros(n);
        Self {
            w_x: mat(m, h),
            b_x: vec(m),
            w_cf: mat(m, m),
            u_cf: mat(m, m),
            b_cf: vec(m),
            w_z: mat(m, m),
            b_z: vec(m),
            w_gamma: mat(h, m),
            b_gamma: vec(h),
            w_beta: mat(m, h + m),
            b_beta: vec(m),
            gz_w: mat(h, 2 * m),
            gz_u: mat(h, h),
            gz_b: vec(h),
            gr_w: mat(h, 2 * m),
            gr_u: mat(h, h),
            gr_b: vec(h),
            gh_w: mat(h, 2 * m),
            gh_u: mat(h, h),
            gh_b: vec(h),
        }
    }

    /// Matrices uniform in `±1/sqrt(fan_in)`, biases zero, `diag(w_z) = 0`.
    pub fn init<R: Rng + ?Sized>(m: usize, h: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(m, h);
        p.visit_mut(|_, data, shape| {
            if shape.1 == 0 {
                return; // bias
            }
            let bound = 1.0 / (shape.1 as f64).sqrt();
            for v in data.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        });
        p.zero_feature_diagonal();
        p
    }

    pub fn n_vars(&self) -> usize {
        self.b_x.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.gz_b.len()
    }

    /// Visits every tensor as `(name, data, (rows, cols))`; `cols == 0` marks
    /// a bias vector.
    pub fn visit(&self, mut f: impl FnMut(&'static str, &[f64], (usize, usize))) {
        macro_rules! go {
            ($($name:ident),*) => {$(
                f(stringify!($name), self.$name.as_slice().expect("standard layout"), shape_of(&self.$name));
            )*};
        }
        with_fields!(go);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64], (usize, usize))) {
        macro_rules! go {
            ($($name:ident),*) => {$(
                let shape = shape_of(&self.$name);
                f(stringify!($name), self.$name.as_slice_mut().expect("standard layout"), shape);
            )*};
        }
        with_fields!(go);
    }

    /// Applies `f(self_elem, other_elem)` elementwise over matching tensors.
    pub fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        macro_rules! go {
            ($($name:ident),*) => {$(
                self.$name.zip_mut_with(&other.$name, |a, &b| f(a, b));
            )*};
        }
        with_fields!(go);
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, d, _| n += d.len());
        n
    }

    pub fn zero_feature_diagonal(&mut self) {
        for j in 0..self.w_z.nrows() {
            self.w_z[[j, j]] = 0.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, d, _| ok &= d.iter().all(|v| v.is_finite()));
        ok
    }

    pub(crate) fn to_file(&self) -> BTreeMap<String, TensorFile> {
        let mut out = BTreeMap::new();
        self.visit(|name, data, (r, c)| {
            let shape = if c == 0 { vec![r] } else { vec![r, c] };
            out.insert(
                name.to_string(),
                TensorFile {
                    shape,
                    data: data.to_vec(),
                },
            );
        });
        out
    }

    pub(crate) fn from_file(
        m: usize,
        h: usize,
        file: &BTreeMap<String, TensorFile>,
    ) -> Result<Self> {
        let mut p = Self::zeros(m, h);
        let mut err = None;
        let mut seen = 0;
        p.visit_mut(|name, data, (r, c)| {
            if err.is_some() {
                return;
            }
            let expected = if c == 0 { vec![r] } else { vec![r, c] };
            match file.get(name) {
                Some(t) if t.shape == expected && t.data.len() == data.len() => {
                    data.copy_from_slice(&t.data);
                    seen += 1;
                }
                Some(t) => {
                    err = Some(format!(
                        "tensor `{name}` has shape {:?}, expected {expected:?}",
                        t.shape
                    ))
                }
                None => err = Some(format!("tensor `{name}` missing")),
            }
        });
        if let Some(msg) = err {
            return Err(Error::InvalidArgument(msg));
        }
        if seen != file.len() {
            return Err(Error::InvalidArgument(
                "unknown tensors in parameter file".into(),
            ));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("stored parameters".into()));
        }
        Ok(p)
    }
}

trait Shape {
    fn shape2(&self) -> (usize, usize);
}

impl Shape for Array2<f64> {
    fn shape2(&self) -> (usize, usize) {
        self.dim()
    }
}

impl Shape for Array1<f64> {
    fn shape2(&self) -> (usize, usize) {
        (self.len(), 0)
    }
}

fn shape_of<T: Shape>(t: &T) -> (usize, usize) {
    t.shape2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TensorFile {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Both directions of the bidirectional model.
#[derive(Debug, Clone, PartialEq)]
pub struct MirnnParams {
    pub forward: DirectionParams,
    pub backward: DirectionParams,
}

impl MirnnParams {
    pub fn init<R: Rng + ?Sized>(m: usize, h: usize, rng: &mut R) -> Self {
        let forward = DirectionParams::init(m, h, rng);
        let backward = DirectionParams::init(m, h, rng);
        Self { forward, backward }
    }

    pub fn zeros(m: usize, h: usize) -> Self {
        Self {
            forward: DirectionParams::zeros(m, h),
            backward: DirectionParams::zeros(m, h),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.forward.n_vars()
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        self.forward.zip_mut(&other.forward, &mut f);
        self.backward.zip_mut(&other.backward, &mut f);
    }

    pub fn scale(&mut self, s: f64) {
        for d in [&mut self.forward, &mut self.backward] {
            d.visit_mut(|_, data, _| data.iter_mut().for_each(|v| *v *= s));
        }
    }

    pub fn zero_feature_diagonal(&mut self) {
        self.forward.zero_feature_diagonal();
        self.backward.zero_feature_diagonal();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DirectionParams::init(3, 4, &mut rng);
        assert_eq!(p.n_vars(), 3);
        assert_eq!(p.hidden_size(), 4);
        assert_eq!(p.w_beta.dim(), (3, 7));
        assert_eq!(p.gz_w.dim(), (4, 6));
        for j in 0..3 {
            assert_eq!(p.w_z[[j, j]], 0.0);
        }
        assert!(p.b_beta.iter().all(|&v| v == 0.0));
        let bound = 1.0 / 4f64.sqrt();
        assert!(p.w_x.iter().all(|v| v.abs() <= bound));
        assert!(p.w_x.iter().any(|&v| v != 0.0));
        let total = 3 * 4 + 3 + 9 + 9 + 3 + 9 + 3 + 12 + 4 + 21 + 3 + 3 * (24 + 16 + 4);
        assert_eq!(p.n_params(), total);
    }

    #[test]
    fn file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DirectionParams::init(2, 3, &mut rng);
        let f = p.to_file();
        assert_eq!(DirectionParams::from_file(2, 3, &f).unwrap(), p);
        assert!(DirectionParams::from_file(2, 4, &f).is_err());
        let mut missing = f.clone();
        missing.remove("gh_b");
        assert!(DirectionParams::from_file(2, 3, &missing).is_err());
    }
}
