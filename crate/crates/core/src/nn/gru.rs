//! Gated recurrent unit (Cho et al. formulation).
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 - z) ⊙ h + z ⊙ h~
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{join_name, sigmoid, NnError, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(&[hidden, input]),
            w_r: Tensor::zeros(&[hidden, input]),
            w_h: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            u_h: Tensor::zeros(&[hidden, hidden]),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        GruParams {
            w_z: Tensor::uniform(&[hidden, input], scale, rng),
            w_r: Tensor::uniform(&[hidden, input], scale, rng),
            w_h: Tensor::uniform(&[hidden, input], scale, rng),
            u_z: Tensor::uniform(&[hidden, hidden], scale, rng),
            u_r: Tensor::uniform(&[hidden, hidden], scale, rng),
            u_h: Tensor::uniform(&[hidden, hidden], scale, rng),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.rows()
    }

    /// Runs one step, returning the new state and the cache for backward.
    pub fn forward(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
        let d = self.hidden_size();
        let mut z = self.b_z.data().to_vec();
        let mut r = self.b_r.data().to_vec();
        let mut h_tilde = self.b_h.data().to_vec();
        self.w_z.matvec_add(x, &mut z);
        self.u_z.matvec_add(h_prev, &mut z);
        self.w_r.matvec_add(x, &mut r);
        self.u_r.matvec_add(h_prev, &mut r);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        self.w_h.matvec_add(x, &mut h_tilde);
        self.u_h.matvec_add(&rh, &mut h_tilde);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());
        let mut h = vec![0.0; d];
        for k in 0..d {
            h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * h_tilde[k];
        }
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            h_tilde,
            rh,
        };
        (h, cache)
    }

    /// Accumulates parameter gradients into `grads` and input/state
    /// gradients into `dx` and `dh_prev`.
    pub fn backward(
        &self,
        cache: &GruCache,
        dh: &[f64],
        grads: &mut GruParams,
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let d = self.hidden_size();
        let mut dpre_z = vec![0.0; d];
        let mut dpre_h = vec![0.0; d];
        for k in 0..d {
            let z = cache.z[k];
            dh_prev[k] += dh[k] * (1.0 - z);
            let dz = dh[k] * (cache.h_tilde[k] - cache.h_prev[k]);
            dpre_z[k] = dz * z * (1.0 - z);
            let ht = cache.h_tilde[k];
            dpre_h[k] = dh[k] * z * (1.0 - ht * ht);
        }

        grads.w_h.add_outer(0, &dpre_h, &cache.x);
        grads.u_h.add_outer(0, &dpre_h, &cache.rh);
        super::axpy(1.0, &dpre_h, grads.b_h.data_mut());
        self.w_h.matvec_t_add(&dpre_h, dx);
        let mut drh = vec![0.0; d];
        self.u_h.matvec_t_add(&dpre_h, &mut drh);

        let mut dpre_r = vec![0.0; d];
        for k in 0..d {
            let r = cache.r[k];
            dh_prev[k] += drh[k] * r;
            dpre_r[k] = drh[k] * cache.h_prev[k] * r * (1.0 - r);
        }

        grads.w_r.add_outer(0, &dpre_r, &cache.x);
        grads.u_r.add_outer(0, &dpre_r, &cache.h_prev);
        super::axpy(1.0, &dpre_r, grads.b_r.data_mut());
        self.w_r.matvec_t_add(&dpre_r, dx);
        self.u_r.matvec_t_add(&dpre_r, dh_prev);

        grads.w_z.add_outer(0, &dpre_z, &cache.x);
        grads.u_z.add_outer(0, &dpre_z, &cache.h_prev);
        super::axpy(1.0, &dpre_z, grads.b_z.data_mut());
        self.w_z.matvec_t_add(&dpre_z, dx);
        self.u_z.matvec_t_add(&dpre_z, dh_prev);
    }
}

/// Intermediate values of one GRU step.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub rh: Vec<f64>,
}

/// Checked single GRU step.
pub fn gru_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>, NnError> {
    if x.len() != p.input_size() {
        return Err(NnError::ShapeMismatch {
            expected: p.input_size(),
            found: x.len(),
            context: "gru input",
        });
    }
    if h_prev.len() != p.hidden_size() {
        return Err(NnError::ShapeMismatch {
            expected: p.hidden_size(),
            found: h_prev.len(),
            context: "gru state",
        });
    }
    Ok(p.forward(x, h_prev).0)
}

impl ParamSet for GruParams {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (name, t) in [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ] {
            out.push((join_name(prefix, name), t));
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend([
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]);
    }
}
