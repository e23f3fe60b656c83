//! Two-layer feed-forward network: `L2(tanh(L1(x)))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, join_name, NnError, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedforward2Params {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Feedforward2Params {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Feedforward2Params {
            w1: Tensor::zeros(&[hidden, input]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[output, hidden]),
            b2: Tensor::zeros(&[output]),
        }
    }

    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Feedforward2Params {
            w1: Tensor::uniform(&[hidden, input], scale, rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::uniform(&[output, hidden], scale, rng),
            b2: Tensor::zeros(&[output]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_size(&self) -> usize {
        self.w2.rows()
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Feedforward2Cache) {
        let mut hidden = self.b1.data().to_vec();
        self.w1.matvec_add(x, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = self.b2.data().to_vec();
        self.w2.matvec_add(&hidden, &mut out);
        (
            out,
            Feedforward2Cache {
                input: x.to_vec(),
                hidden,
            },
        )
    }

    /// Accumulates parameter gradients and adds `dL/dx` into `dx`.
    pub fn backward(
        &self,
        cache: &Feedforward2Cache,
        dout: &[f64],
        grads: &mut Feedforward2Params,
        dx: &mut [f64],
    ) {
        grads.w2.add_outer(0, dout, &cache.hidden);
        axpy(1.0, dout, grads.b2.data_mut());
        let mut dhidden = vec![0.0; self.hidden_size()];
        self.w2.matvec_t_add(dout, &mut dhidden);
        for (g, h) in dhidden.iter_mut().zip(&cache.hidden) {
            *g *= 1.0 - h * h;
        }
        grads.w1.add_outer(0, &dhidden, &cache.input);
        axpy(1.0, &dhidden, grads.b1.data_mut());
        self.w1.matvec_t_add(&dhidden, dx);
    }
}

#[derive(Debug, Clone)]
pub struct Feedforward2Cache {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Checked forward pass.
pub fn feedforward2(p: &Feedforward2Params, inputs: &[f64]) -> Result<Vec<f64>, NnError> {
    if inputs.len() != p.input_size() {
        return Err(NnError::ShapeMismatch {
            expected: p.input_size(),
            found: inputs.len(),
            context: "feed-forward input",
        });
    }
    Ok(p.forward(inputs).0)
}

impl ParamSet for Feedforward2Params {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join_name(prefix, "w1"), &self.w1));
        out.push((join_name(prefix, "b1"), &self.b1));
        out.push((join_name(prefix, "w2"), &self.w2));
        out.push((join_name(prefix, "b2"), &self.b2));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
    }
}
