//! Minimal differentiable numeric kernel.
//!
//! Every primitive comes as a forward function that returns a cache plus a
//! backward function that consumes it. Parameters are plain structs of
//! [`Tensor`]s; their gradients use the same struct type, so a gradient
//! accumulator is just a zeroed copy of the parameters (see [`ParamSet`]).

mod feedforward;
mod gradcheck;
mod gru;
mod sgd;
mod softmax;
mod tensor;

pub use feedforward::{feedforward2, Feedforward2Cache, Feedforward2Params};
pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{gru_step, GruCache, GruParams};
pub use sgd::{sgd_update, SgdStats};
pub use softmax::{log_softmax_at, softmax, softmax_backward};
pub use tensor::{axpy, dot, sigmoid, Tensor};

use thiserror::Error;

/// Half-width of the uniform weight initialization interval.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    #[error("softmax over a fully masked vector")]
    FullyMasked,
    #[error("softmax over non-finite scores")]
    NonFiniteScores,
    #[error("non-finite gradient in tensor `{tensor}` at index {index}")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

/// A fixed, ordered collection of named tensors.
///
/// Both the parameter values and their gradient accumulators implement this,
/// and two values of the same type must enumerate tensors in the same order.
pub trait ParamSet {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>);

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_all(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn scale_all(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl ParamSet for Tensor {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        let name = if prefix.is_empty() { "tensor" } else { prefix };
        out.push((name.to_string(), self));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(self);
    }
}

impl ParamSet for Vec<Tensor> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, t) in self.iter().enumerate() {
            out.push((join_name(prefix, &i.to_string()), t));
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend(self.iter_mut());
    }
}
