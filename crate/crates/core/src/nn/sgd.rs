use super::{NnError, ParamSet};

/// What one SGD update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Plain SGD with optional global-norm clipping. Gradients are zeroed
/// afterwards. On a non-finite gradient nothing is modified.
pub fn sgd_update<P: ParamSet>(
    params: &mut P,
    grads: &mut P,
    lr: f64,
    clip_norm: Option<f64>,
) -> Result<SgdStats, NnError> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(NnError::InvalidHyperparameter(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    if let Some(c) = clip_norm {
        if !(c.is_finite() && c > 0.0) {
            return Err(NnError::InvalidHyperparameter(format!(
                "clip norm must be finite and positive, got {c}"
            )));
        }
    }

    let mut sq = 0.0;
    for (name, g) in grads.named_tensors() {
        if let Some(index) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient {
                tensor: name,
                index,
            });
        }
        sq += g.sum_squares();
    }
    let grad_norm = sq.sqrt();
    let (factor, clipped) = match clip_norm {
        Some(c) if grad_norm > c => (c / grad_norm, true),
        _ => (1.0, false),
    };

    let step = lr * factor;
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors_mut()) {
        debug_assert_eq!(p.shape(), g.shape());
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data_mut().iter_mut()) {
            *pv -= step * *gv;
            *gv = 0.0;
        }
    }
    Ok(SgdStats { grad_norm, clipped })
}
