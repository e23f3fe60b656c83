use super::NnError;

/// Masked softmax with max subtraction. Masked-out positions get exactly 0.
pub fn softmax(v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>, NnError> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    if let Some(m) = mask {
        if m.len() != v.len() {
            return Err(NnError::ShapeMismatch {
                expected: v.len(),
                found: m.len(),
                context: "softmax mask",
            });
        }
    }
    if !(0..v.len()).any(keep) {
        return Err(NnError::FullyMasked);
    }
    if (0..v.len()).any(|i| keep(i) && !v[i].is_finite()) {
        return Err(NnError::NonFiniteScores);
    }
    let max = (0..v.len())
        .filter(|&i| keep(i))
        .map(|i| v[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = (0..v.len())
        .map(|i| if keep(i) { (v[i] - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// `log softmax(v)[index]`, computed without forming the full distribution.
pub fn log_softmax_at(v: &[f64], index: usize) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    v[index] - lse
}

/// Gradient of a softmax: `dv_i = p_i (dp_i - Σ_j p_j dp_j)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}
