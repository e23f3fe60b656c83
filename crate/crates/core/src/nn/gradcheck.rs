use super::ParamSet;

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, component index)` of the worst component.
    pub worst: Option<(String, usize)>,
    /// Worst relative error per tensor, in parameter order.
    pub per_tensor: Vec<(String, f64)>,
}

/// Compares `analytic` with `(f(θ+ε) - f(θ-ε)) / 2ε` for every scalar in
/// `params`. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// round-off on near-zero components from dominating.
pub fn grad_check<P, F>(params: &P, analytic: &P, loss_fn: F, eps: f64) -> GradCheckReport
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = analytic
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.data().to_vec())
        .collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        per_tensor: Vec::with_capacity(names.len()),
    };

    for (ti, name) in names.iter().enumerate() {
        let mut tensor_max: f64 = 0.0;
        for k in 0..analytic[ti].len() {
            let original = probe.tensors_mut()[ti].data()[k];
            probe.tensors_mut()[ti].data_mut()[k] = original + eps;
            let plus = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = original - eps;
            let minus = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ti][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            tensor_max = tensor_max.max(rel);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k));
            }
        }
        report.per_tensor.push((name.clone(), tensor_max));
    }
    report
}
