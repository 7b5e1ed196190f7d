use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing backward gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest `|a - b|` over all elements. Exactly-zero gradients show up
    /// here as finite-difference roundoff (about one ulp of the loss over
    /// `2 epsilon`) while their relative error is large.
    pub max_abs_error: f64,
    /// `(param index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - b| / max(1e-8, |a| + |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Checks the gradient of the scalar built by `f` with respect to `params`.
///
/// `f` receives a fresh graph and the parameter leaves in the order given,
/// and must be deterministic. Every parameter element is perturbed by
/// `±epsilon`.
pub fn grad_check<F>(f: F, params: &[Tensor], epsilon: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grad_check: epsilon must be positive, got {epsilon}"
        )));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &ids)?;
        Ok(g.value(loss).item())
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let mut work = params.to_vec();
    let mut max_rel_error = 0.0;
    let mut max_abs_error = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("parameter gradient");
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + epsilon;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - epsilon;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic.data()[k], numeric);
            max_abs_error = max_abs_error.max((analytic.data()[k] - numeric).abs());
            checked += 1;
            if err > max_rel_error || worst.is_none() {
                max_rel_error = err;
                worst = Some((pi, k));
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        max_abs_error,
        worst,
        checked,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}
