use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |a - n| / max(|a|, |n|, floor)` over all checked entries.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Denominator floor of the relative error; entries where both gradients are
/// below it are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Checks the gradient of the scalar built by `loss` against central
/// differences with step `h`. At most `max_per_param` entries of each
/// parameter are probed, evenly strided.
pub fn finite_diff_check<F>(store: &ParamStore, loss: F, h: f64, max_per_param: usize) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &ParamStore) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let l = loss(&g, store)?;
    let analytic = g.backward(l)?.param_grads(store);
    drop(g);

    let eval = |s: &ParamStore| -> Result<f64> {
        let g = Graph::inference();
        let v = loss(&g, s)?.item();
        Ok(v)
    };
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in 0..store.len() {
        let n = store.value(id).len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let x = store.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = x + h;
            let up = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = x - h;
            let down = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.name(id).to_string(), i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
