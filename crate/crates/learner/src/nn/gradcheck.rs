//! Central finite-difference checking of the analytic gradients. The scalar
//! objective is evaluated through the forward-only path, so the check is
//! independent of the reverse-mode code it verifies.

use crate::error::Result;
use super::backward::{backward, objective_value, LossKind};
use super::{NetworkConfig, ParameterSet};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: (String, usize),
    pub components: usize,
}

/// Compares analytic gradients against central differences at `epsilon`.
/// Relative error uses `|ga - gfd| / max(|ga|, |gfd|, 1e-6)`.
pub fn finite_difference_check(
    kind: &LossKind,
    params: &ParameterSet,
    cfg: &NetworkConfig,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = backward(kind, params, cfg, None)?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        components: 0,
    };

    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let numel = params.get(&name)?.numel();
        for idx in 0..numel {
            let orig = params.get(&name)?.data[idx];
            work.get_mut(&name)?.data[idx] = orig + epsilon;
            let plus = objective_value(kind, &work, cfg)?;
            work.get_mut(&name)?.data[idx] = orig - epsilon;
            let minus = objective_value(kind, &work, cfg)?;
            work.get_mut(&name)?.data[idx] = orig;

            let fd = (plus - minus) / (2.0 * epsilon);
            let ga = analytic.get(&name)?.data[idx];
            let rel = (ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-6);
            report.components += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (name.clone(), idx);
            }
        }
    }
    Ok(report)
}
