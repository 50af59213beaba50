use rand::seq::index::sample;

use super::RngStream;
use crate::error::{EsclError, Result};

/// Default central-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Acceptance bound on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Fewest components probed when a parameter set is subsampled.
const MIN_SAMPLED: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub components_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn finite(v: f64, at: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EsclError::Numeric(format!("loss is {v} at {at}")))
    }
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
pub fn central_difference<F>(loss: &F, params: &[f64], i: usize, eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    probe[i] = params[i] + eps;
    let plus = finite(loss(&probe)?, &format!("+eps on component {i}"))?;
    probe[i] = params[i] - eps;
    let minus = finite(loss(&probe)?, &format!("-eps on component {i}"))?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Compares `analytic` with central differences of `loss` around `params`.
///
/// Every component is probed when there are at most `max_components` of
/// them; otherwise a uniform sample of `max(max_components, 100)` distinct
/// components drawn from `rng`. The error per component is
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(
    loss: F,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    max_components: usize,
    rng: &RngStream,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(EsclError::Dimension(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(EsclError::Config(format!(
            "eps must be positive, got {eps}"
        )));
    }
    finite(loss(params)?, "the base point")?;

    let budget = max_components.max(MIN_SAMPLED);
    let indices: Vec<usize> = if params.len() <= budget {
        (0..params.len()).collect()
    } else {
        let mut idx = sample(&mut rng.generator(), params.len(), budget).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: usize::MAX,
        analytic: 0.0,
        numeric: 0.0,
        components_checked: indices.len(),
    };
    for i in indices {
        let numeric = central_difference(&loss, params, i, eps)?;
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err > report.max_rel_error || report.worst_index == usize::MAX {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    if report.worst_index == usize::MAX {
        report.worst_index = 0;
    }
    Ok(report)
}
