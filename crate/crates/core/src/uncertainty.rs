//! Robust safety distances from estimation uncertainty.
//!
//! The planner treats each predicted agent position as Gaussian with the
//! propagated covariance. A chi-square confidence bound turns that covariance
//! into a position-error radius: with probability at least `1 - epsilon` the
//! true position lies within `sum_n sqrt(k_eps * lambda_n)` of the prediction,
//! where `lambda_n` are the position-covariance eigenvalues. Adding that
//! radius to the inflation radius gives the per-step safety distance
//! `d_safe`, capped at `d_safe_max`; the first step hitting the cap is the
//! replan step.

use crate::estimation::AgentPrediction;
use crate::AgentId;
use nalgebra::Matrix2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("only 2-dof chi-square bounds are supported, got dof {0}")]
    UnsupportedDof(u32),
    #[error("covariance is not positive semi-definite (eigenvalue {0})")]
    NotPsd(f64),
}

/// Confidence level and safety-distance cap.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceParams {
    pub epsilon: f64,
    pub d_safe_max: f64,
}

/// Per-agent schedule of robust safety distances over the horizon.
#[derive(Debug, Clone)]
pub struct SafetySchedule {
    pub agent_id: AgentId,
    /// Position-error margin r^i at steps `1..=N` (index `i-1`).
    pub margins: Vec<f64>,
    /// `d_safe^i = min(r_ins + r^i, d_safe_max)` at steps `1..=N`.
    pub d_safe: Vec<f64>,
    /// First step where the cap activates, else N.
    pub replan_step: usize,
}

/// Chi-square inverse CDF at `1 - epsilon`. For 2 dof this is exactly
/// `-2 ln(epsilon)`.
pub fn chi2_bound(epsilon: f64, dof: u32) -> Result<f64, UncertaintyError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(UncertaintyError::BadEpsilon(epsilon));
    }
    if dof != 2 {
        return Err(UncertaintyError::UnsupportedDof(dof));
    }
    Ok(-2.0 * epsilon.ln())
}

/// Eigenvalues of a symmetric 2x2 matrix, descending.
fn eigenvalues_2x2(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr + disc) / 2.0, (tr - disc) / 2.0)
}

/// Position-error margin `sqrt(k_eps * lambda_1) + sqrt(k_eps * lambda_2)`.
pub fn margin(sigma: &Matrix2<f64>, k_eps: f64) -> Result<f64, UncertaintyError> {
    let (l1, l2) = eigenvalues_2x2(&((sigma + sigma.transpose()) * 0.5));
    if l2 < -1e-12 {
        return Err(UncertaintyError::NotPsd(l2));
    }
    let l1 = l1.max(0.0);
    let l2 = l2.max(0.0);
    Ok((k_eps * l1).sqrt() + (k_eps * l2).sqrt())
}

/// Build the per-step schedule for one agent from its prediction.
pub fn build_schedule(
    prediction: &AgentPrediction,
    params: &ConfidenceParams,
    r_ins: f64,
) -> Result<SafetySchedule, UncertaintyError> {
    let k_eps = chi2_bound(params.epsilon, 2)?;
    let n = prediction.horizon();
    let mut margins = Vec::with_capacity(n);
    let mut d_safe = Vec::with_capacity(n);
    let mut replan_step = n;
    for (idx, sigma) in prediction.covariances.iter().enumerate() {
        let r = margin(sigma, k_eps)?;
        margins.push(r);
        let uncapped = r_ins + r;
        d_safe.push(uncapped.min(params.d_safe_max));
        if uncapped >= params.d_safe_max && replan_step == n {
            replan_step = idx + 1;
        }
    }
    Ok(SafetySchedule {
        agent_id: prediction.agent_id,
        margins,
        d_safe,
        replan_step,
    })
}
