//! Sequential belief updates.
//!
//! A failure at log-lifetime `y` is absorbed by the exact Gaussian
//! conjugate recursion. A unit that survives to `τ` shifts the mean by the
//! mean of the predictive distribution truncated below at `log τ`
//! (moment matching), and the covariance receives the same rank-one
//! downdate as a failure would.

mod mle;

pub use mle::{
    censored_loglik, censored_score, mle_refit, mle_refit_samples, CensoredSample, MleFit,
    GRADIENT_TOLERANCE, MAX_ITERATIONS,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::model::{feature_map, FeatureVector, Observation, PosteriorState};
use crate::numerics::{mills_lambda, outer_downdate, spd_inverse, truncated_normal_moments};

/// Algebraic route used to apply an update. Both give the same belief up to
/// rounding; `Woodbury` works in precision form and needs an invertible Σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateForm {
    #[default]
    Direct,
    Woodbury,
}

struct Predictive {
    /// Σ x
    gain: DVector<f64>,
    mean: f64,
    /// σ² + xᵀ Σ x
    var: f64,
}

fn predictive(state: &PosteriorState, x: &FeatureVector) -> Result<Predictive> {
    check_dim(state.dim(), x.len())?;
    let x = x.as_vector();
    let gain = &state.sigma_mat * x;
    let var = state.noise_var + x.dot(&gain);
    Ok(Predictive {
        mean: x.dot(&state.theta),
        gain,
        var,
    })
}

fn shifted(state: &PosteriorState, theta: DVector<f64>, sigma_mat: DMatrix<f64>) -> PosteriorState {
    PosteriorState {
        theta,
        sigma_mat,
        noise_var: state.noise_var,
        n: state.n + 1,
    }
}

/// Exact Gaussian update for a failure observed at log-lifetime `y`.
pub fn conjugate_update(
    state: &PosteriorState,
    x: &FeatureVector,
    y: f64,
) -> Result<PosteriorState> {
    let pred = predictive(state, x)?;
    let theta = &state.theta + &pred.gain * ((y - pred.mean) / pred.var);
    let sigma = outer_downdate(&state.sigma_mat, &pred.gain, pred.var);
    Ok(shifted(state, theta, sigma))
}

/// Standardized censoring threshold `η = (log τ − xᵀθ)/√(σ² + xᵀΣx)`.
pub fn censoring_threshold(state: &PosteriorState, x: &FeatureVector, log_tau: f64) -> Result<f64> {
    let pred = predictive(state, x)?;
    Ok((log_tau - pred.mean) / pred.var.sqrt())
}

/// Moment-matched update for a unit that survived past `log_tau`.
///
/// The mean moves by `λ(η)/√(σ² + xᵀΣx) · Σx`. The covariance takes the
/// conjugate downdate, so it shrinks even when the censoring carries almost
/// no information (η → −∞).
pub fn censored_update(
    state: &PosteriorState,
    x: &FeatureVector,
    log_tau: f64,
) -> Result<PosteriorState> {
    let pred = predictive(state, x)?;
    let sd = pred.var.sqrt();
    let eta = (log_tau - pred.mean) / sd;
    let theta = &state.theta + &pred.gain * (mills_lambda(eta) / sd);
    let sigma = outer_downdate(&state.sigma_mat, &pred.gain, pred.var);
    Ok(shifted(state, theta, sigma))
}

/// Full second moment of the censored posterior,
/// `Σ − ΣxxᵀΣ/s + ΣxxᵀΣ/s · (1 + ηλ(η) − λ(η)²)` with `s = σ² + xᵀΣx`.
///
/// Diagnostic only; the sequential loop uses the conjugate downdate.
pub fn censored_covariance_exact(
    state: &PosteriorState,
    x: &FeatureVector,
    log_tau: f64,
) -> Result<DMatrix<f64>> {
    let pred = predictive(state, x)?;
    let trunc = truncated_normal_moments(pred.mean, pred.var, log_tau);
    let retained = trunc.variance / pred.var;
    let outer = &pred.gain * pred.gain.transpose() / pred.var;
    let mut out = &state.sigma_mat - outer * (1.0 - retained);
    crate::numerics::symmetrize(&mut out);
    Ok(out)
}

/// Precision-form update: `Σ⁻¹ ← Σ⁻¹ + xxᵀ/σ²`, then the mean shift is
/// expressed through the new covariance.
fn woodbury_update(
    state: &PosteriorState,
    obs: &Observation,
    x: &FeatureVector,
) -> Result<PosteriorState> {
    let pred = predictive(state, x)?;
    let xv = x.as_vector();
    let mut precision = spd_inverse(&state.sigma_mat)?;
    precision += xv * xv.transpose() / state.noise_var;
    let sigma_next = spd_inverse(&precision)?;
    let coef = if obs.delta {
        (obs.y - pred.mean) / state.noise_var
    } else {
        let sd = pred.var.sqrt();
        let eta = (obs.log_tau - pred.mean) / sd;
        mills_lambda(eta) * sd / state.noise_var
    };
    let theta = &state.theta + (&sigma_next * xv) * coef;
    Ok(shifted(state, theta, sigma_next))
}

/// Absorbs one observation, dispatching on the failure indicator.
pub fn absorb(
    state: &PosteriorState,
    obs: &Observation,
    form: UpdateForm,
) -> Result<PosteriorState> {
    let x = feature_map(&obs.design);
    match form {
        UpdateForm::Direct if obs.delta => conjugate_update(state, &x, obs.y),
        UpdateForm::Direct => censored_update(state, &x, obs.log_tau),
        UpdateForm::Woodbury => woodbury_update(state, obs, &x),
    }
}

/// Folds a sequence of observations into a belief.
pub fn absorb_all<'a>(
    state: &PosteriorState,
    data: impl IntoIterator<Item = &'a Observation>,
    form: UpdateForm,
) -> Result<PosteriorState> {
    data.into_iter()
        .try_fold(state.clone(), |acc, obs| absorb(&acc, obs, form))
}
