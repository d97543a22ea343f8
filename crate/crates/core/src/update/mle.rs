//! Censored log-normal maximum likelihood with the noise variance held fixed.
//!
//! For fixed σ the log-likelihood is concave in β: failures contribute
//! `−r²/2` with `r = (y − xᵀβ)/σ`, censored runs contribute
//! `ln(1 − Φ((log τ − xᵀβ)/σ))`. Damped Newton ascent is therefore globally
//! convergent whenever the maximizer exists. When it does not (some direction
//! is only ever pushed upward by censored runs) the observed information in
//! that direction collapses, which is what [`mle_refit`] checks for.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::model::{feature_map, Observation};
use crate::numerics::{log_norm_sf, mills_lambda};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;
const MAX_HALVINGS: usize = 30;
/// Smallest acceptable ratio between the observed information and the
/// information the same design would carry without censoring.
const MIN_RELATIVE_INFORMATION: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One row of the censored regression, already expanded into its regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredSample {
    pub x: DVector<f64>,
    pub y: f64,
    pub log_tau: f64,
    pub delta: bool,
}

impl From<&Observation> for CensoredSample {
    fn from(obs: &Observation) -> Self {
        CensoredSample {
            x: feature_map(&obs.design).into_vector(),
            y: obs.y,
            log_tau: obs.log_tau,
            delta: obs.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub beta_hat: DVector<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_rows(data: &[CensoredSample], beta: &DVector<f64>) -> Result<()> {
    data.iter()
        .try_for_each(|s| check_dim(beta.len(), s.x.len()))
}

/// Censored log-likelihood at `beta`, including the `−log T` Jacobian terms
/// of the log-normal density.
pub fn censored_loglik(
    data: &[CensoredSample],
    noise_var: f64,
    beta: &DVector<f64>,
) -> Result<f64> {
    check_rows(data, beta)?;
    Ok(loglik_unchecked(data, noise_var.sqrt(), beta))
}

fn loglik_unchecked(data: &[CensoredSample], sigma: f64, beta: &DVector<f64>) -> f64 {
    let ln_sigma = sigma.ln();
    data.iter()
        .map(|s| {
            let m = s.x.dot(beta);
            if s.delta {
                let r = (s.y - m) / sigma;
                -ln_sigma - s.y - HALF_LN_2PI - 0.5 * r * r
            } else {
                log_norm_sf((s.log_tau - m) / sigma)
            }
        })
        .sum()
}

/// Gradient of [`censored_loglik`] in β.
pub fn censored_score(
    data: &[CensoredSample],
    noise_var: f64,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_rows(data, beta)?;
    Ok(derivatives(data, noise_var.sqrt(), beta).0)
}

/// Score and observed information (negative Hessian).
fn derivatives(
    data: &[CensoredSample],
    sigma: f64,
    beta: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = beta.len();
    let mut score = DVector::zeros(dim);
    let mut info = DMatrix::zeros(dim, dim);
    for s in data {
        let m = s.x.dot(beta);
        let (g, w) = if s.delta {
            ((s.y - m) / sigma, 1.0)
        } else {
            let u = (s.log_tau - m) / sigma;
            let lam = mills_lambda(u);
            // d/du λ(u) = λ(λ − u) ∈ (0, 1)
            (lam, lam * (lam - u))
        };
        score.axpy(g / sigma, &s.x, 1.0);
        info.ger(w / (sigma * sigma), &s.x, &s.x, 1.0);
    }
    (score, info)
}

/// Smallest generalized eigenvalue of `info` relative to the uncensored
/// information `XᵀX/σ²`.
fn relative_information(data: &[CensoredSample], sigma: f64, info: &DMatrix<f64>) -> Result<f64> {
    let dim = info.nrows();
    let mut gram = DMatrix::zeros(dim, dim);
    for s in data {
        gram.ger(1.0 / (sigma * sigma), &s.x, &s.x, 1.0);
    }
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::NonIdentifiable("design matrix is rank deficient".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NonIdentifiable("design matrix is rank deficient".into()))?;
    let mut scaled = &l_inv * info * l_inv.transpose();
    crate::numerics::symmetrize(&mut scaled);
    let eig = SymmetricEigen::new(scaled);
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Maximizes the censored log-likelihood over β for the given observations.
pub fn mle_refit(data: &[Observation], noise_var: f64, init: &DVector<f64>) -> Result<MleFit> {
    let rows: Vec<CensoredSample> = data.iter().map(CensoredSample::from).collect();
    mle_refit_samples(&rows, noise_var, init)
}

/// [`mle_refit`] on pre-expanded regression rows.
pub fn mle_refit_samples(
    data: &[CensoredSample],
    noise_var: f64,
    init: &DVector<f64>,
) -> Result<MleFit> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no observations to fit".into()));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    check_rows(data, init)?;
    let sigma = noise_var.sqrt();

    let mut beta = init.clone();
    let mut ll = loglik_unchecked(data, sigma, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut info;
    loop {
        let (score, information) = derivatives(data, sigma, &beta);
        info = information;
        if score.amax() <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let step = Cholesky::new(info.clone())
            .ok_or_else(|| Error::NonIdentifiable("information matrix is singular".into()))?
            .solve(&score);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + &step * t;
            let cand_ll = loglik_unchecked(data, sigma, &candidate);
            // non-decreasing up to rounding of the objective
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                accepted = Some((candidate, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            return Err(Error::NonIdentifiable(
                "line search failed to increase the likelihood".into(),
            ));
        };
        if !next_ll.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonIdentifiable("iterates diverged".into()));
        }
        beta = next;
        ll = next_ll;
    }

    let rel = relative_information(data, sigma, &info)?;
    if rel.is_nan() || rel < MIN_RELATIVE_INFORMATION {
        return Err(Error::NonIdentifiable(format!(
            "likelihood is flat along some direction (relative information {rel:.3e})"
        )));
    }
    Ok(MleFit {
        beta_hat: beta,
        loglik: ll,
        iterations,
        converged,
    })
}
