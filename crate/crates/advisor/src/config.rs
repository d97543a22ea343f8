use alt_planner_core::policy::{DecisionTrack, PolicyKind};
use alt_planner_core::update::UpdateForm;
use alt_planner_core::{feature_map, CandidateSet, Observation, PosteriorState};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Starting belief of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    /// `"diffuse"`: zero mean and `prior_var · I`.
    Named(PriorName),
    Explicit {
        theta: Vec<f64>,
        sigma_mat: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorName {
    Diffuse,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Named(PriorName::Diffuse)
    }
}

fn default_prior_var() -> f64 {
    100.0
}

fn default_policy() -> PolicyKind {
    PolicyKind::SeqEI
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub candidates: CandidateSet,
    #[serde(default)]
    pub material_labels: Option<Vec<String>>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default = "default_prior_var")]
    pub prior_var: f64,
    /// Known noise variance. When absent it is estimated from `history`.
    #[serde(default)]
    pub noise_var: Option<f64>,
    /// Earlier runs, absorbed into the starting belief.
    #[serde(default)]
    pub history: Vec<Observation>,
    #[serde(default)]
    pub default_tau: Option<f64>,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub track: DecisionTrack,
    #[serde(default)]
    pub update_form: UpdateForm,
    /// Number of runs planned; required by the factorial policy.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// Fully resolved session settings, as stored in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub candidates: CandidateSet,
    pub material_labels: Vec<String>,
    pub prior: PriorSpec,
    pub prior_var: f64,
    pub noise_var: f64,
    /// True when `noise_var` was estimated from the history.
    pub noise_var_estimated: bool,
    pub history: Vec<Observation>,
    pub default_tau: Option<f64>,
    pub policy: PolicyKind,
    pub track: DecisionTrack,
    pub update_form: UpdateForm,
    pub budget: Option<usize>,
    pub seed: u64,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> ApiError {
    ApiError::BadRequest(format!("{field}: {msg}"))
}

impl CreateRequest {
    pub fn resolve(self) -> Result<SessionConfig, ApiError> {
        let cands = self.candidates;
        let k = cands.k();
        let dim = cands.feature_dim();

        let material_labels = match self.material_labels {
            Some(labels) if labels.len() != k => {
                return Err(bad(
                    "material_labels",
                    format!("expected {k} labels, found {}", labels.len()),
                ))
            }
            Some(labels) => labels,
            None => (0..k).map(|i| format!("material {}", i + 1)).collect(),
        };
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return Err(bad("prior_var", "must be positive"));
        }
        if let PriorSpec::Explicit { theta, sigma_mat } = &self.prior {
            if theta.len() != dim
                || sigma_mat.len() != dim
                || sigma_mat.iter().any(|r| r.len() != dim)
            {
                return Err(bad(
                    "prior",
                    format!("theta and sigma_mat must have dimension {dim}"),
                ));
            }
        }
        if let Some(tau) = self.default_tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(bad("default_tau", "must be positive"));
            }
        }
        for (i, obs) in self.history.iter().enumerate() {
            if obs.design.p() != cands.p() || obs.design.d() != cands.d() {
                return Err(bad(
                    &format!("history[{i}]"),
                    "design does not match the candidate dimensions",
                ));
            }
        }
        let (noise_var, noise_var_estimated) = match self.noise_var {
            Some(v) if v > 0.0 && v.is_finite() => (v, false),
            Some(_) => return Err(bad("noise_var", "must be positive")),
            None => (estimate_noise_var(&self.history, dim)?, true),
        };
        if self.policy == PolicyKind::FactorialRandomized && self.budget.is_none_or(|b| b == 0) {
            return Err(bad(
                "budget",
                "the factorial policy needs a positive run budget",
            ));
        }

        let cfg = SessionConfig {
            candidates: cands,
            material_labels,
            prior: self.prior,
            prior_var: self.prior_var,
            noise_var,
            noise_var_estimated,
            history: self.history,
            default_tau: self.default_tau,
            policy: self.policy,
            track: self.track,
            update_form: self.update_form,
            budget: self.budget,
            seed: self.seed,
        };
        cfg.initial_belief().map_err(|e| bad("prior", e))?;
        Ok(cfg)
    }
}

impl SessionConfig {
    /// The configured prior, before any history is absorbed.
    pub fn prior_belief(&self) -> alt_planner_core::Result<PosteriorState> {
        let dim = self.candidates.feature_dim();
        match &self.prior {
            PriorSpec::Named(PriorName::Diffuse) => {
                PosteriorState::diffuse(dim, self.prior_var, self.noise_var)
            }
            PriorSpec::Explicit { theta, sigma_mat } => PosteriorState::new(
                DVector::from_column_slice(theta),
                DMatrix::from_fn(dim, dim, |i, j| sigma_mat[i][j]),
                self.noise_var,
                0,
            ),
        }
    }

    /// Prior with the history absorbed and the step counter at zero.
    pub fn initial_belief(&self) -> alt_planner_core::Result<PosteriorState> {
        let mut belief = alt_planner_core::update::absorb_all(
            &self.prior_belief()?,
            &self.history,
            self.update_form,
        )?;
        belief.n = 0;
        Ok(belief)
    }
}

/// Residual variance of an ordinary least-squares fit to the failures in
/// `history`, ignoring censored rows. A rough plug-in for σ².
pub fn estimate_noise_var(history: &[Observation], dim: usize) -> Result<f64, ApiError> {
    let failures: Vec<&Observation> = history.iter().filter(|o| o.delta).collect();
    if failures.len() <= dim {
        return Err(bad(
            "noise_var",
            format!(
                "not given, and estimating it needs more than {dim} failures in history, found {}",
                failures.len()
            ),
        ));
    }
    let n = failures.len();
    let x = DMatrix::from_fn(n, dim, |i, j| {
        feature_map(&failures[i].design).as_slice()[j]
    });
    let y = DVector::from_iterator(n, failures.iter().map(|o| o.y));
    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| bad("history", "failures do not identify every coefficient"))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * beta;
    let var = resid.norm_squared() / (n - dim) as f64;
    if var > 0.0 && var.is_finite() {
        Ok(var)
    } else {
        Err(bad("history", "residual variance is zero"))
    }
}
