//! Design points, observations, the Gaussian coefficient belief and the
//! regressor expansion `x(z, v) = (1, v, z, z ⊗ v)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{is_positive_semidefinite, spd_quadratic_form};

/// A candidate run: material features `z` (length p) tested at stress `v`
/// (length d). Categorical materials arrive already encoded as numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesignPoint")]
pub struct DesignPoint {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDesignPoint {
    z: Vec<f64>,
    v: Vec<f64>,
}

impl TryFrom<RawDesignPoint> for DesignPoint {
    type Error = Error;

    fn try_from(raw: RawDesignPoint) -> Result<Self> {
        DesignPoint::new(raw.z, raw.v)
    }
}

impl DesignPoint {
    pub fn new(z: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if z.is_empty() || v.is_empty() {
            return Err(Error::InvalidInput(
                "design point needs at least one material and one stress coordinate".into(),
            ));
        }
        if z.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "design point has non-finite entries".into(),
            ));
        }
        Ok(Self { z, v })
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    pub fn d(&self) -> usize {
        self.v.len()
    }
}

/// Length of the regressor for `p` material features and `d` stresses.
pub fn feature_dim(p: usize, d: usize) -> usize {
    (p + 1) * (d + 1)
}

/// The expanded regressor `x(z, v)`; first entry is always the intercept 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    /// Wraps a regressor that did not come from [`feature_map`], e.g. for a
    /// reduced model. The update and acquisition formulas accept any length
    /// that matches the belief.
    pub fn from_raw(x: DVector<f64>) -> Self {
        Self(x)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl From<FeatureVector> for DVector<f64> {
    fn from(x: FeatureVector) -> Self {
        x.0
    }
}

/// `x(z, v) = (1, vᵀ, zᵀ, (z ⊗ v)ᵀ)ᵀ` with the interaction block z-major:
/// `(z₁v₁, …, z₁v_d, z₂v₁, …, z_p v_d)`.
pub fn feature_map(dp: &DesignPoint) -> FeatureVector {
    let (p, d) = (dp.p(), dp.d());
    let mut x = Vec::with_capacity(feature_dim(p, d));
    x.push(1.0);
    x.extend_from_slice(&dp.v);
    x.extend_from_slice(&dp.z);
    for &zi in &dp.z {
        x.extend(dp.v.iter().map(|&vj| zi * vj));
    }
    FeatureVector(DVector::from_vec(x))
}

/// One test outcome. `delta = true` records a failure at log-lifetime `y`;
/// otherwise the unit survived to `log_tau` and `y` carries no information
/// (it is stored equal to `log_tau`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObservation")]
pub struct Observation {
    pub design: DesignPoint,
    pub log_tau: f64,
    pub delta: bool,
    pub y: f64,
}

#[derive(Deserialize)]
struct RawObservation {
    design: DesignPoint,
    log_tau: f64,
    delta: bool,
    y: f64,
}

impl TryFrom<RawObservation> for Observation {
    type Error = Error;

    fn try_from(raw: RawObservation) -> Result<Self> {
        if raw.delta {
            Observation::failure(raw.design, raw.y, raw.log_tau)
        } else {
            Observation::censored(raw.design, raw.log_tau)
        }
    }
}

impl Observation {
    /// A failure observed at log-lifetime `y` on a test stopped at `log_tau`.
    pub fn failure(design: DesignPoint, y: f64, log_tau: f64) -> Result<Self> {
        if !y.is_finite() || !log_tau.is_finite() {
            return Err(Error::InvalidInput(
                "observation values must be finite".into(),
            ));
        }
        if y > log_tau {
            return Err(Error::InvalidInput(format!(
                "failure at log-lifetime {y} is after the test end {log_tau}"
            )));
        }
        Ok(Self {
            design,
            log_tau,
            delta: true,
            y,
        })
    }

    /// A unit still running when the test stopped at `log_tau`.
    pub fn censored(design: DesignPoint, log_tau: f64) -> Result<Self> {
        if !log_tau.is_finite() {
            return Err(Error::InvalidInput(
                "observation time must be finite".into(),
            ));
        }
        Ok(Self {
            design,
            log_tau,
            delta: false,
            y: log_tau,
        })
    }

    pub fn is_censored(&self) -> bool {
        !self.delta
    }
}

/// Gaussian belief `β ~ N(theta, sigma_mat)` with known noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PosteriorDoc", try_from = "PosteriorDoc")]
pub struct PosteriorState {
    pub theta: DVector<f64>,
    pub sigma_mat: DMatrix<f64>,
    pub noise_var: f64,
    pub n: u64,
}

/// Wire layout of [`PosteriorState`]; `sigma_mat` is a list of rows.
#[derive(Serialize, Deserialize)]
struct PosteriorDoc {
    theta: Vec<f64>,
    sigma_mat: Vec<Vec<f64>>,
    noise_var: f64,
    n: u64,
}

impl From<PosteriorState> for PosteriorDoc {
    fn from(s: PosteriorState) -> Self {
        let rows = (0..s.sigma_mat.nrows())
            .map(|i| s.sigma_mat.row(i).iter().copied().collect())
            .collect();
        PosteriorDoc {
            theta: s.theta.iter().copied().collect(),
            sigma_mat: rows,
            noise_var: s.noise_var,
            n: s.n,
        }
    }
}

impl TryFrom<PosteriorDoc> for PosteriorState {
    type Error = Error;

    fn try_from(doc: PosteriorDoc) -> Result<Self> {
        let dim = doc.theta.len();
        check_dim(dim, doc.sigma_mat.len())?;
        for row in &doc.sigma_mat {
            check_dim(dim, row.len())?;
        }
        let sigma = DMatrix::from_fn(dim, dim, |i, j| doc.sigma_mat[i][j]);
        PosteriorState::new(DVector::from_vec(doc.theta), sigma, doc.noise_var, doc.n)
    }
}

impl PosteriorState {
    pub fn new(
        theta: DVector<f64>,
        sigma_mat: DMatrix<f64>,
        noise_var: f64,
        n: u64,
    ) -> Result<Self> {
        let dim = theta.len();
        check_dim(dim, sigma_mat.nrows())?;
        check_dim(dim, sigma_mat.ncols())?;
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if theta.iter().chain(sigma_mat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("belief has non-finite entries".into()));
        }
        if (&sigma_mat - sigma_mat.transpose()).amax() > 1e-9 * sigma_mat.amax().max(1.0) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        if !is_positive_semidefinite(&sigma_mat) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            theta,
            sigma_mat,
            noise_var,
            n,
        })
    }

    /// `θ = 0`, `Σ = prior_var · I`.
    pub fn diffuse(dim: usize, prior_var: f64, noise_var: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim) * prior_var,
            noise_var,
            0,
        )
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `xᵀ Σ x` for a regressor of matching length.
    pub fn variance_along(&self, x: &FeatureVector) -> Result<f64> {
        spd_quadratic_form(&self.sigma_mat, x.as_vector())
    }
}

/// Posterior mean of the log-lifetime at `dp`: `x(z, v)ᵀ θ`.
pub fn mean_log_life(state: &PosteriorState, dp: &DesignPoint) -> Result<f64> {
    let x = feature_map(dp);
    check_dim(state.dim(), x.len())?;
    Ok(x.as_vector().dot(&state.theta))
}

/// The finite experimental region: K material settings, M lab stress
/// settings and the field stress `v*` at which materials are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet")]
pub struct CandidateSet {
    pub materials: Vec<Vec<f64>>,
    pub stresses: Vec<Vec<f64>>,
    pub target_stress: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCandidateSet {
    materials: Vec<Vec<f64>>,
    stresses: Vec<Vec<f64>>,
    target_stress: Vec<f64>,
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = Error;

    fn try_from(raw: RawCandidateSet) -> Result<Self> {
        CandidateSet::new(raw.materials, raw.stresses, raw.target_stress)
    }
}

fn has_duplicates(rows: &[Vec<f64>]) -> bool {
    rows.iter()
        .enumerate()
        .any(|(i, a)| rows[..i].iter().any(|b| a == b))
}

impl CandidateSet {
    pub fn new(
        materials: Vec<Vec<f64>>,
        stresses: Vec<Vec<f64>>,
        target_stress: Vec<f64>,
    ) -> Result<Self> {
        if materials.is_empty() {
            return Err(Error::Config(
                "materials: at least one material is required".into(),
            ));
        }
        if stresses.is_empty() {
            return Err(Error::Config(
                "stresses: at least one stress setting is required".into(),
            ));
        }
        let p = materials[0].len();
        let d = target_stress.len();
        if p == 0 {
            return Err(Error::Config(
                "materials: feature vectors must be non-empty".into(),
            ));
        }
        if d == 0 {
            return Err(Error::Config("target_stress: must be non-empty".into()));
        }
        if materials.iter().any(|z| z.len() != p) {
            return Err(Error::Config(format!(
                "materials: all vectors must have length {p}"
            )));
        }
        if stresses.iter().any(|v| v.len() != d) {
            return Err(Error::Config(format!(
                "stresses: all vectors must have the target_stress length {d}"
            )));
        }
        let all = materials.iter().chain(stresses.iter()).flatten();
        if all.chain(target_stress.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Config("candidate values must be finite".into()));
        }
        if has_duplicates(&materials) {
            return Err(Error::Config("materials: vectors must be distinct".into()));
        }
        if has_duplicates(&stresses) {
            return Err(Error::Config("stresses: vectors must be distinct".into()));
        }
        Ok(Self {
            materials,
            stresses,
            target_stress,
        })
    }

    pub fn k(&self) -> usize {
        self.materials.len()
    }

    pub fn m(&self) -> usize {
        self.stresses.len()
    }

    pub fn p(&self) -> usize {
        self.materials[0].len()
    }

    pub fn d(&self) -> usize {
        self.target_stress.len()
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.p(), self.d())
    }

    pub fn design(&self, z_index: usize, v_index: usize) -> DesignPoint {
        DesignPoint {
            z: self.materials[z_index].clone(),
            v: self.stresses[v_index].clone(),
        }
    }

    /// Material `k` at the target stress.
    pub fn target_design(&self, k: usize) -> DesignPoint {
        DesignPoint {
            z: self.materials[k].clone(),
            v: self.target_stress.clone(),
        }
    }

    /// Locates a design on the grid, if it is one.
    pub fn index_of(&self, dp: &DesignPoint) -> Option<(usize, usize)> {
        let zi = self.materials.iter().position(|z| *z == dp.z)?;
        let vi = self.stresses.iter().position(|v| *v == dp.v)?;
        Some((zi, vi))
    }
}
