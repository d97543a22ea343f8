use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CandidateSet;
use crate::policy::{DecisionTrack, PolicyKind};

/// Nominal size of the synthetic coefficients; the ratio
/// `SIGNAL_LEVEL / noise_sd` is reported as "signal/std".
pub const SIGNAL_LEVEL: f64 = 0.03;

/// A policy paired with a decision track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Method {
    pub policy: PolicyKind,
    pub track: DecisionTrack,
}

impl Method {
    pub fn all() -> Vec<Method> {
        PolicyKind::ALL
            .iter()
            .flat_map(|&policy| {
                DecisionTrack::ALL
                    .iter()
                    .map(move |&track| Method { policy, track })
            })
            .collect()
    }
}

/// A value given once for every stress factor or once per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerFactor<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T: Clone> PerFactor<T> {
    fn expand(&self, d: usize, field: &str) -> Result<Vec<T>> {
        match self {
            PerFactor::Shared(v) => Ok(vec![v.clone(); d]),
            PerFactor::Each(vs) if vs.len() == d => Ok(vs.clone()),
            PerFactor::Each(vs) => Err(Error::Config(format!(
                "{field}: expected {d} entries, found {}",
                vs.len()
            ))),
        }
    }
}

/// Parameters of a synthetic selection study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Number of material levels.
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "defaults::d")]
    pub d: usize,
    #[serde(default = "defaults::stress_levels")]
    pub stress_levels: PerFactor<Vec<f64>>,
    #[serde(default = "defaults::target_stress")]
    pub target_stress: PerFactor<f64>,
    pub noise_sd: f64,
    pub tau: f64,
    pub n_steps: usize,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    #[serde(default = "defaults::prior_points")]
    pub prior_points_per_material: usize,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    /// Variance of the diffuse belief the prior points are absorbed into.
    #[serde(default = "defaults::prior_var")]
    pub prior_var: f64,
    /// The exact track refits every this many steps and reuses its last
    /// decision in between.
    #[serde(default = "defaults::refit_every")]
    pub refit_every: usize,
}

mod defaults {
    use super::*;

    pub fn d() -> usize {
        3
    }
    pub fn stress_levels() -> PerFactor<Vec<f64>> {
        PerFactor::Shared(vec![0.5, 1.0])
    }
    pub fn target_stress() -> PerFactor<f64> {
        PerFactor::Shared(0.1)
    }
    pub fn replications() -> usize {
        100
    }
    pub fn prior_points() -> usize {
        20
    }
    pub fn prior_var() -> f64 {
        100.0
    }
    pub fn refit_every() -> usize {
        1
    }
}

impl StudyConfig {
    /// Defaults for everything except the four required settings.
    pub fn new(k: usize, noise_sd: f64, tau: f64, n_steps: usize) -> Self {
        Self {
            k,
            d: defaults::d(),
            stress_levels: defaults::stress_levels(),
            target_stress: defaults::target_stress(),
            noise_sd,
            tau,
            n_steps,
            replications: defaults::replications(),
            prior_points_per_material: defaults::prior_points(),
            methods: Method::all(),
            seed: 0,
            prior_var: defaults::prior_var(),
            refit_every: defaults::refit_every(),
        }
    }

    /// Reads a TOML document, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: StudyConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.k < 2 {
            return fail(format!(
                "K: need at least 2 material levels, got {}",
                self.k
            ));
        }
        if self.d < 1 {
            return fail("d: need at least one stress factor".into());
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return fail(format!("noise_sd: must be positive, got {}", self.noise_sd));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("tau: must be positive, got {}", self.tau));
        }
        if self.n_steps < 1 {
            return fail("n_steps: must be at least 1".into());
        }
        if self.replications < 1 {
            return fail("replications: must be at least 1".into());
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return fail(format!(
                "prior_var: must be positive, got {}",
                self.prior_var
            ));
        }
        if self.refit_every < 1 {
            return fail("refit_every: must be at least 1".into());
        }
        if self.methods.is_empty() {
            return fail("methods: at least one method is required".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return fail("methods: duplicate entries".into());
        }
        for (i, levels) in self
            .stress_levels
            .expand(self.d, "stress_levels")?
            .iter()
            .enumerate()
        {
            if levels.is_empty() {
                return fail(format!("stress_levels[{i}]: no levels"));
            }
            if levels.iter().any(|v| !v.is_finite()) {
                return fail(format!("stress_levels[{i}]: non-finite level"));
            }
        }
        self.candidates().map(|_| ())
    }

    pub fn signal_to_std(&self) -> f64 {
        SIGNAL_LEVEL / self.noise_sd
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    pub fn log_tau(&self) -> f64 {
        self.tau.ln()
    }

    /// Material `k` as K−1 dummy coordinates, level 0 the all-zero baseline.
    pub fn material_encoding(&self, k: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.k - 1];
        if k > 0 {
            z[k - 1] = 1.0;
        }
        z
    }

    /// Dummy-coded materials, the full factorial of lab stress levels (first
    /// factor slowest) and the field stress.
    pub fn candidates(&self) -> Result<CandidateSet> {
        let levels = self.stress_levels.expand(self.d, "stress_levels")?;
        let target = self.target_stress.expand(self.d, "target_stress")?;
        let mut stresses: Vec<Vec<f64>> = vec![vec![]];
        for factor in &levels {
            stresses = stresses
                .into_iter()
                .flat_map(|prefix| {
                    factor.iter().map(move |&lv| {
                        let mut v = prefix.clone();
                        v.push(lv);
                        v
                    })
                })
                .collect();
        }
        let materials = (0..self.k).map(|k| self.material_encoding(k)).collect();
        CandidateSet::new(materials, stresses, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_toml() {
        let cfg: StudyConfig =
            toml::from_str("K = 2\nnoise_sd = 0.1\ntau = 1.2\nn_steps = 50\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.d, 3);
        assert_eq!(cfg.replications, 100);
        assert_eq!(cfg.prior_points_per_material, 20);
        assert_eq!(cfg.methods.len(), 6);
        let c = cfg.candidates().unwrap();
        assert_eq!(c.k(), 2);
        assert_eq!(c.m(), 8);
        assert_eq!(c.stresses[0], vec![0.5, 0.5, 0.5]);
        assert_eq!(c.stresses[7], vec![1.0, 1.0, 1.0]);
        assert_eq!(c.target_stress, vec![0.1; 3]);
        assert_eq!(c.materials, vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn signal_to_std_labels() {
        assert!((StudyConfig::new(2, 0.2, 1.0, 1).signal_to_std() - 0.15).abs() < 1e-12);
        assert!((StudyConfig::new(2, 0.1, 1.0, 1).signal_to_std() - 0.3).abs() < 1e-12);
    }

    type Mutation = Box<dyn Fn(&mut StudyConfig)>;

    #[test]
    fn rejects_invalid() {
        let base = StudyConfig::new(2, 0.1, 1.2, 10);
        let cases: Vec<Mutation> = vec![
            Box::new(|c| c.k = 1),
            Box::new(|c| c.tau = 0.0),
            Box::new(|c| c.noise_sd = -1.0),
            Box::new(|c| c.n_steps = 0),
            Box::new(|c| c.replications = 0),
            Box::new(|c| c.methods.clear()),
            Box::new(|c| c.methods.push(c.methods[0])),
            Box::new(|c| c.stress_levels = PerFactor::Each(vec![vec![0.5]])),
            Box::new(|c| c.stress_levels = PerFactor::Shared(vec![0.5, 0.5])),
            Box::new(|c| c.target_stress = PerFactor::Each(vec![0.1, 0.1])),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "case {i}");
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: std::result::Result<StudyConfig, _> =
            toml::from_str("K = 2\nnoise_sd = 0.1\ntau = 1.2\nn_steps = 5\nbogus = 1\n");
        assert!(r.is_err());
    }

    #[test]
    fn methods_parse() {
        let cfg: StudyConfig = toml::from_str(
            "K = 2\nnoise_sd = 0.1\ntau = 1.2\nn_steps = 5\nmethods = [{ policy = \"seq_ei\", track = \"exact_refit\" }]\n",
        )
        .unwrap();
        assert_eq!(
            cfg.methods,
            vec![Method {
                policy: PolicyKind::SeqEI,
                track: DecisionTrack::ExactRefit
            }]
        );
    }
}
