use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::StudyConfig;
use crate::acquisition::argmax_first;
use crate::model::{feature_map, CandidateSet, DesignPoint, Observation};

/// Source of simulated test outcomes. Implement this to drive the planner
/// with a simulator other than the linear log-normal model.
pub trait TruthSimulator: Send + Sync {
    /// Runs one unit at `design` until failure or the end of the test.
    fn simulate(&self, design: &DesignPoint, rng: &mut dyn RngCore) -> Observation;

    /// Index of the truly best material at the field stress.
    fn best_index(&self) -> usize;
}

/// Log-normal lifetimes with known coefficients and a constant test length.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub beta: DVector<f64>,
    pub noise_sd: f64,
    pub best_index: usize,
    pub log_tau: f64,
}

impl SyntheticTruth {
    pub fn mean(&self, design: &DesignPoint) -> f64 {
        feature_map(design).as_vector().dot(&self.beta)
    }
}

impl TruthSimulator for SyntheticTruth {
    fn simulate(&self, design: &DesignPoint, rng: &mut dyn RngCore) -> Observation {
        simulate_observation(self, design, rng)
    }

    fn best_index(&self) -> usize {
        self.best_index
    }
}

/// `y* = x(dp)ᵀβ + σG`; a failure when `y* ≤ log τ`, otherwise censored.
pub fn simulate_observation(
    truth: &SyntheticTruth,
    dp: &DesignPoint,
    rng: &mut dyn RngCore,
) -> Observation {
    let g: f64 = rng.sample(StandardNormal);
    let y = truth.mean(dp) + truth.noise_sd * g;
    if y <= truth.log_tau {
        Observation {
            design: dp.clone(),
            log_tau: truth.log_tau,
            delta: true,
            y,
        }
    } else {
        Observation {
            design: dp.clone(),
            log_tau: truth.log_tau,
            delta: false,
            y: truth.log_tau,
        }
    }
}

const COEF_LOW: f64 = -1.0 / 30.0;
const MAX_REDRAWS: usize = 1000;

/// Draws the baseline material's intercept and stress slopes from
/// `U(−1/30, 0)`, and for each further level adds another independent
/// `U(−1/30, 0)` vector on top of the baseline. With dummy coding the added
/// vectors are exactly the material main effects and interactions.
///
/// Level 0 is the best material whenever the field stress is nonnegative;
/// the draw is repeated in the (otherwise impossible) case it is not.
pub fn gen_truth(config: &StudyConfig, rep_seed: u64) -> SyntheticTruth {
    let cands = config.candidates().expect("validated config");
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let mut truth = draw_truth(config, &cands, &mut rng);
    for _ in 0..MAX_REDRAWS {
        if truth.best_index == 0 {
            break;
        }
        truth = draw_truth(config, &cands, &mut rng);
    }
    truth
}

fn draw_truth(config: &StudyConfig, cands: &CandidateSet, rng: &mut ChaCha8Rng) -> SyntheticTruth {
    let (d, p) = (config.d, config.k - 1);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..=d).map(|_| rng.random_range(COEF_LOW..0.0)).collect()
    };
    let base = draw(rng);
    let offsets: Vec<Vec<f64>> = (0..p).map(|_| draw(rng)).collect();

    // layout (1, v, z, z ⊗ v)
    let mut beta = Vec::with_capacity((p + 1) * (d + 1));
    beta.extend_from_slice(&base);
    beta.extend(offsets.iter().map(|o| o[0]));
    for o in &offsets {
        beta.extend_from_slice(&o[1..]);
    }
    let beta = DVector::from_vec(beta);

    let means: Vec<f64> = (0..cands.k())
        .map(|k| feature_map(&cands.target_design(k)).as_vector().dot(&beta))
        .collect();
    SyntheticTruth {
        beta,
        noise_sd: config.noise_sd,
        best_index: argmax_first(&means),
        log_tau: config.log_tau(),
    }
}
