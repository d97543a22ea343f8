use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, StudyConfig};
use super::truth::{gen_truth, TruthSimulator};
use crate::error::Result;
use crate::model::{CandidateSet, Observation, PosteriorState};
use crate::policy::{decide_best, DecisionTrack, GridCell, PolicyKind, PolicyState};
use crate::update::{absorb, UpdateForm};

/// Independent random streams of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    /// Coefficients of the synthetic truth.
    pub truth: u64,
    /// Outcomes of the prior runs.
    pub prior: u64,
    /// Outcomes of the sequential runs and the factorial shuffle.
    pub sequential: u64,
}

const TRUTH_STREAM: u64 = 0x7472_7574_6800_0001;
const PRIOR_STREAM: u64 = 0x7072_696f_7200_0002;
const SEQ_STREAM: u64 = 0x7365_7175_656e_0003;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

impl ReplicationSeeds {
    /// Truth and prior data depend only on the replication, so every method
    /// faces the same problem instance. The sequential stream also depends on
    /// the policy but not on the decision track: both tracks of a policy see
    /// the same runs and differ only in what they declare best.
    pub fn derive(seed: u64, rep_index: usize, policy: PolicyKind) -> Self {
        let rep = rep_index as u64;
        let policy_tag = PolicyKind::ALL.iter().position(|&p| p == policy).unwrap() as u64;
        Self {
            truth: mix(&[seed, rep, TRUTH_STREAM]),
            prior: mix(&[seed, rep, PRIOR_STREAM]),
            sequential: mix(&[seed, rep, SEQ_STREAM, policy_tag]),
        }
    }
}

/// The belief after the prior runs together with the runs themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFit {
    pub belief: PosteriorState,
    pub data: Vec<Observation>,
}

/// Runs `prior_points_per_material` units of every material, cycling through
/// the lab stresses, and absorbs them into a diffuse belief. The step counter
/// of the returned belief is reset to zero.
pub fn fit_prior(
    config: &StudyConfig,
    cands: &CandidateSet,
    truth: &dyn TruthSimulator,
    rng: &mut dyn RngCore,
) -> Result<PriorFit> {
    let mut belief =
        PosteriorState::diffuse(cands.feature_dim(), config.prior_var, config.noise_var())?;
    let mut data = Vec::with_capacity(cands.k() * config.prior_points_per_material);
    for k in 0..cands.k() {
        for i in 0..config.prior_points_per_material {
            let obs = truth.simulate(&cands.design(k, i % cands.m()), rng);
            belief = absorb(&belief, &obs, UpdateForm::Direct)?;
            data.push(obs);
        }
    }
    belief.n = 0;
    Ok(PriorFit { belief, data })
}

/// One row of a decision trace. Step 0 is the decision from the prior alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Material declared best after this step.
    pub chosen_index: usize,
    /// The exact refit failed and the approximate belief decided instead.
    pub fell_back: bool,
    /// Run allocated at this step; absent at step 0.
    pub cell: Option<GridCell>,
    pub censored: Option<bool>,
    pub ei_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub method: Method,
    pub replication: usize,
    pub truth_best: usize,
    /// `n_steps + 1` rows.
    pub steps: Vec<TraceStep>,
    pub prior_censored: usize,
    pub prior_runs: usize,
}

impl Trace {
    pub fn decisions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.chosen_index).collect()
    }

    pub fn censored_runs(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.censored == Some(true))
            .count()
    }

    pub fn fallbacks(&self) -> usize {
        self.steps.iter().filter(|s| s.fell_back).count()
    }
}

/// Synthetic replication: draw a truth, fit the prior, then allocate
/// `n_steps` runs one at a time.
pub fn run_replication(config: &StudyConfig, method: Method, rep_index: usize) -> Result<Trace> {
    let seeds = ReplicationSeeds::derive(config.seed, rep_index, method.policy);
    let truth = gen_truth(config, seeds.truth);
    run_with_truth(config, &truth, method, rep_index, seeds)
}

/// Same loop as [`run_replication`] against any simulator.
pub fn run_with_truth(
    config: &StudyConfig,
    truth: &dyn TruthSimulator,
    method: Method,
    rep_index: usize,
    seeds: ReplicationSeeds,
) -> Result<Trace> {
    let cands = config.candidates()?;
    let noise_var = config.noise_var();
    let mut prior_rng = ChaCha8Rng::seed_from_u64(seeds.prior);
    let PriorFit {
        mut belief,
        mut data,
    } = fit_prior(config, &cands, truth, &mut prior_rng)?;
    let prior_runs = data.len();
    let prior_censored = data.iter().filter(|o| o.is_censored()).count();

    let mut rng = ChaCha8Rng::seed_from_u64(seeds.sequential);
    let mut policy = PolicyState::new(method.policy, &cands, config.n_steps, seeds.sequential);

    let decision = decide_best(method.track, &belief, &data, &cands, noise_var)?;
    let mut last_exact = decision.best_index;
    let mut steps = Vec::with_capacity(config.n_steps + 1);
    steps.push(TraceStep {
        step: 0,
        chosen_index: decision.best_index,
        fell_back: decision.fell_back,
        cell: None,
        censored: None,
        ei_value: None,
    });

    for step in 1..=config.n_steps {
        let choice = policy.next_design(&belief, &cands)?;
        let obs = truth.simulate(&choice.design, &mut rng);
        belief = absorb(&belief, &obs, UpdateForm::Direct)?;
        let censored = obs.is_censored();
        data.push(obs);

        let refit_now = step % config.refit_every == 0 || step == config.n_steps;
        let (chosen_index, fell_back) = match method.track {
            DecisionTrack::ExactRefit if !refit_now => (last_exact, false),
            track => {
                let d = decide_best(track, &belief, &data, &cands, noise_var)?;
                last_exact = d.best_index;
                (d.best_index, d.fell_back)
            }
        };
        steps.push(TraceStep {
            step,
            chosen_index,
            fell_back,
            cell: Some(choice.cell),
            censored: Some(censored),
            ei_value: choice.ei_value,
        });
    }

    Ok(Trace {
        method,
        replication: rep_index,
        truth_best: truth.best_index(),
        steps,
        prior_censored,
        prior_runs,
    })
}
