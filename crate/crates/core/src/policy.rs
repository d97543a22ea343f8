//! Allocation policies and decision rules.
//!
//! * `FactorialRandomized`: the full factorial grid replicated up to the run
//!   budget and played in a seeded random order.
//! * `SeqDOptimal`: one-step Bayesian D-optimality. Adding `x` multiplies
//!   `det Σ⁻¹` by `1 + xᵀΣx/σ²`, so the run with the largest predictive
//!   variance `xᵀΣx` is chosen. This linear-Gaussian criterion is our reading
//!   of sequential Bayesian D-optimal design; it ignores censoring.
//! * `SeqEI`: the expected-improvement maximizer from [`crate::acquisition`].
//!
//! Design selection never depends on the decision track; the track only
//! changes how the best material is declared.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{argmax_first, current_best, select_next};
use crate::error::{Error, Result};
use crate::model::{feature_map, CandidateSet, DesignPoint, Observation, PosteriorState};
use crate::numerics::spd_quadratic_form;
use crate::update::mle_refit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FactorialRandomized,
    SeqDOptimal,
    #[serde(rename = "seq_ei")]
    SeqEI,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::FactorialRandomized,
        PolicyKind::SeqDOptimal,
        PolicyKind::SeqEI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::FactorialRandomized => "factorial_randomized",
            PolicyKind::SeqDOptimal => "seq_d_optimal",
            PolicyKind::SeqEI => "seq_ei",
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DecisionTrack {
    /// Best material from the moment-matched belief.
    #[default]
    Approx,
    /// Best material from a censored maximum-likelihood refit on all data.
    ExactRefit,
}

impl DecisionTrack {
    pub const ALL: [DecisionTrack; 2] = [DecisionTrack::Approx, DecisionTrack::ExactRefit];

    pub fn label(self) -> &'static str {
        match self {
            DecisionTrack::Approx => "approx",
            DecisionTrack::ExactRefit => "exact_refit",
        }
    }
}

/// A cell of the materials × stresses grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub z_index: usize,
    pub v_index: usize,
}

impl GridCell {
    pub fn design(self, cands: &CandidateSet) -> DesignPoint {
        cands.design(self.z_index, self.v_index)
    }
}

/// The run chosen by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub cell: GridCell,
    pub design: DesignPoint,
    /// Acquisition value when the policy is `SeqEI`.
    pub ei_value: Option<f64>,
}

/// The full factorial replicated to `n_total` runs, then shuffled with `seed`.
///
/// Cells are visited z-major and repeated cyclically, so replicate counts
/// differ by at most one across cells.
pub fn build_factorial_schedule(cands: &CandidateSet, n_total: usize, seed: u64) -> Vec<GridCell> {
    let cells: Vec<GridCell> = (0..cands.k())
        .flat_map(|z_index| (0..cands.m()).map(move |v_index| GridCell { z_index, v_index }))
        .collect();
    let mut schedule: Vec<GridCell> = cells.iter().copied().cycle().take(n_total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    schedule.shuffle(&mut rng);
    schedule
}

/// Per-run policy state. Only the factorial policy carries a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub kind: PolicyKind,
    pub schedule: Option<Vec<GridCell>>,
    pub cursor: usize,
    pub rng_seed: u64,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, cands: &CandidateSet, n_total: usize, rng_seed: u64) -> Self {
        let schedule = (kind == PolicyKind::FactorialRandomized)
            .then(|| build_factorial_schedule(cands, n_total, rng_seed));
        Self {
            kind,
            schedule,
            cursor: 0,
            rng_seed,
        }
    }

    /// Picks the next run and advances the factorial cursor.
    pub fn next_design(&mut self, belief: &PosteriorState, cands: &CandidateSet) -> Result<Choice> {
        match self.kind {
            PolicyKind::FactorialRandomized => {
                let schedule = self
                    .schedule
                    .as_ref()
                    .ok_or_else(|| Error::Config("factorial policy has no schedule".into()))?;
                let cell = *schedule
                    .get(self.cursor)
                    .ok_or(Error::ScheduleExhausted(schedule.len()))?;
                self.cursor += 1;
                Ok(Choice {
                    cell,
                    design: cell.design(cands),
                    ei_value: None,
                })
            }
            PolicyKind::SeqDOptimal => {
                let cell = d_optimal_cell(belief, cands)?;
                Ok(Choice {
                    cell,
                    design: cell.design(cands),
                    ei_value: None,
                })
            }
            PolicyKind::SeqEI => {
                let best = select_next(belief, cands)?;
                let cell = GridCell {
                    z_index: best.z_index,
                    v_index: best.v_index,
                };
                Ok(Choice {
                    cell,
                    design: cell.design(cands),
                    ei_value: Some(best.value),
                })
            }
        }
    }
}

/// `argmax xᵀΣx` over the grid, ties to the smallest cell.
pub fn d_optimal_cell(belief: &PosteriorState, cands: &CandidateSet) -> Result<GridCell> {
    let mut best: Option<(f64, GridCell)> = None;
    for z_index in 0..cands.k() {
        for v_index in 0..cands.m() {
            let x = feature_map(&cands.design(z_index, v_index));
            let q = spd_quadratic_form(&belief.sigma_mat, x.as_vector())?;
            if best.is_none_or(|(bq, _)| q > bq) {
                best = Some((q, GridCell { z_index, v_index }));
            }
        }
    }
    Ok(best.expect("candidate grid is non-empty").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub best_index: usize,
    /// The exact refit failed and the approximate belief decided instead.
    pub fell_back: bool,
}

/// Declares the best material at the field stress.
pub fn decide_best(
    track: DecisionTrack,
    belief: &PosteriorState,
    data: &[Observation],
    cands: &CandidateSet,
    noise_var: f64,
) -> Result<Decision> {
    let approx = || -> Result<Decision> {
        Ok(Decision {
            best_index: current_best(belief, cands)?,
            fell_back: false,
        })
    };
    match track {
        DecisionTrack::Approx => approx(),
        DecisionTrack::ExactRefit => {
            if data.is_empty() {
                return Ok(Decision {
                    fell_back: true,
                    ..approx()?
                });
            }
            match mle_refit(data, noise_var, &belief.theta) {
                Ok(fit) if fit.converged => {
                    let means: Vec<f64> = (0..cands.k())
                        .map(|k| {
                            feature_map(&cands.target_design(k))
                                .as_vector()
                                .dot(&fit.beta_hat)
                        })
                        .collect();
                    Ok(Decision {
                        best_index: argmax_first(&means),
                        fell_back: false,
                    })
                }
                Ok(_) | Err(Error::NonIdentifiable(_)) => Ok(Decision {
                    fell_back: true,
                    ..approx()?
                }),
                Err(e) => Err(e),
            }
        }
    }
}
