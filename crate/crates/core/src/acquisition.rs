//! Expected-improvement scoring.
//!
//! Running one more test at `(z, v)` moves the posterior mean of every
//! material at the field stress along a line in a single standard normal
//! `G`: `a_k + b_k G`. The score of the run is
//! `E[max_k (a_k + b_k G)] − max_k a_k`, computed exactly from the upper
//! envelope of those lines.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::model::{feature_map, CandidateSet, DesignPoint, FeatureVector, PosteriorState};
use crate::numerics::expected_positive_part;

/// Predictive variances below this are treated as a collapsed belief.
pub const MIN_PREDICTIVE_VAR: f64 = 1e-12;

/// Posterior mean of material `material_index` at the field stress as an
/// affine function of the standardized next observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgLine {
    pub intercept: f64,
    pub slope: f64,
    pub material_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiScore {
    pub value: f64,
    pub z_index: usize,
    pub v_index: usize,
}

impl EiScore {
    /// Higher value first, then the lexicographically smaller grid cell.
    fn beats(&self, other: &EiScore) -> bool {
        self.value > other.value
            || (self.value == other.value
                && (self.z_index, self.v_index) < (other.z_index, other.v_index))
    }
}

/// Mean and variance of the next log-lifetime at regressor `x`.
pub fn predictive_params(state: &PosteriorState, x: &FeatureVector) -> Result<(f64, f64)> {
    check_dim(state.dim(), x.len())?;
    let xv = x.as_vector();
    Ok((
        xv.dot(&state.theta),
        state.noise_var + xv.dot(&(&state.sigma_mat * xv)),
    ))
}

pub fn kg_lines(
    state: &PosteriorState,
    probe: &DesignPoint,
    cands: &CandidateSet,
) -> Result<Vec<KgLine>> {
    let xp = feature_map(probe);
    check_dim(state.dim(), xp.len())?;
    check_dim(state.dim(), cands.feature_dim())?;
    let gain = &state.sigma_mat * xp.as_vector();
    let var = state.noise_var + xp.as_vector().dot(&gain);
    let inv_sd = if var < MIN_PREDICTIVE_VAR {
        0.0
    } else {
        1.0 / var.sqrt()
    };
    Ok((0..cands.k())
        .map(|k| {
            let xt = feature_map(&cands.target_design(k));
            KgLine {
                intercept: xt.as_vector().dot(&state.theta),
                slope: xt.as_vector().dot(&gain) * inv_sd,
                material_index: k,
            }
        })
        .collect())
}

/// `E[max_k (a_k + b_k G)] − max_k a_k` for standard normal `G`.
///
/// Lines are sorted by slope, equal slopes keep the larger intercept, and
/// lines that never reach the upper envelope are dropped. With envelope
/// lines `1..m` and breakpoints `c_i` between neighbours the result is
/// `Σ (b_{i+1} − b_i)·g(−|c_i|)`, `g(u) = uΦ(u) + φ(u)`.
pub fn expected_max_gain(lines: &[KgLine]) -> f64 {
    if lines.len() < 2 {
        return 0.0;
    }
    let mut sorted: Vec<(f64, f64)> = lines.iter().map(|l| (l.slope, l.intercept)).collect();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    // (slope, intercept, breakpoint where the line takes over the envelope)
    let mut envelope: Vec<(f64, f64, f64)> = Vec::with_capacity(sorted.len());
    for (i, &(b, a)) in sorted.iter().enumerate() {
        if sorted.get(i + 1).is_some_and(|next| next.0 == b) {
            // a later line has the same slope and a larger intercept
            continue;
        }
        loop {
            match envelope.last() {
                None => {
                    envelope.push((b, a, f64::NEG_INFINITY));
                    break;
                }
                Some(&(tb, ta, tc)) => {
                    let c = (ta - a) / (b - tb);
                    if c <= tc {
                        envelope.pop();
                    } else {
                        envelope.push((b, a, c));
                        break;
                    }
                }
            }
        }
    }

    envelope
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * expected_positive_part(-w[1].2.abs()))
        .sum::<f64>()
        .max(0.0)
}

/// Expected gain in the best posterior mean at the field stress from one run
/// at `probe`.
pub fn ei_score(state: &PosteriorState, probe: &DesignPoint, cands: &CandidateSet) -> Result<f64> {
    Ok(expected_max_gain(&kg_lines(state, probe, cands)?))
}

/// Scores every cell of materials × stresses, z-major.
pub fn score_table(state: &PosteriorState, cands: &CandidateSet) -> Result<Vec<EiScore>> {
    let mut out = Vec::with_capacity(cands.k() * cands.m());
    for z_index in 0..cands.k() {
        for v_index in 0..cands.m() {
            let value = ei_score(state, &cands.design(z_index, v_index), cands)?;
            out.push(EiScore {
                value,
                z_index,
                v_index,
            });
        }
    }
    Ok(out)
}

/// The grid cell with the largest score; ties go to the smallest
/// `(z_index, v_index)`.
pub fn select_next(state: &PosteriorState, cands: &CandidateSet) -> Result<EiScore> {
    let table = score_table(state, cands)?;
    Ok(best_of(&table))
}

fn best_of(table: &[EiScore]) -> EiScore {
    let mut best = table[0];
    for s in &table[1..] {
        if s.beats(&best) {
            best = *s;
        }
    }
    best
}

/// Posterior mean log-lifetime of each material at the field stress.
pub fn target_means(state: &PosteriorState, cands: &CandidateSet) -> Result<Vec<f64>> {
    check_dim(state.dim(), cands.feature_dim())?;
    Ok((0..cands.k())
        .map(|k| {
            feature_map(&cands.target_design(k))
                .as_vector()
                .dot(&state.theta)
        })
        .collect())
}

/// Index of the largest value, first one on ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// The material with the best posterior mean at the field stress.
pub fn current_best(state: &PosteriorState, cands: &CandidateSet) -> Result<usize> {
    Ok(argmax_first(&target_means(state, cands)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub material_index: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Materials ordered by posterior mean at the field stress, best first;
/// equal means keep index order.
pub fn ranking(state: &PosteriorState, cands: &CandidateSet) -> Result<Vec<RankEntry>> {
    check_dim(state.dim(), cands.feature_dim())?;
    let mut rows: Vec<RankEntry> = (0..cands.k())
        .map(|k| {
            let x = feature_map(&cands.target_design(k));
            let xv = x.as_vector();
            RankEntry {
                material_index: k,
                mean: xv.dot(&state.theta),
                sd: xv.dot(&(&state.sigma_mat * xv)).max(0.0).sqrt(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then(a.material_index.cmp(&b.material_index))
    });
    Ok(rows)
}
