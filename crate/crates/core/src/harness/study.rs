use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Method, StudyConfig};
use super::run::{run_replication, Trace};
use crate::error::{Error, Result};

/// Fraction of replications whose decision at each step equals `truth_best`.
pub fn estimate_pcs(decisions: &[Vec<usize>], truth_best: usize) -> Result<Vec<f64>> {
    let first = decisions
        .first()
        .ok_or_else(|| Error::InvalidInput("no traces to average".into()))?;
    if decisions.iter().any(|d| d.len() != first.len()) {
        return Err(Error::InvalidInput("traces differ in length".into()));
    }
    let r = decisions.len() as f64;
    Ok((0..first.len())
        .map(|step| decisions.iter().filter(|d| d[step] == truth_best).count() as f64 / r)
        .collect())
}

/// As [`estimate_pcs`], each trace scored against its own truth.
pub fn estimate_pcs_traces(traces: &[Trace]) -> Result<Vec<f64>> {
    let hits: Vec<Vec<usize>> = traces
        .iter()
        .map(|t| {
            t.steps
                .iter()
                .map(|s| usize::from(s.chosen_index == t.truth_best))
                .collect()
        })
        .collect();
    estimate_pcs(&hits, 1)
}

/// Binomial standard error of a PCS estimate over `r` replications.
pub fn pcs_stderr(pcs: f64, r: usize) -> f64 {
    (pcs * (1.0 - pcs) / r as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub pcs: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Censored fraction of the sequential runs.
    pub censoring_rate: f64,
    pub fallbacks: usize,
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub methods: Vec<MethodResult>,
    /// Censored fraction of the prior runs, pooled over replications.
    pub prior_censoring_rate: f64,
    pub wall_seconds: f64,
}

impl StudyResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Censored fraction over every run of every method, prior runs included.
    pub fn overall_censoring_rate(&self) -> f64 {
        let (mut censored, mut total) = (0usize, 0usize);
        for m in &self.methods {
            for t in &m.traces {
                censored += t.censored_runs() + t.prior_censored;
                total += t.steps.len() - 1 + t.prior_runs;
            }
        }
        if total == 0 {
            0.0
        } else {
            censored as f64 / total as f64
        }
    }
}

/// Runs every method × replication in parallel on the current rayon pool.
/// Results are gathered by index, so the outcome does not depend on
/// scheduling or on the order methods are listed in.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let start = Instant::now();
    let cells: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.replications).map(move |r| (m, r)))
        .collect();
    let traces: Vec<Trace> = cells
        .par_iter()
        .map(|&(m, r)| run_replication(config, m, r))
        .collect::<Result<_>>()?;

    let mut methods = Vec::with_capacity(config.methods.len());
    for (i, &method) in config.methods.iter().enumerate() {
        let traces = traces[i * config.replications..(i + 1) * config.replications].to_vec();
        let pcs = estimate_pcs_traces(&traces)?;
        let stderr = pcs
            .iter()
            .map(|&p| pcs_stderr(p, config.replications))
            .collect();
        let censored: usize = traces.iter().map(Trace::censored_runs).sum();
        let runs = traces.len() * config.n_steps;
        methods.push(MethodResult {
            method,
            pcs,
            stderr,
            censoring_rate: censored as f64 / runs as f64,
            fallbacks: traces.iter().map(Trace::fallbacks).sum(),
            traces,
        });
    }

    // every method sees the same prior runs, so the first one suffices
    let first = &methods[0].traces;
    let prior_runs: usize = first.iter().map(|t| t.prior_runs).sum();
    let prior_censored: usize = first.iter().map(|t| t.prior_censored).sum();
    let prior_censoring_rate = if prior_runs == 0 {
        0.0
    } else {
        prior_censored as f64 / prior_runs as f64
    };

    Ok(StudyResult {
        config: config.clone(),
        methods,
        prior_censoring_rate,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{DecisionTrack, PolicyKind};

    #[test]
    fn pcs_fixtures() {
        assert_eq!(
            estimate_pcs(&[vec![2, 2, 2], vec![2, 2, 2]], 2).unwrap(),
            vec![1.0; 3]
        );
        assert_eq!(
            estimate_pcs(&[vec![0, 0], vec![1, 1]], 0).unwrap(),
            vec![0.5, 0.5]
        );
        let planted = vec![
            vec![0, 1, 0, 0],
            vec![1, 1, 0, 0],
            vec![0, 0, 0, 1],
            vec![1, 0, 0, 0],
        ];
        // correct (0) per step: 2, 2, 4, 3 of 4
        assert_eq!(
            estimate_pcs(&planted, 0).unwrap(),
            vec![0.5, 0.5, 1.0, 0.75]
        );
        assert!(estimate_pcs(&[], 0).is_err());
        assert!(estimate_pcs(&[vec![0], vec![0, 1]], 0).is_err());
    }

    #[test]
    fn stderr_formula() {
        assert!((pcs_stderr(0.5, 100) - 0.05).abs() < 1e-15);
        assert_eq!(pcs_stderr(1.0, 100), 0.0);
    }

    #[test]
    fn single_cell_grid() {
        let mut cfg = StudyConfig::new(2, 0.1, 1.2, 1);
        cfg.replications = 1;
        cfg.methods = vec![Method {
            policy: PolicyKind::SeqEI,
            track: DecisionTrack::Approx,
        }];
        let res = run_study(&cfg).unwrap();
        assert_eq!(res.methods.len(), 1);
        assert_eq!(res.methods[0].traces.len(), 1);
        assert_eq!(res.methods[0].pcs.len(), 2);
        assert!(res.methods[0].pcs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn method_order_does_not_matter() {
        let mut cfg = StudyConfig::new(3, 0.1, 1.2, 4);
        cfg.replications = 3;
        let fwd = run_study(&cfg).unwrap();
        cfg.methods.reverse();
        let rev = run_study(&cfg).unwrap();
        for m in &fwd.methods {
            let other = rev.method(m.method).unwrap();
            assert_eq!(m.pcs, other.pcs);
            assert_eq!(m.traces, other.traces);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = StudyConfig::new(2, 0.1, 1.2, 1);
        cfg.tau = -1.0;
        assert!(matches!(run_study(&cfg), Err(Error::Config(_))));
    }
}
