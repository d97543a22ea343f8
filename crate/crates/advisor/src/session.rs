use alt_planner_core::acquisition::ranking;
use alt_planner_core::policy::{decide_best, Decision, GridCell, PolicyKind, PolicyState};
use alt_planner_core::update::absorb;
use alt_planner_core::{DesignPoint, Observation, PosteriorState};
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::error::ApiError;

/// A state change of a session. The log of these is the source of truth;
/// the in-memory record is a fold over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        config: Box<SessionConfig>,
    },
    Recommended {
        cell: GridCell,
        design: DesignPoint,
        ei_value: Option<f64>,
    },
    Observed {
        observation: Observation,
    },
    Decided {
        decision: Decision,
    },
    /// The outstanding run was abandoned; no belief update.
    Voided {
        cell: GridCell,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub cell: GridCell,
    pub design: DesignPoint,
    pub ei_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub material_index: usize,
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub best: bool,
}

/// Everything known about one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub belief: PosteriorState,
    /// History followed by every observed run.
    pub data: Vec<Observation>,
    pub policy: PolicyState,
    pub outstanding: Option<Recommendation>,
    pub decision: Option<Decision>,
    pub events: Vec<LoggedEvent>,
}

fn replay_error(seq: u64, msg: impl std::fmt::Display) -> ApiError {
    ApiError::Unprocessable(format!("event {seq}: {msg}"))
}

impl Session {
    /// Rebuilds a session from its log.
    pub fn replay(id: &str, events: Vec<LoggedEvent>) -> Result<Self, ApiError> {
        let mut iter = events.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| ApiError::Unprocessable("empty event log".into()))?;
        let Event::Created { config } = &first.event else {
            return Err(replay_error(
                first.seq,
                "log must start with a created event",
            ));
        };
        let mut session =
            Self::from_config(id, (**config).clone()).map_err(|e| replay_error(first.seq, e))?;
        session.events.push(first);
        for ev in iter {
            session.apply(ev)?;
        }
        Ok(session)
    }

    fn from_config(id: &str, config: SessionConfig) -> Result<Self, ApiError> {
        let belief = config.initial_belief()?;
        let policy = PolicyState::new(
            config.policy,
            &config.candidates,
            config.budget.unwrap_or(0),
            config.seed,
        );
        Ok(Self {
            id: id.to_string(),
            data: config.history.clone(),
            config,
            belief,
            policy,
            outstanding: None,
            decision: None,
            events: Vec::new(),
        })
    }

    /// Folds one event into the record. Events that contradict the current
    /// state are rejected.
    pub fn apply(&mut self, ev: LoggedEvent) -> Result<(), ApiError> {
        let expected = self.events.len() as u64;
        if ev.seq != expected {
            return Err(replay_error(
                ev.seq,
                format!("expected sequence number {expected}"),
            ));
        }
        match &ev.event {
            Event::Created { .. } => return Err(replay_error(ev.seq, "duplicate created event")),
            Event::Recommended {
                cell,
                design,
                ei_value,
            } => {
                if self.outstanding.is_some() {
                    return Err(replay_error(
                        ev.seq,
                        "a recommendation is already outstanding",
                    ));
                }
                if cell.z_index >= self.config.candidates.k()
                    || cell.v_index >= self.config.candidates.m()
                {
                    return Err(replay_error(ev.seq, "cell outside the candidate grid"));
                }
                if self.policy.kind == PolicyKind::FactorialRandomized {
                    self.policy.cursor += 1;
                }
                self.outstanding = Some(Recommendation {
                    cell: *cell,
                    design: design.clone(),
                    ei_value: *ei_value,
                });
            }
            Event::Observed { observation } => {
                if self.outstanding.take().is_none() {
                    return Err(replay_error(ev.seq, "observation without a recommendation"));
                }
                self.belief = absorb(&self.belief, observation, self.config.update_form)?;
                self.data.push(observation.clone());
            }
            Event::Decided { decision } => {
                if decision.best_index >= self.config.candidates.k() {
                    return Err(replay_error(ev.seq, "decision outside the material list"));
                }
                self.decision = Some(*decision);
            }
            Event::Voided { .. } => {
                if self.outstanding.take().is_none() {
                    return Err(replay_error(ev.seq, "nothing to void"));
                }
                // the abandoned cell goes back into the schedule
                if self.policy.kind == PolicyKind::FactorialRandomized {
                    self.policy.cursor -= 1;
                }
            }
        }
        self.events.push(ev);
        Ok(())
    }

    pub fn created(id: &str, config: SessionConfig, timestamp_ms: u64) -> Result<Self, ApiError> {
        let mut session = Self::from_config(id, config.clone())?;
        session.events.push(LoggedEvent {
            seq: 0,
            timestamp_ms,
            event: Event::Created {
                config: Box::new(config),
            },
        });
        Ok(session)
    }

    pub fn next_event(&self, event: Event, timestamp_ms: u64) -> LoggedEvent {
        LoggedEvent {
            seq: self.events.len() as u64,
            timestamp_ms,
            event,
        }
    }

    /// The run the policy would recommend next.
    pub fn propose(&self) -> Result<Event, ApiError> {
        let mut policy = self.policy.clone();
        let choice = policy
            .next_design(&self.belief, &self.config.candidates)
            .map_err(|e| match e {
                alt_planner_core::Error::ScheduleExhausted(n) => {
                    ApiError::Conflict(format!("the planned budget of {n} runs is used up"))
                }
                other => other.into(),
            })?;
        Ok(Event::Recommended {
            cell: choice.cell,
            design: choice.design,
            ei_value: choice.ei_value,
        })
    }

    /// Builds the observation for the outstanding run.
    pub fn observation(
        &self,
        lifetime: Option<f64>,
        tau: Option<f64>,
    ) -> Result<Observation, ApiError> {
        let rec = self
            .outstanding
            .as_ref()
            .ok_or_else(|| ApiError::Conflict("no outstanding recommendation".into()))?;
        let tau = tau.or(self.config.default_tau).ok_or_else(|| {
            ApiError::Unprocessable("tau: required (the session has no default)".into())
        })?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ApiError::Unprocessable(format!(
                "tau: must be positive, got {tau}"
            )));
        }
        match lifetime {
            None => Ok(Observation::censored(rec.design.clone(), tau.ln())?),
            Some(t) if !(t > 0.0 && t.is_finite()) => {
                Err(ApiError::Unprocessable(format!("lifetime: must be positive, got {t}")))
            }
            Some(t) if t > tau => Err(ApiError::Unprocessable(format!(
                "lifetime: a failure at {t} is after the end of the test at {tau}; report it as censored"
            ))),
            Some(t) => Ok(Observation::failure(rec.design.clone(), t.ln(), tau.ln())?),
        }
    }

    pub fn decide(&self) -> Result<Decision, ApiError> {
        Ok(decide_best(
            self.config.track,
            &self.belief,
            &self.data,
            &self.config.candidates,
            self.config.noise_var,
        )?)
    }

    /// Best index from the last decision, or from the belief before any.
    pub fn best_index(&self) -> Result<usize, ApiError> {
        match self.decision {
            Some(d) => Ok(d.best_index),
            None => Ok(self.decide()?.best_index),
        }
    }

    pub fn ranking(&self) -> Result<Vec<RankRow>, ApiError> {
        let best = self.best_index()?;
        Ok(ranking(&self.belief, &self.config.candidates)?
            .into_iter()
            .map(|r| RankRow {
                label: self.config.material_labels[r.material_index].clone(),
                best: r.material_index == best,
                material_index: r.material_index,
                mean: r.mean,
                sd: r.sd,
            })
            .collect())
    }
}
