//! Session records and their event log.
//!
//! A session is stored as a JSON Lines file, one [`SessionEvent`] per line.
//! The first line is always `created`; folding the events in order with
//! [`SessionRecord::apply`] rebuilds the record and re-checks every protocol
//! rule, so a log that folds cleanly is a valid session.
//!
//! ```text
//! {"event":"created","schema_version":1,"session_id":"…","group":"guided",…}
//! {"event":"reward_submitted","phase":"P1","index":0,"reward":-12.5,"at_ms":…}
//! …
//! {"event":"phase_completed","phase":"P1","result":{…}}
//! …
//! {"event":"completed","at_ms":…}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Group, PhaseResult, ProtocolSettings};
use crate::phase::Phase;
use crate::teaching::TEACHING_DIMENSION;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// When a guided trainee sees the ideal reward of a keyframe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealMode {
    /// In the response to the submission.
    #[default]
    AfterCommit,
    /// In the keyframe payload, before submitting.
    Live,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    Abandoned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub index: usize,
    pub reward: f64,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: Phase,
    pub submissions: Vec<Submission>,
    /// Present only for phases in which guidance was shown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal_rewards: Option<Vec<f64>>,
    pub result: PhaseResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub group: Group,
    pub created_at_ms: u64,
    pub settings: ProtocolSettings,
    #[serde(default)]
    pub reveal: RevealMode,
    pub status: SessionStatus,
    /// Completed phases, in protocol order.
    pub phases: Vec<PhaseEntry>,
    /// Submissions of the phase in progress.
    #[serde(default)]
    pub pending: Vec<Submission>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        schema_version: u32,
        session_id: String,
        group: Group,
        created_at_ms: u64,
        settings: ProtocolSettings,
        #[serde(default)]
        reveal: RevealMode,
    },
    RewardSubmitted {
        phase: Phase,
        index: usize,
        reward: f64,
        at_ms: u64,
    },
    PhaseCompleted {
        phase: Phase,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ideal_rewards: Option<Vec<f64>>,
        result: PhaseResult,
    },
    Completed {
        at_ms: u64,
    },
    Abandoned {
        at_ms: u64,
    },
}

impl SessionRecord {
    pub fn new(session_id: String, group: Group, created_at_ms: u64, settings: ProtocolSettings) -> Self {
        SessionRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            session_id,
            group,
            created_at_ms,
            settings,
            reveal: RevealMode::default(),
            status: SessionStatus::Active,
            phases: Vec::new(),
            pending: Vec::new(),
        }
    }

    /// The phase awaiting rewards, if the session is still running.
    pub fn current_phase(&self) -> Option<Phase> {
        match self.status {
            SessionStatus::Active => Phase::from_index(self.phases.len()),
            _ => None,
        }
    }

    pub fn completed_phases(&self) -> Vec<Phase> {
        self.phases.iter().map(|e| e.phase).collect()
    }

    pub fn entry(&self, phase: Phase) -> Option<&PhaseEntry> {
        self.phases.iter().find(|e| e.phase == phase)
    }

    fn creation_event(&self) -> SessionEvent {
        SessionEvent::Created {
            schema_version: self.schema_version,
            session_id: self.session_id.clone(),
            group: self.group,
            created_at_ms: self.created_at_ms,
            settings: self.settings.clone(),
            reveal: self.reveal,
        }
    }

    /// Applies one event after checking it against the protocol rules.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<()> {
        match event {
            SessionEvent::Created { .. } => Err(Error::Parse("duplicate 'created' event".into())),
            SessionEvent::RewardSubmitted {
                phase,
                index,
                reward,
                at_ms,
            } => {
                let current = self.expect_active(*phase)?;
                if *index != self.pending.len() || *index >= TEACHING_DIMENSION {
                    return Err(Error::InvalidParameter(format!(
                        "{current}: expected demo index {}, got {index}",
                        self.pending.len()
                    )));
                }
                if !reward.is_finite() || !self.settings.slider.contains(*reward) {
                    return Err(Error::InvalidParameter(format!(
                        "reward {reward} outside the slider range [{}, {}]",
                        self.settings.slider.min, self.settings.slider.max
                    )));
                }
                self.pending.push(Submission {
                    index: *index,
                    reward: *reward,
                    at_ms: *at_ms,
                });
                Ok(())
            }
            SessionEvent::PhaseCompleted {
                phase,
                ideal_rewards,
                result,
            } => {
                let current = self.expect_active(*phase)?;
                if self.pending.len() != TEACHING_DIMENSION {
                    return Err(Error::InvalidParameter(format!(
                        "{current} completed with {} of {TEACHING_DIMENSION} rewards",
                        self.pending.len()
                    )));
                }
                if result.phase != current {
                    return Err(Error::InvalidParameter(format!(
                        "result for {} logged as {current}",
                        result.phase
                    )));
                }
                let rewards: Vec<f64> = self.pending.iter().map(|s| s.reward).collect();
                if rewards != result.submitted {
                    return Err(Error::InvalidParameter(format!(
                        "{current} result does not match the submitted rewards"
                    )));
                }
                if ideal_rewards.is_some() != self.group.sees_guidance(current) {
                    return Err(Error::InvalidParameter(format!(
                        "ideal rewards may be stored only for guided training phases ({current})"
                    )));
                }
                self.phases.push(PhaseEntry {
                    phase: current,
                    submissions: std::mem::take(&mut self.pending),
                    ideal_rewards: ideal_rewards.clone(),
                    result: result.clone(),
                });
                Ok(())
            }
            SessionEvent::Completed { .. } => {
                if self.status != SessionStatus::Active || self.phases.len() != Phase::ALL.len() {
                    return Err(Error::InvalidParameter(format!(
                        "cannot complete a session with {} of 9 phases",
                        self.phases.len()
                    )));
                }
                self.status = SessionStatus::Completed;
                Ok(())
            }
            SessionEvent::Abandoned { .. } => {
                if self.status != SessionStatus::Active {
                    return Err(Error::InvalidParameter("only active sessions can be abandoned".into()));
                }
                self.status = SessionStatus::Abandoned;
                Ok(())
            }
        }
    }

    fn expect_active(&self, phase: Phase) -> Result<Phase> {
        let current = self
            .current_phase()
            .ok_or_else(|| Error::InvalidParameter(format!("session is {:?}", self.status).to_lowercase()))?;
        if phase != current {
            return Err(Error::InvalidParameter(format!("expected phase {current}, got {phase}")));
        }
        Ok(current)
    }

    /// Rebuilds a record from its event log.
    pub fn fold<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Self> {
        let mut events = events.into_iter();
        let mut record = match events.next() {
            Some(SessionEvent::Created {
                schema_version,
                session_id,
                group,
                created_at_ms,
                settings,
                reveal,
            }) => {
                if *schema_version != RECORD_SCHEMA_VERSION {
                    return Err(Error::Parse(format!(
                        "unsupported record schema version {schema_version}"
                    )));
                }
                let mut r = SessionRecord::new(session_id.clone(), *group, *created_at_ms, settings.clone());
                r.reveal = *reveal;
                r
            }
            Some(_) => return Err(Error::Parse("event log must start with 'created'".into())),
            None => return Err(Error::Parse("empty event log".into())),
        };
        for (i, e) in events.enumerate() {
            record.apply(e).map_err(|err| err.context(format!("event {}", i + 2)))?;
        }
        Ok(record)
    }

    /// The event log that folds back into this record.
    pub fn to_events(&self) -> Vec<SessionEvent> {
        let mut out = vec![self.creation_event()];
        for entry in &self.phases {
            for s in &entry.submissions {
                out.push(SessionEvent::RewardSubmitted {
                    phase: entry.phase,
                    index: s.index,
                    reward: s.reward,
                    at_ms: s.at_ms,
                });
            }
            out.push(SessionEvent::PhaseCompleted {
                phase: entry.phase,
                ideal_rewards: entry.ideal_rewards.clone(),
                result: entry.result.clone(),
            });
        }
        if let Some(phase) = Phase::from_index(self.phases.len()) {
            for s in &self.pending {
                out.push(SessionEvent::RewardSubmitted {
                    phase,
                    index: s.index,
                    reward: s.reward,
                    at_ms: s.at_ms,
                });
            }
        }
        match self.status {
            SessionStatus::Active => {}
            SessionStatus::Completed => out.push(SessionEvent::Completed { at_ms: 0 }),
            SessionStatus::Abandoned => out.push(SessionEvent::Abandoned { at_ms: 0 }),
        }
        out
    }
}

/// Writes one event as a single JSON line.
pub fn write_event<W: Write>(mut w: W, event: &SessionEvent) -> Result<()> {
    let mut line = serde_json::to_vec(event)?;
    line.push(b'\n');
    w.write_all(&line)?;
    Ok(())
}

/// Reads a JSON Lines event log. A final line without a newline is treated
/// as a torn write and dropped; malformed complete lines are errors.
pub fn read_events<R: BufRead>(mut r: R) -> Result<Vec<SessionEvent>> {
    let mut out = Vec::new();
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {n}: {e}")))?);
    }
    Ok(out)
}
