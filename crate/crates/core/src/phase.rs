use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The nine protocol phases, in the only order they may be run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
}

/// Which of the two skills a phase teaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillRole {
    Train,
    Transfer,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::P1,
        Phase::P2,
        Phase::P3,
        Phase::P4,
        Phase::P5,
        Phase::P6,
        Phase::P7,
        Phase::P8,
        Phase::P9,
    ];

    pub const TRAINING: [Phase; 5] = [Phase::P3, Phase::P4, Phase::P5, Phase::P6, Phase::P7];

    /// Zero-based position in the protocol.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn next(self) -> Option<Phase> {
        Phase::from_index(self.index() + 1)
    }

    pub fn is_training(self) -> bool {
        matches!(self, Phase::P3 | Phase::P4 | Phase::P5 | Phase::P6 | Phase::P7)
    }

    pub fn is_test(self) -> bool {
        !self.is_training()
    }

    pub fn skill_role(self) -> SkillRole {
        match self {
            Phase::P2 | Phase::P8 => SkillRole::Transfer,
            _ => SkillRole::Train,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index() + 1)
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('P')
            .or_else(|| s.strip_prefix('p'))
            .ok_or_else(|| Error::Parse(format!("bad phase id {s:?}")))?;
        digits
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_sub(1))
            .and_then(Phase::from_index)
            .ok_or_else(|| Error::Parse(format!("bad phase id {s:?}")))
    }
}
