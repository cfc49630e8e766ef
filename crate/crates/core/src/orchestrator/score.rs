use serde::{Deserialize, Serialize};

use crate::instruction::Instruction;
use crate::sim::{RestRegion, WorldOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreReason {
    WrongObject,
    NotGrasped,
    WrongPlate,
    MissedPlate,
    Success,
}

impl ScoreReason {
    pub fn value(&self) -> f64 {
        match self {
            ScoreReason::WrongObject => 0.0,
            ScoreReason::NotGrasped => 0.25,
            ScoreReason::WrongPlate => 0.5,
            ScoreReason::MissedPlate => 0.75,
            ScoreReason::Success => 1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreReason::WrongObject => "wrong_object",
            ScoreReason::NotGrasped => "not_grasped",
            ScoreReason::WrongPlate => "wrong_plate",
            ScoreReason::MissedPlate => "missed_plate",
            ScoreReason::Success => "success",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub reason: ScoreReason,
}

impl From<ScoreReason> for Score {
    fn from(reason: ScoreReason) -> Self {
        Score { value: reason.value(), reason }
    }
}

pub fn score_episode(outcome: &WorldOutcome, instruction: &Instruction) -> Score {
    let reason = if outcome.nearest_at_grasp_entry != Some(instruction.object) {
        ScoreReason::WrongObject
    } else if !outcome.target_attached_ever {
        ScoreReason::NotGrasped
    } else {
        match outcome.target_region {
            RestRegion::Plate(c) if c == instruction.plate => ScoreReason::Success,
            RestRegion::Plate(_) => ScoreReason::WrongPlate,
            RestRegion::Table | RestRegion::Floor | RestRegion::Held => ScoreReason::MissedPlate,
        }
    };
    reason.into()
}
