use serde::{Deserialize, Serialize};

use super::{decode_actions, encode_actions, step, Action, GameDescription, GameState, Interaction, Status};

pub const TRAJECTORY_VERSION: u32 = 1;

/// One recorded run, stored as a line of JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub version: u32,
    pub game: String,
    pub level: u32,
    #[serde(default)]
    pub tester: String,
    #[serde(with = "action_string")]
    pub actions: Vec<Action>,
}

pub mod action_string {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &[Action], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode_actions(a))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Action>, D::Error> {
        let s = String::deserialize(d)?;
        decode_actions(&s).ok_or_else(|| serde::de::Error::custom("action tokens must be in UDLRXN"))
    }
}

impl Trajectory {
    pub fn new(game: impl Into<String>, level: u32, tester: impl Into<String>, actions: Vec<Action>) -> Self {
        Self { version: TRAJECTORY_VERSION, game: game.into(), level, tester: tester.into(), actions }
    }

    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<Trajectory>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    /// Initial state followed by the state after each applied action.
    pub states: Vec<GameState>,
    /// Interactions emitted per applied action.
    pub log: Vec<Vec<Interaction>>,
    /// Set when actions remained after the game ended or an action was illegal.
    pub truncated: bool,
}

impl Replay {
    pub fn final_state(&self) -> &GameState {
        self.states.last().expect("replay holds the initial state")
    }

    pub fn interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.log.iter().flatten()
    }
}

pub fn replay(desc: &GameDescription, initial: &GameState, actions: &[Action]) -> Replay {
    let mut states = Vec::with_capacity(actions.len() + 1);
    let mut log = Vec::with_capacity(actions.len());
    let mut cur = initial.clone();
    states.push(cur.clone());
    let mut truncated = false;
    for &a in actions {
        if cur.status != Status::Running {
            truncated = true;
            break;
        }
        match step(desc, &mut cur, a) {
            Ok(out) => {
                log.push(out.interactions);
                states.push(cur.clone());
            }
            Err(_) => {
                truncated = true;
                break;
            }
        }
    }
    Replay { states, log, truncated }
}
