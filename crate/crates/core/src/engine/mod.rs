//! Grid engine for the supported VGDL subset.
//!
//! A description is parsed once into a [`GameDescription`]; levels become
//! [`GameState`] values that are advanced with [`step`]. Every contact made by a
//! moving sprite during a tick is reported as an [`Interaction`], whether or not
//! any rule fires for the pair.

mod description;
mod level;
mod step;
mod trajectory;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use description::{parse_description, Effect, GameDescription, Rule, SpriteDecl, SpriteId, SpriteKind, Termination};
pub use level::{parse_level, Avatar, Cell, GameState, CELL_CAPACITY};
pub use step::{step, FiredRule, StepOutcome};
pub use trajectory::{action_string, replay, Replay, Trajectory, TRAJECTORY_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("step after terminal status {0:?}")]
    Terminal(Status),
    #[error("Use is not available on this level")]
    UseUnavailable,
}

/// Grid position, x to the right and y downwards from the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, d: Dir) -> Self {
        let (dx, dy) = d.delta();
        Self { x: self.x + dx, y: self.y + dy }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::Up => (0, -1),
            Dir::Down => (0, 1),
            Dir::Left => (-1, 0),
            Dir::Right => (1, 0),
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Dir::Up => '↑',
            Dir::Down => '↓',
            Dir::Left => '←',
            Dir::Right => '→',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Use,
    Nil,
}

impl Action {
    pub const ALL: [Action; 6] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Use, Action::Nil];

    pub fn token(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
            Action::Use => 'X',
            Action::Nil => 'N',
        }
    }

    pub fn from_token(c: char) -> Option<Self> {
        Some(match c {
            'U' => Action::Up,
            'D' => Action::Down,
            'L' => Action::Left,
            'R' => Action::Right,
            'X' => Action::Use,
            'N' => Action::Nil,
            _ => return None,
        })
    }

    pub fn dir(self) -> Option<Dir> {
        match self {
            Action::Up => Some(Dir::Up),
            Action::Down => Some(Dir::Down),
            Action::Left => Some(Dir::Left),
            Action::Right => Some(Dir::Right),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn encode_actions(actions: &[Action]) -> String {
    actions.iter().map(|a| a.token()).collect()
}

pub fn decode_actions(s: &str) -> Option<Vec<Action>> {
    s.chars().filter(|c| !c.is_whitespace()).map(Action::from_token).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Win,
    Lose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionType {
    Move,
    Use,
}

/// Who performed the movement behind an interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mover {
    Avatar,
    Other,
}

/// One contact between two sprites during a tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub eta0: SpriteId,
    pub eta1: SpriteId,
    pub pos: Pos,
    pub dir: Dir,
    pub kind: InteractionType,
    pub avatar_state: SpriteId,
    pub mover: Mover,
}

impl Interaction {
    pub fn describe(&self, desc: &GameDescription) -> String {
        format!(
            "<{},{},{},{:?},{},{}>",
            desc.name(self.eta0),
            desc.name(self.eta1),
            self.pos,
            self.kind,
            self.dir.arrow(),
            desc.name(self.avatar_state)
        )
    }
}

/// Deterministic 64-bit mixer used for state hashing.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
