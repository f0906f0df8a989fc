//! Model-based test oracle.
//!
//! Every executed tick is compared against declarative constraints and the
//! scenario graph. A run owns one [`Oracle`]; checking never mutates the game.

mod faults;
mod witness;

pub use faults::*;
pub use witness::*;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{GameDescription, GameState, Interaction, SpriteId, Status};
use crate::interaction::FeatureKey;
use crate::scenario::ScenarioGraph;

pub const CONSTRAINT_FILE_VERSION: u32 = 1;
/// Constraint id used for scenario-graph violations.
pub const SCENARIO: &str = "SCENARIO";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("constraint file: {0}")]
    Format(String),
    #[error("constraint `{0}` names unknown sprite `{1}`")]
    UnknownSprite(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// No instance of `sprite` shares a cell with any instance of `with`.
    NoOverlap { sprite: String, with: Vec<String> },
    InBounds { sprite: String },
    /// Sprite count, absolute or relative to the initial state, within `[min, max]`.
    Count {
        sprite: String,
        #[serde(default)]
        relative: bool,
        min: i64,
        max: i64,
    },
    /// The avatar may only die while touching one of `causes`.
    DiedWithCause { causes: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    #[serde(flatten)]
    pub kind: ConstraintKind,
    #[serde(default)]
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct ConstraintFile {
    version: u32,
    constraints: Vec<Constraint>,
}

pub fn parse_constraints(text: &str) -> Result<Vec<Constraint>, OracleError> {
    let f: ConstraintFile = toml::from_str(text).map_err(|e| OracleError::Format(e.to_string()))?;
    if f.version != CONSTRAINT_FILE_VERSION {
        return Err(OracleError::Format(format!("unsupported version {}", f.version)));
    }
    Ok(f.constraints)
}

pub fn constraints_to_toml(constraints: &[Constraint]) -> String {
    toml::to_string(&ConstraintFile { version: CONSTRAINT_FILE_VERSION, constraints: constraints.to_vec() })
        .expect("constraints serialize")
}

#[derive(Clone, Debug)]
enum Compiled {
    NoOverlap { sprite: SpriteId, with: Vec<SpriteId> },
    InBounds { sprite: SpriteId },
    Count { sprite: SpriteId, base: i64, min: i64, max: i64 },
    DiedWithCause { causes: Vec<SpriteId> },
}

/// One failed check.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub tick: u32,
    pub detail: String,
}

/// Position of a run in the scenario graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScenarioTracker {
    cursor: Option<usize>,
}

impl ScenarioTracker {
    /// Starts at the first initial node realized by `state`.
    pub fn new(graph: &ScenarioGraph, desc: &GameDescription, state: &GameState) -> Self {
        let cursor = graph.initial.iter().copied().find(|&n| graph.nodes[n].realized(desc, state));
        Self { cursor }
    }

    pub fn cursor(&self) -> Option<usize> {
        self.cursor
    }

    /// Advances on realized edges and reports transitions the graph does not allow.
    pub fn track(
        &mut self,
        graph: &ScenarioGraph,
        desc: &GameDescription,
        state: &GameState,
        interactions: &[Interaction],
    ) -> Option<String> {
        if state.status == Status::Lose {
            return None;
        }
        let Some(cur) = self.cursor else {
            // a lost cursor recovers silently once the run is back on the graph
            self.cursor = graph.nodes.iter().position(|n| n.realized(desc, state));
            return None;
        };
        let observed: Vec<FeatureKey> = interactions.iter().map(|z| FeatureKey::of(desc, z)).collect();
        let mut unrealized = None;
        for (to, edge) in graph.out_edges(cur) {
            if observed.iter().any(|k| k.matches_unordered(&edge.feature)) {
                if graph.nodes[to].realized(desc, state) {
                    self.cursor = Some(to);
                    return None;
                }
                unrealized.get_or_insert((to, edge.feature.clone()));
            }
        }
        if let Some((to, f)) = unrealized {
            let now = graph.nodes.iter().position(|n| n.realized(desc, state));
            self.cursor = now;
            return Some(format!(
                "{f} observed at `{}` but `{}` is not realized",
                graph.nodes[cur].id, graph.nodes[to].id
            ));
        }
        if graph.nodes[cur].realized(desc, state) {
            return None;
        }
        match graph.nodes.iter().position(|n| n.realized(desc, state)) {
            Some(n) => {
                self.cursor = Some(n);
                Some(format!("illegal transition `{}` -> `{}`", graph.nodes[cur].id, graph.nodes[n].id))
            }
            None => {
                self.cursor = None;
                Some(format!("no scenario node realized after `{}`", graph.nodes[cur].id))
            }
        }
    }
}

/// Per-run oracle: compiled constraints plus a scenario cursor.
#[derive(Clone, Debug)]
pub struct Oracle<'a> {
    desc: &'a GameDescription,
    graph: Option<&'a ScenarioGraph>,
    constraints: Vec<(String, Compiled)>,
    tracker: Option<ScenarioTracker>,
}

impl<'a> Oracle<'a> {
    pub fn new(
        desc: &'a GameDescription,
        constraints: &[Constraint],
        graph: Option<&'a ScenarioGraph>,
        initial: &GameState,
    ) -> Result<Self, OracleError> {
        let look = |c: &Constraint, name: &str| {
            desc.id(name).ok_or_else(|| OracleError::UnknownSprite(c.id.clone(), name.to_string()))
        };
        let mut compiled = Vec::with_capacity(constraints.len());
        for c in constraints {
            let k = match &c.kind {
                ConstraintKind::NoOverlap { sprite, with } => Compiled::NoOverlap {
                    sprite: look(c, sprite)?,
                    with: with.iter().map(|w| look(c, w)).collect::<Result<_, _>>()?,
                },
                ConstraintKind::InBounds { sprite } => Compiled::InBounds { sprite: look(c, sprite)? },
                ConstraintKind::Count { sprite, relative, min, max } => {
                    let id = look(c, sprite)?;
                    let base = if *relative { initial.count(desc, id) as i64 } else { 0 };
                    Compiled::Count { sprite: id, base, min: *min, max: *max }
                }
                ConstraintKind::DiedWithCause { causes } => {
                    Compiled::DiedWithCause { causes: causes.iter().map(|w| look(c, w)).collect::<Result<_, _>>()? }
                }
            };
            compiled.push((c.id.clone(), k));
        }
        let tracker = graph.map(|g| ScenarioTracker::new(g, desc, initial));
        Ok(Self { desc, graph, constraints: compiled, tracker })
    }

    pub fn tracker(&self) -> Option<&ScenarioTracker> {
        self.tracker.as_ref()
    }

    /// Checks one tick. `prev` is the state before the action, `state` after it.
    pub fn check_step(&mut self, prev: &GameState, state: &GameState, interactions: &[Interaction]) -> Vec<Violation> {
        let mut out = Vec::new();
        let tick = state.tick;
        for (id, c) in &self.constraints {
            if let Some(detail) = self.evaluate(c, prev, state, interactions) {
                out.push(Violation { constraint: id.clone(), tick, detail });
            }
        }
        if let (Some(g), Some(t)) = (self.graph, self.tracker.as_mut()) {
            if let Some(detail) = t.track(g, self.desc, state, interactions) {
                out.push(Violation { constraint: SCENARIO.to_string(), tick, detail });
            }
        }
        out
    }

    fn evaluate(&self, c: &Compiled, prev: &GameState, state: &GameState, zs: &[Interaction]) -> Option<String> {
        let desc = self.desc;
        match c {
            Compiled::NoOverlap { sprite, with } => {
                if desc.is_a(state.avatar.state, *sprite) || *sprite == desc.avatar_root() {
                    if !state.avatar.alive {
                        return None;
                    }
                    let cell = state.cell(state.avatar.pos);
                    let hit = cell.iter().find(|&&s| with.iter().any(|&w| desc.is_a(s, w)))?;
                    return Some(format!("avatar overlaps {} at {}", desc.name(*hit), state.avatar.pos));
                }
                for (p, cell) in state.cells() {
                    for (i, &s) in cell.iter().enumerate() {
                        if !desc.is_a(s, *sprite) {
                            continue;
                        }
                        let other = cell
                            .iter()
                            .enumerate()
                            .find(|&(j, &o)| j != i && with.iter().any(|&w| desc.is_a(o, w)));
                        if let Some((_, &o)) = other {
                            return Some(format!("{} overlaps {} at {p}", desc.name(s), desc.name(o)));
                        }
                    }
                }
                None
            }
            Compiled::InBounds { sprite } => {
                let is_avatar = *sprite == desc.avatar_root() || desc.is_a(state.avatar.state, *sprite);
                (is_avatar && state.avatar.alive && !state.avatar_in_grid())
                    .then(|| format!("avatar left the grid at {}", state.avatar.pos))
            }
            Compiled::Count { sprite, base, min, max } => {
                let d = state.count(desc, *sprite) as i64 - base;
                (d < *min || d > *max).then(|| format!("{} count off by {d}", desc.name(*sprite)))
            }
            Compiled::DiedWithCause { causes } => {
                if !(prev.avatar.alive && !state.avatar.alive) {
                    return None;
                }
                let root = desc.avatar_root();
                let caused = zs.iter().any(|z| {
                    let other = if z.eta0 == root {
                        z.eta1
                    } else if z.eta1 == root {
                        z.eta0
                    } else {
                        return false;
                    };
                    causes.iter().any(|&c| desc.is_a(other, c))
                });
                (!caused).then(|| {
                    let touched: BTreeSet<&str> = zs
                        .iter()
                        .filter(|z| z.eta0 == root || z.eta1 == root)
                        .map(|z| desc.name(if z.eta0 == root { z.eta1 } else { z.eta0 }))
                        .collect();
                    format!("avatar died touching {touched:?}")
                })
            }
        }
    }
}
