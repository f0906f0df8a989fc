//! Tester agents that play goal sequences.
//!
//! Both agents work on an [`Environment`]: a copyable tabular MDP whose state
//! is the game state paired with the interaction state. [`GoalEnv`] adapts a
//! game and one goal to that interface.

mod mcts;
mod run;
mod sarsa;

pub use mcts::*;
pub use run::*;
pub use sarsa::*;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{mix64, step, Action, GameDescription, GameState, Interaction, Status};
use crate::interaction::{FeatureError, FeatureSet, InteractionState};
use crate::scalar::{r, Real};
use crate::scenario::Goal;

pub const MAX_ACTIONS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", default)]
pub struct SarsaConfig<R = f64> {
    pub beta: R,
    pub lambda: R,
    pub alpha: R,
    /// Episodes without completion improvement before training stops.
    pub patience: usize,
    /// Episodes played after the goal is first met, looking for a better rollout.
    pub polish: usize,
    pub max_episodes: usize,
    pub max_states: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", default)]
pub struct MctsConfig<R = f64> {
    pub cp: R,
    pub rollout_depth: usize,
    pub iterations: usize,
    /// Wall-clock budget per decision in milliseconds; overrides `iterations`.
    pub time_budget_ms: Option<u64>,
    pub max_states: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", default)]
pub struct AgentConfig<R = f64> {
    pub gamma: R,
    pub sarsa: SarsaConfig<R>,
    pub mcts: MctsConfig<R>,
    pub criterion_threshold: R,
    pub bonus_base: R,
    pub unmatched_weight: R,
    pub dampening: R,
    pub lengths: Vec<usize>,
    pub stop_on_goal_failure: bool,
    pub allow_nil: bool,
    pub seed: u64,
}

impl<R: Real> Default for SarsaConfig<R> {
    fn default() -> Self {
        Self {
            beta: r(1.0),
            lambda: r(0.8),
            alpha: r(0.03),
            patience: 50,
            polish: 50,
            max_episodes: 20_000,
            max_states: 4_000_000,
        }
    }
}

impl<R: Real> Default for MctsConfig<R> {
    fn default() -> Self {
        Self { cp: r(3.0), rollout_depth: 8, iterations: 600, time_budget_ms: None, max_states: 4_000_000 }
    }
}

impl<R: Real> Default for AgentConfig<R> {
    fn default() -> Self {
        Self {
            gamma: r(0.95),
            sarsa: SarsaConfig::default(),
            mcts: MctsConfig::default(),
            criterion_threshold: r(0.01),
            bonus_base: r(10.0),
            unmatched_weight: r(-1.0),
            dampening: r(0.1),
            lengths: vec![50, 100, 150, 200, 250, 300],
            stop_on_goal_failure: true,
            allow_nil: false,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("state table full: {states} states after {episodes} episodes")]
    Capacity { states: usize, episodes: usize },
    #[error("no legal actions")]
    NoActions,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Copyable episodic MDP with integer actions.
pub trait Environment: Clone {
    type R: Real;
    fn key(&self) -> u64;
    fn num_actions(&self) -> usize;
    /// Applies action `a`; returns the reward and whether the episode ended.
    fn step(&mut self, a: usize) -> (Self::R, bool);
    /// Progress in `[0, 1]`.
    fn completion(&self) -> Self::R;
    fn fulfilled(&self) -> bool;
}

/// Samples from `P(a) ∝ exp(β·q[a])`.
pub fn boltzmann_select<R: Real, G: Rng + ?Sized>(q: &[R], beta: R, rng: &mut G) -> usize {
    let p = boltzmann_probs(q, beta);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    greedy_index(q)
}

pub fn boltzmann_probs<R: Real>(q: &[R], beta: R) -> Vec<R> {
    let m = q.iter().copied().fold(R::neg_infinity(), R::max);
    let w: Vec<R> = q.iter().map(|&x| ((x - m) * beta).exp()).collect();
    let z: R = w.iter().copied().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// First index of the maximum.
pub fn greedy_index<R: Real>(q: &[R]) -> usize {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    best
}

/// A game and one goal seen as an MDP.
#[derive(Clone, Debug)]
pub struct GoalEnv<'a, R: Real> {
    pub desc: &'a GameDescription,
    pub state: GameState,
    pub istate: InteractionState,
    pub last: Vec<Interaction>,
    features: FeatureSet<R>,
    criteria: Vec<R>,
    census: Vec<R>,
    done: Vec<bool>,
    actions: Vec<Action>,
    cfg: &'a AgentConfig<R>,
}

impl<'a, R: Real> GoalEnv<'a, R> {
    /// `census` is the level whose sprite counts define the criteria denominators.
    pub fn new(
        desc: &'a GameDescription,
        state: GameState,
        census: &GameState,
        goal: &Goal<R>,
        cfg: &'a AgentConfig<R>,
    ) -> Result<Self, AgentError> {
        let features = FeatureSet::compile(desc, goal.features())?;
        let criteria: Vec<R> = goal.entries.iter().map(|e| e.criterion).collect();
        let census_counts = goal
            .entries
            .iter()
            .map(|e| {
                let n = desc.id(&e.feature.key.eta1).map_or(0, |id| census.count(desc, id));
                R::from_f64_lossy(n.max(1) as f64)
            })
            .collect();
        let mut actions = vec![Action::Up, Action::Down, Action::Left, Action::Right];
        if state.use_enabled {
            actions.push(Action::Use);
        }
        if cfg.allow_nil {
            actions.push(Action::Nil);
        }
        let istate = InteractionState::new(state.width, state.height);
        let mut env = Self {
            desc,
            state,
            istate,
            last: Vec::new(),
            features,
            criteria,
            census: census_counts,
            done: vec![false; goal.entries.len()],
            actions,
            cfg,
        };
        env.refresh();
        Ok(env)
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, i: usize) -> Action {
        self.actions[i]
    }

    /// Per-entry completion in `[0, 1]`.
    pub fn completions(&self) -> Vec<R> {
        (0..self.criteria.len()).map(|i| self.entry_completion(i)).collect()
    }

    fn entry_completion(&self, i: usize) -> R {
        let c = self.criteria[i];
        if c <= R::zero() {
            return R::one();
        }
        let f = &self.features.features[i];
        let count = R::from_f64_lossy(self.istate.count_feature(i, f) as f64);
        (count * r(100.0) / (self.census[i] * c)).min(R::one())
    }

    /// Dampens the weight of entries whose criterion was just met.
    /// Entries without a criterion count as met and keep their weight.
    fn refresh(&mut self) {
        let tol = R::one() - self.cfg.criterion_threshold;
        for i in 0..self.done.len() {
            if !self.done[i] && self.entry_completion(i) >= tol {
                self.done[i] = true;
                if self.criteria[i] <= R::zero() {
                    continue;
                }
                let w = self.features.features[i].weight();
                self.features.features[i].weight = Some(w * self.cfg.dampening);
            }
        }
    }
}

impl<'a, R: Real> Environment for GoalEnv<'a, R> {
    type R = R;

    fn key(&self) -> u64 {
        mix64(self.state.board_hash() ^ mix64(self.istate.hash().wrapping_add(0x9e37_79b9_7f4a_7c15)))
    }

    fn num_actions(&self) -> usize {
        self.actions.len()
    }

    fn step(&mut self, a: usize) -> (R, bool) {
        if self.state.status != Status::Running || self.fulfilled() {
            return (R::zero(), true);
        }
        let out = match step(self.desc, &mut self.state, self.actions[a]) {
            Ok(o) => o,
            Err(_) => return (R::zero(), true),
        };
        let mut reward = self.istate.step_reward(&out.interactions, &self.features, self.cfg.unmatched_weight);
        if self.state.avatar.alive && !self.state.avatar_in_grid() {
            reward = reward + self.cfg.unmatched_weight;
        }
        self.last = out.interactions;
        self.refresh();
        let fulfilled = self.fulfilled();
        if fulfilled {
            reward = reward + self.cfg.bonus_base.powf(self.completion());
        }
        (reward, fulfilled || self.state.status != Status::Running)
    }

    fn completion(&self) -> R {
        (0..self.criteria.len()).map(|i| self.entry_completion(i)).fold(R::one(), |a, b| a * b)
    }

    fn fulfilled(&self) -> bool {
        self.done.iter().all(|&d| d)
    }
}
