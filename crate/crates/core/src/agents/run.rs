use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentError, Environment, GoalEnv, Mcts, Rollout, Sarsa};
use crate::engine::{mix64, Action, GameDescription, GameState, Status};
use crate::scalar::Real;
use crate::scenario::Goal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Sarsa,
    Mcts,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Sarsa => "sarsa",
            AgentKind::Mcts => "mcts",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub index: usize,
    pub completion: f64,
    pub fulfilled: bool,
    pub steps: usize,
}

/// Actions an agent produced for a goal sequence, with per-goal outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSequence {
    #[serde(with = "crate::engine::action_string")]
    pub actions: Vec<Action>,
    pub goals: Vec<GoalReport>,
    /// Per-goal step cap that produced this run.
    pub length: usize,
}

impl TestSequence {
    /// Sum of goal completions; a fulfilled goal counts as one.
    pub fn score(&self) -> f64 {
        self.goals.iter().map(|g| if g.fulfilled { 1.0 } else { g.completion }).sum()
    }

    pub fn all_fulfilled(&self, total: usize) -> bool {
        self.goals.len() == total && self.goals.iter().all(|g| g.fulfilled)
    }
}

fn play_goal<'a, R: Real>(
    kind: AgentKind,
    env: &GoalEnv<'a, R>,
    len: usize,
    cfg: &AgentConfig<R>,
    rng: &mut ChaCha8Rng,
) -> Result<(Rollout<R>, GoalEnv<'a, R>), AgentError> {
    if env.fulfilled() {
        return Ok((Rollout { actions: Vec::new(), completion: env.completion(), fulfilled: true, ret: R::zero() }, env.clone()));
    }
    match kind {
        AgentKind::Sarsa => {
            let mut agent = Sarsa::new(cfg.gamma, cfg.sarsa.clone());
            let t = agent.train(env, len, rng)?;
            Ok((t.best, t.end))
        }
        AgentKind::Mcts => {
            let mut agent = Mcts::new(cfg.gamma, cfg.bonus_base, cfg.mcts.clone());
            let mut cur = env.clone();
            let mut actions = Vec::new();
            let mut ret = R::zero();
            for _ in 0..len {
                let a = agent.decide(&cur, rng)?;
                let (reward, terminal) = cur.step(a);
                ret = ret + reward;
                actions.push(a);
                if terminal {
                    break;
                }
            }
            Ok((Rollout { actions, completion: cur.completion(), fulfilled: cur.fulfilled(), ret }, cur))
        }
    }
}

/// Plays the goals in order with a fixed per-goal step cap.
pub fn run_at_length<R: Real>(
    kind: AgentKind,
    desc: &GameDescription,
    initial: &GameState,
    goals: &[Goal<R>],
    cfg: &AgentConfig<R>,
    len: usize,
) -> Result<TestSequence, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ mix64(len as u64));
    let mut state = initial.clone();
    let mut actions = Vec::new();
    let mut reports = Vec::new();
    for (index, goal) in goals.iter().enumerate() {
        let env = GoalEnv::new(desc, state.clone(), initial, goal, cfg)?;
        let (roll, end) = play_goal(kind, &env, len, cfg, &mut rng)?;
        actions.extend(roll.actions.iter().map(|&a| env.action(a)));
        reports.push(GoalReport {
            index,
            completion: roll.completion.to_f64_lossy(),
            fulfilled: roll.fulfilled,
            steps: roll.actions.len(),
        });
        state = end.state;
        if (!roll.fulfilled && cfg.stop_on_goal_failure) || state.status != Status::Running {
            break;
        }
    }
    Ok(TestSequence { actions, goals: reports, length: len })
}

/// Sweeps the configured game lengths and keeps the run with the highest
/// completion; the sweep stops early once every goal is fulfilled.
pub fn run_goal_sequence<R: Real>(
    kind: AgentKind,
    desc: &GameDescription,
    initial: &GameState,
    goals: &[Goal<R>],
    cfg: &AgentConfig<R>,
) -> Result<TestSequence, AgentError> {
    let mut best: Option<TestSequence> = None;
    for &len in &cfg.lengths {
        let run = run_at_length(kind, desc, initial, goals, cfg, len)?;
        let done = run.all_fulfilled(goals.len());
        if best.as_ref().map_or(true, |b| run.score() > b.score()) {
            best = Some(run);
        }
        if done {
            break;
        }
    }
    Ok(best.unwrap_or(TestSequence { actions: Vec::new(), goals: Vec::new(), length: 0 }))
}
