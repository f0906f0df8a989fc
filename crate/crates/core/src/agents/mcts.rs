use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;

use super::{AgentError, Environment, MctsConfig, MAX_ACTIONS};
use crate::scalar::Real;

/// Longest tree descent before a rollout is forced.
const MAX_TREE_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug)]
struct Edge<R> {
    n: u32,
    reward: R,
    child: u64,
    terminal: bool,
}

#[derive(Clone, Debug)]
struct Node<R> {
    n: u32,
    /// Mean discounted return observed from this state.
    value: R,
    edges: [Option<Edge<R>>; MAX_ACTIONS],
}

impl<R: Real> Node<R> {
    fn new() -> Self {
        Self { n: 0, value: R::zero(), edges: [None; MAX_ACTIONS] }
    }
}

/// MCTS over a transposition table keyed by state hash.
///
/// Selection scores an edge by its reward plus the discounted value of the
/// child state, so statistics gathered through any path into a state are
/// shared. Rollouts end with a knowledge-based estimate `base^completion`.
#[derive(Clone, Debug)]
pub struct Mcts<R: Real> {
    table: HashMap<u64, Node<R>>,
    pub cfg: MctsConfig<R>,
    pub gamma: R,
    pub bonus_base: R,
}

impl<R: Real> Mcts<R> {
    pub fn new(gamma: R, bonus_base: R, cfg: MctsConfig<R>) -> Self {
        Self { table: HashMap::new(), cfg, gamma, bonus_base }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn clear(&mut self) {
        self.table.clear();
    }

    /// Visit count stored for a state.
    pub fn visits(&self, key: u64) -> u32 {
        self.table.get(&key).map_or(0, |n| n.n)
    }

    /// Visit counts of the root edges.
    pub fn root_visits(&self, key: u64) -> Vec<u32> {
        match self.table.get(&key) {
            Some(n) => n.edges.iter().map(|e| e.map_or(0, |e| e.n)).collect(),
            None => vec![0; MAX_ACTIONS],
        }
    }

    fn child_value(&self, e: &Edge<R>) -> R {
        if e.terminal {
            return R::zero();
        }
        self.table.get(&e.child).map_or(R::zero(), |c| c.value)
    }

    fn select(&self, node: &Node<R>, n_actions: usize) -> usize {
        if let Some(a) = (0..n_actions).find(|&a| node.edges[a].is_none()) {
            return a;
        }
        let ln = R::from_f64_lossy((node.n.max(1) as f64).ln());
        let mut best = 0;
        let mut best_score = R::neg_infinity();
        for a in 0..n_actions {
            let e = node.edges[a].as_ref().expect("all edges tried");
            let q = e.reward + self.gamma * self.child_value(e);
            let explore = self.cfg.cp * (ln / R::from_f64_lossy(e.n.max(1) as f64)).sqrt();
            let score = q + explore;
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        best
    }

    fn rollout<E: Environment<R = R>, G: Rng + ?Sized>(&self, env: &mut E, rng: &mut G) -> R {
        let n = env.num_actions();
        let mut ret = R::zero();
        let mut disc = R::one();
        for _ in 0..self.cfg.rollout_depth {
            let (reward, terminal) = env.step(rng.gen_range(0..n));
            ret = ret + disc * reward;
            disc = disc * self.gamma;
            if terminal {
                return ret;
            }
        }
        ret + disc * self.bonus_base.powf(env.completion())
    }

    fn iterate<E: Environment<R = R>, G: Rng + ?Sized>(&mut self, root: &E, rng: &mut G) {
        let n = root.num_actions();
        let mut sim = root.clone();
        let mut path: Vec<(u64, usize, R)> = Vec::new();
        let mut leaf: Option<u64> = None;
        let mut tail = R::zero();
        loop {
            let key = sim.key();
            let Some(node) = self.table.get(&key) else {
                self.table.insert(key, Node::new());
                leaf = Some(key);
                tail = self.rollout(&mut sim, rng);
                break;
            };
            if path.len() >= MAX_TREE_DEPTH {
                tail = self.rollout(&mut sim, rng);
                break;
            }
            let a = self.select(node, n);
            let (reward, terminal) = sim.step(a);
            let child = sim.key();
            let node = self.table.get_mut(&key).expect("present");
            let e = node.edges[a].get_or_insert(Edge { n: 0, reward, child, terminal });
            e.reward = reward;
            e.child = child;
            e.terminal = terminal;
            path.push((key, a, reward));
            if terminal {
                break;
            }
        }
        let mut g = tail;
        if let Some(k) = leaf {
            let node = self.table.get_mut(&k).expect("inserted");
            node.n += 1;
            node.value = node.value + (g - node.value) / R::from_f64_lossy(node.n as f64);
        }
        for &(key, a, reward) in path.iter().rev() {
            g = reward + self.gamma * g;
            let node = self.table.get_mut(&key).expect("on path");
            node.n += 1;
            node.value = node.value + (g - node.value) / R::from_f64_lossy(node.n as f64);
            if let Some(e) = node.edges[a].as_mut() {
                e.n += 1;
            }
        }
    }

    /// Runs the search from `env` and returns the most visited root action.
    pub fn decide<E: Environment<R = R>, G: Rng + ?Sized>(&mut self, env: &E, rng: &mut G) -> Result<usize, AgentError> {
        let n = env.num_actions();
        if n == 0 {
            return Err(AgentError::NoActions);
        }
        if n == 1 {
            return Ok(0);
        }
        if self.table.len() > self.cfg.max_states {
            self.table.clear();
        }
        match self.cfg.time_budget_ms {
            Some(ms) => {
                let until = Instant::now() + Duration::from_millis(ms);
                while Instant::now() < until {
                    self.iterate(env, rng);
                }
            }
            None => {
                for _ in 0..self.cfg.iterations {
                    self.iterate(env, rng);
                }
            }
        }
        let visits = self.root_visits(env.key());
        let mut best = 0;
        for a in 1..n {
            if visits[a] > visits[best] {
                best = a;
            }
        }
        Ok(best)
    }
}
