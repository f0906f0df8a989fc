use std::collections::HashMap;

use rand::Rng;

use super::{boltzmann_select, greedy_index, AgentError, Environment, SarsaConfig, MAX_ACTIONS};
use crate::scalar::Real;

/// One played episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<R> {
    pub actions: Vec<usize>,
    pub completion: R,
    pub fulfilled: bool,
    pub ret: R,
}

/// Result of training on one goal.
#[derive(Clone, Debug)]
pub struct Training<R, E> {
    pub best: Rollout<R>,
    pub end: E,
    pub episodes: usize,
}

/// Tabular Sarsa(λ) with replacing eligibility traces.
#[derive(Clone, Debug)]
pub struct Sarsa<R: Real> {
    q: HashMap<u64, [R; MAX_ACTIONS]>,
    pub cfg: SarsaConfig<R>,
    pub gamma: R,
}

impl<R: Real> Sarsa<R> {
    pub fn new(gamma: R, cfg: SarsaConfig<R>) -> Self {
        Self { q: HashMap::new(), cfg, gamma }
    }

    pub fn q(&self, key: u64) -> Option<&[R; MAX_ACTIONS]> {
        self.q.get(&key)
    }

    /// Number of visited states.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn row(&mut self, key: u64) -> &mut [R; MAX_ACTIONS] {
        self.q.entry(key).or_insert([R::zero(); MAX_ACTIONS])
    }

    /// Greedy action at the environment's current state, ties to the lowest index.
    pub fn greedy_action<E: Environment<R = R>>(&self, env: &E) -> usize {
        match self.q.get(&env.key()) {
            Some(row) => greedy_index(&row[..env.num_actions()]),
            None => 0,
        }
    }

    /// Plays one exploring episode of at most `len` steps and learns from it.
    pub fn episode<E: Environment<R = R>, G: Rng + ?Sized>(
        &mut self,
        start: &E,
        len: usize,
        rng: &mut G,
    ) -> Result<(Rollout<R>, E), AgentError> {
        let n = start.num_actions();
        if n == 0 {
            return Err(AgentError::NoActions);
        }
        let (alpha, beta, decay) = (self.cfg.alpha, self.cfg.beta, self.gamma * self.cfg.lambda);
        let mut env = start.clone();
        let mut traces: Vec<(u64, usize, R)> = Vec::new();
        let mut s = env.key();
        let mut a = boltzmann_select(&self.row(s)[..n], beta, rng);
        let mut actions = Vec::with_capacity(len);
        let mut ret = R::zero();
        let mut disc = R::one();
        for t in 0..len {
            let (reward, terminal) = env.step(a);
            actions.push(a);
            ret = ret + disc * reward;
            disc = disc * self.gamma;
            let s2 = env.key();
            let (a2, next) = if terminal {
                (0, R::zero())
            } else {
                let row = self.row(s2);
                let a2 = boltzmann_select(&row[..n], beta, rng);
                (a2, row[a2])
            };
            let delta = reward + self.gamma * next - self.row(s)[a];
            match traces.iter_mut().find(|e| e.0 == s && e.1 == a) {
                Some(e) => e.2 = R::one(),
                None => traces.push((s, a, R::one())),
            }
            let cutoff = R::from_f64_lossy(1e-4);
            for e in traces.iter_mut() {
                let row = self.q.get_mut(&e.0).expect("traced state is stored");
                row[e.1] = row[e.1] + alpha * delta * e.2;
                e.2 = e.2 * decay;
            }
            traces.retain(|e| e.2 > cutoff);
            if self.q.len() > self.cfg.max_states {
                return Err(AgentError::Capacity { states: self.q.len(), episodes: 0 });
            }
            if terminal || t + 1 == len {
                break;
            }
            s = s2;
            a = a2;
        }
        let rollout = Rollout { actions, completion: env.completion(), fulfilled: env.fulfilled(), ret };
        Ok((rollout, env))
    }

    /// Follows the greedy policy for at most `len` steps without learning.
    pub fn greedy<E: Environment<R = R>>(&self, start: &E, len: usize) -> (Rollout<R>, E) {
        let mut env = start.clone();
        let mut actions = Vec::new();
        let mut ret = R::zero();
        let mut disc = R::one();
        for _ in 0..len {
            let a = self.greedy_action(&env);
            let (reward, terminal) = env.step(a);
            actions.push(a);
            ret = ret + disc * reward;
            disc = disc * self.gamma;
            if terminal {
                break;
            }
        }
        (Rollout { actions, completion: env.completion(), fulfilled: env.fulfilled(), ret }, env)
    }

    /// Trains until completion stops improving, or for `polish` more episodes
    /// once the goal is met. Training episodes and greedy evaluations both
    /// compete for the best rollout: highest completion, then highest return.
    pub fn train<E: Environment<R = R>, G: Rng + ?Sized>(
        &mut self,
        start: &E,
        len: usize,
        rng: &mut G,
    ) -> Result<Training<R, E>, AgentError> {
        let (mut best, mut end) = self.greedy(start, len);
        let mut stale = 0;
        let mut polished = 0;
        let mut episodes = 0;
        let better = |a: &Rollout<R>, b: &Rollout<R>| a.completion > b.completion || (a.completion == b.completion && a.ret > b.ret);
        while episodes < self.cfg.max_episodes {
            if best.fulfilled {
                if polished >= self.cfg.polish {
                    break;
                }
                polished += 1;
            } else if stale >= self.cfg.patience {
                break;
            }
            episodes += 1;
            let (ep, ep_end) = self.episode(start, len, rng).map_err(|e| match e {
                AgentError::Capacity { states, .. } => AgentError::Capacity { states, episodes },
                other => other,
            })?;
            let (gr, gr_end) = self.greedy(start, len);
            let mut improved = false;
            for (cand, cand_end) in [(ep, ep_end), (gr, gr_end)] {
                if better(&cand, &best) {
                    improved |= cand.completion > best.completion;
                    best = cand;
                    end = cand_end;
                }
            }
            stale = if improved { 0 } else { stale + 1 };
        }
        log::debug!("sarsa: {episodes} episodes, {} states, completion {}", self.q.len(), best.completion);
        Ok(Training { best, end, episodes })
    }
}
