//! Goal extraction from recorded trajectories.
//!
//! A trajectory is split wherever the kind of interaction it produces changes.
//! Segments are then merged greedily from left to right: each merge refits
//! feature weights by maximum-likelihood IRL and is accepted while the
//! log-likelihood does not drop by more than `κ_T`.
//!
//! The IRL policy is a Boltzmann policy over soft Q-values computed on a
//! depth-limited lookahead tree rooted at every visited state. The tree carries
//! the interaction state, so features that have reached their repetition limit
//! stop paying inside the lookahead as they do for the agents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{step, Action, GameDescription, GameState, Interaction, Mover, SpriteId, Status};
use crate::interaction::{Feature, FeatureError, FeatureKey, FeatureSet, InteractionState, Method};
use crate::scalar::{r, Real};
use crate::scenario::{Goal, GoalEntry, GoalSequence, GoalSource};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", default)]
pub struct IrlConfig<R = f64> {
    pub beta: R,
    pub iterations: usize,
    pub step: R,
    pub gamma: R,
    /// Lookahead depth of the soft Q computation.
    pub depth: usize,
}

impl<R: Real> Default for IrlConfig<R> {
    fn default() -> Self {
        Self { beta: r(5.0), iterations: 20, step: r(0.01), gamma: r(0.95), depth: 3 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrlError {
    #[error("empty trajectory")]
    Empty,
    #[error("action {index} cannot be replayed: {message}")]
    Replay { index: usize, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// A maximal run of steps with the same interaction signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    /// Index of the first action.
    pub start: usize,
    pub actions: Vec<Action>,
    /// Dominant interaction; `None` only when the trajectory never interacts.
    pub key: Option<FeatureKey>,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.actions.len()
    }
}

/// Sprites present in every cell; contacts with them are background.
fn background(state: &GameState) -> Vec<SpriteId> {
    let mut cells = state.cells();
    let Some((_, first)) = cells.next() else {
        return Vec::new();
    };
    let mut common: Vec<SpriteId> = first.to_vec();
    for (_, c) in cells {
        common.retain(|s| c.contains(s));
    }
    common
}

/// The interaction that characterizes a tick: avatar contacts before others,
/// and contacts with non-background sprites before background ones.
fn dominant<'a>(zs: &'a [Interaction], bg: &[SpriteId]) -> Option<&'a Interaction> {
    zs.iter().min_by_key(|z| (z.mover != Mover::Avatar, bg.contains(&z.eta1)))
}

fn same_signature(a: &FeatureKey, b: &FeatureKey) -> bool {
    a.eta0 == b.eta0 && a.eta1 == b.eta1 && a.kind == b.kind
}

/// Splits `actions` where the dominant (η0, η1, type) changes. Ticks without
/// interactions join the segment in progress.
pub fn split_trajectory(desc: &GameDescription, initial: &GameState, actions: &[Action]) -> Result<Vec<Segment>, IrlError> {
    let bg = background(initial);
    let mut state = initial.clone();
    let mut segments: Vec<Segment> = Vec::new();
    for (i, &a) in actions.iter().enumerate() {
        if state.status != Status::Running {
            return Err(IrlError::Replay { index: i, message: format!("game already ended with {:?}", state.status) });
        }
        let out = step(desc, &mut state, a).map_err(|e| IrlError::Replay { index: i, message: e.to_string() })?;
        let key = dominant(&out.interactions, &bg).map(|z| FeatureKey::of(desc, z));
        match (segments.last_mut(), key) {
            (None, key) => segments.push(Segment { start: i, actions: vec![a], key }),
            (Some(last), None) => last.actions.push(a),
            (Some(last), Some(k)) => match &last.key {
                None => {
                    last.actions.push(a);
                    last.key = Some(k);
                }
                Some(lk) if same_signature(lk, &k) => last.actions.push(a),
                Some(_) => segments.push(Segment { start: i, actions: vec![a], key: Some(k) }),
            },
        }
    }
    Ok(segments)
}

/// Abstract feature for a segment's signature.
pub fn create_feature<R: Real>(key: &FeatureKey) -> Feature<R> {
    Feature::abstract_(key.clone())
}

fn replay_checked(desc: &GameDescription, start: &GameState, actions: &[Action]) -> Result<Vec<(GameState, Vec<Interaction>)>, IrlError> {
    let mut state = start.clone();
    let mut out = Vec::with_capacity(actions.len());
    for (i, &a) in actions.iter().enumerate() {
        if state.status != Status::Running {
            return Err(IrlError::Replay { index: i, message: format!("game already ended with {:?}", state.status) });
        }
        let o = step(desc, &mut state, a).map_err(|e| IrlError::Replay { index: i, message: e.to_string() })?;
        out.push((state.clone(), o.interactions));
    }
    Ok(out)
}

/// Fills `rep` with the largest per-unit count observed when replaying
/// `actions` from `start`; unobserved features get 1. Missing methods
/// default to `All`.
pub fn analyze_repetitions<R: Real>(
    desc: &GameDescription,
    start: &GameState,
    actions: &[Action],
    features: &[Feature<R>],
) -> Result<Vec<Feature<R>>, IrlError> {
    let open: Vec<Feature<R>> = features
        .iter()
        .map(|f| Feature { key: f.key.clone(), weight: Some(R::one()), method: Some(f.method()), rep: Some(u32::MAX) })
        .collect();
    let fs = FeatureSet::compile(desc, open)?;
    let mut istate = InteractionState::new(start.width, start.height);
    let mut scratch = vec![0; fs.len()];
    for (_, zs) in replay_checked(desc, start, actions)? {
        istate.step_units(&zs, &fs, &mut scratch);
    }
    Ok(features
        .iter()
        .enumerate()
        .map(|(i, f)| Feature {
            key: f.key.clone(),
            weight: f.weight,
            method: Some(f.method()),
            rep: Some((istate.max_count(i) as u32).max(1)),
        })
        .collect())
}

const LEAF: u32 = u32::MAX;

/// Lookahead trees for every visited state of a trajectory, with the
/// per-feature reward units of every edge. The trees depend on features
/// (method and rep) but not on weights.
#[derive(Clone, Debug)]
pub struct LikelihoodModel {
    k: usize,
    n_actions: usize,
    /// Per node: index of its first edge, or `LEAF`.
    nodes: Vec<u32>,
    /// Per edge: child node or `LEAF` when the step ends the game.
    children: Vec<u32>,
    /// Per edge: `k` reward-unit counts.
    units: Vec<u16>,
    /// Root node and chosen action index per trajectory step.
    roots: Vec<(u32, usize)>,
}

/// Actions considered by the IRL policy.
pub fn policy_actions(state: &GameState, actions: &[Action]) -> Vec<Action> {
    let mut a = vec![Action::Up, Action::Down, Action::Left, Action::Right];
    if state.use_enabled {
        a.push(Action::Use);
    }
    if actions.contains(&Action::Nil) {
        a.push(Action::Nil);
    }
    a
}

impl LikelihoodModel {
    pub fn build<R: Real>(
        desc: &GameDescription,
        start: &GameState,
        actions: &[Action],
        features: &[Feature<R>],
        depth: usize,
    ) -> Result<Self, IrlError> {
        if actions.is_empty() {
            return Err(IrlError::Empty);
        }
        let fs = FeatureSet::compile(desc, features.to_vec())?;
        let moves = policy_actions(start, actions);
        let mut m = Self {
            k: fs.len(),
            n_actions: moves.len(),
            nodes: Vec::new(),
            children: Vec::new(),
            units: Vec::new(),
            roots: Vec::new(),
        };
        let mut state = start.clone();
        let mut istate = InteractionState::new(start.width, start.height);
        let mut scratch = vec![0; fs.len()];
        for (i, &a) in actions.iter().enumerate() {
            if state.status != Status::Running {
                return Err(IrlError::Replay { index: i, message: format!("game already ended with {:?}", state.status) });
            }
            let chosen = moves
                .iter()
                .position(|&x| x == a)
                .ok_or_else(|| IrlError::Replay { index: i, message: format!("{a:?} is not available") })?;
            let root = m.expand(desc, &fs, &moves, &state, &istate, depth.max(1));
            m.roots.push((root, chosen));
            let out = step(desc, &mut state, a).map_err(|e| IrlError::Replay { index: i, message: e.to_string() })?;
            istate.step_units(&out.interactions, &fs, &mut scratch);
        }
        Ok(m)
    }

    fn expand<R: Real>(
        &mut self,
        desc: &GameDescription,
        fs: &FeatureSet<R>,
        moves: &[Action],
        state: &GameState,
        istate: &InteractionState,
        depth: usize,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        if depth == 0 {
            self.nodes.push(LEAF);
            return id;
        }
        let first = self.children.len();
        self.nodes.push(first as u32);
        self.children.resize(first + moves.len(), LEAF);
        self.units.resize((first + moves.len()) * self.k, 0);
        let mut counts = vec![0u32; self.k];
        for (j, &a) in moves.iter().enumerate() {
            let mut s = state.clone();
            let mut is = istate.clone();
            let Ok(out) = step(desc, &mut s, a) else {
                continue;
            };
            counts.iter_mut().for_each(|c| *c = 0);
            is.step_units(&out.interactions, fs, &mut counts);
            let e = first + j;
            for (f, &c) in counts.iter().enumerate() {
                self.units[e * self.k + f] = c.min(u16::MAX as u32) as u16;
            }
            if s.status == Status::Running {
                let child = self.expand(desc, fs, moves, &s, &is, depth - 1);
                self.children[e] = child;
            }
        }
        id
    }

    pub fn num_features(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Soft Q-values at `node` and their gradients, written to `q` and `dq`
    /// (`n_actions` rows of `k`).
    fn q_values<R: Real>(&self, node: u32, w: &[R], cfg: &IrlConfig<R>, q: &mut [R], dq: &mut [R]) {
        let k = self.k;
        let first = self.nodes[node as usize] as usize;
        let mut cq = vec![R::zero(); self.n_actions];
        let mut cdq = vec![R::zero(); self.n_actions * k];
        let mut dv = vec![R::zero(); k];
        for a in 0..self.n_actions {
            let e = first + a;
            let u = &self.units[e * k..(e + 1) * k];
            let mut qa = R::zero();
            for f in 0..k {
                let x = R::from_f64_lossy(u[f] as f64);
                qa = qa + w[f] * x;
                dq[a * k + f] = x;
            }
            let child = self.children[e];
            if child != LEAF && self.nodes[child as usize] != LEAF {
                let v = self.soft_value(child, w, cfg, &mut cq, &mut cdq, &mut dv);
                qa = qa + cfg.gamma * v;
                for f in 0..k {
                    dq[a * k + f] = dq[a * k + f] + cfg.gamma * dv[f];
                }
            }
            q[a] = qa;
        }
    }

    /// `V = (1/β) log Σ exp(β Q)`; writes `dV/dw` to `dv`.
    fn soft_value<R: Real>(&self, node: u32, w: &[R], cfg: &IrlConfig<R>, q: &mut [R], dq: &mut [R], dv: &mut [R]) -> R {
        self.q_values(node, w, cfg, q, dq);
        let (lse, p) = log_softmax(q, cfg.beta);
        for f in 0..self.k {
            dv[f] = (0..self.n_actions).map(|a| p[a] * dq[a * self.k + f]).sum();
        }
        lse / cfg.beta
    }

    /// Log-likelihood of the recorded actions and its gradient.
    pub fn evaluate<R: Real>(&self, w: &[R], cfg: &IrlConfig<R>) -> (R, Vec<R>) {
        let k = self.k;
        let mut total = R::zero();
        let mut grad = vec![R::zero(); k];
        let mut q = vec![R::zero(); self.n_actions];
        let mut dq = vec![R::zero(); self.n_actions * k];
        for &(root, chosen) in &self.roots {
            self.q_values(root, w, cfg, &mut q, &mut dq);
            let (lse, p) = log_softmax(&q, cfg.beta);
            total = total + cfg.beta * q[chosen] - lse;
            for f in 0..k {
                let mean: R = (0..self.n_actions).map(|a| p[a] * dq[a * k + f]).sum();
                grad[f] = grad[f] + cfg.beta * (dq[chosen * k + f] - mean);
            }
        }
        (total, grad)
    }

    pub fn log_likelihood<R: Real>(&self, w: &[R], cfg: &IrlConfig<R>) -> R {
        self.evaluate(w, cfg).0
    }

    /// Gradient ascent from zero weights.
    pub fn fit<R: Real>(&self, cfg: &IrlConfig<R>) -> Vec<R> {
        let mut w = vec![R::zero(); self.k];
        for _ in 0..cfg.iterations {
            let (_, g) = self.evaluate(&w, cfg);
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi = *wi + cfg.step * gi;
            }
        }
        w
    }
}

/// Returns `log Σ exp(β q)` and the softmax probabilities.
fn log_softmax<R: Real>(q: &[R], beta: R) -> (R, Vec<R>) {
    let m = q.iter().copied().fold(R::neg_infinity(), R::max) * beta;
    let e: Vec<R> = q.iter().map(|&x| (x * beta - m).exp()).collect();
    let z: R = e.iter().copied().sum();
    (m + z.ln(), e.into_iter().map(|x| x / z).collect())
}

/// Fits feature weights for `actions` by maximum likelihood IRL.
pub fn mlirl<R: Real>(
    desc: &GameDescription,
    start: &GameState,
    actions: &[Action],
    features: &[Feature<R>],
    cfg: &IrlConfig<R>,
) -> Result<Vec<Feature<R>>, IrlError> {
    let model = LikelihoodModel::build(desc, start, actions, features, cfg.depth)?;
    let w = model.fit(cfg);
    Ok(features.iter().zip(w).map(|(f, w)| Feature { weight: Some(w), ..f.clone() }).collect())
}

/// Log-likelihood of `actions` under the weights already set on `features`.
pub fn calculate_likelihood<R: Real>(
    desc: &GameDescription,
    start: &GameState,
    actions: &[Action],
    features: &[Feature<R>],
    cfg: &IrlConfig<R>,
) -> Result<R, IrlError> {
    let model = LikelihoodModel::build(desc, start, actions, features, cfg.depth)?;
    let w: Vec<R> = features.iter().map(|f| f.weight()).collect();
    Ok(model.log_likelihood(&w, cfg))
}

/// Turns a fitted cluster into a goal and advances `state` past it.
/// Criteria are `countF / countS(η1) × 100` for features with non-negative
/// weight; the others keep criterion 0 and only shape rewards.
pub fn create_goal<R: Real>(
    desc: &GameDescription,
    state: &GameState,
    features: &[Feature<R>],
    actions: &[Action],
) -> Result<(GameState, Goal<R>), IrlError> {
    let fs = FeatureSet::compile(desc, features.to_vec())?;
    let mut istate = InteractionState::new(state.width, state.height);
    let mut scratch = vec![0; fs.len()];
    let mut end = state.clone();
    for (s, zs) in replay_checked(desc, state, actions)? {
        istate.step_units(&zs, &fs, &mut scratch);
        end = s;
    }
    let entries = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let criterion = if f.weight() < R::zero() {
                R::zero()
            } else {
                let count_s = desc.id(&f.key.eta1).map_or(0, |id| state.count(desc, id));
                if count_s == 0 {
                    log::warn!("no {} on the board; criterion for {} set to 0", f.key.eta1, f.key);
                    R::zero()
                } else {
                    R::from_f64_lossy(istate.count_feature(i, f) as f64 * 100.0 / count_s as f64)
                }
            };
            GoalEntry { feature: f.clone(), criterion }
        })
        .collect();
    Ok((end, Goal { entries }))
}

/// Result of one extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction<R: Real = f64> {
    pub sequence: GoalSequence<R>,
    pub segments: usize,
    /// Log-likelihood of each emitted cluster.
    pub likelihoods: Vec<R>,
}

impl<R: Real> Extraction<R> {
    /// Number of cuts between emitted goals.
    pub fn splits(&self) -> usize {
        self.sequence.goals.len().saturating_sub(1)
    }
}

struct Fit<R: Real> {
    features: Vec<Feature<R>>,
    kappa: R,
}

fn fit_cluster<R: Real>(
    desc: &GameDescription,
    start: &GameState,
    actions: &[Action],
    base: &[Feature<R>],
    new: &FeatureKey,
    cfg: &IrlConfig<R>,
) -> Result<Fit<R>, IrlError> {
    let methods: &[Method] = if base.iter().any(|f| &f.key == new) { &[Method::All] } else { &[Method::All, Method::Each] };
    let mut best: Option<Fit<R>> = None;
    for &method in methods {
        let mut feats = base.to_vec();
        if !feats.iter().any(|f| &f.key == new) {
            let mut f = create_feature::<R>(new);
            f.method = Some(method);
            feats.push(f);
        }
        let feats = analyze_repetitions(desc, start, actions, &feats)?;
        let model = LikelihoodModel::build(desc, start, actions, &feats, cfg.depth)?;
        let w = model.fit(cfg);
        let kappa = model.log_likelihood(&w, cfg);
        let feats: Vec<Feature<R>> = feats.into_iter().zip(w).map(|(f, w)| Feature { weight: Some(w), ..f }).collect();
        if best.as_ref().map_or(true, |b| kappa > b.kappa) {
            best = Some(Fit { features: feats, kappa });
        }
    }
    Ok(best.expect("at least one method"))
}

/// Greedy segment merging; see the module documentation.
pub fn mgp_irl<R: Real>(
    desc: &GameDescription,
    initial: &GameState,
    actions: &[Action],
    kappa_t: R,
    cfg: &IrlConfig<R>,
    tester: &str,
    level: u32,
) -> Result<Extraction<R>, IrlError> {
    let segments = split_trajectory(desc, initial, actions)?;
    let mut goals = Vec::new();
    let mut likelihoods = Vec::new();
    let mut state = initial.clone();
    let mut phi_a: Vec<Feature<R>> = Vec::new();
    let mut kappa_a = R::zero();
    let mut cluster_start = 0usize;
    let mut i = 0;
    while i < segments.len() {
        let seg = &segments[i];
        let Some(key) = &seg.key else {
            i += 1;
            continue;
        };
        let tau_b = &actions[cluster_start..seg.end()];
        let fit = fit_cluster(desc, &state, tau_b, &phi_a, key, cfg)?;
        let same = phi_a.len() == fit.features.len();
        if phi_a.is_empty() || kappa_a - fit.kappa <= kappa_t || same {
            phi_a = fit.features;
            kappa_a = fit.kappa;
            i += 1;
        } else {
            let (next, goal) = create_goal(desc, &state, &phi_a, &actions[cluster_start..seg.start])?;
            goals.push(goal);
            likelihoods.push(kappa_a);
            state = next;
            cluster_start = seg.start;
            phi_a.clear();
            kappa_a = R::zero();
        }
    }
    if !phi_a.is_empty() {
        let end = segments.last().map_or(0, Segment::end);
        let (_, goal) = create_goal(desc, &state, &phi_a, &actions[cluster_start..end])?;
        goals.push(goal);
        likelihoods.push(kappa_a);
    }
    let kappa = format!("{}", kappa_t.to_f64_lossy());
    Ok(Extraction {
        sequence: GoalSequence { source: GoalSource::Extracted { tester: tester.to_string(), level, kappa }, goals },
        segments: segments.len(),
        likelihoods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_matches_direct_formula() {
        let q = [0.3f64, -1.0, 2.0];
        let (lse, p) = log_softmax(&q, 2.0);
        let direct: f64 = q.iter().map(|x| (2.0 * x).exp()).sum::<f64>().ln();
        assert!((lse - direct).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
