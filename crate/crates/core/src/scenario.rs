//! Scenario graphs and synthetic test goals.
//!
//! A designer supplies a scenario graph whose edges map to abstract features.
//! Coverage paths over the graph become feature sequences; each sequence is
//! copied once per (position, modification) pair with a single off-scenario
//! feature inserted, and every feature becomes one goal.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{GameDescription, GameState, InteractionType, Status};
use crate::interaction::{Feature, FeatureKey, Method};
use crate::scalar::Real;

pub const GOAL_FILE_VERSION: u32 = 1;
/// Census count from which a sprite is considered abundant.
pub const ABUNDANT: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("graph file: {0}")]
    Format(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("all-path coverage needs an acyclic graph")]
    Cyclic,
    #[error("node `{0}` is not reachable from an initial node")]
    Unreachable(String),
    #[error("no edge from `{0}` to `{1}`")]
    MissingEdge(String, String),
    #[error("unknown sprite `{0}`")]
    UnknownSprite(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coverage {
    /// Edge coverage: every reachable path of length at most one.
    EC,
    /// Edge-pair coverage: every reachable path of length at most two.
    EPC,
    /// Prime path coverage.
    PPC,
    /// Every path from an initial to a final node.
    APC,
}

/// Adjacency-list digraph over node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Digraph {
    pub adj: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            if !g.adj[a].contains(&b) {
                g.adj[a].push(b);
            }
        }
        for l in &mut g.adj {
            l.sort_unstable();
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, l)| l.iter().map(move |&b| (a, b)))
    }

    pub fn reachable(&self, from: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = from.to_vec();
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.adj[n].iter().copied().filter(|&m| !seen[m]));
        }
        seen
    }

    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm
        let mut indeg = vec![0usize; self.len()];
        for (_, b) in self.edges() {
            indeg[b] += 1;
        }
        let mut queue: Vec<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut done = 0;
        while let Some(n) = queue.pop() {
            done += 1;
            for &m in &self.adj[n] {
                indeg[m] -= 1;
                if indeg[m] == 0 {
                    queue.push(m);
                }
            }
        }
        done == self.len()
    }

    /// Prime paths: simple paths (or simple cycles) that are not a proper
    /// subpath of another simple path. Built by extending paths one node at a
    /// time until they can no longer be extended.
    pub fn prime_paths(&self) -> Vec<Vec<usize>> {
        let mut frontier: Vec<Vec<usize>> = (0..self.len()).map(|n| vec![n]).collect();
        let mut finished: Vec<Vec<usize>> = Vec::new();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for p in frontier {
                let last = *p.last().unwrap();
                let closed = p.len() > 1 && p[0] == last;
                let mut extended = false;
                if !closed {
                    for &m in &self.adj[last] {
                        if m == p[0] || !p.contains(&m) {
                            let mut q = p.clone();
                            q.push(m);
                            next.push(q);
                            extended = true;
                        }
                    }
                }
                if !extended {
                    finished.push(p);
                }
            }
            frontier = next;
        }
        // a path that could not be extended at its end may still extend at its start
        let mut primes: Vec<Vec<usize>> = finished
            .iter()
            .filter(|p| !finished.iter().any(|q| q.len() > p.len() && is_subpath(p, q)))
            .cloned()
            .collect();
        primes.sort();
        primes.dedup();
        primes
    }

    /// Every path from an initial to a final node. The graph must be acyclic.
    pub fn all_paths(&self, initial: &[usize], finals: &[usize]) -> Result<Vec<Vec<usize>>, ScenarioError> {
        if !self.is_acyclic() {
            return Err(ScenarioError::Cyclic);
        }
        let mut out = Vec::new();
        let mut path = Vec::new();
        fn walk(g: &Digraph, n: usize, finals: &[usize], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            path.push(n);
            if finals.contains(&n) {
                out.push(path.clone());
            }
            for &m in &g.adj[n] {
                walk(g, m, finals, path, out);
            }
            path.pop();
        }
        let mut starts = initial.to_vec();
        starts.sort_unstable();
        for s in starts {
            walk(self, s, finals, &mut path, &mut out);
        }
        out.sort();
        Ok(out)
    }

    /// All reachable paths with at most `max_len` edges.
    pub fn bounded_paths(&self, initial: &[usize], max_len: usize) -> Vec<Vec<usize>> {
        let seen = self.reachable(initial);
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut frontier: Vec<Vec<usize>> = (0..self.len()).filter(|&n| seen[n]).map(|n| vec![n]).collect();
        for _ in 0..=max_len {
            let mut next = Vec::new();
            for p in &frontier {
                for &m in &self.adj[*p.last().unwrap()] {
                    let mut q = p.clone();
                    q.push(m);
                    next.push(q);
                }
            }
            out.append(&mut frontier);
            frontier = next;
        }
        out.sort();
        out
    }
}

/// True when `p` occurs as a contiguous run inside `q`.
pub fn is_subpath(p: &[usize], q: &[usize]) -> bool {
    p.len() <= q.len() && q.windows(p.len()).any(|w| w == p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar_state: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

impl Node {
    /// Whether a game state realizes this node's atomic properties.
    pub fn realized(&self, desc: &GameDescription, state: &GameState) -> bool {
        let status_ok = match self.status {
            Some(s) => state.status == s,
            None => state.status == Status::Running,
        };
        if !status_ok {
            return false;
        }
        if let Some(st) = &self.avatar_state {
            if !state.avatar.alive || desc.name(state.avatar.state) != st {
                return false;
            }
        }
        self.counts.iter().all(|(name, &n)| match desc.id(name) {
            Some(id) => state.count(desc, id) == n,
            None => n == 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub label: String,
    pub feature: FeatureKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    initial: Vec<String>,
    #[serde(rename = "final")]
    finals: Vec<String>,
    #[serde(default)]
    sprites: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avatar_states: Option<Vec<String>>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Scenario graph with its edge-to-feature table.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub initial: Vec<usize>,
    pub finals: Vec<usize>,
    /// Sprites targeted by the modification list.
    pub sprites: Vec<String>,
    pub avatar_states: Option<Vec<String>>,
    graph: Digraph,
}

impl ScenarioGraph {
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        initial: &[&str],
        finals: &[&str],
        sprites: Vec<String>,
    ) -> Result<Self, ScenarioError> {
        let file = GraphFile {
            version: 1,
            initial: initial.iter().map(|s| s.to_string()).collect(),
            finals: finals.iter().map(|s| s.to_string()).collect(),
            sprites,
            avatar_states: None,
            nodes,
            edges,
        };
        Self::from_file(file)
    }

    fn from_file(f: GraphFile) -> Result<Self, ScenarioError> {
        let mut index = BTreeMap::new();
        for (i, n) in f.nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(ScenarioError::DuplicateNode(n.id.clone()));
            }
        }
        let look = |s: &String| index.get(s).copied().ok_or_else(|| ScenarioError::UnknownNode(s.clone()));
        let mut pairs = Vec::new();
        for e in &f.edges {
            pairs.push((look(&e.from)?, look(&e.to)?));
        }
        let initial = f.initial.iter().map(look).collect::<Result<Vec<_>, _>>()?;
        let finals = f.finals.iter().map(look).collect::<Result<Vec<_>, _>>()?;
        let graph = Digraph::from_edges(f.nodes.len(), &pairs);
        Ok(Self {
            nodes: f.nodes,
            edges: f.edges,
            initial,
            finals,
            sprites: f.sprites,
            avatar_states: f.avatar_states,
            graph,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let f: GraphFile = toml::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        if f.version != 1 {
            return Err(ScenarioError::Format(format!("unsupported version {}", f.version)));
        }
        Self::from_file(f)
    }

    pub fn to_toml(&self) -> String {
        let f = GraphFile {
            version: 1,
            initial: self.initial.iter().map(|&i| self.nodes[i].id.clone()).collect(),
            finals: self.finals.iter().map(|&i| self.nodes[i].id.clone()).collect(),
            sprites: self.sprites.clone(),
            avatar_states: self.avatar_states.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        toml::to_string(&f).expect("graph serializes")
    }

    pub fn digraph(&self) -> &Digraph {
        &self.graph
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Outgoing edges of a node, in file order.
    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> {
        let id = &self.nodes[node].id;
        self.edges
            .iter()
            .filter(move |e| &e.from == id)
            .map(move |e| (self.node_index(&e.to).expect("validated"), e))
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        let (a, b) = (&self.nodes[from].id, &self.nodes[to].id);
        self.edges.iter().find(|e| &e.from == a && &e.to == b)
    }

    pub fn coverage_paths(&self, criterion: Coverage) -> Result<Vec<Vec<usize>>, ScenarioError> {
        let seen = self.graph.reachable(&self.initial);
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ScenarioError::Unreachable(self.nodes[i].id.clone()));
        }
        let mut paths = match criterion {
            Coverage::EC => self.graph.bounded_paths(&self.initial, 1),
            Coverage::EPC => self.graph.bounded_paths(&self.initial, 2),
            Coverage::PPC => self.graph.prime_paths(),
            Coverage::APC => self.graph.all_paths(&self.initial, &self.finals)?,
        };
        paths.sort_by_cached_key(|p| p.iter().map(|&i| self.nodes[i].id.clone()).collect::<Vec<_>>());
        Ok(paths)
    }

    /// Replaces each edge of a node path with its abstract feature.
    pub fn path_to_features(&self, path: &[usize]) -> Result<Vec<FeatureKey>, ScenarioError> {
        path.windows(2)
            .map(|w| {
                self.edge(w[0], w[1]).map(|e| e.feature.clone()).ok_or_else(|| {
                    ScenarioError::MissingEdge(self.nodes[w[0]].id.clone(), self.nodes[w[1]].id.clone())
                })
            })
            .collect()
    }
}

/// Name used as the first sprite for movable candidates.
fn movable_names(desc: &GameDescription) -> Vec<String> {
    let mut out = vec![desc.avatar_name().to_string()];
    for id in desc.leaves() {
        if desc.is_movable(id) && !desc.is_avatar(id) {
            out.push(desc.name(id).to_string());
        }
    }
    out
}

/// All ⟨η0, η1, type, avatar state⟩ combinations with a movable η0.
pub fn modification_list(desc: &GameDescription, sprites: &[String], avatar_states: &[String]) -> Vec<FeatureKey> {
    let mut out = Vec::new();
    for e0 in movable_names(desc) {
        for e1 in sprites {
            if *e1 == e0 {
                continue;
            }
            for kind in [InteractionType::Move, InteractionType::Use] {
                for st in avatar_states {
                    out.push(FeatureKey::new(&e0, e1, kind, st));
                }
            }
        }
    }
    out
}

/// Copies of `seq` with one modification inserted before each position, plus
/// the original first. Candidates equal to a feature already in `seq` are skipped.
pub fn insert_modifications(seq: &[FeatureKey], mods: &[FeatureKey]) -> Vec<(Vec<FeatureKey>, Option<(usize, FeatureKey)>)> {
    let mut out = vec![(seq.to_vec(), None)];
    let admissible: Vec<&FeatureKey> = mods.iter().filter(|m| seq.iter().all(|f| f.distance(m) >= 1)).collect();
    for pos in 0..seq.len() {
        for &m in &admissible {
            let mut s = seq.to_vec();
            s.insert(pos, m.clone());
            out.push((s, Some((pos, m.clone()))));
        }
    }
    out
}

/// Fills in weight 1, method All and a rep chosen from η1.
pub fn concretize<R: Real>(key: &FeatureKey, desc: &GameDescription, census: &GameState) -> Result<Feature<R>, ScenarioError> {
    let id = desc.id(&key.eta1).ok_or_else(|| ScenarioError::UnknownSprite(key.eta1.clone()))?;
    let rep = if desc.is_movable(id) {
        3
    } else if census.count(desc, id) >= ABUNDANT {
        1
    } else {
        2
    };
    Ok(Feature::concrete(key.clone(), R::one(), Method::All, rep))
}

pub fn exploration_feature<R: Real>(desc: &GameDescription, avatar_state: &str) -> Feature<R> {
    Feature::concrete(
        FeatureKey::new(desc.avatar_name(), "floor", InteractionType::Move, avatar_state),
        R::from_f64_lossy(0.01),
        Method::All,
        1,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct GoalEntry<R = f64> {
    pub feature: Feature<R>,
    /// Target percentage of the η1 population to exercise.
    pub criterion: R,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Goal<R = f64> {
    pub entries: Vec<GoalEntry<R>>,
}

impl<R: Real> Goal<R> {
    pub fn features(&self) -> Vec<Feature<R>> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSource {
    Synthetic {
        path: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modification: Option<(usize, FeatureKey)>,
    },
    Extracted {
        tester: String,
        level: u32,
        kappa: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct GoalSequence<R = f64> {
    pub source: GoalSource,
    pub goals: Vec<Goal<R>>,
}

impl<R: Real> GoalSequence<R> {
    pub fn is_modified(&self) -> bool {
        matches!(self.source, GoalSource::Synthetic { modification: Some(_), .. })
    }

    /// Stable content hash used to derive per-sequence seeds.
    pub fn content_hash(&self) -> u64 {
        let text = serde_json::to_string(&self.goals.iter().map(|g| g.entries.iter().map(|e| (&e.feature.key, e.feature.rep, e.feature.method, e.criterion.to_f64_lossy().to_bits(), e.feature.weight().to_f64_lossy().to_bits())).collect::<Vec<_>>()).collect::<Vec<_>>())
            .expect("serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

/// One goal per feature; each goal also carries the exploration feature.
pub fn build_goal_sequence<R: Real>(features: &[Feature<R>], desc: &GameDescription, source: GoalSource) -> GoalSequence<R> {
    let hundred = R::from_f64_lossy(100.0);
    let goals = features
        .iter()
        .map(|f| {
            let mut entries = vec![GoalEntry { feature: f.clone(), criterion: hundred }];
            let explore = exploration_feature::<R>(desc, &f.key.avatar_state);
            if explore.key != f.key {
                entries.push(GoalEntry { feature: explore, criterion: R::zero() });
            }
            Goal { entries }
        })
        .collect();
    GoalSequence { source, goals }
}

/// Versioned container written to goal files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct GoalFile<R = f64> {
    pub version: u32,
    pub game: String,
    pub level: u32,
    pub sequences: Vec<GoalSequence<R>>,
}

impl<R: Real> GoalFile<R> {
    pub fn new(game: &str, level: u32, sequences: Vec<GoalSequence<R>>) -> Self {
        Self { version: GOAL_FILE_VERSION, game: game.to_string(), level, sequences }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("goal file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Options for synthetic goal generation.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticOptions {
    pub coverage: Coverage,
    pub modifications: bool,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self { coverage: Coverage::APC, modifications: true }
    }
}

/// Abstract feature sequences from the graph, with provenance.
pub fn synthetic_feature_sequences(
    graph: &ScenarioGraph,
    desc: &GameDescription,
    opts: SyntheticOptions,
) -> Result<Vec<(Vec<FeatureKey>, GoalSource)>, ScenarioError> {
    let states: Vec<String> = match &graph.avatar_states {
        Some(s) => s.clone(),
        None => desc.avatar_states().iter().map(|&i| desc.name(i).to_string()).collect(),
    };
    let mods = if opts.modifications { modification_list(desc, &graph.sprites, &states) } else { Vec::new() };
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for path in graph.coverage_paths(opts.coverage)? {
        let seq = graph.path_to_features(&path)?;
        if seq.is_empty() {
            continue;
        }
        let ids: Vec<String> = path.iter().map(|&i| graph.nodes[i].id.clone()).collect();
        for (s, m) in insert_modifications(&seq, &mods) {
            if m.is_none() && !seen.insert(s.clone()) {
                continue;
            }
            out.push((s, GoalSource::Synthetic { path: ids.clone(), modification: m }));
        }
    }
    Ok(out)
}

/// Concrete goal sequences for one level.
pub fn synthetic_goals<R: Real>(
    graph: &ScenarioGraph,
    desc: &GameDescription,
    census: &GameState,
    opts: SyntheticOptions,
) -> Result<Vec<GoalSequence<R>>, ScenarioError> {
    synthetic_feature_sequences(graph, desc, opts)?
        .into_iter()
        .map(|(keys, source)| {
            let feats = keys.iter().map(|k| concretize::<R>(k, desc, census)).collect::<Result<Vec<_>, _>>()?;
            Ok(build_goal_sequence(&feats, desc, source))
        })
        .collect()
}
