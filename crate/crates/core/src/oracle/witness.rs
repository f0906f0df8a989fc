//! Running the oracle over recorded actions, and searching for
//! violation-witnessing trajectories.

use std::collections::{HashSet, VecDeque};

use super::{Constraint, Oracle, OracleError, Violation};
use crate::engine::{replay, step, Action, GameDescription, GameState, Status};
use crate::scenario::ScenarioGraph;

/// Every violation raised while replaying `actions` from `initial`.
pub fn judge(
    desc: &GameDescription,
    constraints: &[Constraint],
    graph: Option<&ScenarioGraph>,
    initial: &GameState,
    actions: &[Action],
) -> Result<Vec<Violation>, OracleError> {
    let mut oracle = Oracle::new(desc, constraints, graph, initial)?;
    let r = replay(desc, initial, actions);
    let mut out = Vec::new();
    for (i, zs) in r.log.iter().enumerate() {
        out.extend(oracle.check_step(&r.states[i], &r.states[i + 1], zs));
    }
    Ok(out)
}

/// Moves available on a level; Nil never changes the state.
pub fn search_actions(state: &GameState) -> Vec<Action> {
    let mut a = vec![Action::Up, Action::Down, Action::Left, Action::Right];
    if state.use_enabled {
        a.push(Action::Use);
    }
    a
}

/// Breadth-first search for the shortest action sequence that raises a
/// violation. Returns `None` when none exists within `max_depth` steps.
pub fn search_witness(
    desc: &GameDescription,
    constraints: &[Constraint],
    graph: Option<&ScenarioGraph>,
    initial: &GameState,
    max_depth: usize,
) -> Result<Option<Vec<Action>>, OracleError> {
    struct Node<'a> {
        state: GameState,
        oracle: Oracle<'a>,
        parent: usize,
        action: Option<Action>,
        depth: usize,
    }
    let actions = search_actions(initial);
    let root = Oracle::new(desc, constraints, graph, initial)?;
    let mut seen = HashSet::new();
    seen.insert((initial.board_hash(), root.tracker().and_then(|t| t.cursor())));
    let mut nodes = vec![Node { state: initial.clone(), oracle: root, parent: 0, action: None, depth: 0 }];
    let mut queue = VecDeque::from([0usize]);
    let path_to = |nodes: &[Node], mut i: usize| {
        let mut out = Vec::new();
        while let Some(a) = nodes[i].action {
            out.push(a);
            i = nodes[i].parent;
        }
        out.reverse();
        out
    };
    while let Some(i) = queue.pop_front() {
        if nodes[i].depth >= max_depth || nodes[i].state.status != Status::Running {
            continue;
        }
        for &a in &actions {
            let mut s = nodes[i].state.clone();
            let Ok(out) = step(desc, &mut s, a) else { continue };
            let mut oracle = nodes[i].oracle.clone();
            let v = oracle.check_step(&nodes[i].state, &s, &out.interactions);
            let key = (s.board_hash(), oracle.tracker().and_then(|t| t.cursor()));
            let depth = nodes[i].depth + 1;
            nodes.push(Node { state: s, oracle, parent: i, action: Some(a), depth });
            let j = nodes.len() - 1;
            if !v.is_empty() {
                return Ok(Some(path_to(&nodes, j)));
            }
            if seen.insert(key) {
                queue.push_back(j);
            }
        }
    }
    Ok(None)
}
