//! Deterministic scripted testers standing in for human participants.
//!
//! Each tester plans with breadth-first search over engine states toward the
//! next interaction it wants to produce:
//!
//! * `wall-prober` bumps into every reachable wall face once, nearest first,
//!   then fetches the key and leaves through the door.
//! * `key-rusher` takes the shortest route to the key and then to the door.
//! * `door-attacker` walks into the closed door three times, swings at it when
//!   the sword is available, and only then fetches the key and opens it.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{step, Action, Dir, Effect, GameDescription, GameState, Interaction, InteractionType, Mover, Pos, SpriteId, Status};

/// Nodes expanded per search before giving up.
const SEARCH_LIMIT: usize = 400_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedTester {
    WallProber,
    KeyRusher,
    DoorAttacker,
}

impl ScriptedTester {
    pub const ALL: [ScriptedTester; 3] = [ScriptedTester::WallProber, ScriptedTester::KeyRusher, ScriptedTester::DoorAttacker];

    pub fn name(self) -> &'static str {
        match self {
            ScriptedTester::WallProber => "wall-prober",
            ScriptedTester::KeyRusher => "key-rusher",
            ScriptedTester::DoorAttacker => "door-attacker",
        }
    }
}

impl fmt::Display for ScriptedTester {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScriptedTester {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown tester `{s}`"))
    }
}

/// Sprites the testers care about, found from the rules.
#[derive(Clone, Debug)]
pub struct Roles {
    pub wall: Option<SpriteId>,
    pub key: Option<SpriteId>,
    pub door: Option<SpriteId>,
}

impl Roles {
    pub fn of(desc: &GameDescription) -> Self {
        let key = desc.rules.iter().find_map(|r| match r.effect {
            Effect::TransformTo { stype, .. } if desc.is_avatar(r.first) && desc.is_avatar(stype) => r.seconds.first().copied(),
            _ => None,
        });
        let door = desc.terminations.iter().find(|t| t.win).map(|t| t.stype);
        Self { wall: desc.id("wall"), key, door }
    }
}

fn moves(state: &GameState) -> Vec<Action> {
    let mut a = vec![Action::Up, Action::Down, Action::Left, Action::Right];
    if state.use_enabled {
        a.push(Action::Use);
    }
    a
}

/// Shortest action sequence whose last tick produces an interaction accepted
/// by `want`, with that interaction. Lost games are pruned, and so are wins
/// that `want` does not accept.
pub fn seek(
    desc: &GameDescription,
    start: &GameState,
    want: impl Fn(&Interaction) -> bool,
) -> Option<(Vec<Action>, Interaction)> {
    search(desc, start, |s, zs| zs.iter().find(|z| want(z)).copied().filter(|_| s.status != Status::Lose))
}

/// Shortest action sequence that wins the game.
pub fn seek_win(desc: &GameDescription, start: &GameState) -> Option<Vec<Action>> {
    search(desc, start, |s, _| (s.status == Status::Win).then_some(())).map(|(p, _)| p)
}

fn search<T>(
    desc: &GameDescription,
    start: &GameState,
    goal: impl Fn(&GameState, &[Interaction]) -> Option<T>,
) -> Option<(Vec<Action>, T)> {
    if start.status != Status::Running {
        return None;
    }
    let acts = moves(start);
    let mut parents: Vec<(usize, Action)> = vec![(0, Action::Nil)];
    let mut states = vec![start.clone()];
    let mut seen = HashSet::from([start.board_hash()]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for &a in &acts {
            let mut s = states[i].clone();
            let Ok(out) = step(desc, &mut s, a) else { continue };
            if let Some(t) = goal(&s, &out.interactions) {
                let mut path = vec![a];
                let mut j = i;
                while j != 0 {
                    path.push(parents[j].1);
                    j = parents[j].0;
                }
                path.reverse();
                return Some((path, t));
            }
            if s.status != Status::Running || !seen.insert(s.board_hash()) {
                continue;
            }
            parents.push((i, a));
            states.push(s);
            queue.push_back(states.len() - 1);
            if states.len() > SEARCH_LIMIT {
                return None;
            }
        }
    }
    None
}

fn apply(desc: &GameDescription, state: &mut GameState, out: &mut Vec<Action>, plan: &[Action]) {
    for &a in plan {
        if state.status != Status::Running || step(desc, state, a).is_err() {
            return;
        }
        out.push(a);
    }
}

fn touches(desc: &GameDescription, z: &Interaction, target: Option<SpriteId>, kind: InteractionType) -> bool {
    let by = if kind == InteractionType::Move { z.mover == Mover::Avatar } else { true };
    target.is_some_and(|t| z.kind == kind && by && desc.is_a(z.eta1, t))
}

/// Fetch the key, then win.
fn finish(desc: &GameDescription, roles: &Roles, state: &mut GameState, out: &mut Vec<Action>) {
    if let Some((p, _)) = seek(desc, state, |z| touches(desc, z, roles.key, InteractionType::Move)) {
        apply(desc, state, out, &p);
    }
    if let Some(p) = seek_win(desc, state) {
        apply(desc, state, out, &p);
    }
}

/// Wall faces the prober visits before moving on.
pub const PROBES: usize = 12;

impl ScriptedTester {
    /// The tester's full action sequence on a level.
    pub fn play(self, desc: &GameDescription, initial: &GameState) -> Vec<Action> {
        let roles = Roles::of(desc);
        let mut state = initial.clone();
        let mut out = Vec::new();
        match self {
            ScriptedTester::WallProber => {
                let mut probed: HashSet<(Pos, Dir)> = HashSet::new();
                while probed.len() < PROBES {
                    let Some((p, z)) = seek(desc, &state, |z| {
                        touches(desc, z, roles.wall, InteractionType::Move) && !probed.contains(&(z.pos, z.dir))
                    }) else {
                        break;
                    };
                    apply(desc, &mut state, &mut out, &p);
                    probed.insert((z.pos, z.dir));
                }
                finish(desc, &roles, &mut state, &mut out);
            }
            ScriptedTester::KeyRusher => finish(desc, &roles, &mut state, &mut out),
            ScriptedTester::DoorAttacker => {
                let empty_handed = state.avatar.state;
                for _ in 0..3 {
                    let bump = |z: &Interaction| touches(desc, z, roles.door, InteractionType::Move) && z.avatar_state == empty_handed;
                    if let Some((p, _)) = seek(desc, &state, bump) {
                        apply(desc, &mut state, &mut out, &p);
                    }
                }
                if state.use_enabled {
                    let swing = |z: &Interaction| touches(desc, z, roles.door, InteractionType::Use) && z.avatar_state == empty_handed;
                    if let Some((p, _)) = seek(desc, &state, swing) {
                        apply(desc, &mut state, &mut out, &p);
                    }
                }
                finish(desc, &roles, &mut state, &mut out);
            }
        }
        out
    }
}
