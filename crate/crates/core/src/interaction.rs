//! Interaction state and feature-based rewards.
//!
//! The interaction state marks which interactions a tester has exercised. It
//! has twelve direction layers over the grid: avatar moves, avatar uses and
//! moves by other sprites, each split by direction. Counters are kept per
//! feature so that overlapping features (floor and key in the same cell, say)
//! do not share a repetition budget.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{mix64, Dir, GameDescription, Interaction, InteractionType, Mover, SpriteId};
use crate::scalar::Real;

pub const LAYERS: usize = 12;

/// Direction preference of a feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Each,
    All,
}

/// Layer for an interaction. Directions are ordered up, down, left, right.
pub fn layer_index(kind: InteractionType, dir: Dir, mover: Mover) -> usize {
    let base = match (mover, kind) {
        (Mover::Avatar, InteractionType::Move) => 0,
        (Mover::Avatar, InteractionType::Use) => 4,
        (Mover::Other, _) => 8,
    };
    base + dir.index()
}

/// The identifying part of a feature: what must match an interaction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub eta0: String,
    pub eta1: String,
    #[serde(rename = "type")]
    pub kind: InteractionType,
    pub avatar_state: String,
}

impl FeatureKey {
    pub fn new(eta0: &str, eta1: &str, kind: InteractionType, avatar_state: &str) -> Self {
        Self { eta0: eta0.into(), eta1: eta1.into(), kind, avatar_state: avatar_state.into() }
    }

    pub fn of(desc: &GameDescription, z: &Interaction) -> Self {
        Self::new(desc.name(z.eta0), desc.name(z.eta1), z.kind, desc.name(z.avatar_state))
    }

    /// Number of differing components.
    pub fn distance(&self, other: &FeatureKey) -> usize {
        usize::from(self.eta0 != other.eta0)
            + usize::from(self.eta1 != other.eta1)
            + usize::from(self.kind != other.kind)
            + usize::from(self.avatar_state != other.avatar_state)
    }

    /// Same key regardless of which sprite came first.
    pub fn matches_unordered(&self, other: &FeatureKey) -> bool {
        self.kind == other.kind
            && self.avatar_state == other.avatar_state
            && ((self.eta0 == other.eta0 && self.eta1 == other.eta1)
                || (self.eta0 == other.eta1 && self.eta1 == other.eta0))
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{:?},{}>", self.eta0, self.eta1, self.kind, self.avatar_state)
    }
}

/// A reward rule over interactions. Weight, method and rep are empty while abstract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Feature<R = f64> {
    #[serde(flatten)]
    pub key: FeatureKey,
    pub weight: Option<R>,
    pub method: Option<Method>,
    pub rep: Option<u32>,
}

impl<R: Real> Feature<R> {
    pub fn abstract_(key: FeatureKey) -> Self {
        Self { key, weight: None, method: None, rep: None }
    }

    pub fn concrete(key: FeatureKey, weight: R, method: Method, rep: u32) -> Self {
        Self { key, weight: Some(weight), method: Some(method), rep: Some(rep.max(1)) }
    }

    pub fn is_concrete(&self) -> bool {
        self.weight.is_some() && self.method.is_some() && self.rep.is_some()
    }

    pub fn weight(&self) -> R {
        self.weight.unwrap_or_else(R::zero)
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::All)
    }

    pub fn rep(&self) -> u32 {
        self.rep.unwrap_or(1).max(1)
    }

    pub fn cast<S: Real>(&self) -> Feature<S> {
        Feature {
            key: self.key.clone(),
            weight: self.weight.map(|w| S::from_f64_lossy(w.to_f64_lossy())),
            method: self.method,
            rep: self.rep,
        }
    }
}

impl<R: Real> fmt::Display for Feature<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.weight.map(|w| format!("{w}")).unwrap_or_else(|| "·".into());
        let m = self.method.map(|m| format!("{m:?}")).unwrap_or_else(|| "·".into());
        let r = self.rep.map(|r| r.to_string()).unwrap_or_else(|| "·".into());
        write!(
            f,
            "<{},{},{w},{m},{:?},{r},{}>",
            self.key.eta0, self.key.eta1, self.key.kind, self.key.avatar_state
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("features {0} and {1} match the same interactions")]
    Ambiguous(usize, usize),
}

type CompiledKey = (SpriteId, SpriteId, InteractionType, SpriteId);

/// Features resolved against a game description.
#[derive(Clone, Debug)]
pub struct FeatureSet<R = f64> {
    pub features: Vec<Feature<R>>,
    keys: Vec<Option<CompiledKey>>,
}

impl<R: Real> FeatureSet<R> {
    pub fn compile(desc: &GameDescription, features: Vec<Feature<R>>) -> Result<Self, FeatureError> {
        for i in 0..features.len() {
            for j in i + 1..features.len() {
                if features[i].key == features[j].key {
                    return Err(FeatureError::Ambiguous(i, j));
                }
            }
        }
        let keys = features
            .iter()
            .map(|f| {
                Some((
                    desc.id(&f.key.eta0)?,
                    desc.id(&f.key.eta1)?,
                    f.key.kind,
                    desc.id(&f.key.avatar_state)?,
                ))
            })
            .collect();
        Ok(Self { features, keys })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Slot of the feature matching `z` on η0, η1, type and avatar state.
    pub fn match_feature(&self, z: &Interaction) -> Option<usize> {
        let k = (z.eta0, z.eta1, z.kind, z.avatar_state);
        self.keys.iter().position(|c| *c == Some(k))
    }
}

/// Sparse counters indexed by (feature slot, layer, cell).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionState {
    width: usize,
    height: usize,
    counts: Vec<(u32, u16)>,
    hash: u64,
}

fn entry_hash(key: u32, count: u16) -> u64 {
    mix64(((key as u64) << 16) | count as u64)
}

impl InteractionState {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, counts: Vec::new(), hash: 0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn key(&self, slot: usize, layer: usize, x: usize, y: usize) -> u32 {
        (((slot * LAYERS + layer) * self.height + y) * self.width + x) as u32
    }

    pub fn get(&self, slot: usize, layer: usize, x: usize, y: usize) -> u16 {
        let k = self.key(slot, layer, x, y);
        match self.counts.binary_search_by_key(&k, |e| e.0) {
            Ok(i) => self.counts[i].1,
            Err(_) => 0,
        }
    }

    fn bump(&mut self, key: u32) {
        match self.counts.binary_search_by_key(&key, |e| e.0) {
            Ok(i) => {
                let c = self.counts[i].1;
                let n = c.saturating_add(1);
                self.hash ^= entry_hash(key, c) ^ entry_hash(key, n);
                self.counts[i].1 = n;
            }
            Err(i) => {
                self.counts.insert(i, (key, 1));
                self.hash ^= entry_hash(key, 1);
            }
        }
    }

    /// Incrementally maintained hash of all counters.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn reset(&mut self) {
        self.counts.clear();
        self.hash = 0;
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counter summed over all feature slots for one layer.
    pub fn layer_total(&self, layer: usize, x: usize, y: usize, slots: usize) -> u32 {
        (0..slots).map(|s| self.get(s, layer, x, y) as u32).sum()
    }

    /// Rewards `z` under the matched feature and records it.
    pub fn apply_interaction<R: Real>(&mut self, z: &Interaction, slot: usize, feature: &Feature<R>) -> R {
        if self.record(z, slot, feature) {
            feature.weight()
        } else {
            R::zero()
        }
    }

    /// Records `z`; true when it was still below the feature's rep.
    fn record<R: Real>(&mut self, z: &Interaction, slot: usize, feature: &Feature<R>) -> bool {
        if z.pos.x < 0 || z.pos.y < 0 || z.pos.x as usize >= self.width || z.pos.y as usize >= self.height {
            return false;
        }
        let (x, y) = (z.pos.x as usize, z.pos.y as usize);
        let layer = layer_index(z.kind, z.dir, z.mover);
        let c = self.get(slot, layer, x, y) as u32;
        match feature.method() {
            Method::Each => self.bump(self.key(slot, layer, x, y)),
            Method::All => {
                let base = layer - layer % 4;
                for l in base..base + 4 {
                    self.bump(self.key(slot, l, x, y));
                }
            }
        }
        c < feature.rep()
    }

    /// Reward for one tick. Each (feature, cell) unit counts at most once per tick;
    /// unmatched interactions earn `unmatched` each.
    pub fn step_reward<R: Real>(&mut self, interactions: &[Interaction], features: &FeatureSet<R>, unmatched: R) -> R {
        let mut units = vec![0u32; features.len()];
        let missed = self.step_units(interactions, features, &mut units);
        let mut total = R::from_f64_lossy(missed as f64) * unmatched;
        for (f, &n) in features.features.iter().zip(&units) {
            if n > 0 {
                total = total + f.weight() * R::from_f64_lossy(n as f64);
            }
        }
        total
    }

    /// Records one tick and adds the number of rewarded units per feature slot
    /// to `rewarded`. Returns the number of unmatched interactions.
    pub fn step_units<R: Real>(&mut self, interactions: &[Interaction], features: &FeatureSet<R>, rewarded: &mut [u32]) -> u32 {
        let mut missed = 0;
        let mut seen: Vec<(usize, usize, i32, i32)> = Vec::new();
        for z in interactions {
            match features.match_feature(z) {
                Some(slot) => {
                    let f = &features.features[slot];
                    let layer = layer_index(z.kind, z.dir, z.mover);
                    let unit_layer = match f.method() {
                        Method::Each => layer,
                        Method::All => layer - layer % 4,
                    };
                    let unit = (slot, unit_layer, z.pos.x, z.pos.y);
                    if seen.contains(&unit) {
                        continue;
                    }
                    seen.push(unit);
                    if self.record(z, slot, f) {
                        rewarded[slot] += 1;
                    }
                }
                None => missed += 1,
            }
        }
        missed
    }

    /// Largest single counter of a feature slot.
    pub fn max_count(&self, slot: usize) -> u16 {
        let plane = (self.width * self.height) as u32;
        let lo = self.key(slot, 0, 0, 0);
        let hi = lo + plane * LAYERS as u32;
        let start = self.counts.partition_point(|e| e.0 < lo);
        self.counts[start..].iter().take_while(|e| e.0 < hi).map(|e| e.1).max().unwrap_or(0)
    }

    /// Number of distinct exercised units of a feature, each capped at its rep.
    pub fn count_feature<R: Real>(&self, slot: usize, feature: &Feature<R>) -> u32 {
        let plane = (self.width * self.height) as u32;
        let lo = self.key(slot, 0, 0, 0);
        let hi = lo + plane * LAYERS as u32;
        let start = self.counts.partition_point(|e| e.0 < lo);
        let mut units: Vec<(u32, u32)> = self.counts[start..]
            .iter()
            .take_while(|e| e.0 < hi)
            .map(|&(k, c)| {
                let off = k - lo;
                let group = off / plane / 4;
                (group * plane + off % plane, c as u32)
            })
            .collect();
        units.sort_unstable_by_key(|u| u.0);
        let rep = feature.rep();
        let mut total = 0;
        let mut i = 0;
        while i < units.len() {
            let unit = units[i].0;
            let mut cell = 0;
            while i < units.len() && units[i].0 == unit {
                cell = match feature.method() {
                    Method::All => cell.max(units[i].1),
                    Method::Each => cell + units[i].1,
                };
                i += 1;
            }
            total += cell.min(rep);
        }
        total
    }

    /// Layer dump with empty cells for zeros.
    pub fn dump(&self, slots: usize) -> String {
        let mut out = String::new();
        for layer in 0..LAYERS {
            let any = (0..self.height).any(|y| (0..self.width).any(|x| self.layer_total(layer, x, y, slots) > 0));
            if !any {
                continue;
            }
            let group = ["move", "use", "other"][layer / 4];
            let _ = writeln!(out, "layer {layer} ({group} {})", Dir::ALL[layer % 4].arrow());
            for y in 0..self.height {
                for x in 0..self.width {
                    let c = self.layer_total(layer, x, y, slots);
                    if c == 0 {
                        out.push_str(" .");
                    } else {
                        let _ = write!(out, "{c:>2}");
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{parse_description, Pos};

    fn desc() -> GameDescription {
        parse_description(
            "SpriteSet\n  floor > Immovable\n  avatar > ShootAvatar\n    nokey >\n    withkey >\n  wall > Immovable\n  key > Immovable\n",
        )
        .unwrap()
    }

    fn wall_hit(d: &GameDescription, x: i32, y: i32, dir: Dir, state: &str) -> Interaction {
        Interaction {
            eta0: d.id("avatar").unwrap(),
            eta1: d.id("wall").unwrap(),
            pos: Pos::new(x, y),
            dir,
            kind: InteractionType::Move,
            avatar_state: d.id(state).unwrap(),
            mover: Mover::Avatar,
        }
    }

    #[test]
    fn layer_order() {
        assert_eq!(layer_index(InteractionType::Move, Dir::Up, Mover::Avatar), 0);
        assert_eq!(layer_index(InteractionType::Use, Dir::Right, Mover::Avatar), 7);
        assert_eq!(layer_index(InteractionType::Move, Dir::Left, Mover::Other), 10);
    }

    #[test]
    fn matching_is_componentwise() {
        let d = desc();
        let wall = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::Each, 1);
        let fs = FeatureSet::compile(&d, vec![wall]).unwrap();
        assert_eq!(fs.match_feature(&wall_hit(&d, 2, 0, Dir::Up, "nokey")), Some(0));
        assert_eq!(fs.match_feature(&wall_hit(&d, 2, 0, Dir::Up, "withkey")), None);
        let mut key_touch = wall_hit(&d, 2, 0, Dir::Up, "nokey");
        key_touch.eta1 = d.id("key").unwrap();
        assert_eq!(fs.match_feature(&key_touch), None);
    }

    #[test]
    fn ambiguous_methods_rejected() {
        let d = desc();
        let k = FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey");
        let err = FeatureSet::compile(
            &d,
            vec![Feature::<f64>::concrete(k.clone(), 1.0, Method::Each, 1), Feature::concrete(k, 1.0, Method::All, 1)],
        )
        .unwrap_err();
        assert_eq!(err, FeatureError::Ambiguous(0, 1));
    }

    #[test]
    fn rep_window_and_all_method() {
        let d = desc();
        let f = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::All, 1);
        let mut is = InteractionState::new(6, 7);
        let z = wall_hit(&d, 2, 0, Dir::Up, "nokey");
        assert_eq!(is.apply_interaction(&z, 0, &f), 1.0);
        for l in 0..4 {
            assert_eq!(is.get(0, l, 2, 0), 1);
        }
        assert_eq!(is.get(0, 4, 2, 0), 0);
        assert_eq!(is.apply_interaction(&z, 0, &f), 0.0);
        assert_eq!(is.get(0, 0, 2, 0), 2);
        is.reset();
        assert_eq!(is.apply_interaction(&z, 0, &f), 1.0);
    }

    #[test]
    fn each_updates_one_cell() {
        let d = desc();
        let f = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::Each, 1);
        let mut is = InteractionState::new(6, 7);
        is.apply_interaction(&wall_hit(&d, 3, 4, Dir::Down, "nokey"), 0, &f);
        assert_eq!(is.get(0, 1, 3, 4), 1);
        assert_eq!(is.get(0, 0, 3, 4), 0);
        assert_eq!(is.apply_interaction(&wall_hit(&d, 3, 4, Dir::Left, "nokey"), 0, &f), 1.0);
        assert_eq!(is.count_feature(0, &f), 1);
    }

    #[test]
    fn step_reward_with_default_penalty() {
        let d = desc();
        let f = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::All, 1);
        let fs = FeatureSet::compile(&d, vec![f]).unwrap();
        let mut is = InteractionState::new(6, 7);
        assert_eq!(is.step_reward::<f64>(&[], &fs, -1.0), 0.0);
        let mut floor = wall_hit(&d, 1, 1, Dir::Up, "nokey");
        floor.eta1 = d.id("floor").unwrap();
        let r = is.step_reward(&[wall_hit(&d, 2, 0, Dir::Up, "nokey"), floor], &fs, -1.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn off_grid_is_not_counted() {
        let d = desc();
        let f = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::All, 1);
        let mut is = InteractionState::new(6, 7);
        assert_eq!(is.apply_interaction(&wall_hit(&d, -1, 0, Dir::Left, "nokey"), 0, &f), 0.0);
        assert!(is.is_empty());
    }

    #[test]
    fn hash_tracks_content() {
        let d = desc();
        let f = Feature::<f64>::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::Each, 3);
        let mut a = InteractionState::new(6, 7);
        let mut b = InteractionState::new(6, 7);
        a.apply_interaction(&wall_hit(&d, 1, 0, Dir::Up, "nokey"), 0, &f);
        a.apply_interaction(&wall_hit(&d, 2, 0, Dir::Up, "nokey"), 0, &f);
        b.apply_interaction(&wall_hit(&d, 2, 0, Dir::Up, "nokey"), 0, &f);
        b.apply_interaction(&wall_hit(&d, 1, 0, Dir::Up, "nokey"), 0, &f);
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        b.apply_interaction(&wall_hit(&d, 1, 0, Dir::Up, "nokey"), 0, &f);
        assert_ne!(a.hash(), b.hash());
        b.reset();
        assert_eq!(b.hash(), 0);
    }
}
