use super::{
    Action, Dir, Effect, EngineError, GameDescription, GameState, Interaction, InteractionType, Mover, Pos, SpriteId,
    Status,
};

/// A rule that fired during a tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FiredRule {
    pub rule: usize,
    pub subject: SpriteId,
    pub object: SpriteId,
    pub pos: Pos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub interactions: Vec<Interaction>,
    pub fired: Vec<FiredRule>,
    pub undone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Avatar,
    Sword,
    Board,
}

#[derive(Clone, Copy, Debug)]
struct Party {
    id: SpriteId,
    pos: Pos,
    role: Role,
    alive: bool,
    from: Option<Pos>,
    dir: Option<Dir>,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    mover: usize,
    other: usize,
}

struct Tick<'a> {
    desc: &'a GameDescription,
    state: &'a mut GameState,
    parties: Vec<Party>,
    out: StepOutcome,
}

impl<'a> Tick<'a> {
    fn party_name(&self, p: &Party) -> SpriteId {
        match p.role {
            Role::Avatar | Role::Sword => self.desc.avatar_root(),
            Role::Board if self.desc.is_avatar(p.id) => self.desc.avatar_root(),
            Role::Board => p.id,
        }
    }

    /// Registers contacts between `mover` and everything else at its position.
    fn touch(&mut self, mover: usize, next: &mut Vec<Contact>) {
        let pos = self.parties[mover].pos;
        let dir = self.parties[mover].dir.unwrap_or(self.state.avatar.dir);
        let role = self.parties[mover].role;
        let kind = if role == Role::Sword { InteractionType::Use } else { InteractionType::Move };
        let who = if role == Role::Board { Mover::Other } else { Mover::Avatar };
        let eta0 = self.party_name(&self.parties[mover]);
        let avatar_state = self.state.avatar.state;

        if !self.state.in_bounds(pos) {
            // outside the grid every cell behaves like bare floor
            if let Some(floor) = self.desc.id("floor") {
                self.out.interactions.push(Interaction { eta0, eta1: floor, pos, dir, kind, avatar_state, mover: who });
            }
            return;
        }

        let mut others: Vec<usize> = Vec::new();
        let cell: Vec<SpriteId> = self.state.cell(pos).to_vec();
        for (j, &id) in cell.iter().enumerate() {
            // the k-th instance of an id in this cell maps to the k-th tracked party
            let k = cell[..j].iter().filter(|&&s| s == id).count();
            let existing = self
                .parties
                .iter()
                .enumerate()
                .filter(|(_, p)| p.alive && p.role == Role::Board && p.pos == pos && p.id == id)
                .map(|(i, _)| i)
                .nth(k);
            let idx = match existing {
                Some(i) => i,
                None => {
                    self.parties.push(Party { id, pos, role: Role::Board, alive: true, from: None, dir: None });
                    self.parties.len() - 1
                }
            };
            if idx != mover {
                others.push(idx);
            }
        }
        if role == Role::Board && self.state.avatar.alive && self.state.avatar.pos == pos {
            others.push(0);
        }
        for o in others {
            let eta1 = self.party_name(&self.parties[o]);
            self.out.interactions.push(Interaction { eta0, eta1, pos, dir, kind, avatar_state, mover: who });
            next.push(Contact { mover, other: o });
        }
    }

    fn kill(&mut self, i: usize) {
        let p = self.parties[i];
        if !p.alive {
            return;
        }
        self.parties[i].alive = false;
        match p.role {
            Role::Avatar => self.state.avatar.alive = false,
            Role::Sword => {}
            Role::Board => {
                self.state.remove(p.pos, p.id);
            }
        }
    }

    fn relocate(&mut self, i: usize, to: Pos) {
        let p = self.parties[i];
        match p.role {
            Role::Avatar => self.state.avatar.pos = to,
            Role::Sword => {}
            Role::Board => {
                self.state.remove(p.pos, p.id);
                self.state.add(to, p.id);
            }
        }
        self.parties[i].pos = to;
    }

    fn transform(&mut self, i: usize, into: SpriteId) {
        let p = self.parties[i];
        let into_avatar = self.desc.is_avatar(into);
        match (p.role, into_avatar) {
            (Role::Avatar, true) => {
                self.state.avatar.state = into;
                self.parties[i].id = into;
            }
            (Role::Avatar, false) => {
                self.kill(i);
                self.state.add(p.pos, into);
            }
            (Role::Board, false) => {
                self.state.remove(p.pos, p.id);
                self.state.add(p.pos, into);
                self.parties[i].id = into;
            }
            (Role::Board, true) | (Role::Sword, true) => {
                self.kill(i);
                if !self.state.avatar.alive {
                    self.state.avatar = super::Avatar { pos: p.pos, dir: Dir::Down, state: into, alive: true };
                    self.parties[0] = Party { id: into, pos: p.pos, role: Role::Avatar, alive: true, from: None, dir: None };
                }
            }
            (Role::Sword, false) => {
                self.kill(i);
                self.state.add(p.pos, into);
            }
        }
    }

    fn undo_all(&mut self) {
        for i in 0..self.parties.len() {
            if let (true, Some(from)) = (self.parties[i].alive, self.parties[i].from) {
                self.relocate(i, from);
                self.parties[i].from = None;
            }
        }
    }

    /// Applies one rule with `s` as the subject. Returns true when the tick is cut short.
    fn apply(&mut self, rule: usize, s: usize, o: usize, mover: usize, next: &mut Vec<Contact>) -> bool {
        let effect = self.desc.rules[rule].effect.clone();
        self.out.fired.push(FiredRule {
            rule,
            subject: self.parties[s].id,
            object: self.parties[o].id,
            pos: self.parties[s].pos,
        });
        match effect {
            Effect::StepBack => {
                if let Some(from) = self.parties[s].from {
                    self.relocate(s, from);
                }
            }
            Effect::KillSprite => self.kill(s),
            Effect::KillBoth => {
                self.kill(s);
                self.kill(o);
            }
            Effect::TransformTo { stype, kill_second } => {
                self.transform(s, stype);
                if kill_second {
                    self.kill(o);
                }
            }
            Effect::Spawn { stype } => {
                let at = self.parties[s].pos;
                self.state.add(at, stype);
            }
            Effect::BounceForward => {
                let (Some(dir), Some(_)) = (self.parties[o].dir, self.parties[o].from) else {
                    return false;
                };
                let to = self.parties[s].pos.offset(dir);
                if !self.state.in_bounds(to) {
                    if let Some(from) = self.parties[o].from {
                        self.relocate(o, from);
                    }
                    return false;
                }
                if self.parties[s].from.is_none() {
                    self.parties[s].from = Some(self.parties[s].pos);
                }
                self.parties[s].dir = Some(dir);
                self.relocate(s, to);
                self.touch(s, next);
            }
            Effect::UndoAll => {
                self.undo_all();
                self.out.undone = true;
                return true;
            }
            Effect::KillIfFromAboveNotMoving => {
                let m = &self.parties[mover];
                if m.from.is_some() && m.dir == Some(Dir::Down) {
                    self.kill(s);
                }
            }
        }
        false
    }

    fn matches(&self, rule: usize, s: usize, o: usize) -> bool {
        let r = &self.desc.rules[rule];
        let (ps, po) = (&self.parties[s], &self.parties[o]);
        ps.alive
            && po.alive
            && self.desc.is_a(ps.id, r.first)
            && r.seconds.iter().any(|&c| self.desc.is_a(po.id, c))
            && self.state.in_bounds(ps.pos)
    }

    fn resolve(&mut self, mut batch: Vec<Contact>) {
        while !batch.is_empty() {
            let mut next = Vec::new();
            for rule in 0..self.desc.rules.len() {
                for c in &batch {
                    for (s, o) in [(c.mover, c.other), (c.other, c.mover)] {
                        if self.matches(rule, s, o) && self.apply(rule, s, o, c.mover, &mut next) {
                            return;
                        }
                    }
                }
            }
            batch = next;
        }
    }
}

/// Advances `state` by one action and reports every contact of the tick.
pub fn step(desc: &GameDescription, state: &mut GameState, action: Action) -> Result<StepOutcome, EngineError> {
    if state.status != Status::Running {
        return Err(EngineError::Terminal(state.status));
    }
    if action == Action::Use && !state.use_enabled {
        return Err(EngineError::UseUnavailable);
    }
    state.tick += 1;
    if action == Action::Nil {
        return Ok(StepOutcome::default());
    }
    let av = state.avatar;
    let avatar_party = Party { id: av.state, pos: av.pos, role: Role::Avatar, alive: true, from: None, dir: Some(av.dir) };
    let mut t = Tick { desc, state, parties: vec![avatar_party], out: StepOutcome::default() };
    let mut batch = Vec::new();
    match action.dir() {
        Some(d) => {
            t.state.avatar.dir = d;
            let to = av.pos.offset(d);
            t.parties[0].dir = Some(d);
            t.parties[0].from = Some(av.pos);
            t.relocate(0, to);
            t.touch(0, &mut batch);
        }
        None => {
            let at = av.pos.offset(av.dir);
            if let (Some(sword), true) = (desc.sword_for(av.state), t.state.in_bounds(at)) {
                t.parties.push(Party { id: sword, pos: at, role: Role::Sword, alive: true, from: None, dir: Some(av.dir) });
                t.touch(1, &mut batch);
            }
        }
    }
    t.resolve(batch);
    let out = std::mem::take(&mut t.out);
    drop(t);
    for term in &desc.terminations {
        if state.count(desc, term.stype) <= term.limit {
            state.status = if term.win { Status::Win } else { Status::Lose };
            break;
        }
    }
    Ok(out)
}
