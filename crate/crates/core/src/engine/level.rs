use arrayvec::ArrayVec;

use super::{mix64, Dir, GameDescription, ParseError, Pos, SpriteId, Status};

pub const CELL_CAPACITY: usize = 8;

/// Non-avatar sprites in one cell, kept sorted by id.
pub type Cell = ArrayVec<SpriteId, CELL_CAPACITY>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Avatar {
    pub pos: Pos,
    pub dir: Dir,
    pub state: SpriteId,
    pub alive: bool,
}

#[derive(Clone, Debug)]
pub struct GameState {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub avatar: Avatar,
    pub tick: u32,
    pub status: Status,
    pub use_enabled: bool,
}

impl PartialEq for GameState {
    /// Tick is bookkeeping, not board content.
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.avatar == other.avatar
            && self.status == other.status
            && self.cells == other.cells
    }
}

impl Eq for GameState {}

impl GameState {
    pub fn new(width: usize, height: usize, avatar: Avatar) -> Self {
        Self {
            width,
            height,
            cells: vec![Cell::new(); width * height],
            avatar,
            tick: 0,
            status: Status::Running,
            use_enabled: false,
        }
    }

    #[inline]
    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    #[inline]
    fn index(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    /// Sprites at `p`; empty outside the grid.
    pub fn cell(&self, p: Pos) -> &[SpriteId] {
        if self.in_bounds(p) {
            &self.cells[self.index(p)]
        } else {
            &[]
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (Pos, &[SpriteId])> {
        self.cells.iter().enumerate().map(move |(i, c)| {
            (Pos::new((i % self.width) as i32, (i / self.width) as i32), c.as_slice())
        })
    }

    /// Inserts a sprite; returns false when the cell is full or off-grid.
    pub fn add(&mut self, p: Pos, id: SpriteId) -> bool {
        if !self.in_bounds(p) {
            return false;
        }
        let i = self.index(p);
        let cell = &mut self.cells[i];
        if cell.is_full() {
            log::warn!("cell {p} is full, dropping sprite {}", id.0);
            return false;
        }
        let at = cell.iter().position(|&s| s > id).unwrap_or(cell.len());
        cell.insert(at, id);
        true
    }

    /// Removes one instance of `id` at `p`.
    pub fn remove(&mut self, p: Pos, id: SpriteId) -> bool {
        if !self.in_bounds(p) {
            return false;
        }
        let i = self.index(p);
        let cell = &mut self.cells[i];
        match cell.iter().position(|&s| s == id) {
            Some(at) => {
                cell.remove(at);
                true
            }
            None => false,
        }
    }

    /// Number of sprites that are `class` or descend from it, avatar included.
    pub fn count(&self, desc: &GameDescription, class: SpriteId) -> usize {
        let on_board: usize = self
            .cells
            .iter()
            .map(|c| c.iter().filter(|&&s| desc.is_a(s, class)).count())
            .sum();
        on_board + usize::from(self.avatar.alive && desc.is_a(self.avatar.state, class))
    }

    pub fn avatar_in_grid(&self) -> bool {
        self.in_bounds(self.avatar.pos)
    }

    /// Hash of the board content, direction and avatar state. Excludes tick.
    pub fn board_hash(&self) -> u64 {
        let mut h = mix64(self.width as u64 ^ ((self.height as u64) << 16));
        for (i, c) in self.cells.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            for &sp in c.iter() {
                h = mix64(h ^ ((i as u64) << 8 | (sp.0 as u64 + 1)));
            }
        }
        let a = &self.avatar;
        let av = (a.pos.x as i64 as u64 & 0xFFFF)
            | ((a.pos.y as i64 as u64 & 0xFFFF) << 16)
            | ((a.dir as u64) << 32)
            | ((a.state.0 as u64) << 36)
            | ((a.alive as u64) << 44)
            | ((self.status as u64) << 45);
        mix64(h ^ mix64(av))
    }

    /// Text rendering: one glyph per cell using the first letter of the top sprite.
    pub fn render(&self, desc: &GameDescription) -> String {
        let mut out = String::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let p = Pos::new(x, y);
                if self.avatar.alive && self.avatar.pos == p {
                    out.push('A');
                    continue;
                }
                let ch = self
                    .cell(p)
                    .iter()
                    .rev()
                    .map(|&s| desc.name(s))
                    .find(|n| *n != "floor")
                    .and_then(|n| n.chars().next())
                    .unwrap_or('.');
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the initial state for a level grid.
pub fn parse_level(text: &str, desc: &GameDescription) -> Result<GameState, ParseError> {
    let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
    if rows.is_empty() {
        return Err(ParseError::new(1, 1, "empty level"));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut avatar: Option<Avatar> = None;
    let placeholder = Avatar { pos: Pos::new(0, 0), dir: Dir::Down, state: desc.avatar_root(), alive: true };
    let mut state = GameState::new(width, height, placeholder);
    for (y, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(ParseError::new(y + 1, 1, format!("row has {} cells, expected {width}", row.chars().count())));
        }
        for (x, c) in row.chars().enumerate() {
            let ids = desc
                .mapping
                .get(&c)
                .ok_or_else(|| ParseError::new(y + 1, x + 1, format!("unmapped character `{c}`")))?;
            let p = Pos::new(x as i32, y as i32);
            for &id in ids {
                if desc.is_avatar(id) {
                    if avatar.is_some() {
                        return Err(ParseError::new(y + 1, x + 1, "multiple avatars"));
                    }
                    let st = if desc.sprite(id).children.is_empty() { id } else { desc.avatar_states()[0] };
                    avatar = Some(Avatar { pos: p, dir: Dir::Down, state: st, alive: true });
                } else if !state.add(p, id) {
                    return Err(ParseError::new(y + 1, x + 1, "too many sprites in one cell"));
                }
            }
        }
    }
    state.avatar = avatar.ok_or_else(|| ParseError::new(1, 1, "missing avatar"))?;
    Ok(state)
}
