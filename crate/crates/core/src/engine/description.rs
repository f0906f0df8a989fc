use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ParseError;

/// Interned sprite name. Ids follow declaration order in the sprite set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpriteId(pub u8);

pub const MAX_SPRITES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpriteKind {
    Immovable,
    Door,
    Passive,
    OrientedFlicker,
    ShootAvatar,
}

impl SpriteKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Immovable" => Self::Immovable,
            "Door" => Self::Door,
            "Passive" => Self::Passive,
            "OrientedFlicker" => Self::OrientedFlicker,
            "ShootAvatar" | "MovingAvatar" => Self::ShootAvatar,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteDecl {
    pub name: String,
    pub parent: Option<SpriteId>,
    /// Declared kind, or the nearest ancestor's when omitted.
    pub kind: Option<SpriteKind>,
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<SpriteId>,
    pub depth: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    StepBack,
    KillSprite,
    KillBoth,
    TransformTo { stype: SpriteId, kill_second: bool },
    Spawn { stype: SpriteId },
    BounceForward,
    UndoAll,
    KillIfFromAboveNotMoving,
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::StepBack => "stepBack",
            Effect::KillSprite => "killSprite",
            Effect::KillBoth => "killBoth",
            Effect::TransformTo { .. } => "transformTo",
            Effect::Spawn { .. } => "spawn",
            Effect::BounceForward => "bounceForward",
            Effect::UndoAll => "undoAll",
            Effect::KillIfFromAboveNotMoving => "killIfFromAboveNotMoving",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub first: SpriteId,
    pub seconds: Vec<SpriteId>,
    pub effect: Effect,
    pub params: BTreeMap<String, String>,
    /// 1-based source line of the rule.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub stype: SpriteId,
    pub limit: usize,
    pub win: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDescription {
    pub sprites: Vec<SpriteDecl>,
    pub rules: Vec<Rule>,
    pub mapping: BTreeMap<char, Vec<SpriteId>>,
    pub terminations: Vec<Termination>,
    /// Bit `j` of entry `i` is set when sprite `i` is `j` or descends from it.
    ancestors: Vec<u64>,
    avatar_root: SpriteId,
    avatar_states: Vec<SpriteId>,
    by_name: BTreeMap<String, SpriteId>,
}

impl GameDescription {
    pub fn id(&self, name: &str) -> Option<SpriteId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: SpriteId) -> &str {
        &self.sprites[id.0 as usize].name
    }

    pub fn sprite(&self, id: SpriteId) -> &SpriteDecl {
        &self.sprites[id.0 as usize]
    }

    #[inline]
    pub fn is_a(&self, id: SpriteId, class: SpriteId) -> bool {
        self.ancestors[id.0 as usize] & (1u64 << class.0) != 0
    }

    pub fn kind(&self, id: SpriteId) -> Option<SpriteKind> {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let d = self.sprite(c);
            if d.kind.is_some() {
                return d.kind;
            }
            cur = d.parent;
        }
        None
    }

    pub fn attr(&self, id: SpriteId, key: &str) -> Option<&str> {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let d = self.sprite(c);
            if let Some(v) = d.attrs.get(key) {
                return Some(v);
            }
            cur = d.parent;
        }
        None
    }

    pub fn avatar_root(&self) -> SpriteId {
        self.avatar_root
    }

    pub fn avatar_states(&self) -> &[SpriteId] {
        &self.avatar_states
    }

    pub fn is_avatar(&self, id: SpriteId) -> bool {
        self.is_a(id, self.avatar_root)
    }

    /// Sprites an agent can displace on its own: the avatar subtree and
    /// anything declared under a `movable` class.
    pub fn is_movable(&self, id: SpriteId) -> bool {
        if self.is_avatar(id) {
            return true;
        }
        match self.id("movable") {
            Some(m) => self.is_a(id, m),
            None => false,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = SpriteId> + '_ {
        self.sprites
            .iter()
            .enumerate()
            .filter(|(_, d)| d.children.is_empty())
            .map(|(i, _)| SpriteId(i as u8))
    }

    /// Sword sprite spawned by Use in the given avatar state.
    pub fn sword_for(&self, state: SpriteId) -> Option<SpriteId> {
        self.attr(state, "stype").and_then(|n| self.id(n))
    }

    /// Name used for the first sprite of avatar interactions.
    pub fn avatar_name(&self) -> &str {
        self.name(self.avatar_root)
    }

    pub fn sprite_names(&self) -> impl Iterator<Item = &str> {
        self.sprites.iter().map(|d| d.name.as_str())
    }
}

impl fmt::Display for GameDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BasicGame")?;
        writeln!(f, "  SpriteSet")?;
        for d in &self.sprites {
            write!(f, "{}{} >", "  ".repeat(2 + d.depth as usize), d.name)?;
            if let Some(k) = d.kind {
                write!(f, " {k:?}")?;
            }
            for (k, v) in &d.attrs {
                write!(f, " {k}={v}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "  LevelMapping")?;
        for (c, ids) in &self.mapping {
            let names: Vec<_> = ids.iter().map(|&i| self.name(i)).collect();
            writeln!(f, "    {c} > {}", names.join(" "))?;
        }
        writeln!(f, "  InteractionSet")?;
        for r in &self.rules {
            let seconds: Vec<_> = r.seconds.iter().map(|&i| self.name(i)).collect();
            write!(f, "    {} {} > {}", self.name(r.first), seconds.join(" "), r.effect.name())?;
            for (k, v) in &r.params {
                write!(f, " {k}={v}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "  TerminationSet")?;
        for t in &self.terminations {
            writeln!(
                f,
                "    SpriteCounter stype={} limit={} win={}",
                self.name(t.stype),
                t.limit,
                if t.win { "True" } else { "False" }
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Sprites,
    Interactions,
    Mapping,
    Terminations,
}

struct RawRule {
    names: Vec<(String, usize)>,
    effect: (String, usize),
    params: Vec<(String, String)>,
    line: usize,
    indent: usize,
}

fn indent_of(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

/// Splits a line into (token, 1-based column) pairs.
fn tokens(line: &str) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((&line[s..i], s + 1));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((&line[s..], s + 1));
    }
    out
}

fn split_kv(tok: &str) -> Option<(&str, &str)> {
    let (k, v) = tok.split_once('=')?;
    if k.is_empty() {
        return None;
    }
    Some((k, v))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Parses a game description in the supported VGDL subset.
pub fn parse_description(text: &str) -> Result<GameDescription, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::new(1, 1, "empty description"));
    }
    let mut section = Section::None;
    let mut section_indent = 0usize;
    let mut sprites: Vec<SpriteDecl> = Vec::new();
    let mut by_name: BTreeMap<String, SpriteId> = BTreeMap::new();
    // (indent, id) for the chain of open sprite blocks
    let mut stack: Vec<(usize, SpriteId)> = Vec::new();
    let mut raw_rules: Vec<RawRule> = Vec::new();
    let mut raw_mapping: Vec<(char, Vec<(String, usize)>, usize)> = Vec::new();
    let mut raw_terms: Vec<(String, usize, usize, bool, usize)> = Vec::new();

    for (lineno0, raw_line) in text.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        let indent = indent_of(line);
        let toks = tokens(line);
        let head = toks[0].0;
        let new_section = match head {
            "SpriteSet" => Some(Section::Sprites),
            "InteractionSet" => Some(Section::Interactions),
            "LevelMapping" => Some(Section::Mapping),
            "TerminationSet" => Some(Section::Terminations),
            _ => None,
        };
        if let Some(s) = new_section {
            if toks.len() > 1 {
                return Err(ParseError::new(lineno, toks[1].1, "unexpected token after section header"));
            }
            section = s;
            section_indent = indent;
            stack.clear();
            continue;
        }
        if head == "BasicGame" {
            section = Section::None;
            continue;
        }
        if section == Section::None || indent <= section_indent && section != Section::None {
            if section == Section::None {
                return Err(ParseError::new(lineno, toks[0].1, format!("unexpected `{head}` outside a section")));
            }
            return Err(ParseError::new(lineno, toks[0].1, "entry must be indented under its section"));
        }
        match section {
            Section::Sprites => {
                let Some(gt) = toks.iter().position(|t| t.0 == ">") else {
                    return Err(ParseError::new(lineno, toks[0].1, "expected `name > ...` in SpriteSet"));
                };
                if gt != 1 {
                    return Err(ParseError::new(lineno, toks[0].1, "sprite declaration takes exactly one name"));
                }
                let name = head.to_string();
                if by_name.contains_key(&name) {
                    return Err(ParseError::new(lineno, toks[0].1, format!("duplicate sprite `{name}`")));
                }
                if sprites.len() >= MAX_SPRITES {
                    return Err(ParseError::new(lineno, toks[0].1, "too many sprites"));
                }
                while stack.last().is_some_and(|&(ind, _)| ind >= indent) {
                    stack.pop();
                }
                let parent = stack.last().map(|&(_, id)| id);
                let mut kind = None;
                let mut attrs = BTreeMap::new();
                for (i, &(tok, col)) in toks.iter().enumerate().skip(2) {
                    match split_kv(tok) {
                        Some((k, v)) => {
                            attrs.insert(k.to_string(), v.to_string());
                        }
                        None if i == 2 => {
                            kind = Some(SpriteKind::parse(tok).ok_or_else(|| {
                                ParseError::new(lineno, col, format!("unknown sprite kind `{tok}`"))
                            })?);
                        }
                        None => {
                            return Err(ParseError::new(lineno, col, format!("expected key=value, found `{tok}`")));
                        }
                    }
                }
                let id = SpriteId(sprites.len() as u8);
                let depth = stack.len() as u8;
                if let Some(p) = parent {
                    sprites[p.0 as usize].children.push(id);
                }
                sprites.push(SpriteDecl { name: name.clone(), parent, kind, attrs, children: Vec::new(), depth });
                by_name.insert(name, id);
                stack.push((indent, id));
            }
            Section::Interactions => {
                match toks.iter().position(|t| t.0 == ">") {
                    None => {
                        // continuation of the previous rule's parameters
                        let Some(prev) = raw_rules.last_mut().filter(|r| indent > r.indent) else {
                            return Err(ParseError::new(lineno, toks[0].1, "expected `a b > effect`"));
                        };
                        for &(tok, col) in &toks {
                            let (k, v) = split_kv(tok)
                                .ok_or_else(|| ParseError::new(lineno, col, format!("expected key=value, found `{tok}`")))?;
                            prev.params.push((k.to_string(), v.to_string()));
                        }
                    }
                    Some(gt) => {
                        if gt < 2 {
                            return Err(ParseError::new(lineno, toks[0].1, "interaction needs at least two sprites"));
                        }
                        let Some(&(eff, ecol)) = toks.get(gt + 1) else {
                            let col = toks[gt].1 + 1;
                            return Err(ParseError::new(lineno, col, "missing effect"));
                        };
                        let mut params = Vec::new();
                        for &(tok, col) in &toks[gt + 2..] {
                            let (k, v) = split_kv(tok)
                                .ok_or_else(|| ParseError::new(lineno, col, format!("expected key=value, found `{tok}`")))?;
                            params.push((k.to_string(), v.to_string()));
                        }
                        raw_rules.push(RawRule {
                            names: toks[..gt].iter().map(|&(t, c)| (t.to_string(), c)).collect(),
                            effect: (eff.to_string(), ecol),
                            params,
                            line: lineno,
                            indent,
                        });
                    }
                }
            }
            Section::Mapping => {
                if toks.len() < 3 || toks[1].0 != ">" {
                    return Err(ParseError::new(lineno, toks[0].1, "expected `c > sprite ...`"));
                }
                let mut chars = head.chars();
                let c = chars.next().unwrap();
                if chars.next().is_some() {
                    return Err(ParseError::new(lineno, toks[0].1, "mapping key must be a single character"));
                }
                if raw_mapping.iter().any(|m| m.0 == c) {
                    return Err(ParseError::new(lineno, toks[0].1, format!("duplicate mapping for `{c}`")));
                }
                let names = toks[2..].iter().map(|&(t, col)| (t.to_string(), col)).collect();
                raw_mapping.push((c, names, lineno));
            }
            Section::Terminations => {
                if head != "SpriteCounter" {
                    return Err(ParseError::new(lineno, toks[0].1, format!("unsupported termination `{head}`")));
                }
                let mut stype = None;
                let mut limit = 0usize;
                let mut win = None;
                for &(tok, col) in &toks[1..] {
                    let (k, v) = split_kv(tok)
                        .ok_or_else(|| ParseError::new(lineno, col, format!("expected key=value, found `{tok}`")))?;
                    match k {
                        "stype" => stype = Some((v.to_string(), col)),
                        "limit" => {
                            limit = v.parse().map_err(|_| ParseError::new(lineno, col, "limit must be an integer"))?
                        }
                        "win" => win = Some(parse_bool(v).ok_or_else(|| ParseError::new(lineno, col, "win must be True or False"))?),
                        "scoreChange" => {}
                        _ => return Err(ParseError::new(lineno, col, format!("unknown termination parameter `{k}`"))),
                    }
                }
                let (stype, scol) = stype.ok_or_else(|| ParseError::new(lineno, toks[0].1, "SpriteCounter needs stype"))?;
                let win = win.ok_or_else(|| ParseError::new(lineno, toks[0].1, "SpriteCounter needs win"))?;
                raw_terms.push((stype, scol, limit, win, lineno));
            }
            Section::None => unreachable!(),
        }
    }

    if sprites.is_empty() {
        return Err(ParseError::new(1, 1, "missing SpriteSet"));
    }

    let lookup = |name: &str, line: usize, col: usize| -> Result<SpriteId, ParseError> {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::new(line, col, format!("undeclared sprite `{name}`")))
    };

    let mut ancestors = vec![0u64; sprites.len()];
    for i in 0..sprites.len() {
        let mut cur = Some(SpriteId(i as u8));
        while let Some(c) = cur {
            ancestors[i] |= 1u64 << c.0;
            cur = sprites[c.0 as usize].parent;
        }
    }

    let avatar_root = sprites
        .iter()
        .position(|d| d.kind == Some(SpriteKind::ShootAvatar))
        .map(|i| SpriteId(i as u8))
        .ok_or_else(|| ParseError::new(1, 1, "missing avatar"))?;
    let avatar_states: Vec<SpriteId> = (0..sprites.len())
        .map(|i| SpriteId(i as u8))
        .filter(|&id| ancestors[id.0 as usize] & (1u64 << avatar_root.0) != 0 && sprites[id.0 as usize].children.is_empty())
        .collect();

    let mut rules = Vec::with_capacity(raw_rules.len());
    for rr in raw_rules {
        let first = lookup(&rr.names[0].0, rr.line, rr.names[0].1)?;
        let seconds = rr.names[1..]
            .iter()
            .map(|(n, c)| lookup(n, rr.line, *c))
            .collect::<Result<Vec<_>, _>>()?;
        let params: BTreeMap<String, String> = rr.params.into_iter().collect();
        let stype = |required: bool| -> Result<Option<SpriteId>, ParseError> {
            match params.get("stype") {
                Some(n) => lookup(n, rr.line, rr.effect.1).map(Some),
                None if required => Err(ParseError::new(rr.line, rr.effect.1, format!("`{}` needs stype", rr.effect.0))),
                None => Ok(None),
            }
        };
        let effect = match rr.effect.0.as_str() {
            "stepBack" => Effect::StepBack,
            "killSprite" => Effect::KillSprite,
            "killBoth" => Effect::KillBoth,
            "transformTo" => {
                let kill_second = match params.get("killSecond") {
                    Some(v) => parse_bool(v)
                        .ok_or_else(|| ParseError::new(rr.line, rr.effect.1, "killSecond must be True or False"))?,
                    None => false,
                };
                Effect::TransformTo { stype: stype(true)?.unwrap(), kill_second }
            }
            "spawn" => Effect::Spawn { stype: stype(true)?.unwrap() },
            "bounceForward" => Effect::BounceForward,
            "undoAll" => Effect::UndoAll,
            "killIfFromAboveNotMoving" => Effect::KillIfFromAboveNotMoving,
            other => {
                return Err(ParseError::new(rr.line, rr.effect.1, format!("unknown effect `{other}`")));
            }
        };
        rules.push(Rule { first, seconds, effect, params, line: rr.line });
    }

    let mut mapping = BTreeMap::new();
    for (c, names, line) in raw_mapping {
        let ids = names
            .iter()
            .map(|(n, col)| lookup(n, line, *col))
            .collect::<Result<Vec<_>, _>>()?;
        mapping.insert(c, ids);
    }

    let mut terminations = Vec::new();
    for (stype, col, limit, win, line) in raw_terms {
        terminations.push(Termination { stype: lookup(&stype, line, col)?, limit, win });
    }

    for (i, d) in sprites.iter().enumerate() {
        if let Some(st) = d.attrs.get("stype") {
            if !by_name.contains_key(st) {
                return Err(ParseError::new(1, 1, format!("sprite `{}` references undeclared `{st}`", sprites[i].name)));
            }
        }
    }

    Ok(GameDescription {
        sprites,
        rules,
        mapping,
        terminations,
        ancestors,
        avatar_root,
        avatar_states,
        by_name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SNIPPET: &str = "SpriteSet
  floor > Immovable img=oryx/floor3
  goal  > Door img=oryx/doorclosed1
  key   > Immovable img=oryx/key2
  sword > OrientedFlicker img=oryx/slash1
  movable >
    avatar  > ShootAvatar stype=sword
      nokey   > img=oryx/necromancer1
      withkey > img=oryx/necromancerkey1
  wall > Immovable img=oryx/wall3
InteractionSet
  movable wall > stepBack
  nokey goal   > stepBack
  goal withkey > killSprite
  nokey key    > transformTo stype=withkey
                   killSecond=True
";

    #[test]
    fn snippet_parses_with_continuation() {
        let d = parse_description(SNIPPET).unwrap();
        for n in ["floor", "goal", "key", "sword", "nokey", "withkey", "wall"] {
            assert!(d.id(n).is_some(), "{n}");
        }
        assert_eq!(d.rules.len(), 4);
        assert_eq!(
            d.rules[3].effect,
            Effect::TransformTo { stype: d.id("withkey").unwrap(), kill_second: true }
        );
        assert_eq!(d.name(d.avatar_root()), "avatar");
        assert_eq!(d.avatar_states().len(), 2);
        assert!(d.is_movable(d.id("nokey").unwrap()));
        assert!(!d.is_movable(d.id("wall").unwrap()));
        assert_eq!(d.sword_for(d.id("withkey").unwrap()), d.id("sword"));
    }

    #[test]
    fn empty_interaction_set() {
        let d = parse_description("SpriteSet\n  avatar > ShootAvatar\nInteractionSet\n").unwrap();
        assert!(d.rules.is_empty());
        assert_eq!(d.avatar_states(), &[SpriteId(0)]);
    }

    #[test]
    fn rejects_unknown_effect() {
        let e = parse_description("SpriteSet\n  avatar > ShootAvatar\n  wall > Immovable\nInteractionSet\n  avatar wall > teleport\n")
            .unwrap_err();
        assert_eq!((e.line, e.column), (5, 17));
    }

    #[test]
    fn rejects_undeclared_and_duplicates() {
        let e = parse_description("SpriteSet\n  avatar > ShootAvatar\nInteractionSet\n  avatar lava > stepBack\n").unwrap_err();
        assert!(e.message.contains("lava"));
        assert_eq!(e.column, 10);
        let e = parse_description("SpriteSet\n  avatar > ShootAvatar\n  avatar > Immovable\n").unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = parse_description("SpriteSet\n  wall > Immovable\n").unwrap_err();
        assert!(e.message.contains("avatar"));
    }

    #[test]
    fn display_round_trips() {
        let d = parse_description(SNIPPET).unwrap();
        let again = parse_description(&d.to_string()).unwrap();
        assert_eq!(d.sprites, again.sprites);
        assert_eq!(d.mapping, again.mapping);
        assert_eq!(d.terminations, again.terminations);
        let strip = |g: &GameDescription| -> Vec<_> {
            g.rules.iter().map(|r| (r.first, r.seconds.clone(), r.effect.clone())).collect()
        };
        assert_eq!(strip(&d), strip(&again));
    }
}
