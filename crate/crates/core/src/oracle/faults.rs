//! Fault seeding on description text and bug deduplication.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{parse_description, GameDescription, ParseError};

pub const FAULT_FILE_VERSION: u32 = 1;
const SECTIONS: [&str; 4] = ["SpriteSet", "LevelMapping", "InteractionSet", "TerminationSet"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FaultError {
    #[error("fault file: {0}")]
    Format(String),
    #[error("{name}: target `{target}` matches {found} rules")]
    Locate { name: String, target: String, found: usize },
    #[error("{name}: {message}")]
    Inapplicable { name: String, message: String },
    #[error("{name}: mutant does not parse: {source}")]
    Invalid { name: String, source: ParseError },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Top,
    #[default]
    Bottom,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "operator", rename_all = "snake_case")]
pub enum FaultOp {
    RemoveRule { target: String },
    /// Swaps the first two sprites of the rule.
    SwapSpriteOrder { target: String },
    RenameSpriteInRule { target: String, from: String, to: String },
    AddFallaciousRule {
        rule: String,
        #[serde(default)]
        position: Placement,
    },
}

impl FaultOp {
    pub fn short(&self) -> &'static str {
        match self {
            FaultOp::RemoveRule { .. } => "remove",
            FaultOp::SwapSpriteOrder { .. } => "swap",
            FaultOp::RenameSpriteInRule { .. } => "rename",
            FaultOp::AddFallaciousRule { .. } => "add",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessSpec {
    pub level: u32,
    pub actions: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub name: String,
    #[serde(flatten)]
    pub op: FaultOp,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct FaultFile {
    version: u32,
    #[serde(default)]
    faults: Vec<FaultSpec>,
}

pub fn parse_faults(text: &str) -> Result<Vec<FaultSpec>, FaultError> {
    let f: FaultFile = toml::from_str(text).map_err(|e| FaultError::Format(e.to_string()))?;
    if f.version != FAULT_FILE_VERSION {
        return Err(FaultError::Format(format!("unsupported version {}", f.version)));
    }
    Ok(f.faults)
}

pub fn faults_to_toml(faults: &[FaultSpec]) -> String {
    toml::to_string(&FaultFile { version: FAULT_FILE_VERSION, faults: faults.to_vec() }).expect("faults serialize")
}

/// Where and how a mutant differs from its source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultManifest {
    /// Stable key: operator, source line and payload.
    pub id: String,
    pub name: String,
    pub operator: String,
    pub line: usize,
    pub before: Option<String>,
    pub after: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mutant {
    pub source: String,
    pub manifest: FaultManifest,
}

fn is_section(line: &str) -> bool {
    let t = line.trim();
    SECTIONS.iter().any(|s| t == *s)
}

/// Zero-based indices of the rule lines in the InteractionSet section.
fn rule_lines(lines: &[&str]) -> (usize, Vec<usize>) {
    let Some(start) = lines.iter().position(|l| l.trim() == "InteractionSet") else {
        return (lines.len(), Vec::new());
    };
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate().skip(start + 1) {
        if is_section(l) {
            break;
        }
        if l.contains('>') && !l.trim().is_empty() {
            out.push(i);
        }
    }
    (start, out)
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn locate(name: &str, lines: &[&str], target: &str) -> Result<usize, FaultError> {
    let want = tokens(target);
    let (_, rules) = rule_lines(lines);
    let hits: Vec<usize> = rules.into_iter().filter(|&i| tokens(lines[i]).starts_with(&want)).collect();
    match hits.as_slice() {
        [one] => Ok(*one),
        _ => Err(FaultError::Locate { name: name.into(), target: target.into(), found: hits.len() }),
    }
}

fn indent_of(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

fn rebuild(indent: &str, head: &[String], tail: &str) -> String {
    format!("{indent}{} > {}", head.join(" "), tail.trim())
}

/// Applies one fault to a description source and checks the mutant parses.
pub fn apply_fault(source: &str, spec: &FaultSpec) -> Result<Mutant, FaultError> {
    let lines: Vec<&str> = source.lines().collect();
    let name = spec.name.as_str();
    let inapplicable = |m: &str| FaultError::Inapplicable { name: name.into(), message: m.into() };
    let mut out: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    let (line, before, after, suffix) = match &spec.op {
        FaultOp::RemoveRule { target } => {
            let i = locate(name, &lines, target)?;
            out.remove(i);
            (i, Some(lines[i].trim().to_string()), None, String::new())
        }
        FaultOp::SwapSpriteOrder { target } => {
            let i = locate(name, &lines, target)?;
            let (head, tail) = lines[i].split_once('>').expect("rule line");
            let mut h: Vec<String> = tokens(head).into_iter().map(String::from).collect();
            if h.len() < 2 {
                return Err(inapplicable("rule names a single sprite"));
            }
            h.swap(0, 1);
            out[i] = rebuild(indent_of(lines[i]), &h, tail);
            (i, Some(lines[i].trim().to_string()), Some(out[i].trim().to_string()), String::new())
        }
        FaultOp::RenameSpriteInRule { target, from, to } => {
            let i = locate(name, &lines, target)?;
            let (head, tail) = lines[i].split_once('>').expect("rule line");
            let mut h: Vec<String> = tokens(head).into_iter().map(String::from).collect();
            let at = h.iter().position(|t| t == from).ok_or_else(|| inapplicable(&format!("`{from}` not in rule")))?;
            h[at] = to.clone();
            out[i] = rebuild(indent_of(lines[i]), &h, tail);
            (i, Some(lines[i].trim().to_string()), Some(out[i].trim().to_string()), format!(":{from}>{to}"))
        }
        FaultOp::AddFallaciousRule { rule, position } => {
            let (start, rules) = rule_lines(&lines);
            if start == lines.len() {
                return Err(inapplicable("no InteractionSet section"));
            }
            let indent = rules.first().map(|&i| indent_of(lines[i]).to_string()).unwrap_or_else(|| {
                format!("{}  ", indent_of(lines[start]))
            });
            let at = match (position, rules.first(), rules.last()) {
                (Placement::Top, Some(&f), _) => f,
                (Placement::Bottom, _, Some(&l)) => l + 1,
                _ => start + 1,
            };
            let text = format!("{indent}{}", tokens(rule).join(" "));
            out.insert(at, text);
            let key = tokens(rule).iter().take_while(|t| **t != ">").copied().collect::<Vec<_>>().join(".");
            (at, None, Some(tokens(rule).join(" ")), format!(":{key}"))
        }
    };
    let mut text = out.join("\n");
    if source.ends_with('\n') {
        text.push('\n');
    }
    parse_description(&text).map_err(|e| FaultError::Invalid { name: name.into(), source: e })?;
    let operator = spec.op.short().to_string();
    let id = format!("{operator}@L{}{suffix}", line + 1);
    Ok(Mutant { source: text, manifest: FaultManifest { id, name: name.into(), operator, line: line + 1, before, after } })
}

/// Applies each spec to `source`, one fault per mutant.
pub fn seed_faults(source: &str, specs: &[FaultSpec]) -> Result<Vec<Mutant>, FaultError> {
    specs.iter().map(|s| apply_fault(source, s)).collect()
}

/// Draws `n` distinct applicable faults from the four operator families.
pub fn random_faults<R: Rng>(source: &str, desc: &GameDescription, rng: &mut R, n: usize) -> Vec<Mutant> {
    let lines: Vec<&str> = source.lines().collect();
    let (_, rules) = rule_lines(&lines);
    let names: Vec<String> = desc.sprite_names().map(String::from).collect();
    let leaves: Vec<String> = desc.leaves().map(|i| desc.name(i).to_string()).collect();
    let effects = ["killSprite", "stepBack", "killBoth"];
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < n && attempts < n * 50 {
        attempts += 1;
        let k = out.len() + 1;
        let pick_rule = |rng: &mut R| -> Option<(String, Vec<String>)> {
            let &i = rules.choose(rng)?;
            let head: Vec<String> = tokens(lines[i].split_once('>')?.0).into_iter().map(String::from).collect();
            let full = tokens(lines[i]).join(" ");
            Some((full, head))
        };
        let op = match rng.gen_range(0..4) {
            0 => pick_rule(rng).map(|(t, _)| FaultOp::RemoveRule { target: t }),
            1 => pick_rule(rng).map(|(t, _)| FaultOp::SwapSpriteOrder { target: t }),
            2 => pick_rule(rng).and_then(|(t, head)| {
                let from = head.choose(rng)?.clone();
                let to = names.choose(rng)?.clone();
                (to != from).then_some(FaultOp::RenameSpriteInRule { target: t, from, to })
            }),
            _ => {
                let a = leaves.choose(rng).cloned();
                let b = leaves.choose(rng).cloned();
                match (a, b) {
                    (Some(a), Some(b)) if a != b => Some(FaultOp::AddFallaciousRule {
                        rule: format!("{a} {b} > {}", effects.choose(rng).unwrap()),
                        position: if rng.gen_bool(0.5) { Placement::Top } else { Placement::Bottom },
                    }),
                    _ => None,
                }
            }
        };
        let Some(op) = op else { continue };
        let spec = FaultSpec { name: format!("R{k}"), op, description: String::new(), witness: None };
        if let Ok(m) = apply_fault(source, &spec) {
            if m.source != source && seen.insert(m.manifest.id.clone()) {
                out.push(m);
            }
        }
    }
    out
}

/// One oracle verdict attributed to a seeded fault.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub fault: String,
    pub constraint: String,
    pub tick: u32,
    pub detail: String,
    pub trajectory: String,
}

impl BugReport {
    pub fn to_jsonl(reports: &[BugReport]) -> String {
        reports.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect()
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<BugReport>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

/// Unique faults found among the seeded ones.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub found: BTreeSet<String>,
    pub seeded: usize,
}

impl Detection {
    pub fn rate(&self) -> f64 {
        if self.seeded == 0 {
            0.0
        } else {
            self.found.len() as f64 / self.seeded as f64
        }
    }

    pub fn union(&self, other: &Detection) -> Detection {
        Detection { found: self.found.union(&other.found).cloned().collect(), seeded: self.seeded.max(other.seeded) }
    }
}

/// Collapses reports to one entry per seeded fault.
pub fn dedupe_bugs(reports: &[BugReport], seeded: &[String]) -> Detection {
    let known: BTreeSet<&String> = seeded.iter().collect();
    let found = reports.iter().filter(|r| known.contains(&r.fault)).map(|r| r.fault.clone()).collect();
    Detection { found, seeded: known.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    fn spec(op: FaultOp) -> FaultSpec {
        FaultSpec { name: "t".into(), op, description: String::new(), witness: None }
    }

    #[test]
    fn remove_swap_rename_add() {
        let g = builtin("game_a").unwrap();
        let src = &g.source;
        let m = apply_fault(src, &spec(FaultOp::RemoveRule { target: "avatar wall > stepBack".into() })).unwrap();
        assert_eq!(parse_description(&m.source).unwrap().rules.len(), g.desc.rules.len() - 1);
        assert!(m.manifest.id.starts_with("remove@L"));

        let m = apply_fault(src, &spec(FaultOp::SwapSpriteOrder { target: "nokey key".into() })).unwrap();
        assert_eq!(m.manifest.after.as_deref(), Some("key nokey > transformTo stype=withkey scoreChange=0 killSecond=True"));

        let m = apply_fault(
            src,
            &spec(FaultOp::RenameSpriteInRule { target: "goal2 withkey".into(), from: "withkey".into(), to: "nokey".into() }),
        )
        .unwrap();
        assert!(m.source.contains("goal2 nokey > killSprite"));

        let m = apply_fault(src, &spec(FaultOp::AddFallaciousRule { rule: "goal2 swordkey > killBoth".into(), position: Placement::Bottom })).unwrap();
        let d = parse_description(&m.source).unwrap();
        assert_eq!(d.rules.len(), g.desc.rules.len() + 1);
        assert_eq!(d.rules.last().unwrap().effect.name(), "killBoth");
        let top = apply_fault(src, &spec(FaultOp::AddFallaciousRule { rule: "avatar key > killSprite".into(), position: Placement::Top })).unwrap();
        assert_eq!(parse_description(&top.source).unwrap().rules[0].effect.name(), "killSprite");
    }

    #[test]
    fn bad_targets() {
        let g = builtin("game_a").unwrap();
        let e = apply_fault(&g.source, &spec(FaultOp::RemoveRule { target: "nokey".into() })).unwrap_err();
        assert!(matches!(e, FaultError::Locate { found: 3, .. }));
        let e = apply_fault(&g.source, &spec(FaultOp::RenameSpriteInRule { target: "avatar wall".into(), from: "key".into(), to: "x".into() }))
            .unwrap_err();
        assert!(matches!(e, FaultError::Inapplicable { .. }));
        let e = apply_fault(&g.source, &spec(FaultOp::RenameSpriteInRule { target: "avatar wall".into(), from: "wall".into(), to: "dragon".into() }))
            .unwrap_err();
        assert!(matches!(e, FaultError::Invalid { .. }));
    }

    #[test]
    fn dedupe_counts_unique() {
        let r = |f: &str| BugReport { fault: f.into(), constraint: "C".into(), tick: 1, detail: String::new(), trajectory: String::new() };
        let seeded: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
        assert_eq!(dedupe_bugs(&[], &seeded).rate(), 0.0);
        assert_eq!(dedupe_bugs(&[r("f1"), r("f1")], &seeded).found.len(), 1);
        let nine: Vec<BugReport> = (0..9).map(|i| r(&format!("f{i}"))).collect();
        assert!((dedupe_bugs(&nine, &seeded).rate() - 0.9).abs() < 1e-12);
        let back = BugReport::parse_jsonl(&BugReport::to_jsonl(&nine)).unwrap();
        assert_eq!(back, nine);
    }
}
