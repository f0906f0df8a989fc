use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cross_entropy, interaction_bins, kl_divergence, EPSILON};
use super::testers::ScriptedTester;
use super::HarnessError;
use crate::agents::{run_goal_sequence, AgentConfig, AgentKind};
use crate::engine::{encode_actions, mix64, Action};
use crate::fixtures::{resolve, Game};
use crate::irl::{mgp_irl, IrlConfig};
use crate::oracle::{judge, seed_faults, BugReport, Detection, Violation};
use crate::scenario::{synthetic_goals, GoalSequence, SyntheticOptions};

pub const REPORT_VERSION: u32 = 1;

/// Where a cell's goals come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Group {
    Synthetic,
    Baseline,
    HumanLike { kappa: f64 },
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Synthetic => f.write_str("synthetic"),
            Group::Baseline => f.write_str("baseline"),
            Group::HumanLike { kappa } => write!(f, "human-like k={kappa}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub group: Group,
    pub agent: AgentKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Builtin game ids or game directories.
    pub games: Vec<String>,
    /// Levels to test; empty means all.
    #[serde(default)]
    pub levels: Vec<u32>,
    pub cells: Vec<CellSpec>,
    #[serde(default = "default_testers")]
    pub testers: Vec<ScriptedTester>,
    /// Runs per MCTS cell; Sarsa cells run once.
    pub repeats: usize,
    pub agent: AgentConfig,
    pub irl: IrlConfig,
    pub seed: u64,
    /// Stop testing a mutant once any run exposes it.
    pub stop_at_first_detection: bool,
    /// Keep every run's actions and verdicts in the report.
    #[serde(default)]
    pub record_runs: bool,
}

fn default_testers() -> Vec<ScriptedTester> {
    ScriptedTester::ALL.to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            games: vec!["game_a".into(), "game_b".into(), "game_c".into()],
            levels: Vec::new(),
            cells: vec![
                CellSpec { group: Group::Synthetic, agent: AgentKind::Sarsa },
                CellSpec { group: Group::Baseline, agent: AgentKind::Sarsa },
            ],
            testers: default_testers(),
            repeats: 5,
            agent: AgentConfig::default(),
            irl: IrlConfig::default(),
            seed: 0,
            stop_at_first_detection: true,
            record_runs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repeats == 0 {
            return Err(HarnessError::Config("repeats must be at least 1".into()));
        }
        if self.agent.lengths.is_empty() {
            return Err(HarnessError::Config("at least one game length is required".into()));
        }
        for c in &self.cells {
            if let Group::HumanLike { kappa } = c.group {
                if !(kappa >= 0.0) {
                    return Err(HarnessError::Config(format!("likelihood threshold must be non-negative, got {kappa}")));
                }
            }
        }
        Ok(())
    }
}

/// One agent run against one mutant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub game: String,
    pub level: u32,
    pub group: Group,
    pub agent: AgentKind,
    pub repeat: usize,
    pub fault: String,
    pub sequence: usize,
    #[serde(with = "crate::engine::action_string")]
    pub actions: Vec<Action>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub game: String,
    pub group: Group,
    pub agent: AgentKind,
    /// Detection per repeat.
    pub repeats: Vec<Detection>,
    /// Union over repeats.
    pub union: Detection,
    pub mean_rate: f64,
    pub runs: usize,
    /// Lengths of the emitted test sequences.
    pub lengths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub game: String,
    pub tester: String,
    pub kappa: f64,
    pub agent: AgentKind,
    /// Held-out level the agent played.
    pub level: u32,
    /// Level the goals were extracted from.
    pub source_level: u32,
    pub cross_entropy: f64,
    pub kl: f64,
    pub goals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub game: String,
    pub tester: String,
    pub level: u32,
    pub kappa: f64,
    pub goals: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub cells: Vec<CellResult>,
    pub similarity: Vec<SimilarityRow>,
    pub splits: Vec<SplitRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bugs: Vec<BugReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunRecord>,
}

/// Goals extracted from one tester trajectory.
#[derive(Clone, Debug)]
pub struct Extracted {
    pub tester: ScriptedTester,
    pub level: u32,
    pub kappa: f64,
    pub sequence: GoalSequence,
}

/// Tester trajectories on every level of `game`, keyed by (tester, level).
pub fn tester_trajectories(game: &Game, testers: &[ScriptedTester]) -> BTreeMap<(ScriptedTester, u32), Vec<Action>> {
    let mut out = BTreeMap::new();
    for &t in testers {
        for l in &game.levels {
            out.insert((t, l.id), t.play(&game.desc, &l.initial));
        }
    }
    out
}

/// MGP-IRL on every tester trajectory at threshold `kappa`.
pub fn extract_all(
    game: &Game,
    trajectories: &BTreeMap<(ScriptedTester, u32), Vec<Action>>,
    kappa: f64,
    cfg: &IrlConfig,
) -> Result<Vec<Extracted>, HarnessError> {
    trajectories
        .par_iter()
        .map(|(&(tester, level), actions)| {
            let initial = &game.level(level)?.initial;
            let ex = mgp_irl(&game.desc, initial, actions, kappa, cfg, tester.name(), level)?;
            Ok(Extracted { tester, level, kappa, sequence: ex.sequence })
        })
        .collect()
}

fn run_seed(base: u64, seq: &GoalSequence, level: u32, repeat: usize) -> u64 {
    base ^ mix64(seq.content_hash()) ^ mix64(((level as u64) << 32) | repeat as u64)
}

struct Prepared {
    /// Goal sequences per level, for the cell's group.
    goals: BTreeMap<u32, Vec<GoalSequence>>,
}

fn prepare(
    game: &Game,
    group: Group,
    levels: &[u32],
    extracted: &BTreeMap<u64, Vec<Extracted>>,
) -> Result<Prepared, HarnessError> {
    let graph = game.graph()?;
    let mut goals = BTreeMap::new();
    for &l in levels {
        let census = &game.level(l)?.initial;
        let seqs = match group {
            Group::Synthetic => synthetic_goals(&graph, &game.desc, census, SyntheticOptions::default())?,
            Group::Baseline => synthetic_goals(&graph, &game.desc, census, SyntheticOptions { modifications: false, ..Default::default() })?,
            Group::HumanLike { kappa } => extracted
                .get(&kappa.to_bits())
                .map(|ex| ex.iter().filter(|e| e.level != l).map(|e| e.sequence.clone()).collect())
                .unwrap_or_default(),
        };
        goals.insert(l, seqs);
    }
    Ok(Prepared { goals })
}

struct FaultOutcome {
    found: Option<BugReport>,
    runs: usize,
    lengths: Vec<usize>,
    records: Vec<RunRecord>,
}

#[allow(clippy::too_many_arguments)]
fn test_fault(
    game: &Game,
    mutant: &Game,
    fault: &str,
    prepared: &Prepared,
    spec: CellSpec,
    repeat: usize,
    cfg: &ExperimentConfig,
) -> Result<FaultOutcome, HarnessError> {
    let constraints = game.constraints()?;
    let graph = game.graph()?;
    let mut out = FaultOutcome { found: None, runs: 0, lengths: Vec::new(), records: Vec::new() };
    for (&level, seqs) in &prepared.goals {
        let initial = &mutant.level(level)?.initial;
        for (si, seq) in seqs.iter().enumerate() {
            let mut acfg = cfg.agent.clone();
            acfg.seed = run_seed(cfg.seed, seq, level, repeat);
            let run = run_goal_sequence(spec.agent, &mutant.desc, initial, &seq.goals, &acfg)?;
            let violations = judge(&mutant.desc, &constraints, Some(&graph), initial, &run.actions)?;
            out.runs += 1;
            out.lengths.push(run.actions.len());
            if out.found.is_none() {
                if let Some(v) = violations.first() {
                    out.found = Some(BugReport {
                        fault: fault.to_string(),
                        constraint: v.constraint.clone(),
                        tick: v.tick,
                        detail: v.detail.clone(),
                        trajectory: format!("{}/L{level}/{}/r{repeat}/s{si}:{}", game.id, spec.agent.name(), encode_actions(&run.actions)),
                    });
                }
            }
            if cfg.record_runs {
                out.records.push(RunRecord {
                    game: game.id.clone(),
                    level,
                    group: spec.group,
                    agent: spec.agent,
                    repeat,
                    fault: fault.to_string(),
                    sequence: si,
                    actions: run.actions.clone(),
                    violations,
                });
            }
            if out.found.is_some() && cfg.stop_at_first_detection {
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Fault detection of one cell on one game.
pub fn run_cell(
    game: &Game,
    spec: CellSpec,
    cfg: &ExperimentConfig,
    extracted: &BTreeMap<u64, Vec<Extracted>>,
) -> Result<(CellResult, Vec<BugReport>, Vec<RunRecord>), HarnessError> {
    let levels = if cfg.levels.is_empty() { game.level_ids() } else { cfg.levels.clone() };
    let prepared = prepare(game, spec.group, &levels, extracted)?;
    let mutants = seed_faults(&game.source, &game.faults()?)?;
    let seeded: Vec<String> = mutants.iter().map(|m| m.manifest.id.clone()).collect();
    let repeats = if spec.agent == AgentKind::Mcts { cfg.repeats } else { 1 };
    let mut per_repeat = Vec::new();
    let mut bugs = Vec::new();
    let mut records = Vec::new();
    let mut runs = 0;
    let mut lengths = Vec::new();
    for repeat in 0..repeats {
        let outcomes: Vec<FaultOutcome> = mutants
            .par_iter()
            .map(|m| {
                let mg = game.with_source(&m.source)?;
                test_fault(game, &mg, &m.manifest.id, &prepared, spec, repeat, cfg)
            })
            .collect::<Result<_, HarnessError>>()?;
        let mut reps = Vec::new();
        for o in outcomes {
            runs += o.runs;
            lengths.extend(o.lengths);
            records.extend(o.records);
            reps.extend(o.found);
        }
        per_repeat.push(crate::oracle::dedupe_bugs(&reps, &seeded));
        bugs.extend(reps);
    }
    let union = per_repeat.iter().fold(Detection { found: Default::default(), seeded: seeded.len() }, |a, b| a.union(b));
    let mean_rate = per_repeat.iter().map(Detection::rate).sum::<f64>() / per_repeat.len() as f64;
    log::info!("{} {} {}: {:.1}% ({runs} runs)", game.id, spec.group, spec.agent.name(), 100.0 * mean_rate);
    Ok((
        CellResult { game: game.id.clone(), group: spec.group, agent: spec.agent, repeats: per_repeat, union, mean_rate, runs, lengths },
        bugs,
        records,
    ))
}

/// Re-judges a persisted run against its mutant and returns the verdicts.
pub fn replay_run(game: &Game, record: &RunRecord) -> Result<Vec<Violation>, HarnessError> {
    let mutant = seed_faults(&game.source, &game.faults()?)?
        .into_iter()
        .find(|m| m.manifest.id == record.fault)
        .ok_or_else(|| HarnessError::Config(format!("unknown fault {}", record.fault)))?;
    let mutant = game.with_source(&mutant.source)?;
    let initial = &mutant.level(record.level)?.initial;
    Ok(judge(&mutant.desc, &game.constraints()?, Some(&game.graph()?), initial, &record.actions)?)
}

/// Plays extracted goals on their held-out levels of the clean game and
/// compares the interactions with the tester's own run there.
pub fn similarity(
    game: &Game,
    trajectories: &BTreeMap<(ScriptedTester, u32), Vec<Action>>,
    extracted: &[Extracted],
    agent: AgentKind,
    cfg: &ExperimentConfig,
) -> Result<Vec<SimilarityRow>, HarnessError> {
    let levels = if cfg.levels.is_empty() { game.level_ids() } else { cfg.levels.clone() };
    let mut jobs = Vec::new();
    for &held in &levels {
        for ex in extracted.iter().filter(|e| e.level != held) {
            jobs.push((held, ex));
        }
    }
    jobs.par_iter()
        .map(|&(held, ex)| {
            let initial = &game.level(held)?.initial;
            let mut acfg = cfg.agent.clone();
            acfg.seed = run_seed(cfg.seed, &ex.sequence, held, 0);
            let run = run_goal_sequence(agent, &game.desc, initial, &ex.sequence.goals, &acfg)?;
            let human = interaction_bins(&game.desc, initial, &trajectories[&(ex.tester, held)]);
            let bot = interaction_bins(&game.desc, initial, &run.actions);
            Ok(SimilarityRow {
                game: game.id.clone(),
                tester: ex.tester.name().to_string(),
                kappa: ex.kappa,
                agent,
                level: held,
                source_level: ex.level,
                cross_entropy: cross_entropy(&human, &bot, EPSILON).ok_or(HarnessError::EmptyLog)?,
                kl: kl_divergence(&human, &bot, EPSILON).ok_or(HarnessError::EmptyLog)?,
                goals: ex.sequence.goals.len(),
            })
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let mut report = MetricsReport { version: REPORT_VERSION, ..Default::default() };
    for id in &cfg.games {
        let game = resolve(id)?;
        let kappas: Vec<f64> = {
            let mut k: Vec<f64> = cfg
                .cells
                .iter()
                .filter_map(|c| match c.group {
                    Group::HumanLike { kappa } => Some(kappa),
                    _ => None,
                })
                .collect();
            k.sort_by(f64::total_cmp);
            k.dedup();
            k
        };
        let mut extracted = BTreeMap::new();
        let trajectories = if kappas.is_empty() { BTreeMap::new() } else { tester_trajectories(&game, &cfg.testers) };
        for &kappa in &kappas {
            let ex = extract_all(&game, &trajectories, kappa, &cfg.irl)?;
            for e in &ex {
                report.splits.push(SplitRow {
                    game: game.id.clone(),
                    tester: e.tester.name().to_string(),
                    level: e.level,
                    kappa,
                    goals: e.sequence.goals.len(),
                });
            }
            extracted.insert(kappa.to_bits(), ex);
        }
        for &spec in &cfg.cells {
            let (cell, bugs, runs) = run_cell(&game, spec, cfg, &extracted)?;
            report.cells.push(cell);
            report.bugs.extend(bugs);
            report.runs.extend(runs);
            if let Group::HumanLike { kappa } = spec.group {
                let ex = &extracted[&kappa.to_bits()];
                report.similarity.extend(similarity(&game, &trajectories, ex, spec.agent, cfg)?);
            }
        }
    }
    Ok(report)
}
