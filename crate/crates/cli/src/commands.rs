use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use agentest_core::agents::AgentKind;
use agentest_core::engine::{replay as replay_actions, Trajectory};
use agentest_core::fixtures::{builtin_all, resolve, Game};
use agentest_core::harness::testers::ScriptedTester;
use agentest_core::harness::{
    export_report, render_report, replay_run, run_experiment, tester_trajectories, CellSpec, ExperimentConfig, Group,
    MetricsReport, ReportFormat, RunRecord,
};
use agentest_core::irl::{mgp_irl, IrlConfig};
use agentest_core::oracle::{judge, random_faults, seed_faults, BugReport};
use agentest_core::scenario::{synthetic_goals, Coverage, GoalFile, SyntheticOptions};
use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{CoverageArg, ExtractArgs, GenGoalsArgs, MutateArgs, ReplayArgs, ReportArgs, RunArgs, ServeArgs, TestersArgs};

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(spec: &str) -> anyhow::Result<Game> {
    resolve(spec).with_context(|| format!("loading game {spec}"))
}

fn levels_of(game: &Game, wanted: &[u32]) -> Vec<u32> {
    if wanted.is_empty() {
        game.level_ids()
    } else {
        wanted.to_vec()
    }
}

pub fn gen_goals(a: &GenGoalsArgs, out: &Path) -> anyhow::Result<()> {
    let game = load(&a.game)?;
    let graph = game.graph()?;
    let coverage = match a.coverage {
        CoverageArg::Ec => Coverage::EC,
        CoverageArg::Epc => Coverage::EPC,
        CoverageArg::Ppc => Coverage::PPC,
        CoverageArg::Apc => Coverage::APC,
    };
    let opts = SyntheticOptions { coverage, modifications: !a.no_modifications };
    for level in levels_of(&game, &a.levels) {
        let census = &game.level(level)?.initial;
        let seqs = synthetic_goals::<f64>(&graph, &game.desc, census, opts)?;
        let path = out.join("goals").join(&game.id).join(format!("level{level}.json"));
        println!("{} L{level}: {} sequences -> {}", game.id, seqs.len(), path.display());
        write(&path, &GoalFile::new(&game.id, level, seqs).to_json())?;
    }
    Ok(())
}

fn read_trajectories(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Trajectory::parse_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn extract(a: &ExtractArgs, out: &Path) -> anyhow::Result<()> {
    let game = load(&a.game)?;
    let mut cfg = IrlConfig::default();
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    if let Some(d) = a.depth {
        cfg.depth = d;
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    let trajectories: Vec<Trajectory> = match &a.trajectories {
        Some(p) => read_trajectories(p)?,
        None => tester_trajectories(&game, &ScriptedTester::ALL)
            .into_iter()
            .map(|((t, l), actions)| Trajectory::new(game.id.clone(), l, t.name(), actions))
            .collect(),
    };
    if trajectories.is_empty() {
        bail!("no trajectories to extract from");
    }
    for &kappa in &a.kappas {
        if !(kappa >= 0.0) {
            bail!("likelihood threshold must be non-negative, got {kappa}");
        }
        for (i, t) in trajectories.iter().enumerate() {
            let initial = &game.level(t.level)?.initial;
            let tester = if t.tester.is_empty() { format!("t{i}") } else { t.tester.clone() };
            let ex = mgp_irl(&game.desc, initial, &t.actions, kappa, &cfg, &tester, t.level)
                .with_context(|| format!("extracting from {tester} on level {}", t.level))?;
            let path = out.join("extracted").join(&game.id).join(format!("k{kappa}")).join(format!("{tester}_L{}.json", t.level));
            println!(
                "{} {tester} L{} k={kappa}: {} segments, {} goals, {} splits",
                game.id,
                t.level,
                ex.segments,
                ex.sequence.goals.len(),
                ex.splits()
            );
            write(&path, &GoalFile::new(&game.id, t.level, vec![ex.sequence]).to_json())?;
        }
    }
    Ok(())
}

fn parse_testers(names: &[String]) -> anyhow::Result<Vec<ScriptedTester>> {
    if names.is_empty() {
        return Ok(ScriptedTester::ALL.to_vec());
    }
    names.iter().map(|n| n.parse::<ScriptedTester>().map_err(anyhow::Error::msg)).collect()
}

pub fn testers(a: &TestersArgs, out: &Path) -> anyhow::Result<()> {
    let game = load(&a.game)?;
    let testers = parse_testers(&a.testers)?;
    let mut text = String::new();
    for ((t, l), actions) in tester_trajectories(&game, &testers) {
        println!("{} {t} L{l}: {} actions", game.id, actions.len());
        text.push_str(&Trajectory::new(game.id.clone(), l, t.name(), actions).to_jsonl());
        text.push('\n');
    }
    let path = out.join("trajectories").join(format!("{}.jsonl", game.id));
    write(&path, &text)?;
    println!("-> {}", path.display());
    Ok(())
}

fn parse_agent(s: &str) -> anyhow::Result<AgentKind> {
    match s {
        "sarsa" => Ok(AgentKind::Sarsa),
        "mcts" => Ok(AgentKind::Mcts),
        _ => bail!("unknown agent {s:?}; expected sarsa or mcts"),
    }
}

/// Parses `synthetic:sarsa`, `baseline:mcts` or `human:0.5:sarsa`.
pub fn parse_cell(s: &str) -> anyhow::Result<CellSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let (group, agent) = match parts.as_slice() {
        ["synthetic", a] => (Group::Synthetic, a),
        ["baseline", a] => (Group::Baseline, a),
        ["human", k, a] => (Group::HumanLike { kappa: k.parse().with_context(|| format!("threshold in {s:?}"))? }, a),
        _ => bail!("cannot parse cell {s:?}; expected synthetic:<agent>, baseline:<agent> or human:<kappa>:<agent>"),
    };
    Ok(CellSpec { group, agent: parse_agent(agent)? })
}

/// Builds the experiment configuration from an optional file and flags.
pub fn experiment_config(a: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            }
        }
        None => ExperimentConfig::default(),
    };
    if !a.games.is_empty() {
        cfg.games = a.games.clone();
    }
    if !a.levels.is_empty() {
        cfg.levels = a.levels.clone();
    }
    if !a.cells.is_empty() {
        cfg.cells = a.cells.iter().map(|c| parse_cell(c)).collect::<anyhow::Result<_>>()?;
    }
    if !a.testers.is_empty() {
        cfg.testers = parse_testers(&a.testers)?;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if !a.lengths.is_empty() {
        cfg.agent.lengths = a.lengths.clone();
    }
    if let Some(i) = a.mcts_iterations {
        cfg.agent.mcts.iterations = i;
    }
    if a.all_sequences {
        cfg.stop_at_first_detection = false;
    }
    if a.record_runs {
        cfg.record_runs = true;
    }
    Ok(cfg)
}

pub fn run(a: &RunArgs, out: &Path) -> anyhow::Result<()> {
    let cfg = experiment_config(a)?;
    let report = run_experiment(&cfg)?;
    write(&out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
    write(&out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(&out.join("bugs.jsonl"), &BugReport::to_jsonl(&report.bugs))?;
    if cfg.record_runs {
        let lines: String = report.runs.iter().map(|r| serde_json::to_string(r).expect("run serializes") + "\n").collect();
        write(&out.join("runs.jsonl"), &lines)?;
    }
    for (_, text) in render_report(&report, ReportFormat::TableText)? {
        print!("{text}");
    }
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> anyhow::Result<()> {
    let game = load(&a.game)?;
    if let Some(p) = &a.runs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let mut mismatches = 0;
        let mut total = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: RunRecord = serde_json::from_str(line)?;
            let v = replay_run(&game, &rec)?;
            total += 1;
            if v != rec.violations {
                mismatches += 1;
                println!("mismatch: {} L{} s{} r{}", rec.fault, rec.level, rec.sequence, rec.repeat);
            }
        }
        println!("{total} runs replayed, {mismatches} mismatches");
        if mismatches > 0 {
            bail!("{mismatches} replayed runs disagree with their recorded verdicts");
        }
        return Ok(());
    }
    let Some(p) = &a.trajectory else {
        bail!("pass --trajectory or --runs");
    };
    let target = match &a.fault {
        Some(id) => {
            let m = seed_faults(&game.source, &game.faults()?)?
                .into_iter()
                .find(|m| &m.manifest.id == id || &m.manifest.name == id)
                .with_context(|| format!("no seeded fault {id}"))?;
            game.with_source(&m.source)?
        }
        None => game.clone(),
    };
    let constraints = game.constraints()?;
    let graph = game.graph()?;
    for t in read_trajectories(p)? {
        let initial = &target.level(t.level)?.initial;
        let r = replay_actions(&target.desc, initial, &t.actions);
        let verdicts = judge(&target.desc, &constraints, Some(&graph), initial, &t.actions)?;
        println!(
            "{} L{} {}: {} actions, {} interactions, {:?}{}, {} violations",
            t.game,
            t.level,
            t.tester,
            t.actions.len(),
            r.interactions().count(),
            r.final_state().status,
            if r.truncated { " (truncated)" } else { "" },
            verdicts.len()
        );
        if a.verbose {
            for (tick, zs) in r.log.iter().enumerate() {
                for z in zs {
                    println!("  {:>4} {}", tick + 1, z.describe(&target.desc));
                }
            }
        }
        for v in &verdicts {
            println!("  tick {}: {} {}", v.tick, v.constraint, v.detail);
        }
    }
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn mutate(a: &MutateArgs, out: &Path) -> anyhow::Result<()> {
    let game = load(&a.game)?;
    let mutants = match a.random {
        Some(n) => random_faults(&game.source, &game.desc, &mut ChaCha8Rng::seed_from_u64(a.seed), n),
        None => seed_faults(&game.source, &game.faults()?)?,
    };
    let dir = out.join("mutants").join(&game.id);
    let mut manifest = String::new();
    for (i, m) in mutants.iter().enumerate() {
        write(&dir.join(format!("{i:03}_{}.vgdl", file_stem(&m.manifest.id))), &m.source)?;
        manifest.push_str(&serde_json::to_string(&m.manifest)?);
        manifest.push('\n');
    }
    write(&dir.join("manifest.jsonl"), &manifest)?;
    println!("{} mutants -> {}", mutants.len(), dir.display());
    Ok(())
}

pub fn report(a: &ReportArgs, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report: MetricsReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    if a.stdout {
        for (name, text) in render_report(&report, a.format)? {
            if a.format == ReportFormat::Delimited {
                println!("# {name}");
            }
            print!("{text}");
        }
        return Ok(());
    }
    for p in export_report(&report, a.format, out)? {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn serve(a: &ServeArgs, out: &Path) -> anyhow::Result<()> {
    let games = if a.games.is_empty() { builtin_all() } else { a.games.iter().map(|g| load(g)).collect::<anyhow::Result<_>>()? };
    let names: BTreeMap<&str, usize> = games.iter().map(|g| (g.id.as_str(), g.levels.len())).collect();
    log::info!("serving {names:?}");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::serve::serve(games, &a.bind, out.to_path_buf()))
}
