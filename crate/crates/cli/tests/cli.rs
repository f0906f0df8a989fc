use agentest_cli::commands::{experiment_config, parse_cell};
use agentest_cli::{Cli, Command};
use agentest_core::agents::AgentKind;
use agentest_core::harness::{CellSpec, Group};
use clap::Parser;

#[test]
fn cells_parse() {
    assert_eq!(parse_cell("synthetic:sarsa").unwrap(), CellSpec { group: Group::Synthetic, agent: AgentKind::Sarsa });
    assert_eq!(parse_cell("baseline:mcts").unwrap(), CellSpec { group: Group::Baseline, agent: AgentKind::Mcts });
    assert_eq!(
        parse_cell("human:0.5:sarsa").unwrap(),
        CellSpec { group: Group::HumanLike { kappa: 0.5 }, agent: AgentKind::Sarsa }
    );
    assert!(parse_cell("human:sarsa").is_err());
    assert!(parse_cell("synthetic:dqn").is_err());
}

fn run_args(argv: &[&str]) -> agentest_cli::RunArgs {
    match Cli::try_parse_from(argv).unwrap().command {
        Command::Run(a) => a,
        c => panic!("parsed {c:?}"),
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("exp.toml");
    std::fs::write(&path, "games = [\"game_b\"]\nrepeats = 3\nseed = 9\n\n[agent.mcts]\niterations = 77\n").unwrap();
    let a = run_args(&["agentest", "run", "--config", path.to_str().unwrap(), "--seed", "4", "--cell", "human:1:mcts"]);
    let cfg = experiment_config(&a).unwrap();
    assert_eq!(cfg.games, vec!["game_b".to_string()]);
    assert_eq!(cfg.repeats, 3);
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.agent.mcts.iterations, 77);
    assert_eq!(cfg.agent.mcts.rollout_depth, 8);
    assert_eq!(cfg.agent.sarsa.polish, 50);
    assert_eq!(cfg.cells, vec![CellSpec { group: Group::HumanLike { kappa: 1.0 }, agent: AgentKind::Mcts }]);
    assert!(cfg.stop_at_first_detection);
}

#[test]
fn output_dir_comes_from_the_environment() {
    std::env::set_var("AGENTEST_OUT", "/tmp/agentest-env-out");
    let cli = Cli::try_parse_from(["agentest", "mutate", "--game", "game_a"]).unwrap();
    assert_eq!(cli.out, std::path::PathBuf::from("/tmp/agentest-env-out"));
    let cli = Cli::try_parse_from(["agentest", "--out", "x", "mutate", "--game", "game_a"]).unwrap();
    assert_eq!(cli.out, std::path::PathBuf::from("x"));
    std::env::remove_var("AGENTEST_OUT");
}

#[test]
fn mutate_and_report_write_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    agentest_cli::run(Cli::try_parse_from(["agentest", "--out", out, "mutate", "--game", "game_a"]).unwrap()).unwrap();
    let manifest = std::fs::read_to_string(tmp.path().join("mutants/game_a/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 10);
    let report = tmp.path().join("report.json");
    std::fs::write(&report, serde_json::to_string(&agentest_core::harness::MetricsReport::default()).unwrap()).unwrap();
    let argv = ["agentest", "--out", out, "report", "--input", report.to_str().unwrap(), "--format", "delimited"];
    agentest_cli::run(Cli::try_parse_from(argv).unwrap()).unwrap();
    let cells = std::fs::read_to_string(tmp.path().join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1);
}

#[test]
fn extracted_goal_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    agentest_cli::run(Cli::try_parse_from(["agentest", "--out", out, "testers", "--game", "game_a", "--tester", "key-rusher"]).unwrap())
        .unwrap();
    let traj = tmp.path().join("trajectories/game_a.jsonl");
    let argv = ["agentest", "--out", out, "extract", "--game", "game_a", "--trajectories", traj.to_str().unwrap(), "--kappa", "0"];
    agentest_cli::run(Cli::try_parse_from(argv).unwrap()).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("extracted/game_a/k0/key-rusher_L1.json")).unwrap();
    let f = agentest_core::scenario::GoalFile::<f64>::from_json(&text).unwrap();
    assert_eq!(f.level, 1);
    assert_eq!(f.sequences.len(), 1);
    assert!(!f.sequences[0].goals.is_empty());
}
