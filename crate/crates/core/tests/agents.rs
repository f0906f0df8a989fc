use agentest_core::agents::*;
use agentest_core::engine::{decode_actions, InteractionType};
use agentest_core::fixtures::builtin;
use agentest_core::interaction::{Feature, FeatureKey, Method};
use agentest_core::scenario::{Goal, GoalEntry};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ten-cell corridor. Both ends are terminal; the right end pays more.
#[derive(Clone, Debug)]
struct Corridor {
    pos: usize,
    done: bool,
}

const LEFT_PAY: f64 = 6.0;
const RIGHT_PAY: f64 = 10.0;

impl Environment for Corridor {
    type R = f64;
    fn key(&self) -> u64 {
        self.pos as u64
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn step(&mut self, a: usize) -> (f64, bool) {
        self.pos = if a == 0 { self.pos - 1 } else { self.pos + 1 };
        let r = match self.pos {
            0 => LEFT_PAY,
            9 => RIGHT_PAY,
            _ => 0.0,
        };
        self.done = self.pos == 0 || self.pos == 9;
        (r, self.done)
    }
    fn completion(&self) -> f64 {
        if self.pos == 9 {
            1.0
        } else {
            0.0
        }
    }
    fn fulfilled(&self) -> bool {
        self.pos == 9
    }
}

fn value_iteration(gamma: f64) -> Vec<usize> {
    let mut v = [0.0f64; 10];
    for _ in 0..500 {
        let mut nv = v;
        for s in 1..9 {
            let q = |t: usize| {
                let r = match t {
                    0 => LEFT_PAY,
                    9 => RIGHT_PAY,
                    _ => 0.0,
                };
                r + if t == 0 || t == 9 { 0.0 } else { gamma * v[t] }
            };
            nv[s] = q(s - 1).max(q(s + 1));
        }
        v = nv;
    }
    (1..9)
        .map(|s| {
            let q = |t: usize| {
                let r = match t {
                    0 => LEFT_PAY,
                    9 => RIGHT_PAY,
                    _ => 0.0,
                };
                r + if t == 0 || t == 9 { 0.0 } else { gamma * v[t] }
            };
            usize::from(q(s + 1) > q(s - 1))
        })
        .collect()
}

#[test]
fn sarsa_greedy_policy_matches_value_iteration() {
    let gamma = 0.8;
    let optimum = value_iteration(gamma);
    assert!(optimum.contains(&0) && optimum.contains(&1), "both ends matter: {optimum:?}");
    let cfg = AgentConfig::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agent = Sarsa::new(gamma, cfg.sarsa.clone());
    for start in (1..9).cycle().take(8000) {
        agent.episode(&Corridor { pos: start, done: false }, 100, &mut rng).unwrap();
    }
    let learned: Vec<usize> = (1..9).map(|s| agent.greedy_action(&Corridor { pos: s, done: false })).collect();
    assert_eq!(learned, optimum);
}

#[test]
fn myopic_sarsa_takes_immediate_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = AgentConfig::<f64>::default();
    let mut agent = Sarsa::new(0.0, cfg.sarsa.clone());
    for _ in 0..2000 {
        agent.episode(&Corridor { pos: 1, done: false }, 20, &mut rng).unwrap();
        agent.episode(&Corridor { pos: 8, done: false }, 20, &mut rng).unwrap();
    }
    assert_eq!(agent.greedy_action(&Corridor { pos: 1, done: false }), 0);
    assert_eq!(agent.greedy_action(&Corridor { pos: 8, done: false }), 1);
}

#[test]
fn traces_credit_the_whole_path() {
    let mut sc = AgentConfig::<f64>::default().sarsa;
    sc.beta = 1e6;
    let mut agent_forced = Sarsa::new(0.95, sc);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let env = Corridor { pos: 6, done: false };
    let mut walked = false;
    for _ in 0..50 {
        let (roll, _) = agent_forced.episode(&env, 10, &mut rng).unwrap();
        if roll.actions == vec![1, 1, 1] {
            walked = true;
            break;
        }
    }
    assert!(walked);
    for s in 6..9 {
        let q = agent_forced.q(s).unwrap();
        assert!(q[1] > 0.0, "state {s}: {q:?}");
    }
    // hand-unrolled: with zero-initialised Q the terminal step gives delta = 10 and
    // each earlier pair receives alpha * delta * (gamma lambda)^k
    let mut fresh = Sarsa::new(0.95, AgentConfig::<f64>::default().sarsa);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    loop {
        let (roll, _) = fresh.episode(&Corridor { pos: 7, done: false }, 10, &mut rng).unwrap();
        if roll.actions == vec![1, 1] {
            break;
        }
        fresh = Sarsa::new(0.95, AgentConfig::<f64>::default().sarsa);
    }
    let q8 = fresh.q(8).unwrap()[1];
    let q7 = fresh.q(7).unwrap()[1];
    assert!((q8 - 0.03 * 10.0).abs() < 1e-12);
    assert!((q7 - 0.03 * 10.0 * 0.95 * 0.8).abs() < 1e-12);
}

#[derive(Clone, Debug)]
struct Bandit {
    pulled: Option<usize>,
}

impl Environment for Bandit {
    type R = f64;
    fn key(&self) -> u64 {
        self.pulled.map_or(0, |a| a as u64 + 1)
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn step(&mut self, a: usize) -> (f64, bool) {
        self.pulled = Some(a);
        (if a == 1 { 1.0 } else { 0.0 }, true)
    }
    fn completion(&self) -> f64 {
        0.0
    }
    fn fulfilled(&self) -> bool {
        false
    }
}

#[test]
fn mcts_prefers_the_better_arm() {
    let cfg = AgentConfig::<f64>::default();
    let mut mc = cfg.mcts.clone();
    mc.iterations = 1000;
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mcts::new(cfg.gamma, cfg.bonus_base, mc.clone());
        if m.decide(&Bandit { pulled: None }, &mut rng).unwrap() == 1 {
            wins += 1;
        }
    }
    assert!(wins >= 99, "{wins}");
}

#[derive(Clone, Debug)]
struct Single;

impl Environment for Single {
    type R = f64;
    fn key(&self) -> u64 {
        0
    }
    fn num_actions(&self) -> usize {
        1
    }
    fn step(&mut self, _: usize) -> (f64, bool) {
        (0.0, true)
    }
    fn completion(&self) -> f64 {
        0.0
    }
    fn fulfilled(&self) -> bool {
        false
    }
}

#[test]
fn mcts_single_action() {
    let cfg = AgentConfig::<f64>::default();
    let mut m = Mcts::new(cfg.gamma, cfg.bonus_base, cfg.mcts.clone());
    assert_eq!(m.decide(&Single, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 0);
}

fn key_goal() -> Goal<f64> {
    Goal {
        entries: vec![GoalEntry {
            feature: Feature::concrete(FeatureKey::new("avatar", "key", InteractionType::Move, "nokey"), 1.0, Method::All, 2),
            criterion: 100.0,
        }],
    }
}

#[test]
fn transpositions_share_one_entry() {
    let g = builtin("game_a").unwrap();
    let cfg = AgentConfig::<f64>::default();
    let s0 = &g.level(2).unwrap().initial;
    let env = GoalEnv::new(&g.desc, s0.clone(), s0, &key_goal(), &cfg).unwrap();
    let play = |moves: &str| {
        let mut e = env.clone();
        for a in decode_actions(moves).unwrap() {
            let i = e.actions().iter().position(|&x| x == a).unwrap();
            e.step(i);
        }
        e
    };
    // both end one cell below the start, facing down, after the same number of ticks
    let a = play("LRD");
    let b = play("DUD");
    assert_eq!(a.state, b.state);
    assert_eq!(a.key(), b.key());
    let mut m = Mcts::new(cfg.gamma, cfg.bonus_base, cfg.mcts.clone());
    m.decide(&env, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(m.visits(a.key()) >= 2, "both move orders feed the shared entry");
}

#[test]
fn completion_is_a_product_and_bonus_is_base_ten() {
    let g = builtin("game_a").unwrap();
    let cfg = AgentConfig::<f64>::default();
    let s0 = &g.level(1).unwrap().initial;
    let mut goal = key_goal();
    goal.entries.push(GoalEntry {
        feature: Feature::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::All, 1),
        criterion: 100.0,
    });
    let env = GoalEnv::new(&g.desc, s0.clone(), s0, &goal, &cfg).unwrap();
    assert_eq!(env.completion(), 0.0);
    let mut e = env.clone();
    // L then U picks up the key: key criterion complete, walls untouched
    for a in decode_actions("LU").unwrap() {
        let i = e.actions().iter().position(|&x| x == a).unwrap();
        e.step(i);
    }
    assert_eq!(e.completions()[0], 1.0);
    assert_eq!(e.completion(), 0.0);

    let env = GoalEnv::new(&g.desc, s0.clone(), s0, &key_goal(), &cfg).unwrap();
    let mut e = env.clone();
    let l = e.actions().iter().position(|&x| x == agentest_core::engine::Action::Left).unwrap();
    let u = e.actions().iter().position(|&x| x == agentest_core::engine::Action::Up).unwrap();
    e.step(l);
    let (r, done) = e.step(u);
    assert!(done && e.fulfilled());
    // key weight 1, the unmatched floor contact -1, and the bonus 10^1
    assert!((r - 10.0).abs() < 1e-9, "{r}");
}

#[test]
fn stop_on_failure_skips_later_goals() {
    let g = builtin("game_a").unwrap();
    let mut cfg = AgentConfig::<f64>::default();
    cfg.lengths = vec![30];
    cfg.sarsa.max_episodes = 30;
    let s0 = &g.level(3).unwrap().initial;
    let impossible = Goal {
        entries: vec![GoalEntry {
            feature: Feature::concrete(FeatureKey::new("avatar", "goal1", InteractionType::Move, "nokey"), 1.0, Method::All, 2),
            criterion: 100.0,
        }],
    };
    let goals = vec![key_goal(), impossible, key_goal()];
    let run = run_goal_sequence(AgentKind::Sarsa, &g.desc, s0, &goals, &cfg).unwrap();
    assert!(run.goals[0].fulfilled);
    assert_eq!(run.goals.len(), 2);
    assert!(!run.goals[1].fulfilled);
}

#[test]
fn seeded_runs_are_reproducible() {
    let g = builtin("game_a").unwrap();
    let mut cfg = AgentConfig::<f64>::default();
    cfg.seed = 42;
    cfg.mcts.iterations = 100;
    let s0 = &g.level(1).unwrap().initial;
    let goals = vec![key_goal()];
    for kind in [AgentKind::Sarsa, AgentKind::Mcts] {
        let a = run_goal_sequence(kind, &g.desc, s0, &goals, &cfg).unwrap();
        let b = run_goal_sequence(kind, &g.desc, s0, &goals, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.goals[0].fulfilled, "{kind:?}");
    }
}

#[test]
fn boltzmann_closed_forms() {
    let p = boltzmann_probs(&[0.0f64; 4], 1.0);
    assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    let p = boltzmann_probs(&[1.0f64, 0.0], 1.0);
    assert!((p[0] - 0.731_058_578_6).abs() < 1e-9 && (p[1] - 0.268_941_421_4).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(boltzmann_select(&[0.1f64, 0.3, 0.2], 1e6, &mut rng), 1);
    }
    assert_eq!(greedy_index(&[1.0f64, 1.0, 0.5]), 0);
}

proptest! {
    #[test]
    fn softmax_shift_invariance(q in proptest::collection::vec(-20.0f64..20.0, 1..6), c in -100.0f64..100.0, beta in 0.0f64..5.0) {
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let a = boltzmann_probs(&q, beta);
        let b = boltzmann_probs(&shifted, beta);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn completion_never_decreases(seed in any::<u64>()) {
        let g = builtin("game_a").unwrap();
        let cfg = AgentConfig::<f64>::default();
        let s0 = &g.level(1).unwrap().initial;
        let mut goal = key_goal();
        goal.entries.push(GoalEntry {
            feature: Feature::concrete(FeatureKey::new("avatar", "wall", InteractionType::Move, "nokey"), 1.0, Method::All, 1),
            criterion: 50.0,
        });
        let mut e = GoalEnv::new(&g.desc, s0.clone(), s0, &goal, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut last = e.completions();
        for _ in 0..60 {
            let a = rand::Rng::gen_range(&mut rng, 0..e.num_actions());
            let (_, done) = e.step(a);
            let now = e.completions();
            for (x, y) in last.iter().zip(&now) {
                prop_assert!(y >= x);
            }
            last = now;
            if done { break; }
        }
    }
}
