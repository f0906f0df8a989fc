use agentest_core::engine::InteractionType;
use agentest_core::fixtures::builtin;
use agentest_core::interaction::{FeatureKey, Method};
use agentest_core::scenario::*;
use proptest::prelude::*;

fn graph_of(game: &str) -> ScenarioGraph {
    let g = builtin(game).unwrap();
    ScenarioGraph::from_toml(g.files.graph.as_deref().unwrap()).unwrap()
}

fn counts(game: &str) -> (usize, usize) {
    let g = builtin(game).unwrap();
    let graph = graph_of(game);
    let states: Vec<String> = g.desc.avatar_states().iter().map(|&i| g.desc.name(i).to_string()).collect();
    let mods = modification_list(&g.desc, &graph.sprites, &states);
    let seqs = synthetic_feature_sequences(&graph, &g.desc, SyntheticOptions::default()).unwrap();
    (mods.len(), seqs.len())
}

#[test]
fn game_a_sequence_count() {
    assert_eq!(counts("game_a"), (16, 29));
}

#[test]
fn game_b_sequence_count() {
    assert_eq!(counts("game_b"), (28, 211));
}

#[test]
fn game_c_sequence_count() {
    assert_eq!(counts("game_c"), (28, 79));
}

#[test]
fn baseline_is_unmodified_paths() {
    for (game, n) in [("game_a", 1), ("game_b", 3), ("game_c", 1)] {
        let g = builtin(game).unwrap();
        let graph = graph_of(game);
        let opts = SyntheticOptions { coverage: Coverage::APC, modifications: false };
        let seqs = synthetic_goals::<f64>(&graph, &g.desc, &g.levels[0].initial, opts).unwrap();
        assert_eq!(seqs.len(), n, "{game}");
        assert!(seqs.iter().all(|s| !s.is_modified()));
    }
}

#[test]
fn synthetic_goals_have_one_exploration_feature() {
    let g = builtin("game_a").unwrap();
    let graph = graph_of("game_a");
    let seqs = synthetic_goals::<f64>(&graph, &g.desc, &g.levels[0].initial, SyntheticOptions::default()).unwrap();
    for s in &seqs {
        for goal in &s.goals {
            let floor: Vec<_> = goal.entries.iter().filter(|e| e.feature.key.eta1 == "floor").collect();
            assert!(!floor.is_empty());
            if goal.entries.len() == 2 {
                let e = &goal.entries[1];
                assert_eq!(e.criterion, 0.0);
                assert_eq!(e.feature.weight(), 0.01);
                assert_eq!(e.feature.rep(), 1);
                assert_eq!(e.feature.method(), Method::All);
                assert_eq!(goal.entries[0].criterion, 100.0);
            } else {
                assert_eq!(goal.entries.len(), 1);
            }
            assert!(goal.entries.iter().all(|e| e.feature.is_concrete()));
        }
    }
}

#[test]
fn concretize_rep_rule() {
    let g = builtin("game_b").unwrap();
    let census = &g.levels[0].initial;
    let rep = |eta1: &str| concretize::<f64>(&FeatureKey::new("avatar", eta1, InteractionType::Move, "nokey"), &g.desc, census).unwrap().rep();
    assert_eq!(rep("avatar"), 3);
    assert_eq!(rep("water"), 2);
    assert_eq!(rep("wall"), 1);
    assert_eq!(rep("key"), 2);
    assert!(concretize::<f64>(&FeatureKey::new("avatar", "nope", InteractionType::Move, "nokey"), &g.desc, census).is_err());
}

#[test]
fn goal_file_round_trip() {
    let g = builtin("game_c").unwrap();
    let graph = graph_of("game_c");
    let seqs = synthetic_goals::<f64>(&graph, &g.desc, &g.levels[0].initial, SyntheticOptions::default()).unwrap();
    let file = GoalFile::new("game_c", 1, seqs);
    let back = GoalFile::<f64>::from_json(&file.to_json()).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.version, GOAL_FILE_VERSION);
}

#[test]
fn graph_toml_round_trip() {
    for game in ["game_a", "game_b", "game_c"] {
        let graph = graph_of(game);
        assert_eq!(ScenarioGraph::from_toml(&graph.to_toml()).unwrap(), graph);
    }
}

#[test]
fn unknown_and_unreachable_nodes() {
    let bad = "version = 1\ninitial = [\"a\"]\nfinal = [\"b\"]\n[[nodes]]\nid = \"a\"\n[[nodes]]\nid = \"b\"\n[[edges]]\nfrom = \"a\"\nto = \"c\"\nfeature = { eta0 = \"avatar\", eta1 = \"key\", type = \"Move\", avatar_state = \"nokey\" }\n";
    assert_eq!(ScenarioGraph::from_toml(bad).unwrap_err(), ScenarioError::UnknownNode("c".into()));
    let unreach = bad.replace("to = \"c\"", "to = \"a\"");
    let g = ScenarioGraph::from_toml(&unreach).unwrap();
    assert_eq!(g.coverage_paths(Coverage::EC).unwrap_err(), ScenarioError::Unreachable("b".into()));
}

/// Every simple path or simple cycle, by brute-force DFS from each node.
fn brute_simple_paths(g: &Digraph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn dfs(g: &Digraph, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(p.clone());
        let last = *p.last().unwrap();
        if p.len() > 1 && p[0] == last {
            return;
        }
        for &m in &g.adj[last] {
            if m == p[0] || !p.contains(&m) {
                p.push(m);
                dfs(g, p, out);
                p.pop();
            }
        }
    }
    for n in 0..g.len() {
        dfs(g, &mut vec![n], &mut out);
    }
    out
}

fn brute_prime_paths(g: &Digraph) -> Vec<Vec<usize>> {
    let all = brute_simple_paths(g);
    let mut primes: Vec<Vec<usize>> =
        all.iter().filter(|p| !all.iter().any(|q| q.len() > p.len() && is_subpath(p, q))).cloned().collect();
    primes.sort();
    primes.dedup();
    primes
}

fn arb_digraph() -> impl Strategy<Value = Digraph> {
    (1usize..6).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..10).prop_map(move |e| Digraph::from_edges(n, &e))
    })
}

fn arb_dag() -> impl Strategy<Value = Digraph> {
    (2usize..7).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..14).prop_map(move |e| {
            let e: Vec<_> = e.into_iter().filter(|(a, b)| a < b).collect();
            Digraph::from_edges(n, &e)
        })
    })
}

fn key_strategy() -> impl Strategy<Value = FeatureKey> {
    (0..3usize, 0..4usize, prop::bool::ANY, 0..2usize).prop_map(|(a, b, u, s)| {
        FeatureKey::new(
            ["avatar", "water", "box"][a],
            ["wall", "key", "goal", "floor"][b],
            if u { InteractionType::Use } else { InteractionType::Move },
            ["nokey", "withkey"][s],
        )
    })
}

proptest! {
    #[test]
    fn prime_paths_match_brute_force(g in arb_digraph()) {
        prop_assert_eq!(g.prime_paths(), brute_prime_paths(&g));
    }

    #[test]
    fn prime_paths_are_simple(g in arb_digraph()) {
        for p in g.prime_paths() {
            let body = if p.len() > 1 && p[0] == *p.last().unwrap() { &p[..p.len() - 1] } else { &p[..] };
            let mut s = body.to_vec();
            s.sort();
            s.dedup();
            prop_assert_eq!(s.len(), body.len());
        }
    }

    #[test]
    fn apc_paths_start_initial_end_final(g in arb_dag()) {
        let last = g.len() - 1;
        for p in g.all_paths(&[0], &[last]).unwrap() {
            prop_assert_eq!(p[0], 0);
            prop_assert_eq!(*p.last().unwrap(), last);
            for w in p.windows(2) {
                prop_assert!(g.adj[w[0]].contains(&w[1]));
            }
        }
    }

    #[test]
    fn apc_count_matches_dynamic_programming(g in arb_dag()) {
        let n = g.len();
        let mut ways = vec![0usize; n];
        ways[n - 1] = 1;
        for a in (0..n).rev() {
            for &b in &g.adj[a] {
                ways[a] += ways[b];
            }
        }
        prop_assert_eq!(g.all_paths(&[0], &[n - 1]).unwrap().len(), ways[0]);
    }

    #[test]
    fn bounded_paths_respect_length(g in arb_digraph(), k in 0usize..3) {
        for p in g.bounded_paths(&[0], k) {
            prop_assert!(p.len() <= k + 1);
        }
        let edges: Vec<_> = g.edges().collect();
        let reach = g.reachable(&[0]);
        if k >= 1 {
            for (a, b) in edges.into_iter().filter(|(a, _)| reach[*a]) {
                prop_assert!(g.bounded_paths(&[0], k).contains(&vec![a, b]));
            }
        }
    }

    #[test]
    fn insertion_arithmetic(seq in proptest::collection::vec(key_strategy(), 1..5), mods in proptest::collection::vec(key_strategy(), 0..6)) {
        let mut uniq = mods.clone();
        uniq.sort_by_key(|k| k.to_string());
        uniq.dedup();
        let k = uniq.iter().filter(|m| seq.iter().all(|f| f.distance(m) >= 1)).count();
        let out = insert_modifications(&seq, &uniq);
        prop_assert_eq!(out.len(), seq.len() * k + 1);
        prop_assert!(out.len() <= seq.len() * uniq.len() + 1);
        prop_assert_eq!(&out[0].0, &seq);
        for (s, m) in &out[1..] {
            let (pos, key) = m.clone().unwrap();
            prop_assert_eq!(s.len(), seq.len() + 1);
            prop_assert_eq!(&s[pos], &key);
            let mut rest = s.clone();
            rest.remove(pos);
            prop_assert_eq!(&rest, &seq);
        }
    }
}

#[test]
fn five_node_dag_prime_paths() {
    // 0 -> 1 -> 3 -> 4, 0 -> 2 -> 3, 1 -> 2
    let g = Digraph::from_edges(5, &[(0, 1), (1, 3), (3, 4), (0, 2), (2, 3), (1, 2)]);
    assert_eq!(g.prime_paths(), vec![vec![0, 1, 2, 3, 4], vec![0, 1, 3, 4], vec![0, 2, 3, 4]]);
}

#[test]
fn apc_paths_cover_every_edge_of_shipped_graphs() {
    for game in ["game_a", "game_b", "game_c"] {
        let graph = graph_of(game);
        let paths = graph.coverage_paths(Coverage::APC).unwrap();
        for (a, b) in graph.digraph().edges() {
            assert!(paths.iter().any(|p| p.windows(2).any(|w| w == [a, b])), "{game}: edge {a}->{b}");
        }
    }
}

#[test]
fn eight_entry_modification_product() {
    let g = builtin("game_a").unwrap();
    let sprites = vec!["wall".to_string(), "key".to_string()];
    let states = vec!["nokey".to_string(), "withkey".to_string()];
    let mods = modification_list(&g.desc, &sprites, &states);
    assert_eq!(mods.len(), 8);
    assert!(mods.iter().all(|m| m.eta0 == "avatar"));
    assert!(!mods.iter().any(|m| m.eta0 == "wall"));
}
