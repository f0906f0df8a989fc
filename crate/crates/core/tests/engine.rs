use agentest_core::engine::{
    decode_actions, parse_description, replay, step, Action, Dir, EngineError, InteractionType, Mover, Pos, Status,
};
use agentest_core::fixtures::{builtin, builtin_files};

fn acts(s: &str) -> Vec<Action> {
    decode_actions(s).unwrap()
}

#[test]
fn game_a_level1_census() {
    let g = builtin("game_a").unwrap();
    let s = &g.level(1).unwrap().initial;
    assert_eq!((s.width, s.height), (6, 7));
    let d = &g.desc;
    assert_eq!(s.count(d, d.id("key").unwrap()), 1);
    assert_eq!(s.count(d, d.id("goal").unwrap()), 1);
    assert_eq!(s.count(d, d.id("wall").unwrap()), 27);
    assert_eq!(s.avatar.pos, Pos::new(4, 4));
}

#[test]
fn listing_shapes() {
    let files = builtin_files("game_a").unwrap();
    let d = parse_description(files.listing.as_deref().unwrap()).unwrap();
    assert_eq!(d.leaves().count(), 9);
    assert_eq!(d.rules.len(), 9);
    assert_eq!(d.terminations.len(), 2);
    for id in ["game_b", "game_c"] {
        let f = builtin_files(id).unwrap();
        parse_description(f.listing.as_deref().unwrap()).unwrap();
    }
}

#[test]
fn wall_bump_reports_wall_position_and_direction() {
    let g = builtin("game_a").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    for a in acts("LLLUUUR") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(2, 1));
    let out = step(d, &mut s, Action::Up).unwrap();
    assert_eq!(s.avatar.pos, Pos::new(2, 1));
    assert_eq!(s.avatar.dir, Dir::Up);
    let wall = out
        .interactions
        .iter()
        .find(|z| z.eta1 == d.id("wall").unwrap())
        .expect("wall interaction");
    assert_eq!(wall.eta0, d.id("avatar").unwrap());
    assert_eq!(wall.pos, Pos::new(2, 0));
    assert_eq!(wall.dir, Dir::Up);
    assert_eq!(wall.kind, InteractionType::Move);
    assert_eq!(wall.avatar_state, d.id("nokey").unwrap());
    assert_eq!(wall.mover, Mover::Avatar);
}

#[test]
fn nil_changes_nothing() {
    let g = builtin("game_a").unwrap();
    let mut s = g.level(1).unwrap().initial.clone();
    let before = s.clone();
    let out = step(&g.desc, &mut s, Action::Nil).unwrap();
    assert!(out.interactions.is_empty());
    assert_eq!(s, before);
}

#[test]
fn key_pickup_and_win() {
    let g = builtin("game_a").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    step(d, &mut s, Action::Left).unwrap();
    step(d, &mut s, Action::Up).unwrap();
    assert_eq!(s.avatar.state, d.id("withkey").unwrap());
    assert_eq!(s.count(d, d.id("key").unwrap()), 0);
    for a in acts("UU") {
        step(d, &mut s, a).unwrap();
    }
    step(d, &mut s, Action::Up).unwrap();
    assert_eq!(s.status, Status::Win);
    assert_eq!(step(d, &mut s, Action::Up).unwrap_err(), EngineError::Terminal(Status::Win));
}

#[test]
fn door_blocks_without_key() {
    let g = builtin("game_a").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    // around the key: left twice, up the left column, over to the door column
    for a in acts("LLLUUURRU") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(3, 1));
    assert_eq!(s.status, Status::Running);
    assert_eq!(s.avatar.state, d.id("nokey").unwrap());
}

#[test]
fn use_is_level_gated() {
    let g = builtin("game_a").unwrap();
    let mut s = g.level(3).unwrap().initial.clone();
    assert_eq!(step(&g.desc, &mut s, Action::Use).unwrap_err(), EngineError::UseUnavailable);
    let mut s = g.level(1).unwrap().initial.clone();
    step(&g.desc, &mut s, Action::Right).unwrap();
    let out = step(&g.desc, &mut s, Action::Use).unwrap();
    assert!(out.interactions.iter().all(|z| z.kind == InteractionType::Use));
    assert!(out.interactions.iter().any(|z| z.eta1 == g.desc.id("wall").unwrap()));
}

#[test]
fn listing_door_spawn_then_kill() {
    let g = builtin("game_a").unwrap();
    let listing = g.files.listing.clone().unwrap();
    let m = g.with_source(&listing).unwrap();
    let d = &m.desc;
    let mut s = m.level(1).unwrap().initial.clone();
    for a in acts("LUUU") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(3, 1));
    s.avatar.dir = Dir::Up;
    step(d, &mut s, Action::Use).unwrap();
    assert_eq!(s.count(d, d.id("goal2").unwrap()), 0);
    assert_eq!(s.count(d, d.id("goal1").unwrap()), 1);
    assert_eq!(s.status, Status::Running);
}

#[test]
fn water_extinguishes_fire() {
    let g = builtin("game_b").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    // water at (4,2); push it right twice, then down twice from above
    for a in acts("UR") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(3, 2));
    let out = step(d, &mut s, Action::Right).unwrap();
    assert!(out.interactions.iter().any(|z| z.mover == Mover::Other && z.eta0 == d.id("water").unwrap()));
    step(d, &mut s, Action::Right).unwrap();
    assert_eq!(s.cell(Pos::new(6, 2)).contains(&d.id("water").unwrap()), true);
    for a in acts("URD") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(6, 2));
    step(d, &mut s, Action::Down).unwrap();
    assert_eq!(s.count(d, d.id("fire").unwrap()), 0);
    assert_eq!(s.count(d, d.id("water").unwrap()), 0);
    assert_eq!(s.count(d, d.id("debris").unwrap()), 1);
    step(d, &mut s, Action::Down).unwrap();
    assert_eq!(s.avatar.pos, Pos::new(6, 4));
}

#[test]
fn water_into_wall_is_undone() {
    let g = builtin("game_b").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    for a in acts("UURRD") {
        step(d, &mut s, a).unwrap();
    }
    // avatar above the water at (4,1); water moves down to (4,3)
    assert_eq!(s.avatar.pos, Pos::new(4, 2));
    step(d, &mut s, Action::Down).unwrap();
    let before = s.clone();
    let out = step(d, &mut s, Action::Down).unwrap();
    assert!(out.undone);
    assert_eq!(s, before);
}

#[test]
fn walking_into_fire_kills() {
    let g = builtin("game_b").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    for a in acts("RRRR") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.avatar.pos, Pos::new(6, 3));
    step(d, &mut s, Action::Down).unwrap();
    assert_eq!(s.status, Status::Lose);
    assert!(!s.avatar.alive);
}

#[test]
fn key_parts_combine() {
    let g = builtin("game_c").unwrap();
    let d = &g.desc;
    let mut s = g.level(1).unwrap().initial.clone();
    for a in acts("DRRRR") {
        step(d, &mut s, a).unwrap();
    }
    assert_eq!(s.count(d, d.id("key").unwrap()), 1);
    assert_eq!(s.count(d, d.id("keyleft").unwrap()), 0);
    assert_eq!(s.count(d, d.id("keyright").unwrap()), 0);
    step(d, &mut s, Action::Right).unwrap();
    assert_eq!(s.avatar.state, d.id("withkey").unwrap());
}

#[test]
fn replay_is_reproducible() {
    let g = builtin("game_b").unwrap();
    let t = acts("UURRDDLLRRUUDXXLRUD");
    let a = replay(&g.desc, &g.level(1).unwrap().initial, &t);
    let b = replay(&g.desc, &g.level(1).unwrap().initial, &t);
    assert_eq!(a, b);
    let e = replay(&g.desc, &g.level(1).unwrap().initial, &[]);
    assert!(e.log.is_empty());
    assert_eq!(e.states.len(), 1);
}
