//! Shipped games and a loader for game directories.
//!
//! A game directory holds `game.toml`, the description it names, the level
//! files it lists and optionally `graph.toml`, `constraints.toml` and
//! `faults.toml`.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{parse_description, parse_level, GameDescription, GameState, ParseError};
use crate::oracle::{parse_constraints, parse_faults, Constraint, FaultError, FaultSpec, OracleError};
use crate::scenario::{ScenarioError, ScenarioGraph};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown game `{0}`")]
    UnknownGame(String),
    #[error("unknown level {1} in game `{0}`")]
    UnknownLevel(String, u32),
    #[error("{file}: {source}")]
    Parse { file: String, source: ParseError },
    #[error("{file}: {message}")]
    Manifest { file: String, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("game `{0}` has no {1} file")]
    Missing(String, &'static str),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fault(#[from] FaultError),
}

#[derive(Debug, Clone, Deserialize)]
struct Manifest {
    id: String,
    description: String,
    levels: Vec<LevelEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct LevelEntry {
    id: u32,
    file: String,
    #[serde(default)]
    use_enabled: bool,
}

/// Raw text of every file belonging to a game.
#[derive(Debug, Clone)]
pub struct GameFiles {
    pub id: String,
    pub description: String,
    pub listing: Option<String>,
    pub levels: Vec<(u32, bool, String)>,
    pub graph: Option<String>,
    pub constraints: Option<String>,
    pub faults: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Level {
    pub id: u32,
    pub use_enabled: bool,
    pub text: String,
    pub initial: GameState,
}

#[derive(Debug, Clone)]
pub struct Game {
    pub id: String,
    pub source: String,
    pub desc: Arc<GameDescription>,
    pub levels: Vec<Level>,
    pub files: Arc<GameFiles>,
}

impl Game {
    pub fn from_files(files: GameFiles) -> Result<Self, FixtureError> {
        let source = files.description.clone();
        Self::build(Arc::new(files), source)
    }

    fn build(files: Arc<GameFiles>, source: String) -> Result<Self, FixtureError> {
        let desc = parse_description(&source)
            .map_err(|e| FixtureError::Parse { file: format!("{}/description", files.id), source: e })?;
        let mut levels = Vec::with_capacity(files.levels.len());
        for (id, use_enabled, text) in &files.levels {
            let mut initial = parse_level(text, &desc)
                .map_err(|e| FixtureError::Parse { file: format!("{}/level{id}", files.id), source: e })?;
            initial.use_enabled = *use_enabled;
            levels.push(Level { id: *id, use_enabled: *use_enabled, text: text.clone(), initial });
        }
        Ok(Self { id: files.id.clone(), source, desc: Arc::new(desc), levels, files })
    }

    /// Same game and levels under a different description text.
    pub fn with_source(&self, source: &str) -> Result<Self, FixtureError> {
        Self::build(self.files.clone(), source.to_string())
    }

    pub fn level(&self, id: u32) -> Result<&Level, FixtureError> {
        self.levels
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| FixtureError::UnknownLevel(self.id.clone(), id))
    }

    pub fn level_ids(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.id).collect()
    }

    pub fn graph(&self) -> Result<ScenarioGraph, FixtureError> {
        let text = self.files.graph.as_deref().ok_or_else(|| FixtureError::Missing(self.id.clone(), "graph"))?;
        Ok(ScenarioGraph::from_toml(text)?)
    }

    pub fn constraints(&self) -> Result<Vec<Constraint>, FixtureError> {
        let text =
            self.files.constraints.as_deref().ok_or_else(|| FixtureError::Missing(self.id.clone(), "constraints"))?;
        Ok(parse_constraints(text)?)
    }

    pub fn faults(&self) -> Result<Vec<FaultSpec>, FixtureError> {
        let text = self.files.faults.as_deref().ok_or_else(|| FixtureError::Missing(self.id.clone(), "faults"))?;
        Ok(parse_faults(text)?)
    }
}

macro_rules! builtin_files {
    ($id:literal) => {
        GameFiles {
            id: $id.to_string(),
            description: include_str!(concat!("../fixtures/games/", $id, "/game.vgdl")).to_string(),
            listing: Some(include_str!(concat!("../fixtures/games/", $id, "/listing.vgdl")).to_string()),
            levels: vec![
                (1, true, include_str!(concat!("../fixtures/games/", $id, "/level1.txt")).to_string()),
                (2, true, include_str!(concat!("../fixtures/games/", $id, "/level2.txt")).to_string()),
                (3, false, include_str!(concat!("../fixtures/games/", $id, "/level3.txt")).to_string()),
                (4, false, include_str!(concat!("../fixtures/games/", $id, "/level4.txt")).to_string()),
            ],
            graph: Some(include_str!(concat!("../fixtures/games/", $id, "/graph.toml")).to_string()),
            constraints: Some(include_str!(concat!("../fixtures/games/", $id, "/constraints.toml")).to_string()),
            faults: Some(include_str!(concat!("../fixtures/games/", $id, "/faults.toml")).to_string()),
        }
    };
}

pub const BUILTIN_GAMES: [&str; 3] = ["game_a", "game_b", "game_c"];

pub fn builtin_files(id: &str) -> Result<GameFiles, FixtureError> {
    Ok(match id {
        "game_a" => builtin_files!("game_a"),
        "game_b" => builtin_files!("game_b"),
        "game_c" => builtin_files!("game_c"),
        other => return Err(FixtureError::UnknownGame(other.to_string())),
    })
}

pub fn builtin(id: &str) -> Result<Game, FixtureError> {
    Game::from_files(builtin_files(id)?)
}

pub fn builtin_all() -> Vec<Game> {
    BUILTIN_GAMES.iter().map(|g| builtin(g).expect("shipped fixtures parse")).collect()
}

/// Loads a game directory laid out like the shipped fixtures.
pub fn load_dir(dir: &Path) -> Result<Game, FixtureError> {
    let manifest_path = dir.join("game.toml");
    let manifest: Manifest = toml::from_str(&std::fs::read_to_string(&manifest_path)?).map_err(|e| {
        FixtureError::Manifest { file: manifest_path.display().to_string(), message: e.to_string() }
    })?;
    let read_opt = |name: &str| -> Result<Option<String>, FixtureError> {
        let p = dir.join(name);
        if p.exists() {
            Ok(Some(std::fs::read_to_string(p)?))
        } else {
            Ok(None)
        }
    };
    let mut levels = Vec::new();
    for l in &manifest.levels {
        levels.push((l.id, l.use_enabled, std::fs::read_to_string(dir.join(&l.file))?));
    }
    Game::from_files(GameFiles {
        id: manifest.id,
        description: std::fs::read_to_string(dir.join(&manifest.description))?,
        listing: read_opt("listing.vgdl")?,
        levels,
        graph: read_opt("graph.toml")?,
        constraints: read_opt("constraints.toml")?,
        faults: read_opt("faults.toml")?,
    })
}

/// Resolves either a shipped game id or a path to a game directory.
pub fn resolve(spec: &str) -> Result<Game, FixtureError> {
    if BUILTIN_GAMES.contains(&spec) {
        builtin(spec)
    } else {
        load_dir(Path::new(spec))
    }
}
