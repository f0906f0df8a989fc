pub mod agents;
pub mod engine;
pub mod fixtures;
pub mod harness;
pub mod interaction;
pub mod irl;
pub mod oracle;
pub mod scenario;
pub mod scalar;

pub use scalar::Real;

/// Default scalar for rewards, weights and value estimates.
pub type Scalar = f64;

pub type Feature = interaction::Feature<Scalar>;
pub type FeatureSet = interaction::FeatureSet<Scalar>;
pub type Goal = scenario::Goal<Scalar>;
pub type GoalEntry = scenario::GoalEntry<Scalar>;
pub type GoalSequence = scenario::GoalSequence<Scalar>;
pub type GoalFile = scenario::GoalFile<Scalar>;
pub type AgentConfig = agents::AgentConfig<Scalar>;
pub type SarsaConfig = agents::SarsaConfig<Scalar>;
pub type MctsConfig = agents::MctsConfig<Scalar>;
pub type Sarsa = agents::Sarsa<Scalar>;
pub type Mcts = agents::Mcts<Scalar>;
pub type IrlConfig = irl::IrlConfig<Scalar>;
pub type Extraction = irl::Extraction<Scalar>;
