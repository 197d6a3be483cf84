//! Hostile-intent detection over radar tracks.
//!
//! Anonymous radar blips are tagged into persistent identities, turned into
//! movement features (distance to target, distance to potential destinations,
//! movement inefficiency), and scored per object by a two-layer logistic
//! network. Objects inside the target zone that score above threshold raise
//! alerts; when an unflagged object commits a hostile act the network retrains
//! on the frames it missed.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod mlp;
pub mod pipeline;
pub mod sim;
pub mod som;
pub mod track;

pub use engine::{
    run, run_many, ActOracle, AlertEvent, AlertSource, EngineConfig, EngineState, Event, MissEvent, RetrainConfig,
    RunInputs, RunJob, RunReport,
};
pub use error::{Error, Result};
pub use eval::{evaluate, roc_auc, Confusion, EvalReport};
pub use features::{FeatureConfig, FeatureVector, HostilityScore, ScorerWeights, ATTRIBUTES_PER_OBJECT};
pub use mlp::{logistic, LabeledExample, Mlp, ReplayBuffer, TrainConfig};
pub use pipeline::PipelineConfig;
pub use sim::{generate, label_examples, GroundTruth, ScenarioConfig};
pub use som::{Assignment, Bounds, SomGrid, SomParams, Tagger};
pub use track::{Frame, LocationTable, ObjectId, Position, Track, Zone, ZoneEntry};
