//! Fixtures shared by the criterion benches.

use sentry_core::{generate, Frame, GroundTruth, ScenarioConfig};

pub fn scenario(seed: u64, n_benign: usize) -> (ScenarioConfig, Vec<Frame>, GroundTruth) {
    let cfg = ScenarioConfig {
        seed,
        n_benign,
        ..ScenarioConfig::default()
    };
    let (frames, truth) = generate(&cfg).expect("default scenario generates");
    (cfg, frames, truth)
}
