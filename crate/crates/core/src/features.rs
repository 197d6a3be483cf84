//! Movement features: distances to the target and to potential destinations, the
//! movement inefficiency index, the analytic hostility score, the per-object
//! attribute vector fed to the classifier and the speed-violation template.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::som::Bounds;
use crate::track::{path_length, ObjectId, Position, Track, ZoneEntry};

/// Length of the per-object attribute vector.
pub const ATTRIBUTES_PER_OBJECT: usize = 7;

/// Distances below this are treated as zero by the inefficiency index.
pub const EPSILON: f64 = 1e-6;

pub const DEFAULT_CAP: f64 = 100.0;

/// Below this speed an object counts as stationary and its heading is 0.
const STATIONARY_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub d_t: f64,
    pub d_pn: f64,
    pub inefficiency: f64,
    pub speed: f64,
    /// Radians in [-π, π), measured counter-clockwise from east.
    pub heading: f64,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostilityScore {
    pub object_id: ObjectId,
    pub p: f64,
    pub timestamp: f64,
}

/// Coefficients of the analytic scorer: `bias + target·e^(-d_t/s1) + destination·e^(-d_pn/s2) + inefficiency·(I-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerWeights {
    pub bias: f64,
    pub target: f64,
    pub destination: f64,
    pub inefficiency: f64,
}

impl Default for ScorerWeights {
    fn default() -> Self {
        ScorerWeights {
            bias: -1.0,
            target: 2.0,
            destination: 1.0,
            inefficiency: 2.0,
        }
    }
}

/// Distance scales for the target and destination terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub target: f64,
    pub destination: f64,
}

impl Scales {
    /// Both scales at a quarter of the target-zone radius.
    pub fn for_zone_radius(radius: f64) -> Self {
        Scales {
            target: radius / 4.0,
            destination: radius / 4.0,
        }
    }
}

/// Everything needed to turn a track into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub target: Position,
    pub destinations: Vec<Position>,
    pub bounds: Bounds,
    pub scales: Scales,
    pub cap: f64,
    /// Speed that maps to 1.0 in the attribute vector.
    pub v_ref: f64,
    pub weights: ScorerWeights,
}

impl FeatureConfig {
    pub fn new(target: Position, target_zone_radius: f64, bounds: Bounds) -> Self {
        FeatureConfig {
            target,
            destinations: vec![target],
            bounds,
            scales: Scales::for_zone_radius(target_zone_radius),
            cap: DEFAULT_CAP,
            v_ref: 20.0,
            weights: ScorerWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.destinations.is_empty() {
            return Err(Error::EmptyInput("destinations"));
        }
        if !(self.scales.target > 0.0 && self.scales.destination > 0.0) {
            return Err(Error::Invalid("feature scales must be positive".into()));
        }
        if !(self.cap >= 1.0) {
            return Err(Error::Invalid(format!(
                "inefficiency cap must be >= 1, got {}",
                self.cap
            )));
        }
        if !(self.v_ref > 0.0 && self.bounds.width > 0.0 && self.bounds.height > 0.0) {
            return Err(Error::Invalid("v_ref and area extents must be positive".into()));
        }
        Ok(())
    }
}

pub fn suspect_target_distance(suspect: Position, target: Position) -> f64 {
    suspect.distance(target)
}

pub fn suspect_destination_distance(suspect: Position, destinations: &[Position]) -> Result<f64> {
    destinations
        .iter()
        .map(|d| suspect.distance(*d))
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyInput("destinations"))
}

/// Path length since the entry point over the straight-line distance back to it,
/// clamped to `[1, cap]`.
pub fn inefficiency_index(track: &Track, entry: &ZoneEntry, cap: f64) -> f64 {
    let travelled = path_length(track, entry.entry_time).unwrap_or(0.0);
    let direct = entry.entry_point.distance(track.last().position);
    if travelled < EPSILON && direct < EPSILON {
        return 1.0;
    }
    (travelled / direct.max(EPSILON)).clamp(1.0, cap)
}

pub fn logistic(net: f64) -> f64 {
    crate::mlp::logistic(net)
}

/// Logistic of a linear form in bounded transforms of the movement features.
pub fn analytic_hostility(f: &FeatureVector, w: &ScorerWeights, scales: &Scales) -> f64 {
    let net = w.bias
        + w.target * (-f.d_t / scales.target).exp()
        + w.destination * (-f.d_pn / scales.destination).exp()
        + w.inefficiency * (f.inefficiency - 1.0);
    logistic(net)
}

/// Speed and heading over the most recent segment; a single sample is stationary.
pub fn kinematics(track: &Track) -> (f64, f64) {
    let h = track.history();
    if h.len() < 2 {
        return (0.0, 0.0);
    }
    let a = h[h.len() - 2];
    let b = h[h.len() - 1];
    let d = b.position - a.position;
    let speed = d.x.hypot(d.y) / (b.t - a.t);
    if speed < STATIONARY_SPEED {
        return (0.0, 0.0);
    }
    let mut heading = d.y.atan2(d.x);
    if heading >= std::f64::consts::PI {
        heading = -std::f64::consts::PI;
    }
    (speed, heading)
}

/// Features at the track's latest sample. `entry` is the suspect-zone entry, if any.
pub fn feature_vector(track: &Track, cfg: &FeatureConfig, entry: Option<&ZoneEntry>) -> Result<FeatureVector> {
    let position = track.last().position;
    let (speed, heading) = kinematics(track);
    Ok(FeatureVector {
        d_t: suspect_target_distance(position, cfg.target),
        d_pn: suspect_destination_distance(position, &cfg.destinations)?,
        inefficiency: entry.map_or(1.0, |e| inefficiency_index(track, e, cfg.cap)),
        speed,
        heading,
        position,
    })
}

/// Fixed-order normalized attributes for the classifier:
/// `[x, y, speed, sin(heading), cos(heading), e^(-d_t/s1), inefficiency]`.
pub fn attributes(f: &FeatureVector, cfg: &FeatureConfig, has_entry: bool) -> [f64; ATTRIBUTES_PER_OBJECT] {
    let b = &cfg.bounds;
    let ineff = if has_entry && cfg.cap > 1.0 {
        (f.inefficiency.min(cfg.cap) - 1.0) / (cfg.cap - 1.0)
    } else {
        0.0
    };
    [
        ((f.position.x - b.x_min) / b.width).clamp(0.0, 1.0),
        ((f.position.y - b.y_min) / b.height).clamp(0.0, 1.0),
        (f.speed / cfg.v_ref).clamp(0.0, 1.0),
        f.heading.sin(),
        f.heading.cos(),
        (-f.d_t / cfg.scales.target).exp(),
        ineff.clamp(0.0, 1.0),
    ]
}

/// Convenience wrapper: features then attributes for the latest sample.
pub fn track_attributes(
    track: &Track,
    cfg: &FeatureConfig,
    entry: Option<&ZoneEntry>,
) -> Result<[f64; ATTRIBUTES_PER_OBJECT]> {
    let f = feature_vector(track, cfg, entry)?;
    Ok(attributes(&f, cfg, entry.is_some()))
}

/// True iff the mean speed over the trailing `window` seconds exceeds `limit`.
pub fn speed_violation_template(track: &Track, limit: f64, window: f64) -> Result<bool> {
    if !(window > 0.0) {
        return Err(Error::Invalid(format!("window must be > 0, got {window}")));
    }
    let last = track.last();
    let from = last.t - window;
    let start = track.index_at_or_after(from).unwrap_or(track.len() - 1);
    let samples = &track.history()[start..];
    if samples.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "{} sample(s) in the last {window} s",
            samples.len()
        )));
    }
    let travelled: f64 = samples.windows(2).map(|w| w[0].position.distance(w[1].position)).sum();
    let elapsed = last.t - samples[0].t;
    Ok(travelled / elapsed > limit)
}

/// CSV header for per-frame feature dumps.
pub const FEATURE_CSV_HEADER: &str = "t,object_id,d_t,d_pn,I,speed,heading,p";

pub fn feature_csv_row(t: f64, id: ObjectId, f: &FeatureVector, p: f64) -> String {
    format!(
        "{t},{id},{},{},{},{},{},{p}",
        f.d_t, f.d_pn, f.inefficiency, f.speed, f.heading
    )
}
