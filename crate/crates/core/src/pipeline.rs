//! Per-object bookkeeping and slot stacking shared by the engine and the labeler.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{attributes, feature_vector, FeatureConfig, FeatureVector, ATTRIBUTES_PER_OBJECT};
use crate::track::{record_entry, ObjectId, Position, Track, Zone, ZoneEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub target_zone: Zone,
    pub suspect_zone: Zone,
    pub max_objects: usize,
}

impl PipelineConfig {
    pub fn input_dim(&self) -> usize {
        ATTRIBUTES_PER_OBJECT * self.max_objects
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.target_zone.validate()?;
        self.suspect_zone.validate()?;
        if self.max_objects == 0 {
            return Err(crate::Error::Invalid("max_objects must be >= 1".into()));
        }
        Ok(())
    }
}

/// Track plus current zone visits of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub track: Track,
    pub suspect_entry: Option<ZoneEntry>,
    pub target_entry: Option<ZoneEntry>,
}

impl ObjectState {
    pub fn new(id: ObjectId, t: f64, p: Position, cfg: &PipelineConfig) -> Result<Self> {
        let mut s = ObjectState {
            track: Track::new(id, t, p)?,
            suspect_entry: None,
            target_entry: None,
        };
        s.refresh_entries(cfg);
        Ok(s)
    }

    pub fn observe(&mut self, t: f64, p: Position, cfg: &PipelineConfig) -> Result<()> {
        self.track.push(t, p)?;
        self.refresh_entries(cfg);
        Ok(())
    }

    fn refresh_entries(&mut self, cfg: &PipelineConfig) {
        self.suspect_entry = record_entry(&self.track, &cfg.suspect_zone, self.suspect_entry.as_ref());
        self.target_entry = record_entry(&self.track, &cfg.target_zone, self.target_entry.as_ref());
    }

    pub fn in_target_zone(&self) -> bool {
        self.target_entry.is_some()
    }

    /// In the target zone with at least two samples, so speed and heading are observed.
    pub fn scorable(&self) -> bool {
        self.in_target_zone() && self.track.len() >= 2
    }

    pub fn features(&self, cfg: &PipelineConfig) -> Result<FeatureVector> {
        feature_vector(&self.track, &cfg.features, self.suspect_entry.as_ref())
    }

    pub fn attributes(&self, f: &FeatureVector, cfg: &PipelineConfig) -> [f64; ATTRIBUTES_PER_OBJECT] {
        attributes(f, &cfg.features, self.suspect_entry.is_some())
    }
}

/// One object offered for a network slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotCandidate {
    pub id: ObjectId,
    pub attributes: [f64; ATTRIBUTES_PER_OBJECT],
    pub in_zone: bool,
}

/// Stacked network input and the slot each candidate landed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacked {
    pub input: Vec<f64>,
    /// Parallel to the candidate list; `None` when the object did not fit.
    pub slots: Vec<Option<usize>>,
}

/// Places candidates into `max_objects` slots in ascending id order.
///
/// When there are more candidates than slots, in-zone objects are kept first
/// (lowest ids within each group). Empty slots stay zero.
pub fn stack(candidates: &[SlotCandidate], max_objects: usize) -> Stacked {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| (!candidates[i].in_zone, candidates[i].id));
    order.truncate(max_objects);
    order.sort_by_key(|&i| candidates[i].id);

    let mut input = vec![0.0; ATTRIBUTES_PER_OBJECT * max_objects];
    let mut slots = vec![None; candidates.len()];
    for (slot, &i) in order.iter().enumerate() {
        input[slot * ATTRIBUTES_PER_OBJECT..(slot + 1) * ATTRIBUTES_PER_OBJECT]
            .copy_from_slice(&candidates[i].attributes);
        slots[i] = Some(slot);
    }
    Stacked { input, slots }
}
