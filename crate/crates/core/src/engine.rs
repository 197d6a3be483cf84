//! The frame-by-frame detection loop.
//!
//! Each frame: tag blips against the location table, update tracks and zone
//! visits, stack per-object attributes into the network, raise alerts for
//! in-zone objects above threshold, then (when an act oracle is attached) check
//! for hostile acts by objects that were never flagged and retrain on them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    analytic_hostility, feature_csv_row, speed_violation_template, FeatureVector, FEATURE_CSV_HEADER,
};
use crate::mlp::{LabeledExample, Mlp, ReplayBuffer, TrainConfig};
use crate::pipeline::{stack, ObjectState, PipelineConfig, SlotCandidate};
use crate::sim::GroundTruth;
use crate::som::{SomGrid, SomParams, Tagger, DEFAULT_COAST_FRAMES};
use crate::track::{Frame, LocationTable, ObjectId, Position};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub train: TrainConfig,
    pub target_loss: f64,
    pub max_steps: usize,
    pub replay_capacity: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        RetrainConfig {
            train: TrainConfig {
                learning_rate: 0.5,
                ..TrainConfig::default()
            },
            target_loss: 0.05,
            max_steps: 2000,
            replay_capacity: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    /// Alert threshold θ in (0, 1).
    pub theta: f64,
    /// Association gate in meters.
    pub gate: f64,
    pub coast_frames: u32,
    pub som_width: usize,
    pub som_height: usize,
    pub som: SomParams,
    /// Speed-violation template limit (m/s) and trailing window (s).
    pub speed_limit: f64,
    pub speed_window: f64,
    pub retrain: RetrainConfig,
    /// Frames of stacked inputs kept for building retraining examples.
    pub history_frames: usize,
}

impl EngineConfig {
    pub fn new(pipeline: PipelineConfig) -> Self {
        let area = pipeline.features.bounds.width.max(pipeline.features.bounds.height);
        EngineConfig {
            pipeline,
            theta: 0.7,
            gate: 400.0,
            coast_frames: DEFAULT_COAST_FRAMES,
            som_width: 8,
            som_height: 8,
            som: SomParams {
                alpha0: 0.05,
                alpha_tau: 20_000.0,
                sigma0: 2.0,
                sigma_tau: 20_000.0,
                steps: 1,
            },
            speed_limit: 15.0,
            speed_window: 60.0,
            retrain: RetrainConfig::default(),
            history_frames: (area / 10.0).max(100.0) as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Invalid(format!("theta must be in (0,1), got {}", self.theta)));
        }
        if !(self.speed_limit > 0.0 && self.speed_window > 0.0) {
            return Err(Error::Invalid("speed template limit and window must be > 0".into()));
        }
        self.som.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertSource {
    Neural,
    Analytic,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub object_id: ObjectId,
    pub timestamp: f64,
    pub p: f64,
    pub source: AlertSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissEvent {
    pub object_id: ObjectId,
    pub act_time: f64,
    /// Neural alert raised after the act, if any. Always later than `act_time`.
    pub first_alert_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Alert(AlertEvent),
    Miss(MissEvent),
    Retrained {
        object_id: ObjectId,
        timestamp: f64,
        examples: usize,
        steps: usize,
        loss_before: f64,
        loss_after: f64,
    },
}

/// Reports hostile acts observed in `(from, to]`.
pub trait ActOracle {
    fn acts(&self, from: Option<f64>, to: f64, table: &LocationTable) -> Vec<ActReport>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActReport {
    pub object_id: ObjectId,
    pub act_time: f64,
}

/// Act oracle backed by simulator ground truth. The actor is attributed to the
/// table entry nearest its true position.
pub struct TruthOracle<'a> {
    pub truth: &'a GroundTruth,
}

impl ActOracle for TruthOracle<'_> {
    fn acts(&self, from: Option<f64>, to: f64, table: &LocationTable) -> Vec<ActReport> {
        let mut out = Vec::new();
        for obj in &self.truth.objects {
            let Some(act_time) = obj.act_time else { continue };
            if act_time > to || from.is_some_and(|f| act_time <= f) {
                continue;
            }
            let frame = self.truth.times.iter().position(|&t| t == act_time);
            let Some(true_p) = frame.and_then(|f| obj.trajectory[f]) else {
                continue;
            };
            let nearest = table.iter().min_by(|a, b| {
                a.1.distance(true_p)
                    .total_cmp(&b.1.distance(true_p))
                    .then(a.0.cmp(&b.0))
            });
            if let Some((object_id, _)) = nearest {
                out.push(ActReport { object_id, act_time });
            }
        }
        out
    }
}

/// One scored (in-zone) object at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub t: f64,
    pub object_id: ObjectId,
    pub features: FeatureVector,
    pub p_neural: f64,
    pub p_analytic: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct FrameInputs {
    t: f64,
    input: Vec<f64>,
    /// in-zone objects and their slot
    in_zone_slots: BTreeMap<ObjectId, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub cfg: EngineConfig,
    pub table: LocationTable,
    pub grid: SomGrid,
    pub tagger: Tagger,
    pub objects: BTreeMap<ObjectId, ObjectState>,
    pub mlp: Mlp,
    pub alerts: Vec<AlertEvent>,
    pub replay: ReplayBuffer,
    /// Blip→id assignment of the most recent frame.
    pub last_ids: Vec<ObjectId>,
    last_t: Option<f64>,
    alerted: BTreeSet<(ObjectId, AlertSource, u64)>,
    missed: BTreeSet<ObjectId>,
    recent: VecDeque<FrameInputs>,
    score_log: Vec<ScoreRow>,
}

impl EngineState {
    pub fn new(cfg: EngineConfig, mlp: Mlp) -> Result<Self> {
        cfg.validate()?;
        let expected_in = cfg.pipeline.input_dim();
        if mlp.input_dim() != expected_in {
            return Err(Error::Dimension {
                what: "model input",
                expected: expected_in,
                got: mlp.input_dim(),
            });
        }
        if mlp.output_dim() != cfg.pipeline.max_objects {
            return Err(Error::Dimension {
                what: "model output",
                expected: cfg.pipeline.max_objects,
                got: mlp.output_dim(),
            });
        }
        let grid = SomGrid::lattice(cfg.som_width, cfg.som_height, &cfg.pipeline.features.bounds)?;
        let tagger = Tagger::new(cfg.gate)?.with_coast_frames(cfg.coast_frames);
        let replay = ReplayBuffer::new(cfg.retrain.replay_capacity);
        Ok(EngineState {
            cfg,
            table: LocationTable::new(),
            grid,
            tagger,
            objects: BTreeMap::new(),
            mlp,
            alerts: Vec::new(),
            replay,
            last_ids: Vec::new(),
            last_t: None,
            alerted: BTreeSet::new(),
            missed: BTreeSet::new(),
            recent: VecDeque::new(),
            score_log: Vec::new(),
        })
    }

    pub fn with_replay(mut self, data: impl IntoIterator<Item = LabeledExample>) -> Self {
        self.replay.extend(data);
        self
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_t
    }

    pub fn scores(&self) -> &[ScoreRow] {
        &self.score_log
    }

    /// Processes one frame. Without an oracle, act checks and retraining are skipped.
    pub fn step(&mut self, frame: &Frame, oracle: Option<&dyn ActOracle>) -> Result<Vec<Event>> {
        let t = frame.timestamp();
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(Error::OutOfOrder { last, got: t });
            }
        }
        let prev_t = self.last_t;
        self.last_t = Some(t);
        let cfg = &self.cfg.pipeline;

        // 001: tag
        let assignment = self.tagger.associate(frame, &self.table, &self.grid);
        assignment.apply(frame, &mut self.table);
        for blip in frame.blips() {
            self.grid.train_step(blip.position, &self.cfg.som);
        }
        for id in &assignment.retired {
            self.objects.remove(id);
        }
        for (&id, blip) in assignment.ids.iter().zip(frame.blips()) {
            match self.objects.get_mut(&id) {
                Some(s) => s.observe(t, blip.position, cfg)?,
                None => {
                    self.objects.insert(id, ObjectState::new(id, t, blip.position, cfg)?);
                }
            }
        }
        self.last_ids = assignment.ids.clone();

        // 002: stack present objects and run the network
        let mut present: Vec<ObjectId> = assignment.ids.clone();
        present.sort_unstable();
        let mut candidates = Vec::with_capacity(present.len());
        let mut feats = Vec::with_capacity(present.len());
        for &id in &present {
            let s = &self.objects[&id];
            let f = s.features(cfg)?;
            candidates.push(SlotCandidate {
                id,
                attributes: s.attributes(&f, cfg),
                in_zone: s.scorable(),
            });
            feats.push(f);
        }
        let stacked = stack(&candidates, cfg.max_objects);
        let outputs = self.mlp.forward(&stacked.input)?;

        // 004: highlight in-zone objects
        let mut events = Vec::new();
        let mut in_zone_slots = BTreeMap::new();
        for ((c, f), slot) in candidates.iter().zip(&feats).zip(&stacked.slots) {
            if !c.in_zone {
                continue;
            }
            let state = &self.objects[&c.id];
            let visit = state.target_entry.map(|e| e.entry_time.to_bits()).unwrap_or(0);
            let p_analytic = analytic_hostility(f, &cfg.features.weights, &cfg.features.scales);
            let p_neural = slot.map(|s| outputs[s]).unwrap_or(f64::NAN);
            if let Some(s) = *slot {
                in_zone_slots.insert(c.id, s);
            }
            self.score_log.push(ScoreRow {
                t,
                object_id: c.id,
                features: *f,
                p_neural,
                p_analytic,
            });
            let template =
                speed_violation_template(&state.track, self.cfg.speed_limit, self.cfg.speed_window).unwrap_or(false);
            let checks = [
                (AlertSource::Neural, p_neural > self.cfg.theta, p_neural),
                (AlertSource::Analytic, p_analytic > self.cfg.theta, p_analytic),
                (AlertSource::Template, template, p_analytic),
            ];
            for (source, fired, p) in checks {
                if fired && self.alerted.insert((c.id, source, visit)) {
                    let alert = AlertEvent {
                        object_id: c.id,
                        timestamp: t,
                        p,
                        source,
                    };
                    self.alerts.push(alert.clone());
                    events.push(Event::Alert(alert));
                }
            }
        }
        self.recent.push_back(FrameInputs {
            t,
            input: stacked.input,
            in_zone_slots,
        });
        while self.recent.len() > self.cfg.history_frames {
            self.recent.pop_front();
        }

        // 005/006: acts by objects never flagged trigger retraining
        if let Some(oracle) = oracle {
            for act in oracle.acts(prev_t, t, &self.table) {
                let id = act.object_id;
                let flagged = self
                    .alerts
                    .iter()
                    .any(|a| a.object_id == id && a.source == AlertSource::Neural && a.timestamp <= act.act_time);
                if flagged || !self.missed.insert(id) {
                    continue;
                }
                let first_alert_time = self
                    .alerts
                    .iter()
                    .find(|a| a.object_id == id && a.source == AlertSource::Neural)
                    .map(|a| a.timestamp);
                events.push(Event::Miss(MissEvent {
                    object_id: id,
                    act_time: act.act_time,
                    first_alert_time,
                }));
                let missed = self.missed_examples(id, act.act_time);
                if missed.is_empty() {
                    continue;
                }
                let rc = &self.cfg.retrain;
                let outcome =
                    self.mlp
                        .retrain_online(&missed, &self.replay, &rc.train, rc.target_loss, rc.max_steps)?;
                events.push(Event::Retrained {
                    object_id: id,
                    timestamp: t,
                    examples: missed.len(),
                    steps: outcome.steps,
                    loss_before: outcome.loss_before,
                    loss_after: outcome.loss_after,
                });
            }
        }
        Ok(events)
    }

    /// Stored in-zone frames of `id` up to `act_time`, labeled hostile on its own slot only.
    pub fn missed_examples(&self, id: ObjectId, act_time: f64) -> Vec<LabeledExample> {
        let n = self.cfg.pipeline.max_objects;
        self.recent
            .iter()
            .filter(|r| r.t <= act_time)
            .filter_map(|r| {
                let slot = *r.in_zone_slots.get(&id)?;
                let mut target = vec![0.0; n];
                let mut mask = vec![false; n];
                target[slot] = 1.0;
                mask[slot] = true;
                Some(LabeledExample {
                    input: r.input.clone(),
                    target,
                    mask,
                })
            })
            .collect()
    }
}

/// Per-object summary over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object_id: ObjectId,
    /// Ever scored, i.e. seen inside the target zone.
    pub scored: bool,
    pub max_p: Option<f64>,
    pub max_p_analytic: Option<f64>,
    /// Like `max_p`, but only over frames at or before the act, when there is one.
    pub max_p_before_act: Option<f64>,
    pub first_zone_time: Option<f64>,
    pub first_alert_time: Option<f64>,
    /// Majority ground-truth object behind this id, when truth is known.
    pub truth_index: Option<usize>,
    pub hostile: Option<bool>,
    pub act_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: Option<u64>,
    pub theta: f64,
    pub frames: usize,
    pub config: EngineConfig,
    pub events: Vec<Event>,
    pub alerts: Vec<AlertEvent>,
    pub misses: Vec<MissEvent>,
    pub objects: Vec<ObjectSummary>,
    /// Fraction of blips whose engine id matches the majority mapping to truth.
    pub identity_accuracy: Option<f64>,
    pub scores_csv: Option<String>,
    pub inputs: Option<RunInputs>,
}

/// Files a report was produced from, for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub model: String,
    pub frames: String,
    pub truth: Option<String>,
    pub config: Option<String>,
    pub retrain: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(e.line(), e.to_string()))
    }

    /// Canonical serialization of the event stream, used for determinism audits.
    pub fn events_json(&self) -> String {
        events_json(&self.events)
    }

    pub fn alerted_ids(&self) -> BTreeSet<ObjectId> {
        self.alerts.iter().map(|a| a.object_id).collect()
    }
}

pub fn events_json(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("event serializes"));
        s.push('\n');
    }
    s
}

/// Per-frame score matrix as CSV (`t,object_id,d_t,d_pn,I,speed,heading,p`).
pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from(FEATURE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&feature_csv_row(r.t, r.object_id, &r.features, r.p_neural));
        s.push('\n');
    }
    s
}

/// Folds `step` over `frames`. With `truth` and `retrain`, the truth oracle drives
/// miss detection and online retraining; truth is also used to label the summary.
pub fn run(state: &mut EngineState, frames: &[Frame], truth: Option<&GroundTruth>, retrain: bool) -> Result<RunReport> {
    if let Some(truth) = truth {
        if truth.times.len() != frames.len() {
            return Err(Error::Dimension {
                what: "truth frames",
                expected: frames.len(),
                got: truth.times.len(),
            });
        }
    }
    let oracle = truth.map(|truth| TruthOracle { truth });
    let mut events = Vec::new();
    // (engine id, truth index) → blip count
    let mut votes: BTreeMap<(ObjectId, usize), usize> = BTreeMap::new();
    for (k, frame) in frames.iter().enumerate() {
        let oracle_ref = oracle.as_ref().filter(|_| retrain).map(|o| o as &dyn ActOracle);
        events.extend(state.step(frame, oracle_ref)?);
        if let Some(truth) = truth {
            let corr = &truth.correspondence[k];
            if corr.len() != state.last_ids.len() {
                return Err(Error::Dimension {
                    what: "truth correspondence",
                    expected: state.last_ids.len(),
                    got: corr.len(),
                });
            }
            for (&id, &ti) in state.last_ids.iter().zip(corr) {
                *votes.entry((id, ti)).or_default() += 1;
            }
        }
    }

    let mut mapping: BTreeMap<ObjectId, (usize, usize)> = BTreeMap::new();
    for (&(id, ti), &n) in &votes {
        let e = mapping.entry(id).or_insert((ti, n));
        if n > e.1 {
            *e = (ti, n);
        }
    }
    let identity_accuracy = truth.map(|_| {
        let total: usize = votes.values().sum();
        let correct: usize = mapping.values().map(|v| v.1).sum();
        if total == 0 {
            1.0
        } else {
            correct as f64 / total as f64
        }
    });

    let mut summaries: BTreeMap<ObjectId, ObjectSummary> = BTreeMap::new();
    let ids: BTreeSet<ObjectId> = votes
        .keys()
        .map(|k| k.0)
        .chain(state.scores().iter().map(|r| r.object_id))
        .chain(state.objects.keys().copied())
        .collect();
    for id in ids {
        let truth_index = mapping.get(&id).map(|m| m.0);
        let truth_obj = truth.zip(truth_index).map(|(t, i)| &t.objects[i]);
        summaries.insert(
            id,
            ObjectSummary {
                object_id: id,
                scored: false,
                max_p: None,
                max_p_analytic: None,
                max_p_before_act: None,
                first_zone_time: None,
                first_alert_time: None,
                truth_index,
                hostile: truth_obj.map(|o| o.hostile),
                act_time: truth_obj.and_then(|o| o.act_time),
            },
        );
    }
    for r in state.scores() {
        let s = summaries.get_mut(&r.object_id).expect("scored ids are summarized");
        s.scored = true;
        s.first_zone_time.get_or_insert(r.t);
        if r.p_neural.is_finite() {
            s.max_p = Some(s.max_p.map_or(r.p_neural, |m| m.max(r.p_neural)));
        }
        s.max_p_analytic = Some(s.max_p_analytic.map_or(r.p_analytic, |m| m.max(r.p_analytic)));
        if r.p_neural.is_finite() && s.act_time.is_none_or(|a| r.t <= a) {
            s.max_p_before_act = Some(s.max_p_before_act.map_or(r.p_neural, |m| m.max(r.p_neural)));
        }
    }
    for a in state.alerts.iter().filter(|a| a.source == AlertSource::Neural) {
        if let Some(s) = summaries.get_mut(&a.object_id) {
            s.first_alert_time.get_or_insert(a.timestamp);
        }
    }

    let alerts = events
        .iter()
        .filter_map(|e| match e {
            Event::Alert(a) => Some(a.clone()),
            _ => None,
        })
        .collect();
    let misses = events
        .iter()
        .filter_map(|e| match e {
            Event::Miss(m) => Some(m.clone()),
            _ => None,
        })
        .collect();
    Ok(RunReport {
        seed: None,
        theta: state.cfg.theta,
        frames: frames.len(),
        config: state.cfg.clone(),
        events,
        alerts,
        misses,
        objects: summaries.into_values().collect(),
        identity_accuracy,
        scores_csv: None,
        inputs: None,
    })
}

/// One scenario to run through a fresh engine.
pub struct RunJob<'a> {
    pub cfg: EngineConfig,
    pub frames: &'a [Frame],
    pub truth: Option<&'a GroundTruth>,
    pub retrain: bool,
    pub seed: Option<u64>,
}

/// Runs jobs on `workers` threads; results come back in job order and do not
/// depend on the worker count.
pub fn run_many(jobs: &[RunJob<'_>], mlp: &Mlp, replay: &[LabeledExample], workers: usize) -> Result<Vec<RunReport>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let mut state = EngineState::new(job.cfg.clone(), mlp.clone())?.with_replay(replay.iter().cloned());
                let mut report = run(&mut state, job.frames, job.truth, job.retrain)?;
                report.seed = job.seed;
                Ok(report)
            })
            .collect()
    })
}

/// Location of the truth object at frame `k`, if present.
pub fn truth_position(truth: &GroundTruth, index: usize, k: usize) -> Option<Position> {
    truth.objects.get(index)?.trajectory.get(k).copied().flatten()
}
