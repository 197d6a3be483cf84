//! Synthetic radar scenarios with ground truth.
//!
//! Benign objects either transit straight across the area or loiter on a small
//! closed loop. Hostile objects either beeline to the target or meander through
//! 3–6 waypoints inside the suspect zone before approaching. Every hostile object
//! holds station at the target once it arrives. Observed blips carry additive
//! isotropic Gaussian noise and are emitted in shuffled order.
//!
//! All randomness comes from a single `Xoshiro256PlusPlus` stream seeded through
//! SplitMix64 (`seed_from_u64`), so a config reproduces bit-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::LabeledExample;
use crate::pipeline::{stack, ObjectState, PipelineConfig, SlotCandidate};
use crate::som::Bounds;
use crate::track::{Frame, ObjectId, Position, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Transit,
    Loiter,
    DirectApproach,
    DeceptiveApproach,
}

impl Behavior {
    pub fn is_hostile(self) -> bool {
        matches!(self, Behavior::DirectApproach | Behavior::DeceptiveApproach)
    }
}

/// Relative weights for picking a behavior within each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMix {
    pub transit: f64,
    pub loiter: f64,
    pub direct: f64,
    pub deceptive: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        BehaviorMix {
            transit: 3.0,
            loiter: 1.0,
            direct: 1.0,
            deceptive: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub target: Position,
    pub target_zone: Zone,
    pub suspect_zone: Zone,
    pub n_benign: usize,
    pub n_hostile: usize,
    pub mix: BehaviorMix,
    pub noise_sigma: f64,
    pub dt: f64,
    pub duration: f64,
    pub act_radius: f64,
    pub seed: u64,
    pub drop_prob: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let target = Position::new(4000.0, 4000.0);
        ScenarioConfig {
            area_width: 8000.0,
            area_height: 8000.0,
            target,
            target_zone: Zone::Circle {
                center: target,
                radius: 1500.0,
            },
            suspect_zone: Zone::Circle {
                center: target,
                radius: 2500.0,
            },
            n_benign: 4,
            n_hostile: 1,
            mix: BehaviorMix::default(),
            noise_sigma: 5.0,
            dt: 10.0,
            duration: 1800.0,
            act_radius: 100.0,
            seed: 1,
            drop_prob: 0.0,
            speed_min: 4.0,
            speed_max: 12.0,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "area_width",
    "area_height",
    "target_x",
    "target_y",
    "target_zone",
    "suspect_zone",
    "n_benign",
    "n_hostile",
    "mix_transit",
    "mix_loiter",
    "mix_direct",
    "mix_deceptive",
    "noise_sigma",
    "dt",
    "duration",
    "act_radius",
    "seed",
    "drop_prob",
    "speed_min",
    "speed_max",
];

impl ScenarioConfig {
    pub fn bounds(&self) -> Bounds {
        Bounds::new(0.0, 0.0, self.area_width, self.area_height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.area_width > 0.0 && self.area_height > 0.0) {
            return bad("area extents must be positive".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration >= self.dt) {
            return bad(format!("duration {} shorter than dt {}", self.duration, self.dt));
        }
        if !(self.act_radius > 0.0) {
            return bad(format!("act_radius must be > 0, got {}", self.act_radius));
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&self.drop_prob) {
            return bad("noise_sigma must be >= 0 and drop_prob in [0,1]".into());
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("need 0 < speed_min <= speed_max".into());
        }
        let m = &self.mix;
        if [m.transit, m.loiter, m.direct, m.deceptive]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return bad("mix weights must be >= 0".into());
        }
        if self.n_benign > 0 && m.transit + m.loiter <= 0.0 {
            return bad("benign objects requested but benign mix weights are zero".into());
        }
        if self.n_hostile > 0 && m.direct + m.deceptive <= 0.0 {
            return bad("hostile objects requested but hostile mix weights are zero".into());
        }
        self.target_zone.validate()?;
        self.suspect_zone.validate()?;
        if !self.target_zone.contains(self.target) || !self.suspect_zone.contains(self.target) {
            return bad("zones must contain the target".into());
        }
        Ok(())
    }

    /// Feature pipeline matching this scenario's geometry.
    pub fn pipeline(&self, max_objects: usize) -> PipelineConfig {
        PipelineConfig {
            features: crate::features::FeatureConfig::new(
                self.target,
                self.target_zone.characteristic_radius(),
                self.bounds(),
            ),
            target_zone: self.target_zone.clone(),
            suspect_zone: self.suspect_zone.clone(),
            max_objects,
        }
    }

    /// Flat `key = value` form; zones are `circle <cx> <cy> <r>` or `polygon x1 y1 x2 y2 ...`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("area_width", self.area_width.to_string());
        kv("area_height", self.area_height.to_string());
        kv("target_x", self.target.x.to_string());
        kv("target_y", self.target.y.to_string());
        kv("target_zone", zone_to_kv(&self.target_zone));
        kv("suspect_zone", zone_to_kv(&self.suspect_zone));
        kv("n_benign", self.n_benign.to_string());
        kv("n_hostile", self.n_hostile.to_string());
        kv("mix_transit", self.mix.transit.to_string());
        kv("mix_loiter", self.mix.loiter.to_string());
        kv("mix_direct", self.mix.direct.to_string());
        kv("mix_deceptive", self.mix.deceptive.to_string());
        kv("noise_sigma", self.noise_sigma.to_string());
        kv("dt", self.dt.to_string());
        kv("duration", self.duration.to_string());
        kv("act_radius", self.act_radius.to_string());
        kv("seed", self.seed.to_string());
        kv("drop_prob", self.drop_prob.to_string());
        kv("speed_min", self.speed_min.to_string());
        kv("speed_max", self.speed_max.to_string());
        s
    }

    /// Parses the flat form. Missing keys keep their defaults; zones given
    /// without an explicit value follow a changed target.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(i + 1, "expected 'key = value'"))?;
            let k = k.trim();
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::format(i + 1, format!("unknown key '{k}'")));
            }
            map.insert(k.to_string(), (i + 1, v.trim().to_string()));
        }
        let mut cfg = ScenarioConfig::default();
        let num = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|(line, v)| {
                    v.parse::<f64>()
                        .map_err(|e| Error::format(*line, format!("{key}: {e}")))
                })
                .transpose()
        };
        let int = |key: &str| -> Result<Option<u64>> {
            map.get(key)
                .map(|(line, v)| {
                    v.parse::<u64>()
                        .map_err(|e| Error::format(*line, format!("{key}: {e}")))
                })
                .transpose()
        };
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = num($key)? {
                    $field = v;
                }
            };
        }
        set!(cfg.area_width, "area_width");
        set!(cfg.area_height, "area_height");
        set!(cfg.target.x, "target_x");
        set!(cfg.target.y, "target_y");
        set!(cfg.mix.transit, "mix_transit");
        set!(cfg.mix.loiter, "mix_loiter");
        set!(cfg.mix.direct, "mix_direct");
        set!(cfg.mix.deceptive, "mix_deceptive");
        set!(cfg.noise_sigma, "noise_sigma");
        set!(cfg.dt, "dt");
        set!(cfg.duration, "duration");
        set!(cfg.act_radius, "act_radius");
        set!(cfg.drop_prob, "drop_prob");
        set!(cfg.speed_min, "speed_min");
        set!(cfg.speed_max, "speed_max");
        if let Some(v) = int("n_benign")? {
            cfg.n_benign = v as usize;
        }
        if let Some(v) = int("n_hostile")? {
            cfg.n_hostile = v as usize;
        }
        if let Some(v) = int("seed")? {
            cfg.seed = v;
        }
        let default_target = ScenarioConfig::default().target;
        let shift = cfg.target - default_target;
        cfg.target_zone = recenter(&cfg.target_zone, shift);
        cfg.suspect_zone = recenter(&cfg.suspect_zone, shift);
        for (key, zone) in [
            ("target_zone", &mut cfg.target_zone),
            ("suspect_zone", &mut cfg.suspect_zone),
        ] {
            if let Some((line, v)) = map.get(key) {
                *zone = zone_from_kv(v).map_err(|m| Error::format(*line, format!("{key}: {m}")))?;
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(e.line(), e.to_string()))
    }

    /// Accepts either the JSON or the flat text form.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_kv(text)
        }
    }
}

fn recenter(zone: &Zone, shift: Position) -> Zone {
    match zone {
        Zone::Circle { center, radius } => Zone::Circle {
            center: *center + shift,
            radius: *radius,
        },
        Zone::Polygon { vertices } => Zone::Polygon {
            vertices: vertices.iter().map(|v| *v + shift).collect(),
        },
    }
}

fn zone_to_kv(zone: &Zone) -> String {
    match zone {
        Zone::Circle { center, radius } => format!("circle {} {} {}", center.x, center.y, radius),
        Zone::Polygon { vertices } => {
            let mut s = "polygon".to_string();
            for v in vertices {
                let _ = write!(s, " {} {}", v.x, v.y);
            }
            s
        }
    }
}

fn zone_from_kv(v: &str) -> std::result::Result<Zone, String> {
    let mut parts = v.split_whitespace();
    let kind = parts.next().ok_or("empty zone")?;
    let nums = parts
        .map(|s| s.parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match kind {
        "circle" if nums.len() == 3 => {
            Zone::circle(Position::new(nums[0], nums[1]), nums[2]).map_err(|e| e.to_string())
        }
        "polygon" if nums.len() >= 6 && nums.len() % 2 == 0 => {
            Zone::polygon(nums.chunks(2).map(|c| Position::new(c[0], c[1])).collect()).map_err(|e| e.to_string())
        }
        _ => Err(format!("expected 'circle cx cy r' or 'polygon x1 y1 ...', got '{v}'")),
    }
}

/// Ground truth for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub index: usize,
    pub behavior: Behavior,
    pub hostile: bool,
    /// Noiseless positions, one per frame; `None` while outside the area.
    pub trajectory: Vec<Option<Position>>,
    pub act_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub objects: Vec<TruthObject>,
    /// `correspondence[f][b]` is the object index behind blip `b` of frame `f`.
    pub correspondence: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TruthRecord {
    Object {
        index: usize,
        behavior: Behavior,
        hostile: bool,
        act_time: Option<f64>,
        /// `[t, x, y]` for every frame the object is present.
        trajectory: Vec<[f64; 3]>,
    },
    Frame {
        t: f64,
        objects: Vec<usize>,
    },
}

impl GroundTruth {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for o in &self.objects {
            let rec = TruthRecord::Object {
                index: o.index,
                behavior: o.behavior,
                hostile: o.hostile,
                act_time: o.act_time,
                trajectory: self
                    .times
                    .iter()
                    .zip(&o.trajectory)
                    .filter_map(|(&t, p)| p.map(|p| [t, p.x, p.y]))
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("truth serializes"));
            out.push('\n');
        }
        for (&t, objects) in self.times.iter().zip(&self.correspondence) {
            let rec = TruthRecord::Frame {
                t,
                objects: objects.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("truth serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut objects = Vec::new();
        let mut times = Vec::new();
        let mut correspondence = Vec::new();
        let mut raw_traj = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TruthRecord = serde_json::from_str(line).map_err(|e| Error::format(i + 1, e.to_string()))?;
            match rec {
                TruthRecord::Object {
                    index,
                    behavior,
                    hostile,
                    act_time,
                    trajectory,
                } => {
                    if index != objects.len() {
                        return Err(Error::format(i + 1, "object records must be in index order"));
                    }
                    objects.push(TruthObject {
                        index,
                        behavior,
                        hostile,
                        trajectory: Vec::new(),
                        act_time,
                    });
                    raw_traj.push(trajectory);
                }
                TruthRecord::Frame { t, objects: ids } => {
                    times.push(t);
                    correspondence.push(ids);
                }
            }
        }
        for (o, samples) in objects.iter_mut().zip(raw_traj) {
            let by_t: BTreeMap<u64, Position> = samples
                .iter()
                .map(|&[t, x, y]| (t.to_bits(), Position::new(x, y)))
                .collect();
            o.trajectory = times.iter().map(|t| by_t.get(&t.to_bits()).copied()).collect();
        }
        let truth = GroundTruth {
            times,
            objects,
            correspondence,
        };
        truth.check()?;
        Ok(truth)
    }

    fn check(&self) -> Result<()> {
        for (f, ids) in self.correspondence.iter().enumerate() {
            let mut seen = vec![false; self.objects.len()];
            for &i in ids {
                if i >= self.objects.len() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::format(0, format!("frame {f}: bad correspondence")));
                }
            }
        }
        Ok(())
    }

    pub fn hostile_count(&self) -> usize {
        self.objects.iter().filter(|o| o.hostile).count()
    }
}

/// Earliest sampled time the true trajectory is within `act_radius` of `target`.
pub fn act_of_hostility(truth: &GroundTruth, index: usize, target: Position, act_radius: f64) -> Result<Option<f64>> {
    if !(act_radius > 0.0) {
        return Err(Error::Invalid(format!("act_radius must be > 0, got {act_radius}")));
    }
    let obj = truth
        .objects
        .get(index)
        .ok_or_else(|| Error::Invalid(format!("unknown truth object {index}")))?;
    Ok(truth
        .times
        .iter()
        .zip(&obj.trajectory)
        .find(|(_, p)| p.is_some_and(|p| p.distance(target) <= act_radius))
        .map(|(&t, _)| t))
}

enum Motion {
    /// Constant-speed polyline starting `offset` meters along it.
    Path {
        waypoints: Vec<Position>,
        speed: f64,
        offset: f64,
        hold: bool,
    },
    Orbit {
        center: Position,
        radius: f64,
        speed: f64,
        phase: f64,
    },
}

impl Motion {
    fn position_at(&self, t: f64) -> Option<Position> {
        match self {
            Motion::Path {
                waypoints,
                speed,
                offset,
                hold,
            } => {
                let mut remaining = offset + speed * t;
                for w in waypoints.windows(2) {
                    let leg = w[0].distance(w[1]);
                    if remaining <= leg {
                        if leg == 0.0 {
                            return Some(w[1]);
                        }
                        return Some(w[0] + (w[1] - w[0]).scale(remaining / leg));
                    }
                    remaining -= leg;
                }
                hold.then(|| *waypoints.last().expect("path has waypoints"))
            }
            Motion::Orbit {
                center,
                radius,
                speed,
                phase,
            } => {
                let a = phase + speed * t / radius;
                Some(Position::new(center.x + radius * a.cos(), center.y + radius * a.sin()))
            }
        }
    }
}

fn pick<R: Rng>(rng: &mut R, options: &[(Behavior, f64)]) -> Behavior {
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut x = rng.random::<f64>() * total;
    for &(b, w) in options {
        if x < w {
            return b;
        }
        x -= w;
    }
    options.iter().rev().find(|o| o.1 > 0.0).expect("a positive weight").0
}

fn edge_point<R: Rng>(rng: &mut R, b: &Bounds, side: u32) -> Position {
    let u = rng.random::<f64>();
    match side {
        0 => Position::new(b.x_min + u * b.width, b.y_min),
        1 => Position::new(b.x_min + b.width, b.y_min + u * b.height),
        2 => Position::new(b.x_min + u * b.width, b.y_min + b.height),
        _ => Position::new(b.x_min, b.y_min + u * b.height),
    }
}

fn point_in_zone<R: Rng>(rng: &mut R, zone: &Zone) -> Position {
    let c = zone.centroid();
    let r = match zone {
        Zone::Circle { radius, .. } => *radius,
        Zone::Polygon { vertices } => vertices.iter().map(|v| v.distance(c)).fold(0.0, f64::max),
    };
    loop {
        let p = Position::new(
            c.x + (rng.random::<f64>() * 2.0 - 1.0) * r,
            c.y + (rng.random::<f64>() * 2.0 - 1.0) * r,
        );
        if zone.contains(p) {
            return p;
        }
    }
}

fn hostile_start<R: Rng>(rng: &mut R, cfg: &ScenarioConfig) -> Position {
    let b = cfg.bounds();
    let reach = cfg.suspect_zone.characteristic_radius();
    for _ in 0..10_000 {
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let dist = reach * (1.1 + 0.4 * rng.random::<f64>());
        let p = Position::new(cfg.target.x + dist * angle.cos(), cfg.target.y + dist * angle.sin());
        if b.contains(p) && !cfg.suspect_zone.contains(p) {
            return p;
        }
    }
    // area too tight for a ring start: fall back to a random edge point
    let side = rng.random_range(0..4);
    edge_point(rng, &b, side)
}

fn make_motion<R: Rng>(rng: &mut R, cfg: &ScenarioConfig, behavior: Behavior) -> Motion {
    let b = cfg.bounds();
    let speed = cfg.speed_min + rng.random::<f64>() * (cfg.speed_max - cfg.speed_min);
    match behavior {
        Behavior::Transit => {
            let side = rng.random_range(0..4u32);
            let start = edge_point(rng, &b, side);
            let end = edge_point(rng, &b, (side + 2) % 4);
            let offset = rng.random::<f64>() * 0.5 * start.distance(end);
            Motion::Path {
                waypoints: vec![start, end],
                speed,
                offset,
                hold: false,
            }
        }
        Behavior::Loiter => {
            let radius = 100.0 + 200.0 * rng.random::<f64>();
            let keep_out = cfg.target_zone.characteristic_radius() / 2.0 + radius;
            let center = loop {
                let c = Position::new(
                    b.x_min + radius + rng.random::<f64>() * (b.width - 2.0 * radius).max(0.0),
                    b.y_min + radius + rng.random::<f64>() * (b.height - 2.0 * radius).max(0.0),
                );
                if c.distance(cfg.target) > keep_out {
                    break c;
                }
            };
            Motion::Orbit {
                center,
                radius,
                speed: speed.min(5.0),
                phase: rng.random::<f64>() * std::f64::consts::TAU,
            }
        }
        Behavior::DirectApproach => Motion::Path {
            waypoints: vec![hostile_start(rng, cfg), cfg.target],
            speed,
            offset: 0.0,
            hold: true,
        },
        Behavior::DeceptiveApproach => {
            let mut waypoints = vec![hostile_start(rng, cfg)];
            let k = rng.random_range(3..=6);
            for _ in 0..k {
                waypoints.push(point_in_zone(rng, &cfg.suspect_zone));
            }
            waypoints.push(cfg.target);
            Motion::Path {
                waypoints,
                speed,
                offset: 0.0,
                hold: true,
            }
        }
    }
}

/// Generates frames and ground truth for `cfg`.
pub fn generate(cfg: &ScenarioConfig) -> Result<(Vec<Frame>, GroundTruth)> {
    cfg.validate()?;
    if cfg.n_benign + cfg.n_hostile == 0 {
        return Err(Error::EmptyInput("scenario has zero objects"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let bounds = cfg.bounds();
    let benign = [(Behavior::Transit, cfg.mix.transit), (Behavior::Loiter, cfg.mix.loiter)];
    let hostile = [
        (Behavior::DirectApproach, cfg.mix.direct),
        (Behavior::DeceptiveApproach, cfg.mix.deceptive),
    ];
    let mut behaviors = Vec::with_capacity(cfg.n_benign + cfg.n_hostile);
    for _ in 0..cfg.n_benign {
        behaviors.push(pick(&mut rng, &benign));
    }
    for _ in 0..cfg.n_hostile {
        behaviors.push(pick(&mut rng, &hostile));
    }
    behaviors.shuffle(&mut rng);
    let motions: Vec<Motion> = behaviors.iter().map(|&b| make_motion(&mut rng, cfg, b)).collect();

    let n_frames = (cfg.duration / cfg.dt + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..n_frames).map(|k| k as f64 * cfg.dt).collect();
    let mut objects: Vec<TruthObject> = behaviors
        .iter()
        .enumerate()
        .map(|(index, &behavior)| TruthObject {
            index,
            behavior,
            hostile: behavior.is_hostile(),
            trajectory: Vec::with_capacity(n_frames),
            act_time: None,
        })
        .collect();

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut frames = Vec::with_capacity(n_frames);
    let mut correspondence = Vec::with_capacity(n_frames);
    for &t in &times {
        let mut blips = Vec::new();
        for (i, m) in motions.iter().enumerate() {
            let truth_p = m.position_at(t).filter(|p| bounds.contains(*p));
            objects[i].trajectory.push(truth_p);
            if let Some(p) = truth_p {
                let dropped = cfg.drop_prob > 0.0 && rng.random::<f64>() < cfg.drop_prob;
                let observed = if cfg.noise_sigma > 0.0 {
                    Position::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))
                } else {
                    p
                };
                if !dropped {
                    blips.push((i, observed));
                }
            }
        }
        blips.shuffle(&mut rng);
        correspondence.push(blips.iter().map(|b| b.0).collect());
        frames.push(Frame::new(t, blips.into_iter().map(|b| b.1))?);
    }

    let mut truth = GroundTruth {
        times,
        objects,
        correspondence,
    };
    for i in 0..truth.objects.len() {
        if truth.objects[i].hostile {
            truth.objects[i].act_time = act_of_hostility(&truth, i, cfg.target, cfg.act_radius)?;
        }
    }
    Ok((frames, truth))
}

/// Engine-side id used for a ground-truth object when labeling from truth.
pub fn truth_object_id(index: usize) -> ObjectId {
    ObjectId(index as u32 + 1)
}

/// Supervised examples built from ground-truth identities.
///
/// One example per frame in which at least one observed object is inside the
/// target zone. Targets are the hostile flags; the mask marks present objects
/// that are inside the target zone.
pub fn label_examples(frames: &[Frame], truth: &GroundTruth, cfg: &PipelineConfig) -> Result<Vec<LabeledExample>> {
    if frames.len() != truth.correspondence.len() {
        return Err(Error::Dimension {
            what: "truth frames",
            expected: frames.len(),
            got: truth.correspondence.len(),
        });
    }
    let mut states: BTreeMap<usize, ObjectState> = BTreeMap::new();
    let mut out = Vec::new();
    for (frame, ids) in frames.iter().zip(&truth.correspondence) {
        if ids.len() != frame.len() {
            return Err(Error::Dimension {
                what: "truth correspondence",
                expected: frame.len(),
                got: ids.len(),
            });
        }
        let t = frame.timestamp();
        let mut present = Vec::with_capacity(ids.len());
        for (&i, blip) in ids.iter().zip(frame.blips()) {
            match states.get_mut(&i) {
                Some(s) => s.observe(t, blip.position, cfg)?,
                None => {
                    states.insert(i, ObjectState::new(truth_object_id(i), t, blip.position, cfg)?);
                }
            }
            present.push(i);
        }
        present.sort_unstable();
        let mut candidates = Vec::with_capacity(present.len());
        for &i in &present {
            let s = &states[&i];
            let f = s.features(cfg)?;
            candidates.push(SlotCandidate {
                id: truth_object_id(i),
                attributes: s.attributes(&f, cfg),
                in_zone: s.scorable(),
            });
        }
        if !candidates.iter().any(|c| c.in_zone) {
            continue;
        }
        let stacked = stack(&candidates, cfg.max_objects);
        let mut target = vec![0.0; cfg.max_objects];
        let mut mask = vec![false; cfg.max_objects];
        for ((c, slot), &i) in candidates.iter().zip(&stacked.slots).zip(&present) {
            if let Some(slot) = *slot {
                target[slot] = if truth.objects[i].hostile { 1.0 } else { 0.0 };
                mask[slot] = c.in_zone;
            }
        }
        out.push(LabeledExample {
            input: stacked.input,
            target,
            mask,
        });
    }
    Ok(out)
}
