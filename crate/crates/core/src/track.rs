//! Planar geometry, zones, tracks and the id→position location table.
//!
//! Coordinates are meters on a flat plane (x east, y north); time is seconds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, k: f64) -> Position {
        Position::new(self.x * k, self.y * k)
    }
}

impl std::ops::Add for Position {
    type Output = Position;

    fn add(self, other: Position) -> Position {
        Position::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Position {
    type Output = Position;

    fn sub(self, other: Position) -> Position {
        Position::new(self.x - other.x, self.y - other.y)
    }
}

/// Persistent identity of a tracked object. Displays zero-padded, e.g. `001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03}", self.0)
    }
}

impl FromStr for ObjectId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(ObjectId)
    }
}

/// A single anonymous detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blip {
    pub position: Position,
    pub timestamp: f64,
}

/// One radar sweep. Every blip carries the frame timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    timestamp: f64,
    blips: Vec<Blip>,
}

impl Frame {
    pub fn new(timestamp: f64, positions: impl IntoIterator<Item = Position>) -> Result<Self> {
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::Invalid(format!("frame timestamp {timestamp}")));
        }
        let blips = positions
            .into_iter()
            .map(|position| {
                if position.is_finite() {
                    Ok(Blip { position, timestamp })
                } else {
                    Err(Error::Invalid(format!("non-finite blip at t={timestamp}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Frame { timestamp, blips })
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn blips(&self) -> &[Blip] {
        &self.blips
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.blips.iter().map(|b| b.position)
    }

    pub fn len(&self) -> usize {
        self.blips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blips.is_empty()
    }

    /// `t=<seconds>; (x1,y1) (x2,y2) ...`
    pub fn to_text_line(&self) -> String {
        let mut s = format!("t={};", self.timestamp);
        for b in &self.blips {
            s.push_str(&format!(" ({},{})", b.position.x, b.position.y));
        }
        s
    }

    pub fn parse_text_line(line: &str) -> std::result::Result<Self, String> {
        let (head, rest) = line
            .split_once(';')
            .ok_or_else(|| "missing ';' after timestamp".to_string())?;
        let t = head
            .trim()
            .strip_prefix("t=")
            .ok_or_else(|| "expected 't=' prefix".to_string())?
            .parse::<f64>()
            .map_err(|e| format!("bad timestamp: {e}"))?;
        let mut positions = Vec::new();
        for tok in rest.split_whitespace() {
            let inner = tok
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| format!("malformed blip '{tok}'"))?;
            let (xs, ys) = inner.split_once(',').ok_or_else(|| format!("malformed blip '{tok}'"))?;
            let x = xs.parse::<f64>().map_err(|e| format!("bad x in '{tok}': {e}"))?;
            let y = ys.parse::<f64>().map_err(|e| format!("bad y in '{tok}': {e}"))?;
            positions.push(Position::new(x, y));
        }
        Frame::new(t, positions).map_err(|e| e.to_string())
    }

    /// `{"t":…,"blips":[[x,y],…]}`
    pub fn to_json_line(&self) -> String {
        let rec = FrameRecord {
            t: self.timestamp,
            blips: self.blips.iter().map(|b| [b.position.x, b.position.y]).collect(),
        };
        serde_json::to_string(&rec).expect("frame record serializes")
    }

    pub fn parse_json_line(line: &str) -> std::result::Result<Self, String> {
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Frame::new(rec.t, rec.blips.into_iter().map(|[x, y]| Position::new(x, y))).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    blips: Vec<[f64; 2]>,
}

/// Reads a frames file, accepting either the JSONL or the `t=...;` text form per line.
pub fn parse_frames(text: &str) -> Result<Vec<Frame>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let l = l.trim();
            if l.starts_with('{') {
                Frame::parse_json_line(l)
            } else {
                Frame::parse_text_line(l)
            }
            .map_err(|msg| Error::format(i + 1, msg))
        })
        .collect()
}

pub fn frames_to_jsonl(frames: &[Frame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&f.to_json_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub position: Position,
}

/// Identity-resolved position history. Timestamps are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    object_id: ObjectId,
    history: Vec<Sample>,
}

impl Track {
    pub fn new(object_id: ObjectId, t: f64, position: Position) -> Result<Self> {
        if !t.is_finite() || !position.is_finite() {
            return Err(Error::Invalid("non-finite track sample".into()));
        }
        Ok(Track {
            object_id,
            history: vec![Sample { t, position }],
        })
    }

    pub fn from_samples(object_id: ObjectId, samples: impl IntoIterator<Item = (f64, Position)>) -> Result<Self> {
        let mut it = samples.into_iter();
        let (t0, p0) = it.next().ok_or(Error::EmptyInput("track history"))?;
        let mut track = Track::new(object_id, t0, p0)?;
        for (t, p) in it {
            track.push(t, p)?;
        }
        Ok(track)
    }

    pub fn push(&mut self, t: f64, position: Position) -> Result<()> {
        let last = self.last().t;
        if !(t > last) {
            return Err(Error::OutOfOrder { last, got: t });
        }
        if !position.is_finite() {
            return Err(Error::Invalid("non-finite track sample".into()));
        }
        self.history.push(Sample { t, position });
        Ok(())
    }

    pub fn object_id(&self) -> ObjectId {
        self.object_id
    }

    pub fn history(&self) -> &[Sample] {
        &self.history
    }

    pub fn last(&self) -> Sample {
        *self.history.last().expect("track history is never empty")
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the first sample with `t >= from_time`.
    pub(crate) fn index_at_or_after(&self, from_time: f64) -> Option<usize> {
        let i = self.history.partition_point(|s| s.t < from_time);
        (i < self.history.len()).then_some(i)
    }
}

/// Latest known position for every tracked object, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocationTable {
    entries: BTreeMap<ObjectId, Position>,
}

impl LocationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ObjectId) -> Option<Position> {
        self.entries.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, Position)> + '_ {
        self.entries.iter().map(|(&id, &p)| (id, p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.entries.keys().copied()
    }

    pub fn insert(&mut self, id: ObjectId, p: Position) {
        self.entries.insert(id, p);
    }

    pub fn remove(&mut self, id: ObjectId) -> Option<Position> {
        self.entries.remove(&id)
    }
}

impl fmt::Display for LocationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ID\tCoordinate 1\tCoordinate 2")?;
        for (id, p) in self.iter() {
            writeln!(f, "{id}\t{}\t{}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Returns a copy of `table` with `id` mapped to `p`.
pub fn update_location_table(table: &LocationTable, id: ObjectId, p: Position) -> LocationTable {
    let mut next = table.clone();
    next.insert(id, p);
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Zone {
    Circle {
        center: Position,
        radius: f64,
    },
    /// Convex, counter-clockwise.
    Polygon {
        vertices: Vec<Position>,
    },
}

const BOUNDARY_TOL: f64 = 1e-9;

impl Zone {
    pub fn circle(center: Position, radius: f64) -> Result<Self> {
        let zone = Zone::Circle { center, radius };
        zone.validate()?;
        Ok(zone)
    }

    pub fn polygon(vertices: Vec<Position>) -> Result<Self> {
        let zone = Zone::Polygon { vertices };
        zone.validate()?;
        Ok(zone)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Zone::Circle { center, radius } => {
                if !center.is_finite() {
                    return Err(Error::InvalidZone("non-finite center".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidZone(format!("radius must be > 0, got {radius}")));
                }
                Ok(())
            }
            Zone::Polygon { vertices } => validate_convex_ccw(vertices),
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        contains(self, p)
    }

    /// A point guaranteed to lie inside the zone.
    pub fn centroid(&self) -> Position {
        match self {
            Zone::Circle { center, .. } => *center,
            Zone::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let sum = vertices.iter().fold(Position::default(), |acc, v| acc + *v);
                sum.scale(1.0 / n)
            }
        }
    }

    /// Radius of the circle, or the mean centroid-to-vertex distance of a polygon.
    pub fn characteristic_radius(&self) -> f64 {
        match self {
            Zone::Circle { radius, .. } => *radius,
            Zone::Polygon { vertices } => {
                let c = self.centroid();
                vertices.iter().map(|v| v.distance(c)).sum::<f64>() / vertices.len() as f64
            }
        }
    }
}

fn cross(o: Position, a: Position, b: Position) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn validate_convex_ccw(vertices: &[Position]) -> Result<()> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::InvalidZone(format!("polygon needs >= 3 vertices, got {n}")));
    }
    if vertices.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidZone("non-finite vertex".into()));
    }
    let mut area2 = 0.0;
    let mut turning = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        area2 += a.x * b.y - b.x * a.y;
        if cross(a, b, c) < 0.0 {
            return Err(Error::InvalidZone("polygon is not convex counter-clockwise".into()));
        }
        let e1 = b - a;
        let e2 = c - b;
        if e1.x == 0.0 && e1.y == 0.0 {
            return Err(Error::InvalidZone("repeated vertex".into()));
        }
        turning += (e1.x * e2.y - e1.y * e2.x).atan2(e1.x * e2.x + e1.y * e2.y);
    }
    if area2 <= 0.0 {
        return Err(Error::InvalidZone(
            "polygon must be counter-clockwise with positive area".into(),
        ));
    }
    // A simple convex polygon turns exactly once.
    if (turning - std::f64::consts::TAU).abs() > 1e-6 {
        return Err(Error::InvalidZone("polygon winds more than once".into()));
    }
    Ok(())
}

/// Boundary-inclusive point-in-zone test.
pub fn contains(zone: &Zone, p: Position) -> bool {
    match zone {
        Zone::Circle { center, radius } => p.distance(*center) <= radius * (1.0 + BOUNDARY_TOL),
        Zone::Polygon { vertices } => {
            let n = vertices.len();
            (0..n).all(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let edge = a.distance(b);
                cross(a, b, p) >= -BOUNDARY_TOL * edge * (1.0 + a.distance(p))
            })
        }
    }
}

/// Where and when an object most recently entered a zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneEntry {
    pub object_id: ObjectId,
    pub entry_point: Position,
    pub entry_time: f64,
}

/// Current zone visit of `track`, if the object is inside `zone` at its last sample.
///
/// The entry point is the first sample inside the zone following the most recent
/// sample outside it. A `prior` entry is kept as long as every sample since it is
/// inside the zone.
pub fn record_entry(track: &Track, zone: &Zone, prior: Option<&ZoneEntry>) -> Option<ZoneEntry> {
    let history = track.history();
    if let Some(prior) = prior.filter(|e| e.object_id == track.object_id()) {
        if let Some(start) = track.index_at_or_after(prior.entry_time) {
            if history[start].t == prior.entry_time && history[start..].iter().all(|s| zone.contains(s.position)) {
                return Some(*prior);
            }
        }
    }
    let last_outside = history.iter().rposition(|s| !zone.contains(s.position));
    let first_inside = match last_outside {
        Some(i) if i + 1 == history.len() => return None,
        Some(i) => i + 1,
        None => 0,
    };
    let s = history[first_inside];
    Some(ZoneEntry {
        object_id: track.object_id(),
        entry_point: s.position,
        entry_time: s.t,
    })
}

/// Distance travelled over samples with `t >= from_time`.
pub fn path_length(track: &Track, from_time: f64) -> Result<f64> {
    let start = track
        .index_at_or_after(from_time)
        .ok_or(Error::EmptyWindow { from_time })?;
    Ok(track.history()[start..]
        .windows(2)
        .map(|w| w[0].position.distance(w[1].position))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    fn track(points: &[(f64, f64)]) -> Track {
        Track::from_samples(
            ObjectId(1),
            points.iter().enumerate().map(|(i, &(x, y))| (i as f64, p(x, y))),
        )
        .unwrap()
    }

    #[test]
    fn circle_contains() {
        let z = Zone::circle(p(0.0, 0.0), 5.0).unwrap();
        assert!(z.contains(p(3.0, 3.0)));
        assert!(!z.contains(p(6.0, 0.0)));
        assert!(z.contains(p(5.0, 0.0)));
    }

    #[test]
    fn polygon_boundary_is_inclusive() {
        let z = Zone::polygon(vec![p(0.0, 0.0), p(4.0, 0.0), p(4.0, 4.0), p(0.0, 4.0)]).unwrap();
        assert!(z.contains(p(2.0, 0.0)));
        assert!(z.contains(p(4.0, 4.0)));
        assert!(!z.contains(p(4.001, 2.0)));
    }

    #[test]
    fn rejects_bad_zones() {
        assert!(Zone::circle(p(0.0, 0.0), 0.0).is_err());
        assert!(Zone::polygon(vec![p(0.0, 0.0), p(1.0, 0.0)]).is_err());
        // clockwise
        assert!(Zone::polygon(vec![p(0.0, 0.0), p(0.0, 4.0), p(4.0, 4.0), p(4.0, 0.0)]).is_err());
        // concave dart
        assert!(Zone::polygon(vec![p(0.0, 0.0), p(4.0, 0.0), p(1.0, 1.0), p(0.0, 4.0)]).is_err());
        // pentagram winds twice
        let star: Vec<_> = (0..5)
            .map(|k| {
                let a = std::f64::consts::TAU * (2 * k) as f64 / 5.0;
                p(a.cos(), a.sin())
            })
            .collect();
        assert!(Zone::polygon(star).is_err());
    }

    #[test]
    fn entry_none_when_never_inside() {
        let z = Zone::circle(p(0.0, 0.0), 5.0).unwrap();
        assert_eq!(record_entry(&track(&[(10.0, 0.0), (9.0, 0.0)]), &z, None), None);
    }

    #[test]
    fn entry_is_first_inside_sample() {
        let z = Zone::circle(p(0.0, 0.0), 5.0).unwrap();
        let e = record_entry(&track(&[(6.0, 0.0), (4.0, 0.0), (2.0, 0.0)]), &z, None).unwrap();
        assert_eq!(e.entry_point, p(4.0, 0.0));
        assert_eq!(e.entry_time, 1.0);
    }

    #[test]
    fn entry_resets_on_reentry() {
        let z = Zone::circle(p(0.0, 0.0), 5.0).unwrap();
        // in at t=1, out at t=3, back in at t=4
        let tr = track(&[(6.0, 0.0), (4.0, 0.0), (0.0, 3.0), (0.0, 7.0), (0.0, 4.5), (0.0, 1.0)]);
        let first = Track::from_samples(ObjectId(1), tr.history()[..3].iter().map(|s| (s.t, s.position))).unwrap();
        let prior = record_entry(&first, &z, None).unwrap();
        assert_eq!(prior.entry_time, 1.0);

        let exited = Track::from_samples(ObjectId(1), tr.history()[..4].iter().map(|s| (s.t, s.position))).unwrap();
        assert_eq!(record_entry(&exited, &z, Some(&prior)), None);

        let e = record_entry(&tr, &z, Some(&prior)).unwrap();
        assert_eq!(e.entry_point, p(0.0, 4.5));
        assert_eq!(e.entry_time, 4.0);
    }

    #[test]
    fn entry_keeps_prior_while_inside() {
        let z = Zone::circle(p(0.0, 0.0), 5.0).unwrap();
        let tr = track(&[(6.0, 0.0), (4.0, 0.0), (2.0, 0.0), (1.0, 0.0)]);
        let prior = ZoneEntry {
            object_id: ObjectId(1),
            entry_point: p(4.0, 0.0),
            entry_time: 1.0,
        };
        assert_eq!(record_entry(&tr, &z, Some(&prior)), Some(prior));
    }

    #[test]
    fn path_length_basics() {
        assert_eq!(path_length(&track(&[(1.0, 1.0)]), 0.0).unwrap(), 0.0);
        assert_eq!(
            path_length(&track(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)]), 0.0).unwrap(),
            7.0
        );
        assert_eq!(
            path_length(&track(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)]), 1.0).unwrap(),
            4.0
        );
        assert_eq!(
            path_length(&track(&[(0.0, 0.0), (3.0, 0.0)]), 5.0),
            Err(Error::EmptyWindow { from_time: 5.0 })
        );
    }

    #[test]
    fn track_rejects_non_increasing_time() {
        let mut tr = track(&[(0.0, 0.0)]);
        assert!(tr.push(0.0, p(1.0, 1.0)).is_err());
        assert!(tr.push(1.0, p(1.0, 1.0)).is_ok());
    }

    #[test]
    fn location_table_rows() {
        let rows = [
            (1, 124.0, 256.0),
            (46, 56.0, 914.0),
            (12, 451.0, 652.0),
            (146, 104.0, 652.0),
            (5, 743.0, 16.0),
        ];
        let mut table = LocationTable::new();
        table = update_location_table(&table, ObjectId(1), p(124.0, 256.0));
        assert_eq!(table.get(ObjectId(1)), Some(p(124.0, 256.0)));
        for &(id, x, y) in &rows {
            table = update_location_table(&table, ObjectId(id), p(x, y));
        }
        assert_eq!(table.len(), 5);
        let before = table.clone();
        table = update_location_table(&table, ObjectId(12), p(0.0, 0.0));
        assert_eq!(table.len(), 5);
        assert_eq!(table.get(ObjectId(12)), Some(p(0.0, 0.0)));
        assert_eq!(table.get(ObjectId(46)), before.get(ObjectId(46)));
        assert!(table.to_string().contains("001\t124\t256"));
        assert!(table.to_string().contains("005\t743\t16"));
    }

    #[test]
    fn frame_text_and_json_forms() {
        let f = Frame::new(12.5, [p(1.0, -2.25), p(0.1, 1e-7)]).unwrap();
        let text = f.to_text_line();
        assert_eq!(text, "t=12.5; (1,-2.25) (0.1,0.0000001)");
        assert_eq!(Frame::parse_text_line(&text).unwrap().to_text_line(), text);
        let json = f.to_json_line();
        assert_eq!(Frame::parse_json_line(&json).unwrap(), f);
        assert_eq!(Frame::parse_text_line("t=3;").unwrap().len(), 0);
        assert!(Frame::parse_text_line("t=3; (1,2").is_err());
        assert!(parse_frames("{\"t\":1,\"blips\":[[1,2]]}\nt=2; (3,4)\n").unwrap().len() == 2);
        assert!(matches!(parse_frames("t=1; (a,b)"), Err(Error::Format { line: 1, .. })));
    }
}
