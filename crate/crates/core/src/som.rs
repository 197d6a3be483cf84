//! Self-organizing map over 2-D positions and gated nearest-neighbor tagging.
//!
//! The map learns the spatial layout of the radar picture online; persistent
//! object identity comes from a greedy gated match of each frame's blips against
//! the location table, with unmatched entries coasting for a few frames before
//! they are retired.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{Frame, LocationTable, ObjectId, Position};

/// Axis-aligned area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn new(x_min: f64, y_min: f64, width: f64, height: f64) -> Self {
        Bounds {
            x_min,
            y_min,
            width,
            height,
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.x_min && p.x <= self.x_min + self.width && p.y >= self.y_min && p.y <= self.y_min + self.height
    }

    pub fn center(&self) -> Position {
        Position::new(self.x_min + self.width / 2.0, self.y_min + self.height / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    pub alpha0: f64,
    pub alpha_tau: f64,
    pub sigma0: f64,
    pub sigma_tau: f64,
    pub steps: u64,
}

impl SomParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha0, self.alpha_tau, self.sigma0, self.sigma_tau];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.alpha0 > 1.0 || self.steps == 0 {
            return Err(Error::Invalid(format!("som params {self:?}")));
        }
        Ok(())
    }

    pub fn alpha(&self, t: u64) -> f64 {
        self.alpha0 * (-(t as f64) / self.alpha_tau).exp()
    }

    pub fn sigma(&self, t: u64) -> f64 {
        self.sigma0 * (-(t as f64) / self.sigma_tau).exp()
    }
}

impl Default for SomParams {
    fn default() -> Self {
        SomParams {
            alpha0: 0.5,
            alpha_tau: 1000.0,
            sigma0: 3.0,
            sigma_tau: 800.0,
            steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    width: usize,
    height: usize,
    prototypes: Vec<Position>,
    step_counter: u64,
}

impl SomGrid {
    pub fn from_prototypes(width: usize, height: usize, prototypes: Vec<Position>, step_counter: u64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("som grid {width}x{height}")));
        }
        if prototypes.len() != width * height {
            return Err(Error::Dimension {
                what: "som prototypes",
                expected: width * height,
                got: prototypes.len(),
            });
        }
        if prototypes.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite prototype".into()));
        }
        Ok(SomGrid {
            width,
            height,
            prototypes,
            step_counter,
        })
    }

    /// Regular lattice of cell centers over `bounds`, row-major from the lower-left corner.
    pub fn lattice(width: usize, height: usize, bounds: &Bounds) -> Result<Self> {
        let mut prototypes = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                prototypes.push(Position::new(
                    bounds.x_min + (c as f64 + 0.5) * bounds.width / width as f64,
                    bounds.y_min + (r as f64 + 0.5) * bounds.height / height as f64,
                ));
            }
        }
        SomGrid::from_prototypes(width, height, prototypes, 0)
    }

    pub fn random<R: Rng>(width: usize, height: usize, bounds: &Bounds, rng: &mut R) -> Result<Self> {
        let prototypes = (0..width * height)
            .map(|_| {
                Position::new(
                    bounds.x_min + rng.random::<f64>() * bounds.width,
                    bounds.y_min + rng.random::<f64>() * bounds.height,
                )
            })
            .collect();
        SomGrid::from_prototypes(width, height, prototypes, 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn prototypes(&self) -> &[Position] {
        &self.prototypes
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    /// (column, row) of a row-major node index.
    pub fn node_coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    fn grid_distance(&self, a: usize, b: usize) -> usize {
        let (ac, ar) = self.node_coords(a);
        let (bc, br) = self.node_coords(b);
        ac.abs_diff(bc) + ar.abs_diff(br)
    }

    /// Best-matching unit; ties go to the lowest row-major index.
    pub fn bmu(&self, p: Position) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, w) in self.prototypes.iter().enumerate() {
            let dx = w.x - p.x;
            let dy = w.y - p.y;
            let d = dx * dx + dy * dy;
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// One Kohonen update toward `p`, with exponentially decaying rate and radius.
    pub fn train_step(&mut self, p: Position, params: &SomParams) {
        let t = self.step_counter;
        let alpha = params.alpha(t);
        let sigma = params.sigma(t);
        let winner = self.bmu(p);
        let denom = 2.0 * sigma * sigma;
        for i in 0..self.prototypes.len() {
            let d = self.grid_distance(i, winner) as f64;
            let h = alpha * (-(d * d) / denom).exp();
            let w = self.prototypes[i];
            self.prototypes[i] = w + (p - w).scale(h);
        }
        self.step_counter += 1;
    }

    /// Runs `params.steps` updates, cycling through `points` in order.
    pub fn train(&mut self, points: &[Position], params: &SomParams) -> Result<()> {
        if points.is_empty() {
            return Err(Error::EmptyInput("som training points"));
        }
        for k in 0..params.steps {
            self.train_step(points[k as usize % points.len()], params);
        }
        Ok(())
    }

    /// Mean distance from each point to its BMU prototype.
    pub fn quantization_error(&self, points: &[Position]) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::EmptyInput("quantization error points"));
        }
        let total: f64 = points.iter().map(|&p| p.distance(self.prototypes[self.bmu(p)])).sum();
        Ok(total / points.len() as f64)
    }

    /// `som <width> <height> <step_counter>` then one `x y` line per node.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!("som {} {} {}\n", self.width, self.height, self.step_counter);
        for p in &self.prototypes {
            let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::format(1, "missing som header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "som" {
            return Err(Error::format(1, "expected 'som <width> <height> <step_counter>'"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| Error::format(1, e.to_string()));
        let (width, height, steps) = (num(fields[1])? as usize, num(fields[2])? as usize, num(fields[3])?);
        let mut prototypes = Vec::with_capacity(width * height);
        for (i, line) in lines {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => prototypes.push(Position::new(x, y)),
                _ => return Err(Error::format(i + 1, "expected 'x y'")),
            }
        }
        SomGrid::from_prototypes(width, height, prototypes, steps)
    }
}

/// Blip→id mapping for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `ids[i]` is the object assigned to blip `i`.
    pub ids: Vec<ObjectId>,
    /// Ids allocated for blips that matched nothing.
    pub created: Vec<ObjectId>,
    /// BMU node of each blip in the map at association time.
    pub nodes: Vec<usize>,
    /// Table entries that were not matched this frame and exceeded the coast limit.
    pub retired: Vec<ObjectId>,
    /// Table entries not matched this frame but still coasting.
    pub coasting: Vec<ObjectId>,
}

impl Assignment {
    /// Writes matched and newly created positions into `table` and drops retired ids.
    pub fn apply(&self, frame: &Frame, table: &mut LocationTable) {
        for (id, blip) in self.ids.iter().zip(frame.blips()) {
            table.insert(*id, blip.position);
        }
        for id in &self.retired {
            table.remove(*id);
        }
    }
}

pub const DEFAULT_COAST_FRAMES: u32 = 5;

/// Frame-to-frame identity keeper.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub gate: f64,
    pub coast_frames: u32,
    next_id: u32,
    misses: BTreeMap<ObjectId, u32>,
}

impl Tagger {
    pub fn new(gate: f64) -> Result<Self> {
        if !(gate.is_finite() && gate > 0.0) {
            return Err(Error::Invalid(format!("association gate must be > 0, got {gate}")));
        }
        Ok(Tagger {
            gate,
            coast_frames: DEFAULT_COAST_FRAMES,
            next_id: 1,
            misses: BTreeMap::new(),
        })
    }

    pub fn with_coast_frames(mut self, k: u32) -> Self {
        self.coast_frames = k;
        self
    }

    pub fn next_id(&self) -> ObjectId {
        ObjectId(self.next_id)
    }

    /// Greedy globally-nearest gated matching of `frame`'s blips to `table`.
    ///
    /// Candidate pairs are taken in increasing distance order (ties by blip index,
    /// then id); pairs beyond the gate never match. Leftover blips get fresh
    /// sequential ids.
    pub fn associate(&mut self, frame: &Frame, table: &LocationTable, grid: &SomGrid) -> Assignment {
        let blips = frame.blips();
        let entries: Vec<(ObjectId, Position)> = table.iter().collect();
        let mut pairs = Vec::new();
        for (i, b) in blips.iter().enumerate() {
            for (j, (_, p)) in entries.iter().enumerate() {
                let d = b.position.distance(*p);
                if d <= self.gate {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut blip_to = vec![None; blips.len()];
        let mut taken = vec![false; entries.len()];
        for (_, i, j) in pairs {
            if blip_to[i].is_none() && !taken[j] {
                blip_to[i] = Some(entries[j].0);
                taken[j] = true;
            }
        }

        let mut out = Assignment::default();
        for slot in blip_to {
            let id = slot.unwrap_or_else(|| {
                let id = ObjectId(self.next_id);
                self.next_id += 1;
                out.created.push(id);
                id
            });
            out.ids.push(id);
        }
        out.nodes = blips.iter().map(|b| grid.bmu(b.position)).collect();

        for (j, (id, _)) in entries.iter().enumerate() {
            if taken[j] {
                self.misses.remove(id);
            } else {
                let m = self.misses.entry(*id).or_insert(0);
                *m += 1;
                if *m > self.coast_frames {
                    self.misses.remove(id);
                    out.retired.push(*id);
                } else {
                    out.coasting.push(*id);
                }
            }
        }
        out
    }
}
