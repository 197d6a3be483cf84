//! Two-layer feed-forward logistic network with one output per object slot.
//!
//! Inputs are the per-object attribute vectors stacked in slot order; absent
//! slots are zero-padded and masked out of the loss. Training is plain
//! mini-batch gradient descent on masked binary cross-entropy.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const OUT_LO: f64 = f64::EPSILON / 2.0;
const OUT_HI: f64 = 1.0 - f64::EPSILON / 2.0;
const LOSS_CLAMP: f64 = 1e-12;

/// `1 / (1 + e^-net)`, evaluated without overflow and kept strictly inside (0, 1).
pub fn logistic(net: f64) -> f64 {
    let v = if net >= 0.0 {
        1.0 / (1.0 + (-net).exp())
    } else {
        let e = net.exp();
        e / (1.0 + e)
    };
    v.clamp(OUT_LO, OUT_HI)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 20,
            seed: 0,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
}

impl LabeledExample {
    pub fn active_slots(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    /// hidden × input, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// output × hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &Mlp) -> Self {
        Gradients {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }
}

struct Activations {
    hidden: Vec<f64>,
    output: Vec<f64>,
}

impl Mlp {
    /// Weights and biases drawn uniformly from [-0.5, 0.5].
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-0.5..=0.5)).collect::<Vec<f64>>();
        let w1 = draw(hidden_dim * input_dim);
        let b1 = draw(hidden_dim);
        let w2 = draw(output_dim * hidden_dim);
        let b2 = draw(output_dim);
        Mlp {
            input_dim,
            hidden_dim,
            output_dim,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Mlp {
            input_dim,
            hidden_dim,
            output_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; output_dim * hidden_dim],
            b2: vec![0.0; output_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters in checkpoint order: W1, b1, W2, b2.
    pub fn flat_params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension {
                what: "mlp parameters",
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let (a, rest) = values.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::Dimension {
                what: "mlp input",
                expected: self.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    fn check_example(&self, ex: &LabeledExample) -> Result<()> {
        self.check_input(&ex.input)?;
        for (what, got) in [("mlp target", ex.target.len()), ("mlp mask", ex.mask.len())] {
            if got != self.output_dim {
                return Err(Error::Dimension {
                    what,
                    expected: self.output_dim,
                    got,
                });
            }
        }
        Ok(())
    }

    fn activations(&self, input: &[f64]) -> Activations {
        let hidden: Vec<f64> = (0..self.hidden_dim)
            .map(|j| {
                let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
                logistic(dot(row, input) + self.b1[j])
            })
            .collect();
        let output = (0..self.output_dim)
            .map(|k| {
                let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
                logistic(dot(row, &hidden) + self.b2[k])
            })
            .collect();
        Activations { hidden, output }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).output)
    }

    /// Mean masked binary cross-entropy over the active output slots.
    pub fn loss(&self, ex: &LabeledExample) -> Result<f64> {
        self.check_example(ex)?;
        let n = ex.active_slots();
        if n == 0 {
            return Err(Error::EmptyInput("example has no active output slots"));
        }
        let out = self.activations(&ex.input).output;
        let total: f64 = out
            .iter()
            .zip(&ex.target)
            .zip(&ex.mask)
            .filter(|(_, &m)| m)
            .map(|((&p, &y), _)| bce(p, y))
            .sum();
        Ok(total / n as f64)
    }

    /// Mean loss over a set of examples.
    pub fn mean_loss(&self, data: &[LabeledExample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput("examples"));
        }
        let mut total = 0.0;
        for ex in data {
            total += self.loss(ex)?;
        }
        Ok(total / data.len() as f64)
    }

    /// Gradient of the batch-mean loss with respect to every parameter.
    #[allow(clippy::needless_range_loop)]
    pub fn gradient(&self, batch: &[LabeledExample]) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let mut g = Gradients::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        let mut delta_out = vec![0.0; self.output_dim];
        let mut delta_hidden = vec![0.0; self.hidden_dim];
        for ex in batch {
            self.check_example(ex)?;
            let n = ex.active_slots();
            if n == 0 {
                continue;
            }
            let act = self.activations(&ex.input);
            for k in 0..self.output_dim {
                delta_out[k] = if ex.mask[k] {
                    (act.output[k] - ex.target[k]) / n as f64 * scale
                } else {
                    0.0
                };
            }
            for j in 0..self.hidden_dim {
                let back: f64 = (0..self.output_dim)
                    .map(|k| delta_out[k] * self.w2[k * self.hidden_dim + j])
                    .sum();
                let h = act.hidden[j];
                delta_hidden[j] = back * h * (1.0 - h);
            }
            for k in 0..self.output_dim {
                let d = delta_out[k];
                if d == 0.0 {
                    continue;
                }
                g.b2[k] += d;
                let row = &mut g.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
                for (gw, h) in row.iter_mut().zip(&act.hidden) {
                    *gw += d * h;
                }
            }
            for j in 0..self.hidden_dim {
                let d = delta_hidden[j];
                g.b1[j] += d;
                let row = &mut g.w1[j * self.input_dim..(j + 1) * self.input_dim];
                for (gw, x) in row.iter_mut().zip(&ex.input) {
                    *gw += d * x;
                }
            }
        }
        Ok(g)
    }

    /// One gradient-descent step on the batch-mean loss.
    pub fn backprop_step(&mut self, batch: &[LabeledExample], lr: f64) -> Result<()> {
        let g = self.gradient(batch)?;
        for (p, d) in self.w1.iter_mut().zip(&g.w1) {
            *p -= lr * d;
        }
        for (p, d) in self.b1.iter_mut().zip(&g.b1) {
            *p -= lr * d;
        }
        for (p, d) in self.w2.iter_mut().zip(&g.w2) {
            *p -= lr * d;
        }
        for (p, d) in self.b2.iter_mut().zip(&g.b2) {
            *p -= lr * d;
        }
        Ok(())
    }

    /// `cfg.epochs` passes over `data` in seeded shuffled mini-batches.
    pub fn train(&mut self, data: &[LabeledExample], cfg: &TrainConfig) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training data"));
        }
        validate_cfg(cfg)?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i].clone()));
                self.backprop_step(&batch, cfg.learning_rate)?;
            }
        }
        Ok(())
    }

    /// Retrains on `missed` examples, each step mixed 1:1 with samples from `replay`,
    /// until the mean loss on `missed` falls below `target_loss` or `max_steps` is hit.
    pub fn retrain_online(
        &mut self,
        missed: &[LabeledExample],
        replay: &ReplayBuffer,
        cfg: &TrainConfig,
        target_loss: f64,
        max_steps: usize,
    ) -> Result<RetrainOutcome> {
        if missed.is_empty() {
            return Err(Error::EmptyInput("missed examples"));
        }
        validate_cfg(cfg)?;
        let loss_before = self.mean_loss(missed)?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        let mut loss = loss_before;
        let mut steps = 0;
        while loss >= target_loss && steps < max_steps {
            let mut batch = missed.to_vec();
            batch.extend(replay.sample(missed.len(), &mut rng));
            self.backprop_step(&batch, cfg.learning_rate)?;
            steps += 1;
            loss = self.mean_loss(missed)?;
        }
        Ok(RetrainOutcome {
            steps,
            loss_before,
            loss_after: loss,
        })
    }

    /// `mlp <input_dim> <hidden_dim> <output_dim>` then W1, b1, W2, b2, one value per line.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!("mlp {} {} {}\n", self.input_dim, self.hidden_dim, self.output_dim);
        for v in self.flat_params() {
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::format(1, "missing mlp header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 4 || f[0] != "mlp" {
            return Err(Error::format(1, "expected 'mlp <input_dim> <hidden_dim> <output_dim>'"));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|e| Error::format(1, e.to_string()));
        let mut m = Mlp::zeros(dim(f[1])?, dim(f[2])?, dim(f[3])?);
        let values = lines
            .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| Error::format(i + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(0, "non-finite parameter"));
        }
        m.set_flat_params(&values)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub steps: usize,
    pub loss_before: f64,
    pub loss_after: f64,
}

fn validate_cfg(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || cfg.batch_size == 0 {
        return Err(Error::Invalid(format!("train config {cfg:?}")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Bounded FIFO of past training examples used to guard online retraining.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<LabeledExample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn push(&mut self, ex: LabeledExample) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(ex);
    }

    pub fn extend(&mut self, data: impl IntoIterator<Item = LabeledExample>) {
        for ex in data {
            self.push(ex);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Up to `k` examples drawn with replacement.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<LabeledExample> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect()
    }
}
