//! Test-time adaptation against a predicted entity distribution.
//!
//! Each snapshot is summarized by the normalized entity-occurrence counts
//! `S_t`. An LSTM maps the last `l` summaries to a prediction of the next,
//! and at test time that prediction serves as a soft pseudo-label: the
//! target model's mean per-entity plausibility over the snapshot's object
//! queries is pushed toward it by descending
//! `L_cmp = −Σ_j x_j log softmax(P)_j`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, Split, TkgDataset};
use crate::error::{Error, Result};
use crate::models::{ScoreModel, SparseGrad};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tkgan::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    #[default]
    ObjectOnly,
    SubjectObject,
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "object-only" | "object" => Ok(CountMode::ObjectOnly),
            "subject-object" | "subject+object" => Ok(CountMode::SubjectObject),
            other => Err(Error::Config(format!("unknown counting mode `{other}`"))),
        }
    }
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountMode::ObjectOnly => "object-only",
            CountMode::SubjectObject => "subject-object",
        })
    }
}

/// Normalized entity counts of one snapshot. The flag is true when the
/// snapshot was empty and the uniform vector was returned instead.
pub fn entity_distribution(quads: &[Quadruple], num_entities: usize, mode: CountMode) -> (Vec<f64>, bool) {
    assert!(num_entities >= 1, "entity vocabulary must be non-empty");
    let mut counts = vec![0.0; num_entities];
    for q in quads {
        counts[q.object as usize] += 1.0;
        if mode == CountMode::SubjectObject {
            counts[q.subject as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return (vec![1.0 / num_entities as f64; num_entities], true);
    }
    counts.iter_mut().for_each(|c| *c /= total);
    (counts, false)
}

/// `S_t` for each listed timestamp, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSeries {
    pub mode: CountMode,
    pub times: Vec<u32>,
    pub distributions: Vec<Vec<f64>>,
}

impl DistributionSeries {
    /// One entry per timestamp with at least one fact in `splits`.
    pub fn from_dataset(dataset: &TkgDataset, splits: &[Split], mode: CountMode) -> Result<Self> {
        let times = dataset.active_times(splits);
        let mut distributions = Vec::with_capacity(times.len());
        for &t in &times {
            let snap = dataset.snapshot(t, splits)?;
            distributions.push(entity_distribution(&snap, dataset.num_entities(), mode).0);
        }
        Ok(Self {
            mode,
            times,
            distributions,
        })
    }

    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distributions.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer LSTM with a softmax head. Parameters live in one flat
/// vector laid out as `W_x (4H×I) | W_h (4H×H) | b (4H) | W_o (E×H) | b_o (E)`
/// with gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmPredictor {
    pub input: usize,
    pub hidden: usize,
    pub window: usize,
    pub params: Vec<f64>,
}

struct Offsets {
    wx: usize,
    wh: usize,
    b: usize,
    wo: usize,
    bo: usize,
    end: usize,
}

/// Forward activations kept for backpropagation.
struct Trace {
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl LstmPredictor {
    /// Uniform `±1/√H` weights, forget-gate bias 1.
    pub fn new(input: usize, hidden: usize, window: usize, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || window == 0 {
            return Err(Error::Config("LSTM sizes must be positive".into()));
        }
        let mut p = Self {
            input,
            hidden,
            window,
            params: Vec::new(),
        };
        let o = p.offsets();
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.params = (0..o.end).map(|_| rng.gen_range(-bound..bound)).collect();
        for k in 0..4 * hidden {
            p.params[o.b + k] = if (hidden..2 * hidden).contains(&k) { 1.0 } else { 0.0 };
        }
        p.params[o.bo..o.end].fill(0.0);
        Ok(p)
    }

    fn offsets(&self) -> Offsets {
        let (i, h) = (self.input, self.hidden);
        let wx = 0;
        let wh = wx + 4 * h * i;
        let b = wh + 4 * h * h;
        let wo = b + 4 * h;
        let bo = wo + i * h;
        Offsets {
            wx,
            wh,
            b,
            wo,
            bo,
            end: bo + i,
        }
    }

    pub fn num_params(&self) -> usize {
        self.offsets().end
    }

    fn check_window(&self, window: &[&[f64]]) -> Result<()> {
        if window.len() != self.window {
            return Err(Error::SequenceLength {
                expected: self.window,
                got: window.len(),
            });
        }
        if let Some(x) = window.iter().find(|x| x.len() != self.input) {
            return Err(Error::Config(format!(
                "distribution has {} entries, predictor expects {}",
                x.len(),
                self.input
            )));
        }
        Ok(())
    }

    fn forward(&self, window: &[&[f64]]) -> Trace {
        let (n, h) = (self.input, self.hidden);
        let o = self.offsets();
        let p = &self.params;
        let mut gates = Vec::with_capacity(window.len());
        let mut cells = vec![vec![0.0; h]];
        let mut hiddens = vec![vec![0.0; h]];
        for x in window {
            let h_prev = hiddens.last().unwrap();
            let c_prev = cells.last().unwrap();
            let mut z = p[o.b..o.b + 4 * h].to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let wx = &p[o.wx + r * n..o.wx + (r + 1) * n];
                let wh = &p[o.wh + r * h..o.wh + (r + 1) * h];
                *zr += dot(wx, x) + dot(wh, h_prev);
            }
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let c: Vec<f64> = (0..h).map(|k| z[h + k] * c_prev[k] + z[k] * z[2 * h + k]).collect();
            let hn: Vec<f64> = (0..h).map(|k| z[3 * h + k] * c[k].tanh()).collect();
            gates.push(z);
            cells.push(c);
            hiddens.push(hn);
        }
        let h_last = hiddens.last().unwrap();
        let logits: Vec<f64> = (0..n)
            .map(|e| p[o.bo + e] + dot(&p[o.wo + e * h..o.wo + (e + 1) * h], h_last))
            .collect();
        Trace {
            gates,
            cells,
            hiddens,
            probs: softmax(&logits),
        }
    }

    /// Predicted next distribution from exactly `window` inputs.
    pub fn predict(&self, window: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        Ok(self.forward(window).probs)
    }

    /// Cross-entropy `−Σ target log ŷ` of the prediction.
    pub fn loss(&self, window: &[&[f64]], target: &[f64]) -> Result<f64> {
        let probs = self.predict(window)?;
        Ok(cross_entropy(target, &probs))
    }

    /// Loss and its gradient with respect to `params`, by backpropagation
    /// through time. The gradient is accumulated into `grad`.
    pub fn loss_and_gradient(&self, window: &[&[f64]], target: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_window(window)?;
        if grad.len() != self.num_params() {
            return Err(Error::Config("gradient buffer has the wrong length".into()));
        }
        let (n, h) = (self.input, self.hidden);
        let o = self.offsets();
        let p = &self.params;
        let tr = self.forward(window);
        let mass: f64 = target.iter().sum();
        let dy: Vec<f64> = tr.probs.iter().zip(target).map(|(q, x)| mass * q - x).collect();
        let h_last = tr.hiddens.last().unwrap();
        let mut dh = vec![0.0; h];
        for e in 0..n {
            grad[o.bo + e] += dy[e];
            let row = o.wo + e * h;
            for k in 0..h {
                grad[row + k] += dy[e] * h_last[k];
                dh[k] += dy[e] * p[row + k];
            }
        }
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for step in (0..window.len()).rev() {
            let z = &tr.gates[step];
            let c = &tr.cells[step + 1];
            let c_prev = &tr.cells[step];
            let h_prev = &tr.hiddens[step];
            for k in 0..h {
                let (i, f, g, og) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let tc = c[k].tanh();
                dc[k] += dh[k] * og * (1.0 - tc * tc);
                dz[k] = dc[k] * g * i * (1.0 - i);
                dz[h + k] = dc[k] * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc[k] * i * (1.0 - g * g);
                dz[3 * h + k] = dh[k] * tc * og * (1.0 - og);
                dc[k] *= f;
            }
            let x = window[step];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad[o.b + r] += d;
                let wx = o.wx + r * n;
                for (g, xv) in grad[wx..wx + n].iter_mut().zip(x.iter()) {
                    *g += d * xv;
                }
                let wh = o.wh + r * h;
                for k in 0..h {
                    grad[wh + k] += d * h_prev[k];
                    dh[k] += d * p[wh + k];
                }
            }
        }
        Ok(cross_entropy(target, &tr.probs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        let p: Self = serde_json::from_slice(&bytes)?;
        if p.params.len() != p.num_params() {
            return Err(Error::Checkpoint(format!(
                "{}: predictor has {} parameters, expected {}",
                path.display(),
                p.params.len(),
                p.num_params()
            )));
        }
        Ok(p)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `−Σ target_j log probs_j`, skipping zero targets.
pub fn cross_entropy(target: &[f64], probs: &[f64]) -> f64 {
    target
        .iter()
        .zip(probs)
        .filter(|(x, _)| **x != 0.0)
        .map(|(x, q)| -x * q.max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// `L_cmp = −Σ x_j log softmax(P)_j`.
pub fn comparison_loss(logits: &[f64], target: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    target
        .iter()
        .zip(logits)
        .map(|(x, l)| -x * (l - log_z))
        .sum()
}

/// `∂L_cmp/∂P = (Σx) softmax(P) − x`, which is `softmax(P) − x` for a
/// probability target.
pub fn comparison_loss_gradient(logits: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    softmax(logits)
        .iter()
        .zip(target)
        .map(|(q, x)| mass * q - x)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub window: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            window: 20,
            hidden: 64,
            epochs: 200,
            lr: 0.01,
            batch_size: 16,
        }
    }
}

/// Dense Adam over a flat parameter vector.
struct DenseAdam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl DenseAdam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
        }
    }
}

/// Fitted predictor and its mean training loss after the last epoch.
#[derive(Debug, Clone)]
pub struct FittedPredictor {
    pub predictor: LstmPredictor,
    pub final_loss: f64,
}

/// Fits the LSTM on every sliding window `(S_{t−l+1..t}, S_{t+1})` of the
/// series with mini-batch Adam.
pub fn fit_predictor(series: &DistributionSeries, config: &LstmConfig, seed: u64) -> Result<FittedPredictor> {
    let l = config.window;
    if series.len() <= l {
        return Err(Error::Config(format!(
            "distribution series has {} snapshots; need more than the window length {l}",
            series.len()
        )));
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(Error::Config("LSTM batch size and learning rate must be positive".into()));
    }
    let input = series.distributions[0].len();
    let mut predictor = LstmPredictor::new(input, config.hidden, l, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let views: Vec<&[f64]> = series.distributions.iter().map(Vec::as_slice).collect();
    let mut starts: Vec<usize> = (0..series.len() - l).collect();
    let mut adam = DenseAdam::new(predictor.num_params(), config.lr);
    let mut grad = vec![0.0; predictor.num_params()];
    for _ in 0..config.epochs {
        starts.shuffle(&mut rng);
        for batch in starts.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &s in batch {
                predictor.loss_and_gradient(&views[s..s + l], views[s + l], &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut predictor.params, &grad);
        }
        if predictor.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("LSTM parameters diverged".into()));
        }
    }
    let mut total = 0.0;
    for s in 0..series.len() - l {
        total += predictor.loss(&views[s..s + l], views[s + l])?;
    }
    Ok(FittedPredictor {
        predictor,
        final_loss: total / (series.len() - l) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSubset {
    All,
    #[default]
    EntityOnly,
}

impl FromStr for ParamSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ParamSubset::All),
            "entity-only" | "entity" => Ok(ParamSubset::EntityOnly),
            other => Err(Error::Config(format!("unknown parameter subset `{other}`"))),
        }
    }
}

impl fmt::Display for ParamSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamSubset::All => "all",
            ParamSubset::EntityOnly => "entity-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TttConfig {
    pub lr: f64,
    pub steps: usize,
    /// Number of test snapshots to adapt over; `None` means all of them.
    pub horizon: Option<usize>,
    pub subset: ParamSubset,
    pub optimizer: OptimizerKind,
}

impl Default for TttConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            steps: 5,
            horizon: None,
            subset: ParamSubset::EntityOnly,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TttConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("adaptation learning rate must be positive".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("prediction horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// One test snapshot: its timestamp and facts.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: u32,
    pub facts: Vec<Quadruple>,
}

/// Test snapshots of `dataset` in time order.
pub fn test_stream(dataset: &TkgDataset) -> Result<Vec<Snapshot>> {
    dataset
        .active_times(&[Split::Test])
        .into_iter()
        .map(|time| {
            Ok(Snapshot {
                time,
                facts: dataset.snapshot(time, &[Split::Test])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub snapshot: u32,
    pub step: usize,
    pub l_cmp: f64,
}

#[derive(Debug, Clone)]
pub struct Adaptation {
    pub model: ScoreModel,
    /// `steps + 1` entries per snapshot: the loss before each step and after
    /// the last.
    pub trace: Vec<TraceEntry>,
    pub pseudo_labels: Vec<(u32, Vec<f64>)>,
}

impl Adaptation {
    /// Mean `L_cmp` over snapshots at the given step.
    pub fn mean_loss_at(&self, step: usize) -> Option<f64> {
        let v: Vec<f64> = self.trace.iter().filter(|e| e.step == step).map(|e| e.l_cmp).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `P_j`: mean plausibility of `(s, p, j, t)` over the snapshot's facts.
pub fn snapshot_logits(model: &ScoreModel, facts: &[Quadruple]) -> Vec<f64> {
    let n = model.dims().num_entities;
    let sums = facts
        .par_iter()
        .map(|q| model.object_plausibilities(q.subject, q.predicate, q.time))
        .collect::<Vec<_>>();
    let mut p = vec![0.0; n];
    for row in &sums {
        for (a, b) in p.iter_mut().zip(row) {
            *a += b;
        }
    }
    let k = facts.len().max(1) as f64;
    p.iter_mut().for_each(|v| *v /= k);
    p
}

/// `∂L_cmp/∂θ` through the mean-plausibility logits.
pub fn comparison_gradient(model: &ScoreModel, facts: &[Quadruple], target: &[f64]) -> (f64, SparseGrad) {
    let logits = snapshot_logits(model, facts);
    let loss = comparison_loss(&logits, target);
    let dp = comparison_loss_gradient(&logits, target);
    // d plausibility = −d energy
    let w = -1.0 / facts.len().max(1) as f64;
    let partials: Vec<SparseGrad> = facts
        .par_chunks(32)
        .map(|chunk| {
            let mut g = SparseGrad::new();
            for q in chunk {
                model.add_weighted_object_gradient(q.subject, q.predicate, q.time, &dp, w, &mut g);
            }
            g
        })
        .collect();
    let mut grad = SparseGrad::new();
    for g in &partials {
        grad.add_scaled(g, 1.0);
    }
    (loss, grad)
}

/// Adapts `model` over the test stream. `history` holds the known
/// distributions preceding the first test snapshot; the realized
/// distribution of each snapshot is appended after it has been adapted on.
pub fn ttt_adapt(
    mut model: ScoreModel,
    predictor: &LstmPredictor,
    history: &DistributionSeries,
    stream: &[Snapshot],
    config: &TttConfig,
) -> Result<Adaptation> {
    config.validate()?;
    let n = model.dims().num_entities;
    if predictor.input != n {
        return Err(Error::Config(format!(
            "predictor covers {} entities, model has {n}",
            predictor.input
        )));
    }
    let l = predictor.window;
    if history.len() < l {
        return Err(Error::Config(format!(
            "history has {} snapshots; the predictor needs {l}",
            history.len()
        )));
    }
    let horizon = match config.horizon {
        Some(h) if h > stream.len() => {
            log::warn!("horizon {h} exceeds the {} test snapshots; truncating", stream.len());
            stream.len()
        }
        Some(h) => h,
        None => stream.len(),
    };
    let subset = model.kind().entity_tensors().to_vec();
    let mut known: Vec<Vec<f64>> = history.distributions.clone();
    let mut optimizer = Optimizer::new(config.optimizer, config.lr);
    let mut trace = Vec::new();
    let mut pseudo_labels = Vec::new();
    for snap in &stream[..horizon] {
        let window: Vec<&[f64]> = known[known.len() - l..].iter().map(Vec::as_slice).collect();
        let label = predictor.predict(&window)?;
        if !snap.facts.is_empty() {
            for step in 0..=config.steps {
                let (loss, mut grad) = comparison_gradient(&model, &snap.facts, &label);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("L_cmp diverged at snapshot {}", snap.time)));
                }
                trace.push(TraceEntry {
                    snapshot: snap.time,
                    step,
                    l_cmp: loss,
                });
                if step == config.steps {
                    break;
                }
                if config.subset == ParamSubset::EntityOnly {
                    grad.retain_tensors(&subset);
                }
                optimizer.apply(model.store_mut(), &grad)?;
                model.renormalize_touched(&grad);
            }
        }
        known.push(entity_distribution(&snap.facts, n, history.mode).0);
        pseudo_labels.push((snap.time, label));
    }
    Ok(Adaptation {
        model,
        trace,
        pseudo_labels,
    })
}
