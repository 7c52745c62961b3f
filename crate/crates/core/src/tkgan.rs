//! Adversarial negative sampling trained by policy gradient.
//!
//! The generator scores a uniformly drawn candidate set `Neg(g)` and proposes
//! a negative from the softmax over candidate plausibilities. The
//! discriminator minimizes the margin loss `[E_D(g) − E_D(neg) + γ]₊` and
//! pays the generator a reward `−E_D(neg)`; the generator ascends
//! `(r − b) ∇ log p(neg)` with `b` the previous batch's mean reward.
//!
//! Training runs in two stages: [`train_stage1`] trains generator and
//! discriminator adversarially, then [`train_stage2`] trains a fresh target
//! model against negatives proposed by the frozen generator.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, TkgDataset};
use crate::error::{Error, Result};
use crate::eval::FilterIndex;
use crate::models::{ScoreModel, SparseGrad};
use crate::optim::{Optimizer, OptimizerKind};
use crate::sampling::{CandidateSet, NegativeSampler};
use crate::training::{
    self, hinge, EpochMetrics, MarginConfig, NegativeSource, Plateau, TrainFailure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Draw `i ∝ p_i`.
    Categorical,
    /// Highest-probability candidate, lowest index on ties.
    Argmax,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Categorical => "categorical",
            SelectionMode::Argmax => "argmax",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(SelectionMode::Categorical),
            "argmax" => Ok(SelectionMode::Argmax),
            other => Err(Error::Config(format!("unknown selection mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub margin: f64,
    pub candidates: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Uniform-negative margin epochs applied to both models first.
    pub pretrain_epochs: usize,
    /// Validation checks without improvement before stopping; 0 disables.
    pub patience: usize,
    pub eval_every: usize,
    /// Cap on validation facts scored per check.
    pub val_queries: usize,
    pub selection: SelectionMode,
    /// Negatives sampled per positive (`N` of the sampled-mean estimator).
    pub reward_samples: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            candidates: 64,
            lr_generator: 0.001,
            lr_discriminator: 0.001,
            optimizer: OptimizerKind::Adam,
            batch_size: 512,
            max_epochs: 1000,
            pretrain_epochs: 5,
            patience: 3,
            eval_every: 10,
            val_queries: 500,
            selection: SelectionMode::Categorical,
            reward_samples: 1,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail("margin must be positive");
        }
        if self.candidates == 0 {
            return fail("candidate count must be at least 1");
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.batch_size == 0 || self.reward_samples == 0 || self.eval_every == 0 {
            return fail("batch size, reward samples and eval interval must be positive");
        }
        Ok(())
    }

    /// Margin-training settings for the discriminator/target side.
    pub fn margin_config(&self, lr: f64, epochs: usize) -> MarginConfig {
        MarginConfig {
            margin: self.margin,
            lr,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            epochs,
            patience: self.patience,
            eval_every: self.eval_every,
            val_queries: self.val_queries,
        }
    }
}

/// `p_G(· | g)` over a candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistribution {
    pub candidates: CandidateSet,
    pub probabilities: Vec<f64>,
    /// Logits: `−E_G(candidate)`.
    pub plausibility: Vec<f64>,
}

impl CandidateDistribution {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Softmax over candidate plausibilities under the generator.
pub fn generator_distribution(
    generator: &ScoreModel,
    candidates: CandidateSet,
) -> Result<CandidateDistribution> {
    if candidates.is_empty() {
        return Err(Error::Sampling("empty candidate set".into()));
    }
    let plausibility = candidates
        .candidates
        .iter()
        .map(|q| generator.plausibility(q))
        .collect::<Result<Vec<_>>>()?;
    if plausibility.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("non-finite generator energy".into()));
    }
    Ok(CandidateDistribution {
        probabilities: softmax(&plausibility),
        plausibility,
        candidates,
    })
}

/// Selected candidate index and its log-probability.
pub fn select_negative<R: Rng + ?Sized>(
    dist: &CandidateDistribution,
    mode: SelectionMode,
    rng: &mut R,
) -> (usize, Quadruple, f64) {
    let index = match mode {
        SelectionMode::Argmax => dist
            .probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0,
        SelectionMode::Categorical => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = dist.len() - 1;
            for (i, &p) in dist.probabilities.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    (
        index,
        dist.candidates.candidates[index],
        dist.probabilities[index].ln(),
    )
}

/// `∇θ_G log p_i = −∇E(c_i) + Σ_j p_j ∇E(c_j)`.
pub fn log_prob_gradient(
    generator: &ScoreModel,
    dist: &CandidateDistribution,
    index: usize,
) -> SparseGrad {
    let mut grad = SparseGrad::new();
    for (j, (q, &p)) in dist
        .candidates
        .candidates
        .iter()
        .zip(&dist.probabilities)
        .enumerate()
    {
        let coef = p - if j == index { 1.0 } else { 0.0 };
        if coef != 0.0 {
            grad.add_scaled(&generator.energy_gradient_unchecked(q), coef);
        }
    }
    grad
}

/// One generator action: reward and `∇ log p` of the chosen negative.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub reward: f64,
    pub grad_log_prob: SparseGrad,
    /// Weight in the batch sum (`1/N` for `N` samples per positive).
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchStats {
    pub d_loss: f64,
    pub mean_reward: f64,
    pub pairs: usize,
}

/// Generator, discriminator and reward baseline.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub generator: ScoreModel,
    pub discriminator: ScoreModel,
    pub baseline: f64,
    pub epoch: usize,
    pub reward_total: f64,
    config: AdversarialConfig,
    opt_generator: Optimizer,
    opt_discriminator: Optimizer,
}

impl TrainerState {
    pub fn new(
        generator: ScoreModel,
        discriminator: ScoreModel,
        config: AdversarialConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            opt_generator: Optimizer::new(config.optimizer, config.lr_generator),
            opt_discriminator: Optimizer::new(config.optimizer, config.lr_discriminator),
            generator,
            discriminator,
            baseline: 0.0,
            epoch: 0,
            reward_total: 0.0,
            config,
        })
    }

    pub fn config(&self) -> &AdversarialConfig {
        &self.config
    }

    /// Sums the hinge loss over the pairs and applies one descent step on
    /// θ_D. Inactive pairs contribute neither loss nor gradient.
    pub fn discriminator_step(&mut self, pairs: &[(Quadruple, Quadruple)]) -> Result<f64> {
        let weighted: Vec<_> = pairs.iter().map(|&(g, n)| (g, n, 1.0)).collect();
        self.discriminator_step_weighted(&weighted)
    }

    fn discriminator_step_weighted(&mut self, pairs: &[(Quadruple, Quadruple, f64)]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Config("discriminator batch is empty".into()));
        }
        let mut grad = SparseGrad::new();
        let mut loss = 0.0;
        for &(g, neg, w) in pairs {
            let l = hinge(
                self.discriminator.energy(&g)?,
                self.discriminator.energy(&neg)?,
                self.config.margin,
            );
            if l > 0.0 {
                loss += w * l;
                grad.add_scaled(&self.discriminator.energy_gradient_unchecked(&g), w);
                grad.add_scaled(&self.discriminator.energy_gradient_unchecked(&neg), -w);
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric("discriminator loss is not finite".into()));
        }
        self.opt_discriminator
            .apply(self.discriminator.store_mut(), &grad)?;
        self.discriminator.renormalize_touched(&grad);
        Ok(loss)
    }

    /// `θ_G ← θ_G + η_G Σ w (r − b) ∇ log p`, then `b ←` mean reward.
    pub fn generator_step(&mut self, samples: &[PolicySample]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Config("generator batch is empty".into()));
        }
        let mut ascent = SparseGrad::new();
        for s in samples {
            let advantage = s.reward - self.baseline;
            if advantage != 0.0 {
                ascent.add_scaled(&s.grad_log_prob, s.weight * advantage);
            }
        }
        // The optimizer minimizes, so hand it the negated ascent direction.
        ascent.scale(-1.0);
        self.opt_generator.apply(self.generator.store_mut(), &ascent)?;
        self.generator.renormalize_touched(&ascent);
        let total_w: f64 = samples.iter().map(|s| s.weight).sum();
        self.reward_total = samples.iter().map(|s| s.weight * s.reward).sum();
        self.baseline = self.reward_total / total_w;
        Ok(())
    }

    /// One pass of the adversarial loop over `batch`. All proposals and
    /// rewards use the parameters as they were at the start of the batch.
    pub fn train_batch<R: Rng + ?Sized>(
        &mut self,
        batch: &[Quadruple],
        sampler: &NegativeSampler,
        rng: &mut R,
    ) -> Result<BatchStats> {
        let n = self.config.reward_samples;
        let w = 1.0 / n as f64;
        let mut pairs = Vec::with_capacity(batch.len() * n);
        let mut samples = Vec::with_capacity(batch.len() * n);
        for g in batch {
            for _ in 0..n {
                let cands = sampler.build_candidates(g, self.config.candidates, rng)?;
                let dist = generator_distribution(&self.generator, cands)?;
                let (index, neg, _) = select_negative(&dist, self.config.selection, rng);
                let reward = -self.discriminator.energy(&neg)?;
                samples.push(PolicySample {
                    reward,
                    grad_log_prob: log_prob_gradient(&self.generator, &dist, index),
                    weight: w,
                });
                pairs.push((*g, neg, w));
            }
        }
        let d_loss = self.discriminator_step_weighted(&pairs)?;
        self.generator_step(&samples)?;
        let mean_reward = self.baseline;
        debug_assert!(
            (self.baseline - self.reward_total / batch.len() as f64).abs()
                <= 1e-9 * (1.0 + self.baseline.abs())
        );
        Ok(BatchStats {
            d_loss,
            mean_reward,
            pairs: pairs.len(),
        })
    }
}

/// Fitted generator and discriminator plus the per-epoch log.
#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub generator: ScoreModel,
    pub discriminator: ScoreModel,
    pub baseline: f64,
    pub log: Vec<EpochMetrics>,
}

/// Short uniform-negative margin training that produces the pre-trained
/// generator and discriminator the adversarial loop starts from.
pub fn pretrain<R: Rng + ?Sized>(
    model: ScoreModel,
    dataset: &TkgDataset,
    sampler: &NegativeSampler,
    config: &AdversarialConfig,
    lr: f64,
    rng: &mut R,
) -> Result<ScoreModel, TrainFailure> {
    let mut cfg = config.margin_config(lr, config.pretrain_epochs);
    cfg.patience = 0;
    let out = training::train_margin(
        model,
        dataset,
        sampler,
        &NegativeSource::Random,
        &cfg,
        None,
        0,
        rng,
    )?;
    Ok(out.model)
}

/// Runs the adversarial loop on the train split until `max_epochs` or a
/// validation-MRR plateau of the discriminator.
pub fn train_stage1<R: Rng + ?Sized>(
    dataset: &TkgDataset,
    generator: ScoreModel,
    discriminator: ScoreModel,
    sampler: &NegativeSampler,
    config: &AdversarialConfig,
    seed: u64,
    rng: &mut R,
) -> Result<Stage1Output, TrainFailure> {
    let mut state = TrainerState::new(generator, discriminator, config.clone())
        .map_err(TrainFailure::without_checkpoint)?;
    let filter = (!dataset.valid().is_empty()).then(|| FilterIndex::from_dataset(dataset));
    let mut plateau = Plateau::new(config.patience);
    let mut order: Vec<usize> = (0..dataset.train().len()).collect();
    let mut log = Vec::new();
    let mut last_good = (state.generator.clone(), state.discriminator.clone());
    for epoch in 1..=config.max_epochs {
        state.epoch = epoch;
        order.shuffle(rng);
        let (mut loss, mut reward, mut pairs) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Quadruple> = chunk.iter().map(|&i| dataset.train()[i]).collect();
            match state.train_batch(&batch, sampler, rng) {
                Ok(stats) => {
                    loss += stats.d_loss;
                    reward += stats.mean_reward * batch.len() as f64;
                    pairs += batch.len();
                }
                Err(error) => {
                    return Err(TrainFailure {
                        error,
                        last_good: vec![
                            ("generator".into(), last_good.0),
                            ("discriminator".into(), last_good.1),
                        ],
                    })
                }
            }
        }
        let val_mrr = match &filter {
            Some(f) if epoch % config.eval_every == 0 => Some(training::validation_mrr(
                &state.discriminator,
                dataset,
                f,
                config.val_queries,
            )),
            _ => None,
        };
        log.push(EpochMetrics {
            epoch,
            d_loss: loss / pairs.max(1) as f64,
            mean_reward: Some(reward / pairs.max(1) as f64),
            baseline: Some(state.baseline),
            val_mrr,
            seed,
        });
        last_good = (state.generator.clone(), state.discriminator.clone());
        if let Some(mrr) = val_mrr {
            if plateau.update(mrr) {
                break;
            }
        }
    }
    Ok(Stage1Output {
        baseline: state.baseline,
        generator: state.generator,
        discriminator: state.discriminator,
        log,
    })
}

/// Margin training of `target` with negatives proposed by the frozen
/// `generator`.
#[allow(clippy::too_many_arguments)]
pub fn train_stage2<R: Rng + ?Sized>(
    dataset: &TkgDataset,
    generator: &ScoreModel,
    target: ScoreModel,
    sampler: &NegativeSampler,
    config: &AdversarialConfig,
    epochs: usize,
    seed: u64,
    rng: &mut R,
) -> Result<training::TrainOutput, TrainFailure> {
    let source = NegativeSource::Generator {
        generator,
        mode: config.selection,
        candidates: config.candidates,
    };
    let cfg = config.margin_config(config.lr_discriminator, epochs);
    let filter = (!dataset.valid().is_empty()).then(|| FilterIndex::from_dataset(dataset));
    training::train_margin(target, dataset, sampler, &source, &cfg, filter.as_ref(), seed, rng)
}
