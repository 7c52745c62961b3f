//! Margin-loss training against a pluggable negative source, plus the
//! shared epoch log and early-stopping rule.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, TkgDataset};
use crate::error::{Error, Result};
use crate::eval::{self, FilterIndex, Protocol};
use crate::models::{ScoreModel, SparseGrad};
use crate::optim::{Optimizer, OptimizerKind};
use crate::sampling::NegativeSampler;
use crate::tkgan::{generator_distribution, select_negative, SelectionMode};

/// `[E(g) − E(neg) + γ]₊`
pub fn hinge(e_pos: f64, e_neg: f64, margin: f64) -> f64 {
    (e_pos - e_neg + margin).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub margin: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    /// 0 disables early stopping.
    pub patience: usize,
    pub eval_every: usize,
    pub val_queries: usize,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            lr: 0.001,
            optimizer: OptimizerKind::Adam,
            batch_size: 512,
            epochs: 1000,
            patience: 3,
            eval_every: 10,
            val_queries: 500,
        }
    }
}

/// Where negatives come from.
#[derive(Debug, Clone, Copy)]
pub enum NegativeSource<'a> {
    /// Uniform corruption with bern (or uniform) slot choice.
    Random,
    /// Corruption from entities active in the recent time window.
    TimeAware,
    /// A frozen generator's pick among `candidates` uniform corruptions.
    Generator {
        generator: &'a ScoreModel,
        mode: SelectionMode,
        candidates: usize,
    },
}

impl NegativeSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            NegativeSource::Random => "random",
            NegativeSource::TimeAware => "time-aware",
            NegativeSource::Generator { .. } => "generator",
        }
    }

    pub fn negative<R: Rng + ?Sized>(
        &self,
        g: &Quadruple,
        sampler: &NegativeSampler,
        rng: &mut R,
    ) -> Result<Quadruple> {
        match *self {
            NegativeSource::Random => sampler.sample_random(g, rng).map(|(q, _)| q),
            NegativeSource::TimeAware => sampler.sample_time_aware(g, rng).map(|(q, _)| q),
            NegativeSource::Generator {
                generator,
                mode,
                candidates,
            } => {
                let set = sampler.build_candidates(g, candidates, rng)?;
                let dist = generator_distribution(generator, set)?;
                Ok(select_negative(&dist, mode, rng).1)
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean hinge loss per positive.
    pub d_loss: f64,
    pub mean_reward: Option<f64>,
    pub baseline: Option<f64>,
    pub val_mrr: Option<f64>,
    pub seed: u64,
}

pub fn write_log_jsonl(path: &Path, log: &[EpochMetrics]) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::file(path, e))?,
    );
    for m in log {
        serde_json::to_writer(&mut f, m)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Stops after `patience` consecutive checks without a strict improvement.
#[derive(Debug, Clone)]
pub struct Plateau {
    patience: usize,
    best: f64,
    stale: usize,
}

impl Plateau {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records a validation score; returns true when training should stop.
    pub fn update(&mut self, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.patience > 0 && self.stale >= self.patience
    }
}

/// Filtered MRR on an evenly spaced subset of at most `cap` validation facts.
pub fn validation_mrr(model: &ScoreModel, dataset: &TkgDataset, filter: &FilterIndex, cap: usize) -> f64 {
    let valid = dataset.valid();
    let subset: Vec<Quadruple> = if cap == 0 || valid.len() <= cap {
        valid.to_vec()
    } else {
        (0..cap).map(|i| valid[i * valid.len() / cap]).collect()
    };
    if subset.is_empty() {
        return 0.0;
    }
    let ranks = eval::rank_all(model, &subset, Protocol::TimeAwareFiltered, filter);
    eval::EvalReport::from_ranks(&ranks, Protocol::TimeAwareFiltered)
        .map(|r| r.mrr)
        .unwrap_or(0.0)
}

/// A training error together with the last parameters known to be finite.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Vec<(String, ScoreModel)>,
}

impl TrainFailure {
    pub fn without_checkpoint(error: Error) -> Self {
        Self {
            error,
            last_good: Vec::new(),
        }
    }
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        Self::without_checkpoint(error)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ScoreModel,
    pub log: Vec<EpochMetrics>,
}

/// One descent step on the summed hinge loss of `(positive, negative)`
/// pairs. Returns the summed loss.
pub fn margin_step(
    model: &mut ScoreModel,
    optimizer: &mut Optimizer,
    pairs: &[(Quadruple, Quadruple)],
    margin: f64,
) -> Result<f64> {
    let mut grad = SparseGrad::new();
    let mut loss = 0.0;
    for (g, neg) in pairs {
        let l = hinge(model.energy(g)?, model.energy(neg)?, margin);
        if l > 0.0 {
            loss += l;
            grad.add_scaled(&model.energy_gradient_unchecked(g), 1.0);
            grad.add_scaled(&model.energy_gradient_unchecked(neg), -1.0);
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("margin loss is not finite".into()));
    }
    optimizer.apply(model.store_mut(), &grad)?;
    model.renormalize_touched(&grad);
    Ok(loss)
}

/// Mini-batch margin training on the train split. Validation MRR is
/// checked every `eval_every` epochs when `filter` is given and the
/// validation split is non-empty.
#[allow(clippy::too_many_arguments)]
pub fn train_margin<R: Rng + ?Sized>(
    mut model: ScoreModel,
    dataset: &TkgDataset,
    sampler: &NegativeSampler,
    source: &NegativeSource<'_>,
    config: &MarginConfig,
    filter: Option<&FilterIndex>,
    seed: u64,
    rng: &mut R,
) -> Result<TrainOutput, TrainFailure> {
    if config.batch_size == 0 || config.eval_every == 0 {
        return Err(Error::Config("batch size and eval interval must be positive".into()).into());
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.lr);
    let mut order: Vec<usize> = (0..dataset.train().len()).collect();
    let mut plateau = Plateau::new(config.patience);
    let mut log = Vec::new();
    let mut last_good = model.clone();
    let check = filter.filter(|_| !dataset.valid().is_empty());
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let step = chunk
                .iter()
                .map(|&i| {
                    let g = dataset.train()[i];
                    source.negative(&g, sampler, rng).map(|n| (g, n))
                })
                .collect::<Result<Vec<_>>>()
                .and_then(|pairs| margin_step(&mut model, &mut optimizer, &pairs, config.margin));
            match step {
                Ok(l) => loss += l,
                Err(error) => {
                    return Err(TrainFailure {
                        error,
                        last_good: vec![("model".into(), last_good)],
                    })
                }
            }
        }
        let val_mrr = check
            .filter(|_| epoch % config.eval_every == 0)
            .map(|f| validation_mrr(&model, dataset, f, config.val_queries));
        log.push(EpochMetrics {
            epoch,
            d_loss: loss / dataset.train().len().max(1) as f64,
            mean_reward: None,
            baseline: None,
            val_mrr,
            seed,
        });
        last_good = model.clone();
        if let Some(mrr) = val_mrr {
            if plateau.update(mrr) {
                log::info!("{} negatives: stopping at epoch {epoch}, best MRR {:.4}", source.name(), plateau.best());
                break;
            }
        }
    }
    Ok(TrainOutput { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_cases() {
        assert_eq!(hinge(0.0, 2.0, 1.0), 0.0);
        assert_eq!(hinge(1.0, 1.5, 1.0), 0.5);
        assert_eq!(hinge(1.0, 0.0, 1.0), 2.0);
    }

    #[test]
    fn plateau_counts_consecutive_stale_checks() {
        let mut p = Plateau::new(2);
        assert!(!p.update(0.1));
        assert!(!p.update(0.1));
        assert!(!p.update(0.2));
        assert!(!p.update(0.15));
        assert!(p.update(0.2));
        let mut off = Plateau::new(0);
        assert!((0..10).all(|_| !off.update(0.0)));
    }
}
