//! End-to-end training pipelines shared by the command line and examples.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{Split, TkgDataset};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, FilterIndex, Protocol};
use crate::models::{ModelDims, ModelKind, ScoreModel};
use crate::sampling::{NegativeSampler, SamplerConfig};
use crate::seeding;
use crate::tkgan::{self, AdversarialConfig};
use crate::training::{self, EpochMetrics, NegativeSource, TrainFailure};
use crate::ttt::{self, Adaptation, CountMode, DistributionSeries, LstmConfig, LstmPredictor, TttConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Uniform random negatives.
    Rns,
    /// Time-window negatives.
    Tans,
    /// Adversarial generator negatives (two stages).
    Tkgan,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Rns => "rns",
            Strategy::Tans => "tans",
            Strategy::Tkgan => "tkgan",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rns" => Ok(Strategy::Rns),
            "tans" => Ok(Strategy::Tans),
            "tkgan" => Ok(Strategy::Tkgan),
            other => Err(Error::Config(format!("unknown negative-sampling strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub kind: ModelKind,
    pub dim: usize,
    pub strategy: Strategy,
    /// Epoch budget of the target model (all strategies).
    pub epochs: usize,
    pub sampler: SamplerConfig,
    /// Margin, learning rates, batch size and the adversarial stage.
    pub adversarial: AdversarialConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            kind: ModelKind::TranslateTime,
            dim: 32,
            strategy: Strategy::Rns,
            epochs: 1000,
            sampler: SamplerConfig::default(),
            adversarial: AdversarialConfig::default(),
        }
    }
}

/// Initialization seeds, in a fixed draw order so the target starts from the
/// same parameters whatever the strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSeeds {
    pub target: u64,
    pub generator: u64,
    pub discriminator: u64,
}

impl InitSeeds {
    pub fn new(seed: u64) -> Self {
        let mut rng = seeding::stream(seed, seeding::INIT);
        Self {
            target: rng.next_u64(),
            generator: rng.next_u64(),
            discriminator: rng.next_u64(),
        }
    }
}

pub fn model_dims(dataset: &TkgDataset, dim: usize) -> ModelDims {
    ModelDims {
        num_entities: dataset.num_entities(),
        num_relations: dataset.num_relations(),
        num_timestamps: dataset.num_timestamps(),
        dim,
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub target: ScoreModel,
    pub generator: Option<ScoreModel>,
    pub discriminator: Option<ScoreModel>,
    /// Stage-1 log (adversarial runs only).
    pub adversarial_log: Vec<EpochMetrics>,
    pub target_log: Vec<EpochMetrics>,
}

/// Trains a target model with the configured strategy. For `tkgan`, the
/// generator and discriminator are pre-trained on uniform negatives, trained
/// adversarially, and the frozen generator then supplies the target's
/// negatives.
pub fn train(dataset: &TkgDataset, settings: &TrainSettings, seed: u64) -> Result<Trained, TrainFailure> {
    settings.adversarial.validate()?;
    let dims = model_dims(dataset, settings.dim);
    let seeds = InitSeeds::new(seed);
    let sampler = NegativeSampler::new(dataset, settings.sampler);
    let mut rng = seeding::stream(seed, seeding::TRAINER);
    let filter = (!dataset.valid().is_empty()).then(|| FilterIndex::from_dataset(dataset));
    let adv = &settings.adversarial;
    let target = ScoreModel::init(settings.kind, dims, seeds.target)?;
    match settings.strategy {
        Strategy::Rns | Strategy::Tans => {
            let source = if settings.strategy == Strategy::Rns {
                NegativeSource::Random
            } else {
                NegativeSource::TimeAware
            };
            let cfg = adv.margin_config(adv.lr_discriminator, settings.epochs);
            let out = training::train_margin(target, dataset, &sampler, &source, &cfg, filter.as_ref(), seed, &mut rng)?;
            Ok(Trained {
                target: out.model,
                generator: None,
                discriminator: None,
                adversarial_log: Vec::new(),
                target_log: out.log,
            })
        }
        Strategy::Tkgan => {
            let g0 = ScoreModel::init(settings.kind, dims, seeds.generator)?;
            let d0 = ScoreModel::init(settings.kind, dims, seeds.discriminator)?;
            let g0 = tkgan::pretrain(g0, dataset, &sampler, adv, adv.lr_generator, &mut rng)?;
            let d0 = tkgan::pretrain(d0, dataset, &sampler, adv, adv.lr_discriminator, &mut rng)?;
            let stage1 = tkgan::train_stage1(dataset, g0, d0, &sampler, adv, seed, &mut rng)?;
            let stage2 = tkgan::train_stage2(
                dataset,
                &stage1.generator,
                target,
                &sampler,
                adv,
                settings.epochs,
                seed,
                &mut rng,
            )?;
            Ok(Trained {
                target: stage2.model,
                generator: Some(stage1.generator),
                discriminator: Some(stage1.discriminator),
                adversarial_log: stage1.log,
                target_log: stage2.log,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lstm: LstmConfig,
    pub mode: CountMode,
    /// Whether validation snapshots join the training series.
    pub include_valid: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            lstm: LstmConfig::default(),
            mode: CountMode::ObjectOnly,
            include_valid: true,
        }
    }
}

impl FitSettings {
    pub fn history_splits(&self) -> &'static [Split] {
        if self.include_valid {
            &[Split::Train, Split::Valid]
        } else {
            &[Split::Train]
        }
    }
}

/// Distribution series of the pre-test snapshots.
pub fn history_series(dataset: &TkgDataset, settings: &FitSettings) -> Result<DistributionSeries> {
    DistributionSeries::from_dataset(dataset, settings.history_splits(), settings.mode)
}

pub fn fit_distribution(dataset: &TkgDataset, settings: &FitSettings, seed: u64) -> Result<ttt::FittedPredictor> {
    let series = history_series(dataset, settings)?;
    ttt::fit_predictor(&series, &settings.lstm, seeding::sub_seed(seed, seeding::TTT))
}

/// Before/after reports on the adapted test snapshots.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub before: EvalReport,
    pub after: EvalReport,
    pub adaptation: Adaptation,
}

/// Evaluates `model` on the test horizon, adapts it, and evaluates again.
pub fn adapt_and_evaluate(
    dataset: &TkgDataset,
    model: ScoreModel,
    predictor: &LstmPredictor,
    fit: &FitSettings,
    config: &TttConfig,
    protocol: Protocol,
) -> Result<AdaptOutcome> {
    let history = history_series(dataset, fit)?;
    let stream = ttt::test_stream(dataset)?;
    let horizon = config.horizon.unwrap_or(stream.len()).min(stream.len());
    let facts: Vec<_> = stream[..horizon].iter().flat_map(|s| s.facts.iter().copied()).collect();
    let filter = FilterIndex::from_dataset(dataset);
    let before = eval::evaluate(&model, &facts, protocol, &filter)?;
    let adaptation = ttt::ttt_adapt(model, predictor, &history, &stream, config)?;
    let after = eval::evaluate(&adaptation.model, &facts, protocol, &filter)?;
    Ok(AdaptOutcome {
        before,
        after,
        adaptation,
    })
}
