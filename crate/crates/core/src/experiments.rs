//! Paired-seed experiments on the synthetic fixtures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, TkgDataset};
use crate::error::Result;
use crate::eval::{self, EvalReport, FilterIndex, Protocol};
use crate::models::ScoreModel;
use crate::pipeline::{self, FitSettings, Strategy, TrainSettings};
use crate::sampling::NegativeSampler;
use crate::seeding;
use crate::synth::{self, ClusterConfig, PopularityShiftConfig};
use crate::training::TrainFailure;
use crate::tkgan::{generator_distribution, select_negative};
use crate::ttt::TttConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNegativeSetup {
    pub data: ClusterConfig,
    pub train: TrainSettings,
    /// Train facts probed when comparing negative energies.
    pub probe_facts: usize,
}

impl Default for HardNegativeSetup {
    fn default() -> Self {
        let mut train = TrainSettings {
            dim: 32,
            epochs: 40,
            ..Default::default()
        };
        let adv = &mut train.adversarial;
        adv.batch_size = 256;
        adv.candidates = 32;
        adv.max_epochs = 20;
        adv.lr_generator = 0.01;
        adv.lr_discriminator = 0.01;
        adv.patience = 0;
        Self {
            data: ClusterConfig::default(),
            train,
            probe_facts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardNegativeTrial {
    pub seed: u64,
    /// Mean stage-1 discriminator energy of generator-selected negatives.
    pub generator_negative_energy: f64,
    /// Same, for uniform negatives of the same facts.
    pub uniform_negative_energy: f64,
    pub tkgan: EvalReport,
    pub rns: EvalReport,
}

/// Mean discriminator energy of generator picks versus uniform corruptions
/// over the first `probe` train facts.
pub fn probe_negative_energies<R: Rng + ?Sized>(
    dataset: &TkgDataset,
    generator: &ScoreModel,
    discriminator: &ScoreModel,
    sampler: &NegativeSampler,
    setup: &HardNegativeSetup,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let adv = &setup.train.adversarial;
    let facts: Vec<Quadruple> = dataset.train().iter().take(setup.probe_facts).copied().collect();
    let (mut gen_sum, mut uni_sum) = (0.0, 0.0);
    for g in &facts {
        let set = sampler.build_candidates(g, adv.candidates, rng)?;
        let dist = generator_distribution(generator, set)?;
        let (_, neg, _) = select_negative(&dist, adv.selection, rng);
        gen_sum += discriminator.energy(&neg)?;
        uni_sum += discriminator.energy(&sampler.sample_random(g, rng)?.0)?;
    }
    let n = facts.len().max(1) as f64;
    Ok((gen_sum / n, uni_sum / n))
}

/// Trains TKGAN and an RNS baseline from the same target initialization
/// on one seed of the cluster fixture and reports both test scores.
pub fn hard_negative_trial(setup: &HardNegativeSetup, seed: u64) -> Result<HardNegativeTrial, TrainFailure> {
    let dataset = synth::cluster_tkg(&setup.data, seed)?;
    let filter = FilterIndex::from_dataset(&dataset);
    let tkgan_settings = TrainSettings {
        strategy: Strategy::Tkgan,
        ..setup.train.clone()
    };
    let rns_settings = TrainSettings {
        strategy: Strategy::Rns,
        ..setup.train.clone()
    };
    let adv = pipeline::train(&dataset, &tkgan_settings, seed)?;
    let rns = pipeline::train(&dataset, &rns_settings, seed)?;
    let sampler = NegativeSampler::new(&dataset, setup.train.sampler);
    let mut rng = seeding::stream(seed, seeding::SAMPLER);
    let (generator_negative_energy, uniform_negative_energy) = probe_negative_energies(
        &dataset,
        adv.generator.as_ref().expect("adversarial run keeps its generator"),
        adv.discriminator.as_ref().expect("adversarial run keeps its discriminator"),
        &sampler,
        setup,
        &mut rng,
    )?;
    Ok(HardNegativeTrial {
        seed,
        generator_negative_energy,
        uniform_negative_energy,
        tkgan: eval::evaluate(&adv.target, dataset.test(), Protocol::TimeAwareFiltered, &filter)?,
        rns: eval::evaluate(&rns.target, dataset.test(), Protocol::TimeAwareFiltered, &filter)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSetup {
    pub data: PopularityShiftConfig,
    pub train: TrainSettings,
    pub fit: FitSettings,
    pub ttt: TttConfig,
}

impl Default for ShiftSetup {
    fn default() -> Self {
        let mut train = TrainSettings {
            dim: 16,
            epochs: 40,
            ..Default::default()
        };
        train.adversarial.batch_size = 128;
        train.adversarial.lr_discriminator = 0.01;
        train.adversarial.patience = 0;
        let mut fit = FitSettings::default();
        fit.lstm.window = 3;
        fit.lstm.hidden = 16;
        fit.lstm.epochs = 150;
        Self {
            data: PopularityShiftConfig::default(),
            train,
            fit,
            ttt: TttConfig {
                lr: 0.03,
                steps: 10,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftTrial {
    pub seed: u64,
    pub before: EvalReport,
    pub after: EvalReport,
    pub mean_loss_first: f64,
    pub mean_loss_last: f64,
    pub predictor_loss: f64,
}

/// Trains a target on the popularity-shift fixture, fits the predictor and
/// adapts over the test snapshots.
pub fn shift_trial(setup: &ShiftSetup, seed: u64) -> Result<ShiftTrial, TrainFailure> {
    let dataset = synth::popularity_shift(&setup.data, seed)?;
    let trained = pipeline::train(&dataset, &setup.train, seed)?;
    let fitted = pipeline::fit_distribution(&dataset, &setup.fit, seed)?;
    let out = pipeline::adapt_and_evaluate(
        &dataset,
        trained.target,
        &fitted.predictor,
        &setup.fit,
        &setup.ttt,
        Protocol::TimeAwareFiltered,
    )?;
    Ok(ShiftTrial {
        seed,
        before: out.before,
        after: out.after,
        mean_loss_first: out.adaptation.mean_loss_at(0).unwrap_or(f64::NAN),
        mean_loss_last: out.adaptation.mean_loss_at(setup.ttt.steps).unwrap_or(f64::NAN),
        predictor_loss: fitted.final_loss,
    })
}
