mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_distribution, relative_distance};
use tkgr_forge::data::{Quadruple, Split};
use tkgr_forge::models::{ModelKind, ScoreModel, SparseGrad};
use tkgr_forge::pipeline::{self, model_dims, FitSettings};
use tkgr_forge::synth::{self, PopularityShiftConfig};
use tkgr_forge::ttt::{
    comparison_gradient, comparison_loss_gradient, fit_predictor, snapshot_logits, test_stream, ttt_adapt, CountMode,
    DistributionSeries, LstmConfig, LstmPredictor, Snapshot, TttConfig,
};

#[test]
fn constant_series_loss_reaches_the_entropy() {
    let s = vec![0.5, 0.25, 0.125, 0.125];
    let entropy: f64 = -s.iter().map(|p: &f64| p * p.ln()).sum::<f64>();
    let series = DistributionSeries {
        mode: CountMode::ObjectOnly,
        times: (0..40).collect(),
        distributions: vec![s.clone(); 40],
    };
    let cfg = LstmConfig {
        window: 5,
        hidden: 8,
        epochs: 200,
        ..Default::default()
    };
    let fitted = fit_predictor(&series, &cfg, 4).unwrap();
    assert!(
        (fitted.final_loss - entropy).abs() <= 0.05 * entropy,
        "loss {} vs entropy {entropy}",
        fitted.final_loss
    );
}

/// The comparison gradient against a direct composition: dL/dθ =
/// Σ_j dL/dP_j · dP_j/dθ with dP_j/dθ = −mean over facts of ∇E(s, p, j, t).
#[test]
fn comparison_gradient_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for kind in ModelKind::ALL {
        let model = ScoreModel::init(
            kind,
            tkgr_forge::models::ModelDims {
                num_entities: 7,
                num_relations: 3,
                num_timestamps: 4,
                dim: 5,
            },
            rng.gen(),
        )
        .unwrap();
        let facts: Vec<Quadruple> = (0..40)
            .map(|_| Quadruple::new(rng.gen_range(0..7), rng.gen_range(0..3), rng.gen_range(0..7), 2))
            .collect();
        let target = random_distribution(7, &mut rng);
        let (_, got) = comparison_gradient(&model, &facts, &target);
        let dp = comparison_loss_gradient(&snapshot_logits(&model, &facts), &target);
        let mut want = SparseGrad::new();
        for q in &facts {
            for (j, &d) in dp.iter().enumerate() {
                let c = Quadruple::new(q.subject, q.predicate, j as u32, q.time);
                want.add_scaled(&model.energy_gradient(&c).unwrap(), -d / facts.len() as f64);
            }
        }
        assert!(relative_distance(&got, &want) <= 1e-9, "{kind}");
    }
}

struct Setup {
    model: ScoreModel,
    predictor: LstmPredictor,
    history: DistributionSeries,
    stream: Vec<Snapshot>,
}

fn setup() -> Setup {
    let cfg = PopularityShiftConfig {
        test_blocks: 2,
        ..Default::default()
    };
    let ds = synth::popularity_shift(&cfg, 1).unwrap();
    let fit = FitSettings {
        lstm: LstmConfig {
            window: 3,
            hidden: 8,
            epochs: 20,
            ..Default::default()
        },
        ..Default::default()
    };
    let predictor = pipeline::fit_distribution(&ds, &fit, 1).unwrap().predictor;
    let history = DistributionSeries::from_dataset(&ds, &[Split::Train, Split::Valid], CountMode::ObjectOnly).unwrap();
    let model = ScoreModel::init(ModelKind::TranslateTime, model_dims(&ds, 8), 2).unwrap();
    Setup {
        model,
        predictor,
        history,
        stream: test_stream(&ds).unwrap(),
    }
}

#[test]
fn future_snapshots_cannot_leak_into_earlier_labels() {
    let s = setup();
    let cfg = TttConfig {
        lr: 0.01,
        steps: 2,
        ..Default::default()
    };
    let clean = ttt_adapt(s.model.clone(), &s.predictor, &s.history, &s.stream, &cfg).unwrap();
    let cut = 4;
    let mut poisoned = s.stream.clone();
    for snap in &mut poisoned[cut..] {
        for q in &mut snap.facts {
            q.object = 0;
            q.subject = 0;
        }
    }
    let dirty = ttt_adapt(s.model.clone(), &s.predictor, &s.history, &poisoned, &cfg).unwrap();
    // labels up to and including the first poisoned snapshot see only clean history
    assert_eq!(clean.pseudo_labels[..=cut], dirty.pseudo_labels[..=cut]);
    assert_ne!(clean.pseudo_labels[cut + 1], dirty.pseudo_labels[cut + 1]);
    let before = |a: &tkgr_forge::ttt::Adaptation| {
        a.trace.iter().filter(|e| e.snapshot < s.stream[cut].time).cloned().collect::<Vec<_>>()
    };
    assert_eq!(before(&clean), before(&dirty));
}

#[test]
fn zero_steps_leave_the_model_untouched() {
    let s = setup();
    let cfg = TttConfig {
        steps: 0,
        ..Default::default()
    };
    let out = ttt_adapt(s.model.clone(), &s.predictor, &s.history, &s.stream, &cfg).unwrap();
    assert_eq!(out.model, s.model);
    assert!(out.trace.iter().all(|e| e.step == 0));
}

#[test]
fn horizon_is_truncated_to_the_stream() {
    let s = setup();
    let cfg = TttConfig {
        steps: 1,
        horizon: Some(1000),
        ..Default::default()
    };
    let out = ttt_adapt(s.model.clone(), &s.predictor, &s.history, &s.stream, &cfg).unwrap();
    assert_eq!(out.pseudo_labels.len(), s.stream.len());
    let short = TttConfig {
        horizon: Some(2),
        ..cfg
    };
    let out = ttt_adapt(s.model, &s.predictor, &s.history, &s.stream, &short).unwrap();
    assert_eq!(out.pseudo_labels.len(), 2);
}

#[test]
fn entity_only_adaptation_keeps_relation_and_time_tensors() {
    let s = setup();
    let cfg = TttConfig {
        lr: 0.05,
        steps: 3,
        ..Default::default()
    };
    let out = ttt_adapt(s.model.clone(), &s.predictor, &s.history, &s.stream, &cfg).unwrap();
    assert_ne!(out.model.store().tensor(0), s.model.store().tensor(0));
    assert_eq!(out.model.store().tensor(1), s.model.store().tensor(1));
    assert_eq!(out.model.store().tensor(2), s.model.store().tensor(2));
}
