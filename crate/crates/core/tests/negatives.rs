use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tkgr_forge::data::Quadruple;
use tkgr_forge::sampling::{NegativeSampler, SamplerConfig, Slot};
use tkgr_forge::synth::{self, ClusterConfig};

fn sampler(bern: bool) -> (tkgr_forge::data::TkgDataset, NegativeSampler) {
    let ds = synth::cluster_tkg(&ClusterConfig::default(), 2).unwrap();
    let s = NegativeSampler::new(
        &ds,
        SamplerConfig {
            bern,
            ..Default::default()
        },
    );
    (ds, s)
}

fn single_slot_corruption(g: &Quadruple, n: &Quadruple) -> bool {
    n.predicate == g.predicate
        && n.time == g.time
        && ((n.subject != g.subject) as u8 + (n.object != g.object) as u8) == 1
}

#[test]
fn fair_coin_without_bern() {
    let (ds, s) = sampler(false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = ds.train()[0];
    let heads = (0..100_000)
        .filter(|_| s.sample_random(&g, &mut rng).unwrap().1 == Slot::Head)
        .count();
    assert!((heads as f64 / 1e5 - 0.5).abs() <= 0.01);
}

#[test]
fn time_aware_replacements_are_active_in_the_window() {
    let (ds, s) = sampler(false);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..10_000 {
        let g = ds.train()[i % ds.train().len()];
        let (n, slot) = s.sample_time_aware(&g, &mut rng).unwrap();
        assert!(single_slot_corruption(&g, &n));
        let e = if slot == Slot::Head { n.subject } else { n.object };
        let pool = s.window_entities(g.time);
        // fallback to uniform only when the window has no other entity
        assert!(pool.contains(&e) || pool.iter().all(|&x| x == e || x == g.subject || x == g.object));
    }
}

#[test]
fn candidate_sets_are_reproducible_and_distinct() {
    let (ds, s) = sampler(true);
    for seed in 0..5 {
        let g = ds.train()[seed as usize];
        let a = s.build_candidates(&g, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = s.build_candidates(&g, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(a, b);
        let mut c = a.candidates.clone();
        c.sort_unstable();
        c.dedup();
        assert_eq!(c.len(), 64);
        assert!(a.candidates.iter().all(|n| single_slot_corruption(&g, n)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_negative_changes_exactly_one_entity(seed in any::<u64>(), idx in 0usize..1000, bern in any::<bool>()) {
        let (ds, s) = sampler(bern);
        let g = ds.train()[idx % ds.train().len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(single_slot_corruption(&g, &s.sample_random(&g, &mut rng).unwrap().0));
        prop_assert!(single_slot_corruption(&g, &s.sample_time_aware(&g, &mut rng).unwrap().0));
    }
}
