mod common;

use common::fixture;
use tkgr_forge::data::{self, Interval, Split, TkgDataset};
use tkgr_forge::models::{ModelKind, ParameterStore, ScoreModel};
use tkgr_forge::pipeline::model_dims;

fn tiny() -> TkgDataset {
    data::load_dataset(&fixture("tiny"), &Interval::new(24, "hours")).unwrap()
}

#[test]
fn tiny_fixture_vocabulary() {
    let ds = tiny();
    assert_eq!((ds.num_entities(), ds.num_relations(), ds.num_timestamps()), (3, 2, 2));
    assert_eq!(ds.times().raw_times(), &[0, 24]);
    let mut idx: Vec<u32> = ds.train().iter().map(|q| q.time).collect();
    idx.sort_unstable();
    idx.dedup();
    assert_eq!(idx, vec![0, 1]);
}

#[test]
fn snapshot_at_zero_holds_the_three_early_facts() {
    let ds = tiny();
    let all = [Split::Train, Split::Valid, Split::Test];
    let snap = ds.snapshot(0, &all).unwrap();
    assert_eq!(snap.len(), 3);
    assert!(snap.iter().all(|q| ds.times().raw(q.time) == Some(0)));
    assert_eq!(snap, ds.train()[..3].to_vec());
    assert!(ds.snapshot(2, &all).is_err());
}

#[test]
fn relation_counts_cover_every_fact() {
    let ds = data::load_dataset(&fixture("cardinality"), &Interval::unit_step()).unwrap();
    let card = ds.relation_cardinality().unwrap();
    let counted: usize = card.entries().iter().flatten().map(|e| e.facts).sum();
    assert_eq!(counted, ds.total_facts());
    for e in card.entries().iter().flatten() {
        assert!((e.p_replace_head + e.p_replace_tail - 1.0).abs() <= 1e-12);
    }
    let r = card.entry(ds.relations().index_of("r").unwrap()).unwrap();
    assert_eq!((r.tails_per_head, r.heads_per_tail, r.p_replace_head), (3.0, 1.0, 0.75));
}

#[test]
fn reingest_gives_byte_identical_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tkgd"), dir.path().join("b.tkgd"));
    tiny().write_cache(&a).unwrap();
    tiny().write_cache(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = TkgDataset::read_cache(&a).unwrap();
    assert_eq!(back, tiny());
    assert_eq!(back.snapshot(1, &[Split::Train]).unwrap(), tiny().snapshot(1, &[Split::Train]).unwrap());
}

#[test]
fn fixture_checkpoint_preserves_energies() {
    let ds = tiny();
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let model = ScoreModel::init(kind, model_dims(&ds, 5), 3).unwrap();
        let path = dir.path().join(format!("{kind}.tkgm"));
        model.store().save(&path).unwrap();
        let back = ScoreModel::new(ParameterStore::load(&path).unwrap());
        for q in ds.train() {
            assert_eq!(model.energy(q).unwrap().to_bits(), back.energy(q).unwrap().to_bits());
        }
    }
}

#[test]
fn compaction_preserves_time_order() {
    let ds = data::load_dataset(&fixture("cardinality"), &Interval::unit_step()).unwrap();
    let raw: Vec<i64> = ds.times().raw_times().to_vec();
    assert!(raw.windows(2).all(|w| w[0] < w[1]));
}
