//! Synthetic temporal knowledge graphs with planted structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, TkgDataset};
use crate::error::Result;

/// Entities fall into equal clusters. Relation `r` links member `i` of its
/// source cluster `r mod C` to member `i` of target cluster
/// `(r + 1 + ⌊r / C⌋) mod C`. Each `(s, r)` has at most one object, so a
/// corruption is never a true fact, and corruptions inside the target cluster
/// are the hard ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub clusters: usize,
    /// Timestamps at which each triple holds.
    pub repeats: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            relations: 20,
            timestamps: 50,
            clusters: 10,
            repeats: 5,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl ClusterConfig {
    fn cluster_size(&self) -> u32 {
        (self.entities / self.clusters) as u32
    }

    pub fn source_cluster(&self, r: u32) -> u32 {
        r % self.clusters as u32
    }

    pub fn target_cluster(&self, r: u32) -> u32 {
        let c = self.clusters as u32;
        (r + 1 + r / c) % c
    }

    pub fn cluster_of(&self, e: u32) -> u32 {
        e / self.cluster_size()
    }

    /// The object of `(s, r)`, if `s` is in the source cluster of `r`.
    pub fn object(&self, s: u32, r: u32) -> Option<u32> {
        let size = self.cluster_size();
        (self.cluster_of(s) == self.source_cluster(r))
            .then(|| self.target_cluster(r) * size + s % size)
    }
}

/// Random fact-level split of the cluster graph.
pub fn cluster_tkg(config: &ClusterConfig, seed: u64) -> Result<TkgDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut facts = Vec::new();
    let times: Vec<u32> = (0..config.timestamps as u32).collect();
    let size = config.cluster_size();
    for r in 0..config.relations as u32 {
        let src = config.source_cluster(r) * size;
        for s in src..src + size {
            let o = config.object(s, r).expect("subject drawn from the source cluster");
            for &t in times.choose_multiple(&mut rng, config.repeats) {
                facts.push(Quadruple::new(s, r, o, t));
            }
        }
    }
    facts.shuffle(&mut rng);
    let n_test = (facts.len() as f64 * config.test_fraction).round() as usize;
    let n_valid = (facts.len() as f64 * config.valid_fraction).round() as usize;
    let test = facts.split_off(facts.len() - n_test);
    let valid = facts.split_off(facts.len() - n_valid);
    TkgDataset::from_indexed(
        config.entities,
        config.relations,
        config.timestamps,
        facts,
        valid,
        test,
    )
}

/// Object popularity follows a cycle of regimes. Regime `k` concentrates
/// `popular_mass` of the objects on entity group `k mod groups`; the rest is
/// spread uniformly. Regimes last `block` timestamps; the first
/// `train_blocks` blocks form train (with a random validation share) and the
/// following `test_blocks` blocks form test, so test opens on a regime
/// different from the one that closed train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityShiftConfig {
    pub entities: usize,
    pub relations: usize,
    pub groups: usize,
    pub block: usize,
    pub train_blocks: usize,
    pub test_blocks: usize,
    pub facts_per_snapshot: usize,
    pub popular_mass: f64,
    pub valid_fraction: f64,
}

impl Default for PopularityShiftConfig {
    fn default() -> Self {
        Self {
            entities: 60,
            relations: 4,
            groups: 3,
            block: 5,
            train_blocks: 8,
            test_blocks: 1,
            facts_per_snapshot: 40,
            popular_mass: 0.8,
            valid_fraction: 0.1,
        }
    }
}

impl PopularityShiftConfig {
    pub fn timestamps(&self) -> usize {
        self.block * (self.train_blocks + self.test_blocks)
    }

    pub fn group_at(&self, t: u32) -> usize {
        (t as usize / self.block) % self.groups
    }

    pub fn group_members(&self, g: usize) -> std::ops::Range<u32> {
        let size = self.entities / self.groups;
        (g * size) as u32..((g + 1) * size) as u32
    }
}

pub fn popularity_shift(config: &PopularityShiftConfig, seed: u64) -> Result<TkgDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split_time = (config.block * config.train_blocks) as u32;
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..config.timestamps() as u32 {
        let members = config.group_members(config.group_at(t));
        for _ in 0..config.facts_per_snapshot {
            let s = rng.gen_range(0..config.entities as u32);
            let p = rng.gen_range(0..config.relations as u32);
            let o = if rng.gen_bool(config.popular_mass) {
                rng.gen_range(members.clone())
            } else {
                rng.gen_range(0..config.entities as u32)
            };
            let q = Quadruple::new(s, p, o, t);
            if t >= split_time {
                test.push(q);
            } else if rng.gen_bool(config.valid_fraction) {
                valid.push(q);
            } else {
                train.push(q);
            }
        }
    }
    TkgDataset::from_indexed(
        config.entities,
        config.relations,
        config.timestamps(),
        train,
        valid,
        test,
    )
}

/// Relations `0..half` are used before `boundary`, `half..relations` from
/// `boundary` on. One train split, `facts_per_snapshot` facts per timestamp.
pub fn relation_rotation(
    entities: usize,
    relations: usize,
    timestamps: usize,
    boundary: u32,
    facts_per_snapshot: usize,
    seed: u64,
) -> Result<TkgDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (relations / 2) as u32;
    let mut facts = Vec::new();
    for t in 0..timestamps as u32 {
        let rels = if t < boundary { 0..half } else { half..relations as u32 };
        for _ in 0..facts_per_snapshot {
            facts.push(Quadruple::new(
                rng.gen_range(0..entities as u32),
                rng.gen_range(rels.clone()),
                rng.gen_range(0..entities as u32),
                t,
            ));
        }
    }
    TkgDataset::from_indexed(entities, relations, timestamps, facts, vec![], vec![])
}

/// The same facts repeated at every timestamp.
pub fn constant_snapshots(base: &[(u32, u32, u32)], timestamps: usize) -> Result<TkgDataset> {
    let ne = base.iter().map(|&(s, _, o)| s.max(o) + 1).max().unwrap_or(1) as usize;
    let nr = base.iter().map(|&(_, p, _)| p + 1).max().unwrap_or(1) as usize;
    let facts = (0..timestamps as u32)
        .flat_map(|t| base.iter().map(move |&(s, p, o)| Quadruple::new(s, p, o, t)))
        .collect();
    TkgDataset::from_indexed(ne, nr, timestamps, facts, vec![], vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_links_are_one_to_one() {
        let cfg = ClusterConfig::default();
        for r in 0..cfg.relations as u32 {
            assert_ne!(cfg.source_cluster(r), cfg.target_cluster(r));
            let mut objs: Vec<u32> = (0..cfg.entities as u32).filter_map(|s| cfg.object(s, r)).collect();
            assert_eq!(objs.len(), 20);
            objs.sort_unstable();
            objs.dedup();
            assert_eq!(objs.len(), 20);
        }
        let ds = cluster_tkg(&cfg, 1).unwrap();
        assert_eq!(ds.total_facts(), 20 * 20 * 5);
        assert!(ds.train().iter().all(|q| cfg.object(q.subject, q.predicate) == Some(q.object)));
    }

    #[test]
    fn popularity_regimes_cycle() {
        let cfg = PopularityShiftConfig::default();
        let ds = popularity_shift(&cfg, 3).unwrap();
        assert!(ds.test().iter().all(|q| q.time >= 40));
        assert!(ds.train().iter().chain(ds.valid()).all(|q| q.time < 40));
        assert_ne!(cfg.group_at(39), cfg.group_at(40));
    }
}
