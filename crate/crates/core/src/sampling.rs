//! Negative sampling: uniform corruption, time-aware corruption and the
//! candidate sets the adversarial generator scores.
//!
//! Every negative replaces exactly one entity slot of a positive and keeps
//! its predicate and timestamp. The slot is chosen with probability 0.5
//! each, or with the per-relation "bern" probabilities when enabled.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, RelationCardinality, Split, TkgDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Head,
    Tail,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Head => "head",
            Slot::Tail => "tail",
        })
    }
}

/// Replaces the entity in `slot`.
pub fn corrupt(g: &Quadruple, slot: Slot, entity: u32) -> Quadruple {
    let mut q = *g;
    match slot {
        Slot::Head => q.subject = entity,
        Slot::Tail => q.object = entity,
    }
    q
}

fn slot_entity(g: &Quadruple, slot: Slot) -> u32 {
    match slot {
        Slot::Head => g.subject,
        Slot::Tail => g.object,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Use per-relation head/tail probabilities instead of a fair coin.
    pub bern: bool,
    /// Time-aware window `[t − w, t]`.
    pub window: u32,
    /// Reject candidates that are known true facts.
    pub filter_known: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            bern: true,
            window: 1,
            filter_known: false,
        }
    }
}

/// `Neg(g)`: distinct single-slot corruptions of `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub source: Quadruple,
    pub candidates: Vec<Quadruple>,
    pub slots: Vec<Slot>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Stateless apart from precomputed indexes; the rng is supplied per call.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    num_entities: u32,
    config: SamplerConfig,
    cardinality: RelationCardinality,
    /// Entities active in `[t − w, t]`, sorted.
    window_entities: Vec<Vec<u32>>,
    known: HashSet<Quadruple>,
}

impl NegativeSampler {
    pub fn new(dataset: &TkgDataset, config: SamplerConfig) -> Self {
        let cardinality = if config.bern && !dataset.train().is_empty() {
            RelationCardinality::from_facts(dataset.train(), dataset.num_relations())
        } else {
            RelationCardinality::uniform(dataset.num_relations())
        };
        let nt = dataset.num_timestamps();
        let mut per_time: Vec<Vec<u32>> = vec![Vec::new(); nt];
        for q in dataset.train() {
            per_time[q.time as usize].push(q.subject);
            per_time[q.time as usize].push(q.object);
        }
        let window_entities = (0..nt)
            .map(|t| {
                let lo = t.saturating_sub(config.window as usize);
                let mut ents: Vec<u32> = per_time[lo..=t].iter().flatten().copied().collect();
                ents.sort_unstable();
                ents.dedup();
                ents
            })
            .collect();
        let known = if config.filter_known {
            Split::ALL
                .iter()
                .flat_map(|&s| dataset.split(s).iter().copied())
                .collect()
        } else {
            HashSet::new()
        };
        Self {
            num_entities: dataset.num_entities() as u32,
            config,
            cardinality,
            window_entities,
            known,
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn cardinality(&self) -> &RelationCardinality {
        &self.cardinality
    }

    pub fn window_entities(&self, t: u32) -> &[u32] {
        self.window_entities
            .get(t as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn choose_slot<R: Rng + ?Sized>(&self, g: &Quadruple, rng: &mut R) -> Slot {
        let p_head = if self.config.bern {
            self.cardinality.p_replace_head(g.predicate)
        } else {
            0.5
        };
        if rng.gen_bool(p_head.clamp(0.0, 1.0)) {
            Slot::Head
        } else {
            Slot::Tail
        }
    }

    fn other_entity<R: Rng + ?Sized>(&self, current: u32, rng: &mut R) -> u32 {
        let e = rng.gen_range(0..self.num_entities - 1);
        if e >= current {
            e + 1
        } else {
            e
        }
    }

    /// Uniform random negative (RNS).
    pub fn sample_random<R: Rng + ?Sized>(
        &self,
        g: &Quadruple,
        rng: &mut R,
    ) -> Result<(Quadruple, Slot)> {
        if self.num_entities < 2 {
            return Err(Error::Sampling(
                "need at least two entities to corrupt a fact".into(),
            ));
        }
        let slot = self.choose_slot(g, rng);
        let e = self.other_entity(slot_entity(g, slot), rng);
        Ok((corrupt(g, slot, e), slot))
    }

    /// Time-aware negative (TaNS): the replacement is drawn from entities
    /// active in the train snapshots `[t − w, t]`. Falls back to
    /// [`sample_random`](Self::sample_random) when no other entity is active.
    pub fn sample_time_aware<R: Rng + ?Sized>(
        &self,
        g: &Quadruple,
        rng: &mut R,
    ) -> Result<(Quadruple, Slot)> {
        let slot = self.choose_slot(g, rng);
        let current = slot_entity(g, slot);
        let pool = self.window_entities(g.time);
        let own = pool.binary_search(&current).is_ok() as usize;
        let eligible = pool.len() - own;
        if eligible == 0 {
            return self.sample_random(g, rng);
        }
        let mut i = rng.gen_range(0..eligible);
        if own == 1 {
            let pos = pool.binary_search(&current).unwrap();
            if i >= pos {
                i += 1;
            }
        }
        Ok((corrupt(g, slot, pool[i]), slot))
    }

    fn acceptable(&self, g: &Quadruple, q: &Quadruple, seen: &HashSet<Quadruple>) -> bool {
        q != g && !seen.contains(q) && !(self.config.filter_known && self.known.contains(q))
    }

    /// Builds `k` distinct corruptions of `g`.
    pub fn build_candidates<R: Rng + ?Sized>(
        &self,
        g: &Quadruple,
        k: usize,
        rng: &mut R,
    ) -> Result<CandidateSet> {
        if k == 0 {
            return Err(Error::Sampling("candidate count must be at least 1".into()));
        }
        if (self.num_entities as usize) <= k {
            return Err(Error::Sampling(format!(
                "candidate count {k} must be below the entity count {}",
                self.num_entities
            )));
        }
        let mut seen = HashSet::with_capacity(k);
        let mut candidates = Vec::with_capacity(k);
        let mut slots = Vec::with_capacity(k);
        let max_attempts = 20 * k + 200;
        let mut attempts = 0;
        while candidates.len() < k && attempts < max_attempts {
            attempts += 1;
            let slot = self.choose_slot(g, rng);
            let e = self.other_entity(slot_entity(g, slot), rng);
            let q = corrupt(g, slot, e);
            if self.acceptable(g, &q, &seen) {
                seen.insert(q);
                candidates.push(q);
                slots.push(slot);
            }
        }
        if candidates.len() < k {
            // Rejection sampling stalled: enumerate what is left.
            let mut rest: Vec<(Quadruple, Slot)> = [Slot::Head, Slot::Tail]
                .into_iter()
                .flat_map(|slot| (0..self.num_entities).map(move |e| (corrupt(g, slot, e), slot)))
                .filter(|(q, _)| self.acceptable(g, q, &seen))
                .collect();
            rest.shuffle(rng);
            for (q, slot) in rest.into_iter().take(k - candidates.len()) {
                candidates.push(q);
                slots.push(slot);
            }
        }
        if candidates.len() < k {
            return Err(Error::CandidateShortfall {
                requested: k,
                achieved: candidates.len(),
            });
        }
        Ok(CandidateSet {
            source: *g,
            candidates,
            slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(num_entities: usize, train: Vec<Quadruple>) -> TkgDataset {
        TkgDataset::from_indexed(num_entities, 2, 4, train, vec![], vec![]).unwrap()
    }

    #[test]
    fn two_entity_tail_corruption_is_forced() {
        let ds = tiny(2, vec![Quadruple::new(0, 0, 0, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig { bern: false, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let (q, slot) = s.sample_random(&Quadruple::new(0, 0, 0, 0), &mut rng).unwrap();
            match slot {
                Slot::Tail => assert_eq!(q, Quadruple::new(0, 0, 1, 0)),
                Slot::Head => assert_eq!(q, Quadruple::new(1, 0, 0, 0)),
            }
        }
    }

    #[test]
    fn single_entity_vocab_is_sampling_error() {
        let ds = tiny(1, vec![Quadruple::new(0, 0, 0, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            s.sample_random(&Quadruple::new(0, 0, 0, 0), &mut rng),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn time_aware_forced_replacement() {
        // snapshot 2 only has entities {3, 5}; window [1, 2] and t=1 is empty
        let ds = tiny(8, vec![Quadruple::new(3, 0, 5, 2), Quadruple::new(0, 1, 1, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig { bern: false, window: 1, filter_known: false });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Quadruple::new(3, 0, 5, 2);
        for _ in 0..100 {
            let (q, slot) = s.sample_time_aware(&g, &mut rng).unwrap();
            match slot {
                Slot::Head => assert_eq!(q.subject, 5),
                Slot::Tail => assert_eq!(q.object, 3),
            }
        }
    }

    #[test]
    fn time_aware_falls_back_on_empty_window() {
        let ds = tiny(8, vec![Quadruple::new(3, 0, 5, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig { bern: false, window: 0, filter_known: false });
        assert!(s.window_entities(3).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Quadruple::new(1, 0, 2, 3);
        let (q, _) = s.sample_time_aware(&g, &mut rng).unwrap();
        assert_ne!(q, g);
        assert_eq!((q.predicate, q.time), (0, 3));
    }

    #[test]
    fn single_candidate_on_two_entities() {
        let ds = tiny(2, vec![Quadruple::new(0, 0, 0, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig { bern: false, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = s.build_candidates(&Quadruple::new(0, 0, 0, 0), 1, &mut rng).unwrap();
        assert_eq!(set.len(), 1);
        assert!(
            set.candidates[0] == Quadruple::new(1, 0, 0, 0)
                || set.candidates[0] == Quadruple::new(0, 0, 1, 0)
        );
    }

    #[test]
    fn filtering_can_exhaust_candidates() {
        // Closed world: every corruption of (0,0,0,0) over {0,1,2} is a fact.
        let mut train = Vec::new();
        for e in 0..3 {
            train.push(Quadruple::new(e, 0, 0, 0));
            train.push(Quadruple::new(0, 0, e, 0));
        }
        let ds = tiny(3, train);
        let s = NegativeSampler::new(&ds, SamplerConfig { bern: false, window: 1, filter_known: true });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            s.build_candidates(&Quadruple::new(0, 0, 0, 0), 2, &mut rng),
            Err(Error::CandidateShortfall { requested: 2, achieved: 0 })
        ));
    }

    #[test]
    fn candidate_count_must_be_below_vocab() {
        let ds = tiny(4, vec![Quadruple::new(0, 0, 1, 0)]);
        let s = NegativeSampler::new(&ds, SamplerConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Quadruple::new(0, 0, 1, 0);
        assert!(s.build_candidates(&g, 0, &mut rng).is_err());
        assert!(s.build_candidates(&g, 4, &mut rng).is_err());
        assert_eq!(s.build_candidates(&g, 3, &mut rng).unwrap().len(), 3);
    }
}
