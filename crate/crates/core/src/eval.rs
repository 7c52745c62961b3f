//! Link-prediction ranking: MRR and Hits@{1,3,10} averaged over object
//! queries `(s, p, ?, t)` and subject queries `(?, p, o, t)`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Quadruple, Split, TkgDataset};
use crate::error::{Error, Result};
use crate::models::ScoreModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Raw,
    /// Other entities known to be true for the same `(s, p, t)` (or
    /// `(p, o, t)`) are removed before ranking.
    TimeAwareFiltered,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Raw => "raw",
            Protocol::TimeAwareFiltered => "time-aware-filtered",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Protocol::Raw),
            "time-aware-filtered" | "filtered" => Ok(Protocol::TimeAwareFiltered),
            other => Err(Error::Config(format!("unknown ranking protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(s, p, ?, t)`
    Object,
    /// `(?, p, o, t)`
    Subject,
}

/// Known true answers per query, over a set of facts.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    objects: HashMap<(u32, u32, u32), Vec<u32>>,
    subjects: HashMap<(u32, u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a Quadruple>) -> Self {
        let mut idx = Self::default();
        for q in facts {
            idx.objects
                .entry((q.subject, q.predicate, q.time))
                .or_default()
                .push(q.object);
            idx.subjects
                .entry((q.object, q.predicate, q.time))
                .or_default()
                .push(q.subject);
        }
        for v in idx.objects.values_mut().chain(idx.subjects.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        idx
    }

    /// Index over every split of `dataset`.
    pub fn from_dataset(dataset: &TkgDataset) -> Self {
        Self::from_facts(Split::ALL.iter().flat_map(|&s| dataset.split(s)))
    }

    pub fn known(&self, q: &Quadruple, direction: Direction) -> &[u32] {
        let hit = match direction {
            Direction::Object => self.objects.get(&(q.subject, q.predicate, q.time)),
            Direction::Subject => self.subjects.get(&(q.object, q.predicate, q.time)),
        };
        hit.map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Mean-tie rank of `target`: `1 + #{strictly higher} + #{tied others} / 2`,
/// skipping entries in `excluded` (other than the target itself).
pub fn rank_from_scores(scores: &[f64], target: usize, excluded: &[u32]) -> f64 {
    let t = scores[target];
    let mut higher = 0usize;
    let mut ties = 0usize;
    let mut excl = excluded.iter().peekable();
    for (j, &s) in scores.iter().enumerate() {
        while excl.peek().is_some_and(|&&e| (e as usize) < j) {
            excl.next();
        }
        if j == target || excl.peek().is_some_and(|&&e| e as usize == j) {
            continue;
        }
        if s > t {
            higher += 1;
        } else if s == t {
            ties += 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

/// Rank of the true entity of `q` in the given direction. `filter` is only
/// consulted under [`Protocol::TimeAwareFiltered`]; its lists must be sorted.
pub fn rank_query(
    model: &ScoreModel,
    q: &Quadruple,
    direction: Direction,
    protocol: Protocol,
    filter: &FilterIndex,
) -> f64 {
    let (scores, target) = match direction {
        Direction::Object => (model.object_plausibilities(q.subject, q.predicate, q.time), q.object),
        Direction::Subject => (model.subject_plausibilities(q.predicate, q.object, q.time), q.subject),
    };
    let excluded = match protocol {
        Protocol::Raw => &[][..],
        Protocol::TimeAwareFiltered => filter.known(q, direction),
    };
    rank_from_scores(&scores, target as usize, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    /// Number of ranked queries (two per fact).
    pub queries: usize,
    pub protocol: Protocol,
}

impl EvalReport {
    /// Aggregates `(object rank, subject rank)` pairs.
    pub fn from_ranks(ranks: &[(f64, f64)], protocol: Protocol) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Eval("cannot evaluate an empty quadruple set".into()));
        }
        let mut rr = 0.0;
        let mut hits = [0usize; 3];
        for &(ro, rs) in ranks {
            for r in [ro, rs] {
                rr += 1.0 / r;
                for (h, k) in hits.iter_mut().zip([1.0, 3.0, 10.0]) {
                    if r <= k {
                        *h += 1;
                    }
                }
            }
        }
        let n = 2.0 * ranks.len() as f64;
        Ok(Self {
            mrr: rr / n,
            hits1: hits[0] as f64 / n,
            hits3: hits[1] as f64 / n,
            hits10: hits[2] as f64 / n,
            queries: 2 * ranks.len(),
            protocol,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MRR {:.4}  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}  ({} queries, {})",
            self.mrr, self.hits1, self.hits3, self.hits10, self.queries, self.protocol
        )
    }
}

/// Per-fact `(object rank, subject rank)`, in input order. Queries are
/// scored in parallel on the current rayon pool.
pub fn rank_all(
    model: &ScoreModel,
    quads: &[Quadruple],
    protocol: Protocol,
    filter: &FilterIndex,
) -> Vec<(f64, f64)> {
    quads
        .par_iter()
        .map(|q| {
            (
                rank_query(model, q, Direction::Object, protocol, filter),
                rank_query(model, q, Direction::Subject, protocol, filter),
            )
        })
        .collect()
}

pub fn evaluate(
    model: &ScoreModel,
    quads: &[Quadruple],
    protocol: Protocol,
    filter: &FilterIndex,
) -> Result<EvalReport> {
    if quads.is_empty() {
        return Err(Error::Eval("cannot evaluate an empty quadruple set".into()));
    }
    for q in quads {
        model.energy(q)?;
    }
    EvalReport::from_ranks(&rank_all(model, quads, protocol, filter), protocol)
}
