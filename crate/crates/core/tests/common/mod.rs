//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use tkgr_forge::data::{Quadruple, TkgDataset};
use tkgr_forge::eval::Protocol;
use tkgr_forge::models::{energy_from_rows, ModelDims, ModelKind, ScoreModel, SparseGrad};
use tkgr_forge::ttt::LstmPredictor;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-3;
/// Below this magnitude both sides count as zero and are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Relative error with an absolute floor for near-zero components.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < FD_FLOOR {
        (analytic - numeric).abs() / FD_FLOOR
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Dense f64 copy of a model's tensors.
pub fn dense_tables(model: &ScoreModel) -> Vec<Vec<Vec<f64>>> {
    model
        .store()
        .tensors()
        .iter()
        .map(|t| (0..t.rows()).map(|r| t.row(r).iter().map(|&x| x as f64).collect()).collect())
        .collect()
}

pub fn energy_from_tables(model: &ScoreModel, tables: &[Vec<Vec<f64>>], q: &Quadruple) -> f64 {
    let rows = model.slot_rows(q);
    let slots: Vec<&[f64]> = rows.iter().map(|&(t, r)| tables[t][r].as_slice()).collect();
    energy_from_rows(model.kind(), q.time as f64, &slots)
}

/// Smallest |e_s + r + τ − e_o| coordinate; central differences are only
/// valid away from the L1 kinks.
pub fn translate_kink_distance(tables: &[Vec<Vec<f64>>], q: &Quadruple) -> f64 {
    let (s, p, o, t) = (q.subject as usize, q.predicate as usize, q.object as usize, q.time as usize);
    (0..tables[0][0].len())
        .map(|k| (tables[0][s][k] + tables[1][p][k] + tables[2][t][k] - tables[0][o][k]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Worst relative error between the model's sparse energy gradient and
/// central differences over every parameter the quadruple touches.
pub fn model_gradient_error(model: &ScoreModel, q: &Quadruple) -> f64 {
    let grad = model.energy_gradient(q).unwrap();
    let mut tables = dense_tables(model);
    let mut touched: Vec<(usize, usize)> = model.slot_rows(q);
    touched.sort_unstable();
    touched.dedup();
    let mut worst: f64 = 0.0;
    for (t, r) in touched {
        for k in 0..tables[t][r].len() {
            let x = tables[t][r][k];
            tables[t][r][k] = x + FD_STEP;
            let up = energy_from_tables(model, &tables, q);
            tables[t][r][k] = x - FD_STEP;
            let down = energy_from_tables(model, &tables, q);
            tables[t][r][k] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grad.get(t, r).map_or(0.0, |g| g[k]);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

/// Random model and in-vocabulary quadruple; translate draws are resampled
/// until every coordinate is at least `10 · step` from a kink.
pub fn random_gradient_case<R: Rng>(kind: ModelKind, rng: &mut R) -> (ScoreModel, Quadruple) {
    loop {
        let dims = ModelDims {
            num_entities: rng.gen_range(2..7),
            num_relations: rng.gen_range(1..4),
            num_timestamps: rng.gen_range(1..9),
            dim: rng.gen_range(2..9),
        };
        let model = ScoreModel::init(kind, dims, rng.gen()).unwrap();
        let q = Quadruple::new(
            rng.gen_range(0..dims.num_entities as u32),
            rng.gen_range(0..dims.num_relations as u32),
            rng.gen_range(0..dims.num_entities as u32),
            rng.gen_range(0..dims.num_timestamps as u32),
        );
        if kind == ModelKind::TranslateTime && translate_kink_distance(&dense_tables(&model), &q) < 10.0 * FD_STEP {
            continue;
        }
        return (model, q);
    }
}

/// Random probability vector.
pub fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Worst relative error of the LSTM's BPTT gradient against central
/// differences over all parameters.
pub fn lstm_gradient_error(predictor: &LstmPredictor, window: &[Vec<f64>], target: &[f64]) -> f64 {
    let w: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
    let mut grad = vec![0.0; predictor.num_params()];
    predictor.loss_and_gradient(&w, target, &mut grad).unwrap();
    let mut p = predictor.clone();
    let mut worst: f64 = 0.0;
    for i in 0..p.params.len() {
        let x = p.params[i];
        p.params[i] = x + FD_STEP;
        let up = p.loss(&w, target).unwrap();
        p.params[i] = x - FD_STEP;
        let down = p.loss(&w, target).unwrap();
        p.params[i] = x;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Rank by sorting: the target's rank is the mean 1-based position of its
/// tie group among the non-excluded candidates.
pub fn brute_rank(scores: &[f64], target: usize, excluded: &[usize]) -> f64 {
    let mut kept: Vec<f64> = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| *j == target || !excluded.contains(j))
        .map(|(_, &s)| s)
        .collect();
    kept.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let t = scores[target];
    let first = kept.iter().position(|&s| s == t).unwrap();
    let last = kept.iter().rposition(|&s| s == t).unwrap();
    (first + 1 + last + 1) as f64 / 2.0
}

/// Object- and subject-direction ranks of every query by exhaustive scoring.
/// The excluded sets are rebuilt by scanning `all_facts`.
pub fn brute_ranks(model: &ScoreModel, queries: &[Quadruple], all_facts: &[Quadruple], protocol: Protocol) -> Vec<(f64, f64)> {
    let n = model.dims().num_entities;
    queries
        .iter()
        .map(|q| {
            let obj: Vec<f64> = (0..n as u32)
                .map(|e| -model.energy(&Quadruple::new(q.subject, q.predicate, e, q.time)).unwrap())
                .collect();
            let subj: Vec<f64> = (0..n as u32)
                .map(|e| -model.energy(&Quadruple::new(e, q.predicate, q.object, q.time)).unwrap())
                .collect();
            let (ex_o, ex_s): (Vec<usize>, Vec<usize>) = match protocol {
                Protocol::Raw => (vec![], vec![]),
                Protocol::TimeAwareFiltered => (
                    all_facts
                        .iter()
                        .filter(|f| f.subject == q.subject && f.predicate == q.predicate && f.time == q.time)
                        .map(|f| f.object as usize)
                        .collect(),
                    all_facts
                        .iter()
                        .filter(|f| f.object == q.object && f.predicate == q.predicate && f.time == q.time)
                        .map(|f| f.subject as usize)
                        .collect(),
                ),
            };
            (
                brute_rank(&obj, q.object as usize, &ex_o),
                brute_rank(&subj, q.subject as usize, &ex_s),
            )
        })
        .collect()
}

/// MRR and Hits@{1,3,10} from rank pairs, summed in input order.
pub fn brute_metrics(ranks: &[(f64, f64)]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for &(a, b) in ranks {
        for r in [a, b] {
            acc[0] += 1.0 / r;
            acc[1] += (r <= 1.0) as u8 as f64;
            acc[2] += (r <= 3.0) as u8 as f64;
            acc[3] += (r <= 10.0) as u8 as f64;
        }
    }
    let n = 2.0 * ranks.len() as f64;
    acc.map(|x| x / n)
}

/// `U_a` by direct pair counting.
pub fn pair_count_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 })
        .sum()
}

/// Two-sided permutation p-value: every relabelling of the pooled values
/// into groups of the original sizes, counting `|U − mean| ≥ observed`.
pub fn permutation_u_p_value(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let observed = (pair_count_u(a, b) - mean).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            for (i, &x) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    ga.push(x)
                } else {
                    gb.push(x)
                }
            }
            (ga, gb)
        };
        total += 1;
        if (pair_count_u(&ga, &gb) - mean).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Random dataset over `entities` with repeated `(s, p, t)` keys so the
/// filtered protocol has something to remove.
pub fn random_dataset<R: Rng>(entities: usize, relations: usize, timestamps: usize, facts: usize, rng: &mut R) -> TkgDataset {
    let mut all = Vec::with_capacity(facts);
    while all.len() < facts {
        let q = Quadruple::new(
            rng.gen_range(0..entities as u32),
            rng.gen_range(0..relations as u32),
            rng.gen_range(0..entities as u32),
            rng.gen_range(0..timestamps as u32),
        );
        if !all.contains(&q) {
            all.push(q);
        }
    }
    let test = all.split_off(facts * 3 / 5);
    let valid = test[..test.len() / 4].to_vec();
    let test = test[test.len() / 4..].to_vec();
    TkgDataset::from_indexed(entities, relations, timestamps, all, valid, test).unwrap()
}

/// Sparse gradient as an ordered map, for norm comparisons.
pub fn dense_grad(g: &SparseGrad) -> BTreeMap<(usize, usize), Vec<f64>> {
    g.iter().map(|(k, v)| (k, v.to_vec())).collect()
}

/// `‖a − b‖ / ‖b‖` over the union of rows.
pub fn relative_distance(a: &SparseGrad, b: &SparseGrad) -> f64 {
    let (da, db) = (dense_grad(a), dense_grad(b));
    let mut keys: Vec<_> = da.keys().chain(db.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let (mut diff, mut norm) = (0.0, 0.0);
    for k in keys {
        let dim = da.get(&k).or(db.get(&k)).unwrap().len();
        for i in 0..dim {
            let x = da.get(&k).map_or(0.0, |v| v[i]);
            let y = db.get(&k).map_or(0.0, |v| v[i]);
            diff += (x - y) * (x - y);
            norm += y * y;
        }
    }
    (diff / norm).sqrt()
}
