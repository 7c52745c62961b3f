//! Temporal embedding score models.
//!
//! Every model exposes an energy `E(s, p, o, t)` where lower means more
//! plausible, plus its hand-derived gradient restricted to the parameter
//! rows the quadruple touches. Parameters live in a [`ParameterStore`] of
//! named `f32` tensors; all arithmetic accumulates in `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Quadruple;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `‖e_s + r_p + τ_t − e_o‖₁`
    TranslateTime,
    /// `−Σ e_s ⊙ (r_p ⊙ τ_t) ⊙ e_o`
    TrilinearTime,
    /// Trilinear score over entity vectors `a + m ⊙ sin(ω t + φ)`.
    Diachronic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::TranslateTime,
        ModelKind::TrilinearTime,
        ModelKind::Diachronic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TranslateTime => "translate-time",
            ModelKind::TrilinearTime => "trilinear-time",
            ModelKind::Diachronic => "diachronic",
        }
    }

    /// Tensor names in store order.
    pub fn tensor_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::TranslateTime | ModelKind::TrilinearTime => &["entity", "relation", "time"],
            ModelKind::Diachronic => &[
                "entity",
                "relation",
                "entity_amplitude",
                "entity_frequency",
                "entity_phase",
            ],
        }
    }

    /// Tensors holding per-entity parameters.
    pub fn entity_tensors(self) -> &'static [usize] {
        match self {
            ModelKind::TranslateTime | ModelKind::TrilinearTime => &[ENTITY],
            ModelKind::Diachronic => &[ENTITY, 2, 3, 4],
        }
    }

    fn slot_count(self) -> usize {
        match self {
            ModelKind::TranslateTime | ModelKind::TrilinearTime => 4,
            ModelKind::Diachronic => 9,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translate-time" | "ttranse" => Ok(ModelKind::TranslateTime),
            "trilinear-time" | "tadistmult" => Ok(ModelKind::TrilinearTime),
            "diachronic" | "de-simple" => Ok(ModelKind::Diachronic),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

pub const ENTITY: usize = 0;
pub const RELATION: usize = 1;
pub const TIME: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            dims: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.dims.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f32] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }
}

/// Shape of a model: vocabulary sizes and embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_timestamps: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: ModelKind,
    dims: ModelDims,
    seed: u64,
    tensors: usize,
    hyperparameters: BTreeMap<String, String>,
}

/// Named dense tensors for one score model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    kind: ModelKind,
    dims: ModelDims,
    seed: u64,
    tensors: Vec<Tensor>,
    pub hyperparameters: BTreeMap<String, String>,
}

impl ParameterStore {
    /// Uniform init in `[-6/√d, 6/√d]`, then every row projected into the
    /// unit ball.
    pub fn init(kind: ModelKind, dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if dims.num_entities == 0 || dims.num_relations == 0 || dims.num_timestamps == 0 {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 6.0 / (dims.dim as f64).sqrt();
        let tensors = kind
            .tensor_names()
            .iter()
            .map(|&name| {
                let rows = match name {
                    "relation" => dims.num_relations,
                    "time" => dims.num_timestamps,
                    _ => dims.num_entities,
                };
                let mut t = Tensor::zeros(name, rows, dims.dim);
                for v in &mut t.data {
                    *v = rng.gen_range(-bound..=bound) as f32;
                }
                t
            })
            .collect();
        let mut store = Self {
            kind,
            dims,
            seed,
            tensors,
            hyperparameters: BTreeMap::new(),
        };
        for tensor in 0..store.tensors.len() {
            let rows = store.tensors[tensor].rows();
            store.renormalize_rows(tensor, 0..rows);
        }
        Ok(store)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Scales each listed row of `tensor` down to L2 norm ≤ 1.
    pub fn renormalize_rows(&mut self, tensor: usize, rows: impl IntoIterator<Item = usize>) {
        let t = &mut self.tensors[tensor];
        for r in rows {
            let row = t.row_mut(r);
            let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 1.0 {
                for v in row.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let meta = CheckpointMeta {
            kind: self.kind,
            dims: self.dims,
            seed: self.seed,
            tensors: self.tensors.len(),
            hyperparameters: self.hyperparameters.clone(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        if take(&mut cur, 4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic, expected TKGM".into()));
        }
        let version = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = read_u32(&mut cur)? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(take(&mut cur, meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let expected = meta.kind.tensor_names();
        if meta.tensors != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors recorded, {} expected for {}",
                meta.tensors,
                expected.len(),
                meta.kind
            )));
        }
        let mut tensors = Vec::with_capacity(meta.tensors);
        for &name in expected {
            let name_len = read_u32(&mut cur)? as usize;
            let got = std::str::from_utf8(take(&mut cur, name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if got != name {
                return Err(Error::Checkpoint(format!("expected tensor `{name}`, found `{got}`")));
            }
            let rank = take(&mut cur, 1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());
                dims.push(usize::try_from(d).map_err(|_| Error::Checkpoint("dim overflow".into()))?);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint("element count overflow".into()))?;
            let payload = take(&mut cur, count.checked_mul(4).ok_or_else(|| {
                Error::Checkpoint("element count overflow".into())
            })?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor {
                name: name.to_string(),
                dims,
                data,
            });
        }
        if !cur.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", cur.len())));
        }
        let store = Self {
            kind: meta.kind,
            dims: meta.dims,
            seed: meta.seed,
            tensors,
            hyperparameters: meta.hyperparameters,
        };
        store.check_shapes()?;
        Ok(store)
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.dims;
        for t in &self.tensors {
            let rows = match t.name.as_str() {
                "relation" => d.num_relations,
                "time" => d.num_timestamps,
                _ => d.num_entities,
            };
            if t.dims != [rows, d.dim] {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected [{rows}, {}]",
                    t.name, t.dims, d.dim
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TKGM";
pub const CHECKPOINT_VERSION: u16 = 1;

fn take<'a>(cur: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::Checkpoint(format!(
            "truncated: needed {n} bytes, {} left",
            cur.len()
        )));
    }
    let (a, b) = cur.split_at(n);
    *cur = b;
    Ok(a)
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(cur, 4)?.try_into().unwrap()))
}

/// Gradient over parameter rows, keyed by `(tensor, row)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    rows: BTreeMap<(usize, usize), Vec<f64>>,
}

impl SparseGrad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_row(&mut self, tensor: usize, row: usize, values: &[f64], scale: f64) {
        let entry = self
            .rows
            .entry((tensor, row))
            .or_insert_with(|| vec![0.0; values.len()]);
        for (e, v) in entry.iter_mut().zip(values) {
            *e += scale * v;
        }
    }

    pub fn add_scaled(&mut self, other: &SparseGrad, scale: f64) {
        for (&(t, r), v) in &other.rows {
            self.add_row(t, r, v, scale);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.rows.values_mut() {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn get(&self, tensor: usize, row: usize) -> Option<&[f64]> {
        self.rows.get(&(tensor, row)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.rows.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps only rows of the given tensors.
    pub fn retain_tensors(&mut self, tensors: &[usize]) {
        self.rows.retain(|(t, _), _| tensors.contains(t));
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().all(|v| v.iter().all(|&x| x == 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.rows.values().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

const MAX_SLOTS: usize = 9;

/// Energy of one quadruple given its parameter rows.
///
/// Slot layout: `[e_s, r_p, τ_t, e_o]` for translate/trilinear kinds and
/// `[a_s, m_s, ω_s, φ_s, r_p, a_o, m_o, ω_o, φ_o]` for the diachronic kind.
/// `time` is the timestamp index, used only by the diachronic kind.
pub fn energy_from_rows<T: Copy + Into<f64>>(kind: ModelKind, time: f64, slots: &[&[T]]) -> f64 {
    let f = |x: T| -> f64 { x.into() };
    match kind {
        ModelKind::TranslateTime => {
            let [s, r, tau, o] = [slots[0], slots[1], slots[2], slots[3]];
            (0..s.len())
                .map(|k| (f(s[k]) + f(r[k]) + f(tau[k]) - f(o[k])).abs())
                .sum()
        }
        ModelKind::TrilinearTime => {
            let [s, r, tau, o] = [slots[0], slots[1], slots[2], slots[3]];
            -(0..s.len())
                .map(|k| f(s[k]) * (f(r[k]) * f(tau[k])) * f(o[k]))
                .sum::<f64>()
        }
        ModelKind::Diachronic => {
            let r = slots[4];
            -(0..r.len())
                .map(|k| {
                    let hs = f(slots[0][k]) + f(slots[1][k]) * (f(slots[2][k]) * time + f(slots[3][k])).sin();
                    let ho = f(slots[5][k]) + f(slots[6][k]) * (f(slots[7][k]) * time + f(slots[8][k])).sin();
                    hs * f(r[k]) * ho
                })
                .sum::<f64>()
        }
    }
}

/// Analytic gradient of [`energy_from_rows`], one vector per slot. The L1
/// subgradient at an exact zero is 0.
pub fn gradient_from_rows<T: Copy + Into<f64>>(
    kind: ModelKind,
    time: f64,
    slots: &[&[T]],
) -> Vec<Vec<f64>> {
    let f = |x: T| -> f64 { x.into() };
    let d = slots[0].len();
    let mut g = vec![vec![0.0; d]; kind.slot_count()];
    match kind {
        ModelKind::TranslateTime => {
            let [s, r, tau, o] = [slots[0], slots[1], slots[2], slots[3]];
            for k in 0..d {
                let x = f(s[k]) + f(r[k]) + f(tau[k]) - f(o[k]);
                let sign = if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g[0][k] = sign;
                g[1][k] = sign;
                g[2][k] = sign;
                g[3][k] = -sign;
            }
        }
        ModelKind::TrilinearTime => {
            let [s, r, tau, o] = [slots[0], slots[1], slots[2], slots[3]];
            for k in 0..d {
                let (s, r, tau, o) = (f(s[k]), f(r[k]), f(tau[k]), f(o[k]));
                g[0][k] = -r * tau * o;
                g[1][k] = -s * tau * o;
                g[2][k] = -s * r * o;
                g[3][k] = -s * r * tau;
            }
        }
        ModelKind::Diachronic => {
            for k in 0..d {
                let r = f(slots[4][k]);
                let (a_s, m_s, w_s, p_s) = (f(slots[0][k]), f(slots[1][k]), f(slots[2][k]), f(slots[3][k]));
                let (a_o, m_o, w_o, p_o) = (f(slots[5][k]), f(slots[6][k]), f(slots[7][k]), f(slots[8][k]));
                let (sin_s, cos_s) = (w_s * time + p_s).sin_cos();
                let (sin_o, cos_o) = (w_o * time + p_o).sin_cos();
                let hs = a_s + m_s * sin_s;
                let ho = a_o + m_o * sin_o;
                // dE/dh_s and dE/dh_o
                let dhs = -r * ho;
                let dho = -r * hs;
                g[0][k] = dhs;
                g[1][k] = dhs * sin_s;
                g[2][k] = dhs * m_s * cos_s * time;
                g[3][k] = dhs * m_s * cos_s;
                g[4][k] = -hs * ho;
                g[5][k] = dho;
                g[6][k] = dho * sin_o;
                g[7][k] = dho * m_o * cos_o * time;
                g[8][k] = dho * m_o * cos_o;
            }
        }
    }
    g
}

/// A score model: a [`ParameterStore`] plus its energy function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    store: ParameterStore,
}

impl ScoreModel {
    pub fn new(store: ParameterStore) -> Self {
        Self { store }
    }

    pub fn init(kind: ModelKind, dims: ModelDims, seed: u64) -> Result<Self> {
        ParameterStore::init(kind, dims, seed).map(Self::new)
    }

    pub fn kind(&self) -> ModelKind {
        self.store.kind
    }

    pub fn dims(&self) -> ModelDims {
        self.store.dims
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParameterStore {
        self.store
    }

    fn check(&self, q: &Quadruple) -> Result<()> {
        let d = self.store.dims;
        let checks = [
            ("entity", q.subject as usize, d.num_entities),
            ("relation", q.predicate as usize, d.num_relations),
            ("entity", q.object as usize, d.num_entities),
            ("timestamp", q.time as usize, d.num_timestamps),
        ];
        for (what, index, size) in checks {
            if index >= size {
                return Err(Error::Index { what, index, size });
            }
        }
        Ok(())
    }

    /// `(tensor, row)` for each slot of [`energy_from_rows`].
    pub fn slot_rows(&self, q: &Quadruple) -> Vec<(usize, usize)> {
        let (s, p, o, t) = (
            q.subject as usize,
            q.predicate as usize,
            q.object as usize,
            q.time as usize,
        );
        match self.kind() {
            ModelKind::TranslateTime | ModelKind::TrilinearTime => {
                vec![(ENTITY, s), (RELATION, p), (TIME, t), (ENTITY, o)]
            }
            ModelKind::Diachronic => vec![
                (ENTITY, s),
                (2, s),
                (3, s),
                (4, s),
                (RELATION, p),
                (ENTITY, o),
                (2, o),
                (3, o),
                (4, o),
            ],
        }
    }

    fn with_slots<R>(&self, q: &Quadruple, f: impl FnOnce(&[&[f32]]) -> R) -> R {
        let rows = self.slot_rows(q);
        let mut slots: [&[f32]; MAX_SLOTS] = [&[]; MAX_SLOTS];
        for (slot, &(t, r)) in slots.iter_mut().zip(&rows) {
            *slot = self.store.tensors[t].row(r);
        }
        f(&slots[..rows.len()])
    }

    /// Energy without bounds checking; `q` must be in vocabulary.
    pub fn energy_unchecked(&self, q: &Quadruple) -> f64 {
        self.with_slots(q, |slots| energy_from_rows(self.kind(), q.time as f64, slots))
    }

    pub fn energy(&self, q: &Quadruple) -> Result<f64> {
        self.check(q)?;
        Ok(self.energy_unchecked(q))
    }

    /// Plausibility = −energy.
    pub fn plausibility(&self, q: &Quadruple) -> Result<f64> {
        self.energy(q).map(|e| -e)
    }

    pub fn energy_gradient(&self, q: &Quadruple) -> Result<SparseGrad> {
        self.check(q)?;
        Ok(self.energy_gradient_unchecked(q))
    }

    pub fn energy_gradient_unchecked(&self, q: &Quadruple) -> SparseGrad {
        let per_slot = self.with_slots(q, |slots| {
            gradient_from_rows(self.kind(), q.time as f64, slots)
        });
        let mut grad = SparseGrad::new();
        for ((t, r), g) in self.slot_rows(q).into_iter().zip(&per_slot) {
            grad.add_row(t, r, g, 1.0);
        }
        grad
    }

    /// Adds `scale · Σ_j weights[j] ∇E(s, p, j, t)` to `grad`. Rows shared by
    /// every candidate are accumulated once.
    pub fn add_weighted_object_gradient(
        &self,
        s: u32,
        p: u32,
        t: u32,
        weights: &[f64],
        scale: f64,
        grad: &mut SparseGrad,
    ) {
        let base = Quadruple::new(s, p, 0, t);
        let rows = self.slot_rows(&base);
        let object_slot = |i: usize| match self.kind() {
            ModelKind::TranslateTime | ModelKind::TrilinearTime => i == 3,
            ModelKind::Diachronic => i >= 5,
        };
        let dim = self.dims().dim;
        let mut shared = vec![vec![0.0; dim]; rows.len()];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let q = Quadruple::new(s, p, j as u32, t);
            let per_slot = self.with_slots(&q, |slots| gradient_from_rows(self.kind(), t as f64, slots));
            for (i, g) in per_slot.iter().enumerate() {
                if object_slot(i) {
                    grad.add_row(rows[i].0, j, g, scale * w);
                } else {
                    for (a, b) in shared[i].iter_mut().zip(g) {
                        *a += w * b;
                    }
                }
            }
        }
        for (i, acc) in shared.iter().enumerate() {
            if !object_slot(i) {
                grad.add_row(rows[i].0, rows[i].1, acc, scale);
            }
        }
    }

    /// Plausibility of `(s, p, e, t)` for every entity `e`.
    pub fn object_plausibilities(&self, s: u32, p: u32, t: u32) -> Vec<f64> {
        (0..self.dims().num_entities as u32)
            .map(|o| -self.energy_unchecked(&Quadruple::new(s, p, o, t)))
            .collect()
    }

    /// Plausibility of `(e, p, o, t)` for every entity `e`.
    pub fn subject_plausibilities(&self, p: u32, o: u32, t: u32) -> Vec<f64> {
        (0..self.dims().num_entities as u32)
            .map(|s| -self.energy_unchecked(&Quadruple::new(s, p, o, t)))
            .collect()
    }

    /// Projects touched entity rows back into the unit ball; translate-time only.
    pub fn renormalize_touched(&mut self, grad: &SparseGrad) {
        if self.kind() != ModelKind::TranslateTime {
            return;
        }
        let rows: Vec<usize> = grad
            .iter()
            .filter(|((t, _), _)| *t == ENTITY)
            .map(|((_, r), _)| r)
            .collect();
        self.store.renormalize_rows(ENTITY, rows);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(d: usize) -> ModelDims {
        ModelDims {
            num_entities: 6,
            num_relations: 3,
            num_timestamps: 4,
            dim: d,
        }
    }

    fn set_row(m: &mut ScoreModel, tensor: usize, row: usize, values: &[f32]) {
        m.store_mut().tensor_mut(tensor).row_mut(row).copy_from_slice(values);
    }

    #[test]
    fn translate_identity_has_zero_energy() {
        let mut m = ScoreModel::init(ModelKind::TranslateTime, dims(2), 1).unwrap();
        set_row(&mut m, ENTITY, 0, &[0.25, -0.5]);
        set_row(&mut m, RELATION, 0, &[0.5, 0.25]);
        set_row(&mut m, TIME, 0, &[-0.25, 0.125]);
        set_row(&mut m, ENTITY, 1, &[0.5, -0.125]);
        assert_eq!(m.energy(&Quadruple::new(0, 0, 1, 0)).unwrap(), 0.0);
    }

    #[test]
    fn translate_hand_value() {
        let mut m = ScoreModel::init(ModelKind::TranslateTime, dims(2), 1).unwrap();
        set_row(&mut m, ENTITY, 0, &[1.0, 0.0]);
        set_row(&mut m, RELATION, 0, &[0.0, 1.0]);
        set_row(&mut m, TIME, 0, &[1.0, 1.0]);
        set_row(&mut m, ENTITY, 1, &[0.0, 0.0]);
        assert_eq!(m.energy(&Quadruple::new(0, 0, 1, 0)).unwrap(), 4.0);
    }

    #[test]
    fn trilinear_zero_factor_absorbs() {
        let mut m = ScoreModel::init(ModelKind::TrilinearTime, dims(4), 2).unwrap();
        set_row(&mut m, TIME, 3, &[0.0; 4]);
        assert_eq!(m.energy(&Quadruple::new(1, 2, 3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn trilinear_subject_gradient_is_product_of_others() {
        let m = ScoreModel::init(ModelKind::TrilinearTime, dims(5), 3).unwrap();
        let q = Quadruple::new(1, 2, 4, 3);
        let g = m.energy_gradient(&q).unwrap();
        let st = m.store();
        let expected: Vec<f64> = (0..5)
            .map(|k| {
                -(st.tensor(RELATION).row(2)[k] as f64)
                    * st.tensor(TIME).row(3)[k] as f64
                    * st.tensor(ENTITY).row(4)[k] as f64
            })
            .collect();
        let got = g.get(ENTITY, 1).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_touches_only_quadruple_rows() {
        for kind in ModelKind::ALL {
            let m = ScoreModel::init(kind, dims(4), 5).unwrap();
            let q = Quadruple::new(0, 1, 2, 3);
            let g = m.energy_gradient(&q).unwrap();
            for ((t, r), _) in g.iter() {
                let name = m.store().tensor(t).name.as_str();
                let ok = match name {
                    "relation" => r == 1,
                    "time" => r == 3,
                    _ => r == 0 || r == 2,
                };
                assert!(ok, "{kind}: unexpected row {name}[{r}]");
            }
        }
    }

    #[test]
    fn l1_subgradient_at_zero_is_zero() {
        let mut m = ScoreModel::init(ModelKind::TranslateTime, dims(2), 1).unwrap();
        set_row(&mut m, ENTITY, 0, &[0.5, 0.0]);
        set_row(&mut m, RELATION, 0, &[0.0, 0.0]);
        set_row(&mut m, TIME, 0, &[0.0, 0.0]);
        set_row(&mut m, ENTITY, 1, &[0.5, 1.0]);
        let g = m.energy_gradient(&Quadruple::new(0, 0, 1, 0)).unwrap();
        assert_eq!(g.get(RELATION, 0).unwrap(), &[0.0, -1.0]);
    }

    #[test]
    fn out_of_vocab_is_index_error() {
        let m = ScoreModel::init(ModelKind::Diachronic, dims(3), 1).unwrap();
        assert!(matches!(
            m.energy(&Quadruple::new(0, 0, 6, 0)),
            Err(Error::Index { what: "entity", .. })
        ));
        assert!(matches!(
            m.energy_gradient(&Quadruple::new(0, 0, 0, 4)),
            Err(Error::Index { what: "timestamp", .. })
        ));
    }

    #[test]
    fn init_is_deterministic_bounded_and_seed_sensitive() {
        let a = ParameterStore::init(ModelKind::TranslateTime, dims(8), 11).unwrap();
        let b = ParameterStore::init(ModelKind::TranslateTime, dims(8), 11).unwrap();
        let c = ParameterStore::init(ModelKind::TranslateTime, dims(8), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tensor(ENTITY).data, c.tensor(ENTITY).data);
        for t in [ENTITY, RELATION] {
            let tensor = a.tensor(t);
            for r in 0..tensor.rows() {
                let n: f64 = tensor.row(r).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                assert!(n <= 1.0 + 1e-6);
            }
        }
        let bound = (6.0 / 8f64.sqrt()) as f32;
        assert!(a.tensor(TIME).data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_dimension_is_config_error() {
        assert!(matches!(
            ParameterStore::init(ModelKind::TrilinearTime, dims(0), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        for kind in ModelKind::ALL {
            let mut store = ParameterStore::init(kind, dims(3), 9).unwrap();
            store.hyperparameters.insert("lr".into(), "0.001".into());
            let bytes = store.to_checkpoint_bytes().unwrap();
            let back = ParameterStore::from_checkpoint_bytes(&bytes).unwrap();
            assert_eq!(back, store);
            assert_eq!(back.to_checkpoint_bytes().unwrap(), bytes);

            let mut bad = bytes.clone();
            bad[1] = b'X';
            assert!(matches!(
                ParameterStore::from_checkpoint_bytes(&bad),
                Err(Error::Checkpoint(_))
            ));
            let mut bad = bytes.clone();
            bad[4] = 7;
            assert!(matches!(
                ParameterStore::from_checkpoint_bytes(&bad),
                Err(Error::Checkpoint(_))
            ));
            assert!(matches!(
                ParameterStore::from_checkpoint_bytes(&bytes[..bytes.len() - 2]),
                Err(Error::Checkpoint(_))
            ));
        }
    }

    #[test]
    fn plausibility_vectors_match_single_energies() {
        let m = ScoreModel::init(ModelKind::Diachronic, dims(4), 4).unwrap();
        let objs = m.object_plausibilities(1, 2, 3);
        let subs = m.subject_plausibilities(2, 5, 1);
        for e in 0..6u32 {
            assert_eq!(objs[e as usize], -m.energy(&Quadruple::new(1, 2, e, 3)).unwrap());
            assert_eq!(subs[e as usize], -m.energy(&Quadruple::new(e, 2, 5, 1)).unwrap());
        }
    }
}
