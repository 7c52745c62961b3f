//! Row-sparse gradient descent for [`ParameterStore`]s.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ParameterStore, SparseGrad};

/// Learning rates the trainer grid-searches over.
pub const LEARNING_RATE_GRID: [f64; 4] = [0.0001, 0.0005, 0.001, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Minimizes: `θ ← θ − lr · g` for SGD, lazily-updated Adam moments
/// otherwise (only rows present in the gradient move).
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    moments: HashMap<(usize, usize), (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Applies one descent step. Rejects non-finite gradients before touching
    /// the store and non-finite results after.
    pub fn apply(&mut self, store: &mut ParameterStore, grad: &SparseGrad) -> Result<()> {
        if !grad.all_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for ((tensor, row), g) in grad.iter() {
            match self.kind {
                OptimizerKind::Sgd => {
                    let dst = store.tensor_mut(tensor).row_mut(row);
                    for (v, gk) in dst.iter_mut().zip(g) {
                        *v = (*v as f64 - self.lr * gk) as f32;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, s) = self
                        .moments
                        .entry((tensor, row))
                        .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
                    let dst = store.tensor_mut(tensor).row_mut(row);
                    for k in 0..g.len() {
                        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                        s[k] = b2 * s[k] + (1.0 - b2) * g[k] * g[k];
                        let mh = m[k] / bias1;
                        let sh = s[k] / bias2;
                        dst[k] = (dst[k] as f64 - self.lr * mh / (sh.sqrt() + self.eps)) as f32;
                    }
                }
            }
        }
        for ((tensor, row), _) in grad.iter() {
            if store.tensor(tensor).row(row).iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite parameter in tensor {tensor} row {row}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelDims, ModelKind, ENTITY};

    fn store() -> ParameterStore {
        ParameterStore::init(
            ModelKind::TrilinearTime,
            ModelDims {
                num_entities: 3,
                num_relations: 1,
                num_timestamps: 1,
                dim: 2,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn sgd_step_is_lr_times_gradient() {
        let mut s = store();
        let before = s.tensor(ENTITY).row(1).to_vec();
        let mut g = SparseGrad::new();
        g.add_row(ENTITY, 1, &[1.0, -2.0], 1.0);
        Optimizer::sgd(0.5).apply(&mut s, &g).unwrap();
        let after = s.tensor(ENTITY).row(1);
        assert!((after[0] as f64 - (before[0] as f64 - 0.5)).abs() < 1e-6);
        assert!((after[1] as f64 - (before[1] as f64 + 1.0)).abs() < 1e-6);
        assert_eq!(s.tensor(ENTITY).row(0), store().tensor(ENTITY).row(0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = store();
        let before = s.tensor(ENTITY).row(2).to_vec();
        let mut g = SparseGrad::new();
        g.add_row(ENTITY, 2, &[3.0, -0.01], 1.0);
        Optimizer::adam(0.01).apply(&mut s, &g).unwrap();
        let after = s.tensor(ENTITY).row(2);
        assert!((before[0] - after[0] - 0.01).abs() < 1e-6);
        assert!((after[1] - before[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_leaves_store_untouched() {
        let mut s = store();
        let snapshot = s.clone();
        let mut g = SparseGrad::new();
        g.add_row(ENTITY, 0, &[f64::NAN, 0.0], 1.0);
        assert!(matches!(
            Optimizer::sgd(0.1).apply(&mut s, &g),
            Err(Error::Numeric(_))
        ));
        assert_eq!(s, snapshot);
    }
}
