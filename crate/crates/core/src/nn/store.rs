//! Named parameters with paired gradient buffers and optimizer moments.

use super::tape::{Tape, Var};
use super::tensor::Tensor2;
use super::NnError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// First-order optimizer selection. Adaptive moments is the default; plain
/// gradient descent is available for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct ParamEntry {
    name: String,
    value: Tensor2,
    grad: Tensor2,
    m: Tensor2,
    v: Tensor2,
}

/// Parameter matrices addressed by name, with gradient buffers and
/// zero-initialized optimizer moments. Owned by exactly one training task.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn add_param(&mut self, name: &str, value: Tensor2) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        let (r, c) = (value.rows, value.cols);
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad: Tensor2::zeros(r, c),
            m: Tensor2::zeros(r, c),
            v: Tensor2::zeros(r, c),
        });
    }

    pub(crate) fn slot(&self, name: &str) -> Result<usize, NnError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub(crate) fn value_at(&self, slot: usize) -> &Tensor2 {
        &self.entries[slot].value
    }

    pub(crate) fn accumulate_grad(&mut self, slot: usize, g: &Tensor2) {
        self.entries[slot].grad.add_in_place(g);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2, NnError> {
        Ok(&self.entries[self.slot(name)?].value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor2, NnError> {
        Ok(&self.entries[self.slot(name)?].grad)
    }

    pub fn set(&mut self, name: &str, value: Tensor2) -> Result<(), NnError> {
        let slot = self.slot(name)?;
        let entry = &mut self.entries[slot];
        if !entry.value.same_shape(&value) {
            return Err(NnError::ShapeMismatch(format!(
                "parameter {name} is {}x{}",
                entry.value.rows, entry.value.cols
            )));
        }
        entry.value = value;
        Ok(())
    }

    /// Parameter names in insertion order.
    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// One optimizer step over every parameter; clears gradients and bumps
    /// the step counter.
    pub fn optimizer_step(&mut self, cfg: &OptimizerConfig) {
        let t = (self.step + 1) as f64;
        for e in &mut self.entries {
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (val, &g) in e.value.data_mut().iter_mut().zip(e.grad.data()) {
                        *val -= cfg.learning_rate * g;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - cfg.beta1.powf(t);
                    let bc2 = 1.0 - cfg.beta2.powf(t);
                    for i in 0..e.value.data().len() {
                        let g = e.grad.data()[i];
                        let m = cfg.beta1 * e.m.data()[i] + (1.0 - cfg.beta1) * g;
                        let v = cfg.beta2 * e.v.data()[i] + (1.0 - cfg.beta2) * g * g;
                        e.m.data_mut()[i] = m;
                        e.v.data_mut()[i] = v;
                        let m_hat = m / bc1;
                        let v_hat = v / bc2;
                        e.value.data_mut()[i] -=
                            cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
            e.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self.step += 1;
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }

    /// FNV-1a hash over every parameter's bit pattern, in name order. Used
    /// to verify frozen-inference purity.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut absorb = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for e in &self.entries {
            absorb(e.name.as_bytes());
            for &v in e.value.data() {
                absorb(&v.to_bits().to_le_bytes());
            }
        }
        hash
    }

    /// Name/value pairs for checkpointing.
    pub fn export(&self) -> Vec<(String, Tensor2)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.clone()))
            .collect()
    }
}

/// Central-difference gradient check: builds the loss with `loss_fn`, runs
/// backward, then compares every parameter entry against
/// `(f(p + h) - f(p - h)) / 2h`. Errors are scaled by
/// `max(1, |analytic|, |numeric|)`. Returns the maximum error seen.
pub fn grad_check<F>(store: &mut ParamStore, h: f64, mut loss_fn: F) -> Result<f64, NnError>
where
    F: FnMut(&ParamStore) -> Result<(Tape, Var), NnError>,
{
    store.zero_grads();
    let (mut tape, loss) = loss_fn(store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Tensor2> = store.entries.iter().map(|e| e.grad.clone()).collect();
    store.zero_grads();

    let mut max_err = 0.0f64;
    for slot in 0..store.entries.len() {
        let len = store.entries[slot].value.data().len();
        for i in 0..len {
            let orig = store.entries[slot].value.data()[i];
            store.entries[slot].value.data_mut()[i] = orig + h;
            let (tp, lp) = loss_fn(store)?;
            let plus = tp.scalar(lp);
            store.entries[slot].value.data_mut()[i] = orig - h;
            let (tm, lm) = loss_fn(store)?;
            let minus = tm.scalar(lm);
            store.entries[slot].value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[slot].data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}
