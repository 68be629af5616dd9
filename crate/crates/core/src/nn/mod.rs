//! Minimal dense neural computation: matrices, a reverse-mode tape, a
//! parameter store with an adaptive-moment optimizer, and finite-difference
//! gradient checking. Everything is double precision; the networks here are
//! tiny, so clarity wins over speed.

mod store;
mod tape;
mod tensor;

pub use store::{grad_check, OptimizerConfig, OptimizerKind, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor2;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("no computation recorded for this node")]
    GraphNotRecorded,
    #[error("empty graph")]
    EmptyGraph,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
}

/// Numerically stable softmax over a slice (max-subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, NnError> {
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_relative_eq!(p[0], 0.5);
        assert_relative_eq!(p[1], 0.5);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let b = softmax(&[101.0, 102.0, 103.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_relative_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p[0] > 0.999999 && p[0].is_finite());
        assert!(p[1] < 1e-6 && p[1] >= 0.0);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert_eq!(
            softmax(&[f64::NAN, 0.0]).unwrap_err(),
            NnError::NonFiniteInput
        );
    }
}
