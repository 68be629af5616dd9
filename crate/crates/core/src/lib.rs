//! Vehicle-routing solver toolkit: classic adaptive large neighborhood search
//! (ALNS) with roulette-wheel operator weights, and a dual actor-critic variant
//! (DAC-ALNS) that replaces the adaptive layer with two policy networks over a
//! GCN-encoded solution state, plus a benchmark harness with gap statistics and
//! Wilcoxon signed-rank tests.

pub mod agent;
pub mod alns;
pub mod encode;
pub mod instance;
pub mod nn;
pub mod ops;
pub mod routing;



