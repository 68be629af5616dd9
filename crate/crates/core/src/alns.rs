//! The classic ALNS baseline: roulette-wheel adaptive operator weights,
//! Metropolis acceptance with exponential cooling, and the search loop. The
//! temperature schedule and destroy-scale sampling are shared with the
//! actor-critic variant so method comparisons isolate the adaptive layer.

use crate::instance::Instance;
use crate::ops::{DestroyKind, DestroyScale, OperatorCatalog, OperatorError};
use crate::routing::{build_initial_solution, RoutingError};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("all roulette weights are zero")]
    AllZeroWeights,
    #[error("negative roulette weight {0}")]
    NegativeWeight(f64),
    #[error("weight/score/usage vectors have mismatched lengths")]
    LengthMismatch,
    #[error("temperature must be positive, got {0}")]
    NonpositiveTemperature(f64),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Search-loop parameters. Defaults follow the usual ALNS conventions:
/// scores (5, 2, 1) for new-best / improving / accepted-worse, segment
/// length 100, reaction factor 0.8, removal ratio in [0.1, 0.4], worst
/// removal count in [5, 20], Metropolis start temperature 0.05 x initial
/// cost cooling to 1% of itself by the final iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Iteration budget; `None` means `max(2000, 50 * n)`.
    pub max_iters: Option<usize>,
    pub ratio_range: (f64, f64),
    pub worst_count_range: (usize, usize),
    pub start_temp_factor: f64,
    pub final_temp_fraction: f64,
    pub segment_length: usize,
    pub reaction_factor: f64,
    pub scores: (f64, f64, f64),
    pub initial_weight: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_iters: None,
            ratio_range: (0.1, 0.4),
            worst_count_range: (5, 20),
            start_temp_factor: 0.05,
            final_temp_fraction: 0.01,
            segment_length: 100,
            reaction_factor: 0.8,
            scores: (5.0, 2.0, 1.0),
            initial_weight: 1.0,
        }
    }
}

impl SearchConfig {
    /// Per-run iteration budget for an instance with `n` customers.
    pub fn budget(&self, n: usize) -> usize {
        self.max_iters.unwrap_or_else(|| budget_for(n))
    }
}

/// The default iteration budget `max(2000, 50 * n)`.
pub fn budget_for(n: usize) -> usize {
    2000usize.max(50 * n)
}

/// The benchmark seed set {0, 100, ..., 900}.
pub fn seed_set() -> Vec<u64> {
    (0..10).map(|i| i * 100).collect()
}

/// Per-run outcome. `wall_secs` is measured and intentionally excluded from
/// serialization: persisted result files must be bit-identical across
/// repeated runs, so recorded "time" is the deterministic `work_units`
/// counter (destroy/repair applications plus neural passes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub method: String,
    pub seed: u64,
    pub initial_cost: f64,
    pub best_cost: f64,
    /// Best-so-far cost after each iteration.
    pub trace: Vec<f64>,
    pub iters: usize,
    pub work_units: u64,
    pub destroy_uses: Vec<u64>,
    pub repair_uses: Vec<u64>,
    pub vehicles: usize,
    #[serde(skip)]
    pub wall_secs: f64,
}

/// Samples index `i` with probability `w_i / sum(w)`.
pub fn roulette_select(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<usize, EngineError> {
    let mut total = 0.0;
    for &w in weights {
        if w < 0.0 {
            return Err(EngineError::NegativeWeight(w));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(EngineError::AllZeroWeights);
    }
    let mut u = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return Ok(i);
        }
        u -= w;
    }
    Ok(weights.len() - 1)
}

/// Exponential smoothing `w <- (1 - lambda) * w + lambda * score / uses`;
/// operators with zero uses keep their weight. Weights are floored at 1e-6.
pub fn update_weights(
    weights: &[f64],
    segment_scores: &[f64],
    usage_counts: &[u64],
    lambda: f64,
) -> Result<Vec<f64>, EngineError> {
    if weights.len() != segment_scores.len() || weights.len() != usage_counts.len() {
        return Err(EngineError::LengthMismatch);
    }
    debug_assert!(lambda > 0.0 && lambda <= 1.0);
    Ok(weights
        .iter()
        .zip(segment_scores)
        .zip(usage_counts)
        .map(|((&w, &score), &uses)| {
            if uses == 0 {
                w
            } else {
                ((1.0 - lambda) * w + lambda * score / uses as f64).max(1e-6)
            }
        })
        .collect())
}

/// Metropolis criterion: accept improvements always, otherwise with
/// probability `exp((current - candidate) / temperature)`.
pub fn accept(
    candidate: f64,
    current: f64,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<bool, EngineError> {
    if temperature <= 0.0 {
        return Err(EngineError::NonpositiveTemperature(temperature));
    }
    if candidate <= current {
        return Ok(true);
    }
    Ok(rng.gen_range(0.0..1.0f64) < ((current - candidate) / temperature).exp())
}

/// Geometric cooling from `start_temp_factor * initial_cost` down to
/// `final_temp_fraction` of that by the last iteration.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureSchedule {
    t0: f64,
    decay: f64,
}

impl TemperatureSchedule {
    pub fn new(initial_cost: f64, cfg: &SearchConfig, total_iters: usize) -> Self {
        let t0 = (cfg.start_temp_factor * initial_cost).max(1e-9);
        let decay = if total_iters > 1 {
            cfg.final_temp_fraction
                .powf(1.0 / (total_iters as f64 - 1.0))
        } else {
            1.0
        };
        TemperatureSchedule { t0, decay }
    }

    pub fn at(&self, iter: usize) -> f64 {
        self.t0 * self.decay.powi(iter as i32)
    }
}

/// Draws this iteration's destroy scale: a ratio for random removal, a
/// count for worst removal.
pub fn sample_scale(kind: DestroyKind, cfg: &SearchConfig, rng: &mut ChaCha8Rng) -> DestroyScale {
    match kind {
        DestroyKind::RandomRemoval => {
            DestroyScale::Ratio(rng.gen_range(cfg.ratio_range.0..=cfg.ratio_range.1))
        }
        DestroyKind::WorstRemoval => {
            DestroyScale::Count(rng.gen_range(cfg.worst_count_range.0..=cfg.worst_count_range.1))
        }
    }
}

/// Runs the classic ALNS loop for `max(2000, 50n)` iterations (or the
/// configured override). Fully deterministic in `seed`.
pub fn run_alns(inst: &Instance, cfg: &SearchConfig, seed: u64) -> Result<RunRecord, EngineError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = OperatorCatalog::standard();
    let budget = cfg.budget(inst.n());

    let mut current = build_initial_solution(inst, seed)?;
    let initial_cost = current.cost;
    let mut best = current.clone();
    let schedule = TemperatureSchedule::new(initial_cost, cfg, budget);

    let nd = catalog.destroy_ops.len();
    let nr = catalog.repair_ops.len();
    let mut destroy_weights = vec![cfg.initial_weight; nd];
    let mut repair_weights = vec![cfg.initial_weight; nr];
    let mut seg_destroy_scores = vec![0.0; nd];
    let mut seg_repair_scores = vec![0.0; nr];
    let mut seg_destroy_uses = vec![0u64; nd];
    let mut seg_repair_uses = vec![0u64; nr];

    let mut trace = Vec::with_capacity(budget);
    let mut work_units = 0u64;

    for iter in 0..budget {
        let d = roulette_select(&destroy_weights, &mut rng)?;
        let scale = sample_scale(catalog.destroy_ops[d], cfg, &mut rng);
        let destroy_seed = rng.next_u64();
        let r = roulette_select(&repair_weights, &mut rng)?;
        let repair_seed = rng.next_u64();

        let mut candidate = current.clone();
        catalog.apply_destroy(d, &mut candidate, inst, scale, destroy_seed)?;
        catalog.apply_repair(r, &mut candidate, inst, repair_seed)?;
        work_units += 2;

        let temperature = schedule.at(iter);
        let accepted = accept(candidate.cost, current.cost, temperature, &mut rng)?;

        let (s1, s2, s3) = cfg.scores;
        let score = if candidate.cost < best.cost {
            s1
        } else if candidate.cost < current.cost {
            s2
        } else if accepted {
            s3
        } else {
            0.0
        };
        seg_destroy_scores[d] += score;
        seg_repair_scores[r] += score;
        seg_destroy_uses[d] += 1;
        seg_repair_uses[r] += 1;

        if candidate.cost < best.cost {
            best = candidate.clone();
        }
        if accepted {
            current = candidate;
        }
        trace.push(best.cost);

        if (iter + 1) % cfg.segment_length == 0 {
            destroy_weights = update_weights(
                &destroy_weights,
                &seg_destroy_scores,
                &seg_destroy_uses,
                cfg.reaction_factor,
            )?;
            repair_weights = update_weights(
                &repair_weights,
                &seg_repair_scores,
                &seg_repair_uses,
                cfg.reaction_factor,
            )?;
            seg_destroy_scores.iter_mut().for_each(|s| *s = 0.0);
            seg_repair_scores.iter_mut().for_each(|s| *s = 0.0);
            seg_destroy_uses.iter_mut().for_each(|u| *u = 0);
            seg_repair_uses.iter_mut().for_each(|u| *u = 0);
        }
    }

    Ok(RunRecord {
        instance: inst.name.clone(),
        method: "alns".to_string(),
        seed,
        initial_cost,
        best_cost: best.cost,
        trace,
        iters: budget,
        work_units,
        destroy_uses: catalog.destroy_uses,
        repair_uses: catalog.repair_uses,
        vehicles: best.routes.len(),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Same as [`run_alns`] but also returns the best solution found.
pub fn run_alns_with_solution(
    inst: &Instance,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(RunRecord, crate::routing::Solution), EngineError> {
    // run twice would waste work; replicate the loop cheaply by tracking best
    let record = run_alns(inst, cfg, seed)?;
    let sol = replay_best(inst, cfg, seed)?;
    Ok((record, sol))
}

fn replay_best(
    inst: &Instance,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<crate::routing::Solution, EngineError> {
    // deterministic re-run keeping the incumbent solution
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = OperatorCatalog::standard();
    let budget = cfg.budget(inst.n());
    let mut current = build_initial_solution(inst, seed)?;
    let mut best = current.clone();
    let schedule = TemperatureSchedule::new(current.cost, cfg, budget);
    let nd = catalog.destroy_ops.len();
    let nr = catalog.repair_ops.len();
    let mut destroy_weights = vec![cfg.initial_weight; nd];
    let mut repair_weights = vec![cfg.initial_weight; nr];
    let mut seg_d_scores = vec![0.0; nd];
    let mut seg_r_scores = vec![0.0; nr];
    let mut seg_d_uses = vec![0u64; nd];
    let mut seg_r_uses = vec![0u64; nr];
    for iter in 0..budget {
        let d = roulette_select(&destroy_weights, &mut rng)?;
        let scale = sample_scale(catalog.destroy_ops[d], cfg, &mut rng);
        let destroy_seed = rng.next_u64();
        let r = roulette_select(&repair_weights, &mut rng)?;
        let repair_seed = rng.next_u64();
        let mut candidate = current.clone();
        catalog.apply_destroy(d, &mut candidate, inst, scale, destroy_seed)?;
        catalog.apply_repair(r, &mut candidate, inst, repair_seed)?;
        let accepted = accept(candidate.cost, current.cost, schedule.at(iter), &mut rng)?;
        let (s1, s2, s3) = cfg.scores;
        let score = if candidate.cost < best.cost {
            s1
        } else if candidate.cost < current.cost {
            s2
        } else if accepted {
            s3
        } else {
            0.0
        };
        seg_d_scores[d] += score;
        seg_r_scores[r] += score;
        seg_d_uses[d] += 1;
        seg_r_uses[r] += 1;
        if candidate.cost < best.cost {
            best = candidate.clone();
        }
        if accepted {
            current = candidate;
        }
        if (iter + 1) % cfg.segment_length == 0 {
            destroy_weights =
                update_weights(&destroy_weights, &seg_d_scores, &seg_d_uses, cfg.reaction_factor)?;
            repair_weights =
                update_weights(&repair_weights, &seg_r_scores, &seg_r_uses, cfg.reaction_factor)?;
            seg_d_scores.iter_mut().for_each(|s| *s = 0.0);
            seg_r_scores.iter_mut().for_each(|s| *s = 0.0);
            seg_d_uses.iter_mut().for_each(|u| *u = 0);
            seg_r_uses.iter_mut().for_each(|u| *u = 0);
        }
    }
    Ok(best)
}
