//! Dual actor-critic operator selection: a destroy actor and a repair actor
//! sharing one critic and one graph encoder. Rewards follow the three-case
//! destroy rule (base reward plus a potential term against the incumbent)
//! and the three-tier repair rule with a usage-frequency exploration bonus.
//! Training interleaves two one-step TD transitions per search iteration;
//! deployment runs the frozen policies inference-only.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use train::{deploy, run_online, train, TrainConfig, TrainOutcome, TrainStep};

use crate::encode::{encode_state, EncodeError, SolutionGraph, StateContext};
use crate::instance::ProblemKind;
use crate::nn::{softmax, NnError, OptimizerConfig, ParamStore, Tape, Tensor2, Var};
use crate::ops::OperatorError;
use crate::routing::RoutingError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cost must be nonnegative and finite, got {0}")]
    NonpositiveCost(f64),
    #[error("operator id {id} out of range for {count} operators")]
    BadOperatorId { id: usize, count: usize },
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Engine(#[from] crate::alns::EngineError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Reward constants. The repair tiers `(r1, r2, r3)` default to
/// `(20, 10, -0.1)`; the destroy base rewards and potential scale are
/// config-exposed defaults chosen to share scale with the repair tiers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    /// Denominator floor for the potential term.
    pub eps_den: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Exploration-bonus strength for repair operators.
    pub delta_explore: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha1: 5.0,
            alpha2: 10.0,
            beta: 5.0,
            eps_den: 1e-9,
            r1: 20.0,
            r2: 10.0,
            r3: -0.1,
            delta_explore: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let ok = self.alpha2 > self.alpha1
            && self.alpha1 >= 0.0
            && self.beta >= 0.0
            && self.delta_explore >= 0.0
            && self.r1 > self.r2
            && self.r2 > self.r3;
        if ok {
            Ok(())
        } else {
            Err(AgentError::CorruptCheckpoint(
                "reward configuration violates its ordering invariants".to_string(),
            ))
        }
    }
}

/// Network and learning hyperparameters (embedding dim 64, learning rate
/// 1e-3, discount 0.9, entropy coefficient 0.01, exploration rate 0.1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// k for the k-NN graph backbone; the effective k is `min(knn, n)`.
    pub knn: usize,
    pub discount: f64,
    pub entropy_coeff: f64,
    pub explore_rate: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            embed_dim: 64,
            hidden_dim: 64,
            knn: 10,
            discount: 0.9,
            entropy_coeff: 0.01,
            explore_rate: 0.1,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Dual = separate destroy/repair actors (the full model); Joint = a single
/// actor over destroy-repair pairs (the ablation baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentArch {
    Dual,
    Joint,
}

/// Which network head a forward pass addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Destroy,
    Repair,
    Joint,
    Critic,
}

impl Head {
    fn prefix(self) -> &'static str {
        match self {
            Head::Destroy => "des",
            Head::Repair => "rep",
            Head::Joint => "act",
            Head::Critic => "crit",
        }
    }
}

/// All learnable parameters plus the metadata needed to match a checkpoint
/// against an instance at deploy time.
pub struct AgentParams {
    pub store: ParamStore,
    pub meta: CheckpointMeta,
}

impl AgentParams {
    /// Fresh Glorot-initialized parameters for the given problem kind and
    /// operator counts.
    pub fn init(
        kind: ProblemKind,
        arch: AgentArch,
        num_destroy: usize,
        num_repair: usize,
        cfg: &AgentConfig,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feature_dim = match kind {
            ProblemKind::Cvrp => 4,
            ProblemKind::Vrptw => 10,
        };
        let mut store = ParamStore::new();
        crate::encode::init_encoder_params(&mut store, feature_dim, cfg.embed_dim, &mut rng);
        let state_dim = 2 * cfg.embed_dim + 2;
        match arch {
            AgentArch::Dual => {
                init_head(&mut store, "des", state_dim, cfg.hidden_dim, num_destroy, &mut rng);
                init_head(&mut store, "rep", state_dim, cfg.hidden_dim, num_repair, &mut rng);
            }
            AgentArch::Joint => {
                init_head(
                    &mut store,
                    "act",
                    state_dim,
                    cfg.hidden_dim,
                    num_destroy * num_repair,
                    &mut rng,
                );
            }
        }
        init_head(&mut store, "crit", state_dim, cfg.hidden_dim, 1, &mut rng);
        AgentParams {
            store,
            meta: CheckpointMeta {
                kind,
                arch,
                feature_dim,
                embed_dim: cfg.embed_dim,
                hidden_dim: cfg.hidden_dim,
                num_destroy,
                num_repair,
            },
        }
    }

    pub fn checksum(&self) -> u64 {
        self.store.checksum()
    }
}

fn init_head(
    store: &mut ParamStore,
    prefix: &str,
    in_dim: usize,
    hidden: usize,
    out: usize,
    rng: &mut ChaCha8Rng,
) {
    store.add_param(&format!("{prefix}.w1"), Tensor2::glorot(in_dim, hidden, rng));
    store.add_param(&format!("{prefix}.b1"), Tensor2::zeros(1, hidden));
    store.add_param(&format!("{prefix}.w2"), Tensor2::glorot(hidden, out, rng));
    store.add_param(&format!("{prefix}.b2"), Tensor2::zeros(1, out));
}

/// `tanh(state W1 + b1) W2 + b2`.
fn head_forward(
    tape: &mut Tape,
    store: &ParamStore,
    head: Head,
    state: Var,
) -> Result<Var, AgentError> {
    let p = head.prefix();
    let w1 = tape.param(store, &format!("{p}.w1"))?;
    let b1 = tape.param(store, &format!("{p}.b1"))?;
    let w2 = tape.param(store, &format!("{p}.w2"))?;
    let b2 = tape.param(store, &format!("{p}.b2"))?;
    let h = tape.linear(state, w1, b1)?;
    let h = tape.tanh(h);
    Ok(tape.linear(h, w2, b2)?)
}

/// A state as the agent sees it: the encoded solution graph plus the
/// search-phase context scalars.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub graph: SolutionGraph,
    pub ctx: StateContext,
}

/// One step of either decision process.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: AgentState,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<AgentState>,
    pub terminal: bool,
}

fn check_cost(c: f64) -> Result<f64, AgentError> {
    // zero is legitimate (a destroy can empty the solution); negative or
    // non-finite costs are caller bugs
    if c.is_finite() && c >= 0.0 {
        Ok(c)
    } else {
        Err(AgentError::NonpositiveCost(c))
    }
}

/// Destroy reward: 0 when the destruction did not lower the cost; otherwise
/// a base reward (`alpha2` at or below the incumbent, `alpha1` above it)
/// plus `beta * (C_best - C_destroy) / max(eps, C_best)`.
pub fn destroy_reward(
    c_before: f64,
    c_destroy: f64,
    c_best: f64,
    cfg: &RewardConfig,
) -> Result<f64, AgentError> {
    check_cost(c_before)?;
    check_cost(c_destroy)?;
    check_cost(c_best)?;
    if c_destroy >= c_before {
        return Ok(0.0);
    }
    let potential = cfg.beta * (c_best - c_destroy) / cfg.eps_den.max(c_best);
    if c_destroy <= c_best {
        Ok(cfg.alpha2 + potential)
    } else {
        Ok(cfg.alpha1 + potential)
    }
}

/// Repair reward: tier base (`r1` below the incumbent, `r2` improving on the
/// pre-operation cost, `r3` otherwise) plus the exploration bonus
/// `delta * (1 - f_id / max(1, f_max))` over the usage counts.
pub fn repair_reward(
    c_before: f64,
    c_repair: f64,
    c_best: f64,
    op_id: usize,
    usage_counts: &[u64],
    cfg: &RewardConfig,
) -> Result<f64, AgentError> {
    check_cost(c_before)?;
    check_cost(c_repair)?;
    check_cost(c_best)?;
    if op_id >= usage_counts.len() {
        return Err(AgentError::BadOperatorId {
            id: op_id,
            count: usage_counts.len(),
        });
    }
    let f_id = usage_counts[op_id] as f64;
    let f_max = usage_counts.iter().copied().max().unwrap_or(0) as f64;
    let explore = cfg.delta_explore * (1.0 - f_id / f_max.max(1.0));
    let base = if c_repair < c_best {
        cfg.r1
    } else if c_repair < c_before {
        cfg.r2
    } else {
        cfg.r3
    };
    Ok(base + explore)
}

/// An action drawn from a policy head, with the softmax log-probability and
/// entropy (reported for the softmax policy regardless of which branch
/// fired).
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub probs: Vec<f64>,
}

/// Epsilon-greedy sampling over softmax logits: with probability
/// `explore_rate` pick uniformly, otherwise sample the softmax distribution.
pub fn select_action(
    logits: &[f64],
    explore_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ActionSample, AgentError> {
    let probs = softmax(logits)?;
    let action = if explore_rate > 0.0 && rng.gen_range(0.0..1.0f64) < explore_rate {
        rng.gen_range(0..probs.len())
    } else {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut cum = 0.0;
        let mut chosen = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                chosen = i;
                break;
            }
        }
        chosen
    };
    let log_prob = probs[action].max(f64::MIN_POSITIVE).ln();
    let entropy = -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>();
    Ok(ActionSample {
        action,
        log_prob,
        entropy,
        probs,
    })
}

/// Value-only forward of a policy head on an encoded state.
pub fn policy_logits(
    store: &ParamStore,
    head: Head,
    state: &AgentState,
) -> Result<Vec<f64>, AgentError> {
    let mut tape = Tape::new();
    let s = encode_state(&mut tape, store, &state.graph, &state.ctx)?;
    let logits = head_forward(&mut tape, store, head, s)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Value-only critic forward; destroy and repair states share this head.
pub fn critic_value(store: &ParamStore, state: &AgentState) -> Result<f64, AgentError> {
    let mut tape = Tape::new();
    let s = encode_state(&mut tape, store, &state.graph, &state.ctx)?;
    let v = head_forward(&mut tape, store, Head::Critic, s)?;
    Ok(tape.scalar(v))
}

/// One-step TD update of the critic (and the shared encoder): trains
/// `V(s)` toward `r + gamma * V(s')` (the target is a constant), returning
/// the squared-error loss and the advantage for the paired actor step.
pub fn td_update(
    params: &mut AgentParams,
    cfg: &AgentConfig,
    transition: &Transition,
) -> Result<(f64, f64), AgentError> {
    debug_assert!(transition.reward.is_finite());
    let v_next = match (&transition.next_state, transition.terminal) {
        (Some(next), false) => critic_value(&params.store, next)?,
        _ => 0.0,
    };
    let target = transition.reward + cfg.discount * v_next;

    let mut tape = Tape::new();
    let s = encode_state(
        &mut tape,
        &params.store,
        &transition.state.graph,
        &transition.state.ctx,
    )?;
    let v = head_forward(&mut tape, &params.store, Head::Critic, s)?;
    let advantage = target - tape.scalar(v);
    let target_var = tape.constant(Tensor2::row_vector(&[target]));
    let err = tape.sub(v, target_var)?;
    let loss = tape.square(err);
    let loss_value = tape.scalar(loss);
    tape.backward(loss, &mut params.store)?;
    params.store.optimizer_step(&cfg.optimizer);
    Ok((loss_value, advantage))
}

/// Policy-gradient step on one actor head (and the shared encoder):
/// `loss = -(log pi(a|s) * A + entropy_coeff * H(pi))` with the advantage
/// treated as a constant. Returns the loss value.
pub fn actor_update(
    params: &mut AgentParams,
    cfg: &AgentConfig,
    head: Head,
    state: &AgentState,
    action: usize,
    advantage: f64,
) -> Result<f64, AgentError> {
    debug_assert!(advantage.is_finite());
    let mut tape = Tape::new();
    let s = encode_state(&mut tape, &params.store, &state.graph, &state.ctx)?;
    let logits = head_forward(&mut tape, &params.store, head, s)?;
    let logp = tape.log_softmax_rows(logits);
    let picked = tape.pick(logp, 0, action)?;
    let probs = tape.softmax_rows(logits);
    let plogp = tape.mul(probs, logp)?;
    let neg_entropy = tape.sum_all(plogp);
    let entropy = tape.scale(neg_entropy, -1.0);
    let weighted = tape.scale(picked, advantage);
    let bonus = tape.scale(entropy, cfg.entropy_coeff);
    let objective = tape.add(weighted, bonus)?;
    let loss = tape.scale(objective, -1.0);
    let loss_value = tape.scalar(loss);
    tape.backward(loss, &mut params.store)?;
    params.store.optimizer_step(&cfg.optimizer);
    Ok(loss_value)
}
