//! The training loop (online learning while searching) and the frozen
//! inference-only deployment loop.
//!
//! Each training iteration produces exactly two transitions: the destroy
//! transition chains the pre-destroy state to the post-destroy state, and
//! the repair transition chains the post-destroy state to the next
//! iteration's pre-destroy state (terminal at the episode end). The critic
//! and the shared encoder learn from both; each actor head only from its
//! own transition.

use super::{
    actor_update, destroy_reward, policy_logits, repair_reward, select_action,
    td_update, AgentArch, AgentConfig, AgentError, AgentParams, AgentState, Head, RewardConfig,
    Transition,
};
use crate::alns::{accept, sample_scale, RunRecord, SearchConfig, TemperatureSchedule};
use crate::encode::{build_graph, StateContext};
use crate::instance::Instance;
use crate::ops::OperatorCatalog;
use crate::routing::build_initial_solution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Work units per destroy/repair application pair.
const WORK_OPS: u64 = 2;
/// Work units per neural forward pass (backward counts double).
const WORK_FWD: u64 = 1;
const WORK_BWD: u64 = 2;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainConfig {
    /// Total training steps across episodes; `None` sums the per-instance
    /// budgets `max(2000, 50n)`.
    pub total_steps: Option<usize>,
    /// Early stopping: halt training when the incumbent has not improved
    /// for more than this fraction of the total steps. `None` disables.
    pub early_stop_frac: Option<f64>,
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub episode: usize,
    pub instance: String,
    pub cost_before: f64,
    pub cost_destroy: f64,
    pub cost_repair: f64,
    pub reward_destroy: f64,
    pub reward_repair: f64,
    pub accepted: bool,
    pub best_cost: f64,
    pub critic_loss: Vec<f64>,
    pub actor_loss: Vec<f64>,
    pub entropy: Vec<f64>,
}

pub struct TrainOutcome {
    pub params: AgentParams,
    pub log: Vec<TrainStep>,
    /// One record per episode; feeds the online-method benchmark rows.
    pub records: Vec<RunRecord>,
    pub total_steps_run: usize,
    pub early_stopped: bool,
}

fn method_name(arch: AgentArch) -> &'static str {
    match arch {
        AgentArch::Dual => "dac",
        AgentArch::Joint => "ac",
    }
}

/// Trains an agent over the instance set, round-robin, one instance's full
/// budget per episode, until the total step budget is exhausted or early
/// stopping fires. Deterministic in `seed`.
pub fn train(
    instances: &[Instance],
    arch: AgentArch,
    search: &SearchConfig,
    agent_cfg: &AgentConfig,
    reward_cfg: &RewardConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    assert!(!instances.is_empty(), "need at least one training instance");
    let kind = instances[0].kind;
    if instances.iter().any(|i| i.kind != kind) {
        return Err(AgentError::CheckpointMismatch(
            "training instances mix problem kinds".to_string(),
        ));
    }
    reward_cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog_template = OperatorCatalog::standard();
    let num_destroy = catalog_template.destroy_ops.len();
    let num_repair = catalog_template.repair_ops.len();
    let mut params = AgentParams::init(
        kind,
        arch,
        num_destroy,
        num_repair,
        agent_cfg,
        rng.next_u64(),
    );

    let total_steps = train_cfg
        .total_steps
        .unwrap_or_else(|| instances.iter().map(|i| search.budget(i.n())).sum());
    let stall_window = train_cfg
        .early_stop_frac
        .map(|f| ((f * total_steps as f64).ceil() as usize).max(1));

    let mut log = Vec::new();
    let mut records = Vec::new();
    let mut catalog = OperatorCatalog::standard();
    let mut step = 0usize;
    let mut episode = 0usize;
    let mut early_stopped = false;

    while step < total_steps && !early_stopped {
        let inst = &instances[episode % instances.len()];
        let budget = search.budget(inst.n()).min(total_steps - step);
        let outcome = run_episode(EpisodeArgs {
            inst,
            arch,
            search,
            agent_cfg,
            reward_cfg,
            params: &mut params,
            catalog: &mut catalog,
            rng: &mut rng,
            budget,
            episode,
            step_base: step,
            stall_window,
            learn: true,
            log: Some(&mut log),
        })?;
        step += outcome.record.iters;
        early_stopped = outcome.early_stopped;
        records.push(outcome.record);
        episode += 1;
    }

    Ok(TrainOutcome {
        params,
        log,
        records,
        total_steps_run: step,
        early_stopped,
    })
}

/// Inference-only run of a frozen agent (the transfer execution mode): no
/// parameter updates, no exploration, no reward computation. Errors when
/// the checkpoint metadata does not match the instance or catalog.
pub fn deploy(
    params: &AgentParams,
    inst: &Instance,
    search: &SearchConfig,
    agent_cfg: &AgentConfig,
    seed: u64,
) -> Result<RunRecord, AgentError> {
    let meta = &params.meta;
    if meta.kind != inst.kind {
        return Err(AgentError::CheckpointMismatch(format!(
            "checkpoint is for {}, instance is {}",
            meta.kind, inst.kind
        )));
    }
    let catalog = OperatorCatalog::standard();
    if meta.num_destroy != catalog.destroy_ops.len() || meta.num_repair != catalog.repair_ops.len()
    {
        return Err(AgentError::CheckpointMismatch(format!(
            "checkpoint action dims {}x{} vs catalog {}x{}",
            meta.num_destroy,
            meta.num_repair,
            catalog.destroy_ops.len(),
            catalog.repair_ops.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // params are borrowed immutably; learn: false never touches them
    let mut shadow = AgentParams {
        store: rebuild_store(params),
        meta: *params.meta_ref(),
    };
    let mut catalog = OperatorCatalog::standard();
    let outcome = run_episode(EpisodeArgs {
        inst,
        arch: meta.arch,
        search,
        agent_cfg,
        reward_cfg: &RewardConfig::default(),
        params: &mut shadow,
        catalog: &mut catalog,
        rng: &mut rng,
        budget: search.budget(inst.n()),
        episode: 0,
        step_base: 0,
        stall_window: None,
        learn: false,
        log: None,
    })?;
    let mut record = outcome.record;
    record.method = match meta.arch {
        AgentArch::Dual => "dac-t".to_string(),
        AgentArch::Joint => "ac-t".to_string(),
    };
    debug_assert_eq!(shadow.checksum(), params.checksum());
    Ok(record)
}

fn rebuild_store(params: &AgentParams) -> crate::nn::ParamStore {
    let mut store = crate::nn::ParamStore::new();
    for (name, tensor) in params.store.export() {
        store.add_param(&name, tensor);
    }
    store
}

impl AgentParams {
    fn meta_ref(&self) -> &super::CheckpointMeta {
        &self.meta
    }
}

struct EpisodeArgs<'a> {
    inst: &'a Instance,
    arch: AgentArch,
    search: &'a SearchConfig,
    agent_cfg: &'a AgentConfig,
    reward_cfg: &'a RewardConfig,
    params: &'a mut AgentParams,
    catalog: &'a mut OperatorCatalog,
    rng: &'a mut ChaCha8Rng,
    budget: usize,
    episode: usize,
    step_base: usize,
    stall_window: Option<usize>,
    learn: bool,
    log: Option<&'a mut Vec<TrainStep>>,
}

struct EpisodeOutcome {
    record: RunRecord,
    early_stopped: bool,
}

fn run_episode(args: EpisodeArgs<'_>) -> Result<EpisodeOutcome, AgentError> {
    let EpisodeArgs {
        inst,
        arch,
        search,
        agent_cfg,
        reward_cfg,
        params,
        catalog,
        rng,
        budget,
        episode,
        step_base,
        stall_window,
        learn,
        mut log,
    } = args;

    let start = Instant::now();
    let k = agent_cfg.knn.min(inst.n());
    let explore = if learn { agent_cfg.explore_rate } else { 0.0 };
    let num_destroy = catalog.destroy_ops.len();
    let num_repair = catalog.repair_ops.len();

    let mut current = build_initial_solution(inst, rng.next_u64())?;
    let initial_cost = current.cost;
    let mut best = current.clone();
    let schedule = TemperatureSchedule::new(initial_cost, search, budget);

    let mut trace = Vec::with_capacity(budget);
    let mut work_units = 0u64;
    let mut stall = 0usize;
    let mut early_stopped = false;

    let mut state_des = AgentState {
        graph: build_graph(inst, &current, k),
        ctx: StateContext::destroy(),
    };

    for it in 0..budget {
        let c_before = current.cost;

        // --- destroy ---
        let (a_d, a_r, sample_d, sample_r, c_destroy, state_rep, mut candidate, counts_before);
        match arch {
            AgentArch::Dual => {
                let logits = policy_logits(&params.store, Head::Destroy, &state_des)?;
                work_units += WORK_FWD;
                sample_d = select_action(&logits, explore, rng)?;
                a_d = sample_d.action;
            }
            AgentArch::Joint => {
                let logits = policy_logits(&params.store, Head::Joint, &state_des)?;
                work_units += WORK_FWD;
                sample_d = select_action(&logits, explore, rng)?;
                a_d = sample_d.action / num_repair;
            }
        }
        let scale = sample_scale(catalog.destroy_ops[a_d], search, rng);
        let destroy_seed = rng.next_u64();
        candidate = current.clone();
        catalog.apply_destroy(a_d, &mut candidate, inst, scale, destroy_seed)?;
        c_destroy = candidate.cost;
        let rho = candidate.removed.len() as f64 / inst.n() as f64;

        // --- repair ---
        let rep_ctx = StateContext::repair(rho, a_d, num_destroy);
        state_rep = AgentState {
            graph: build_graph(inst, &candidate, k),
            ctx: rep_ctx,
        };
        match arch {
            AgentArch::Dual => {
                let logits = policy_logits(&params.store, Head::Repair, &state_rep)?;
                work_units += WORK_FWD;
                sample_r = select_action(&logits, explore, rng)?;
                a_r = sample_r.action;
            }
            AgentArch::Joint => {
                sample_r = sample_d.clone();
                a_r = sample_r.action % num_repair;
            }
        }
        counts_before = catalog.repair_uses.clone();
        let repair_seed = rng.next_u64();
        catalog.apply_repair(a_r, &mut candidate, inst, repair_seed)?;
        let c_repair = candidate.cost;
        work_units += WORK_OPS;

        // --- acceptance and incumbent ---
        let accepted = accept(c_repair, c_before, schedule.at(it), rng)?;
        if c_repair < best.cost {
            best = candidate.clone();
            stall = 0;
        } else {
            stall += 1;
        }
        if accepted {
            current = candidate;
        }
        trace.push(best.cost);

        let stop_now = stall_window.map_or(false, |w| stall > w);
        let last_iter = it + 1 == budget || stop_now;

        let state_des_next = AgentState {
            graph: build_graph(inst, &current, k),
            ctx: StateContext::destroy(),
        };

        // --- learning updates ---
        if learn {
            let r_destroy = destroy_reward(c_before, c_destroy, best.cost, reward_cfg)?;
            let r_repair = repair_reward(
                c_before,
                c_repair,
                best.cost,
                a_r,
                &counts_before,
                reward_cfg,
            )?;
            let (critic_losses, actor_losses, entropies) = match arch {
                AgentArch::Dual => {
                    let t_destroy = Transition {
                        state: state_des.clone(),
                        action: a_d,
                        reward: r_destroy,
                        next_state: Some(state_rep.clone()),
                        terminal: false,
                    };
                    let (cl_d, adv_d) = td_update(params, agent_cfg, &t_destroy)?;
                    let al_d =
                        actor_update(params, agent_cfg, Head::Destroy, &t_destroy.state, a_d, adv_d)?;
                    let t_repair = Transition {
                        state: state_rep.clone(),
                        action: a_r,
                        reward: r_repair,
                        next_state: (!last_iter).then(|| state_des_next.clone()),
                        terminal: last_iter,
                    };
                    let (cl_r, adv_r) = td_update(params, agent_cfg, &t_repair)?;
                    let al_r =
                        actor_update(params, agent_cfg, Head::Repair, &t_repair.state, a_r, adv_r)?;
                    work_units += 2 * (WORK_FWD + WORK_FWD + WORK_BWD) + 2 * (WORK_FWD + WORK_BWD);
                    (
                        vec![cl_d, cl_r],
                        vec![al_d, al_r],
                        vec![sample_d.entropy, sample_r.entropy],
                    )
                }
                AgentArch::Joint => {
                    let t = Transition {
                        state: state_des.clone(),
                        action: sample_d.action,
                        reward: r_repair,
                        next_state: (!last_iter).then(|| state_des_next.clone()),
                        terminal: last_iter,
                    };
                    let (cl, adv) = td_update(params, agent_cfg, &t)?;
                    let al = actor_update(
                        params,
                        agent_cfg,
                        Head::Joint,
                        &t.state,
                        sample_d.action,
                        adv,
                    )?;
                    work_units += (WORK_FWD + WORK_FWD + WORK_BWD) + (WORK_FWD + WORK_BWD);
                    (vec![cl], vec![al], vec![sample_d.entropy])
                }
            };
            if let Some(log) = log.as_deref_mut() {
                log.push(TrainStep {
                    step: step_base + it,
                    episode,
                    instance: inst.name.clone(),
                    cost_before: c_before,
                    cost_destroy: c_destroy,
                    cost_repair: c_repair,
                    reward_destroy: r_destroy,
                    reward_repair: r_repair,
                    accepted,
                    best_cost: best.cost,
                    critic_loss: critic_losses,
                    actor_loss: actor_losses,
                    entropy: entropies,
                });
            }
        }

        state_des = state_des_next;
        if stop_now {
            early_stopped = true;
            break;
        }
    }

    let iters = trace.len();
    Ok(EpisodeOutcome {
        record: RunRecord {
            instance: inst.name.clone(),
            method: method_name(arch).to_string(),
            seed: 0, // callers overwrite with the run seed
            initial_cost,
            best_cost: best.cost,
            trace,
            iters,
            work_units,
            destroy_uses: catalog.destroy_uses.clone(),
            repair_uses: catalog.repair_uses.clone(),
            vehicles: best.routes.len(),
            wall_secs: start.elapsed().as_secs_f64(),
        },
        early_stopped,
    })
}

/// Online-learning run on a single instance: trains from scratch for the
/// instance's budget and reports the search trajectory as a [`RunRecord`].
/// This is how the learning methods enter method comparisons.
pub fn run_online(
    inst: &Instance,
    arch: AgentArch,
    search: &SearchConfig,
    agent_cfg: &AgentConfig,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<RunRecord, AgentError> {
    let outcome = train(
        std::slice::from_ref(inst),
        arch,
        search,
        agent_cfg,
        reward_cfg,
        &TrainConfig {
            total_steps: Some(search.budget(inst.n())),
            early_stop_frac: None,
        },
        seed,
    )?;
    let mut record = outcome
        .records
        .into_iter()
        .next()
        .expect("one episode ran");
    record.seed = seed;
    Ok(record)
}
