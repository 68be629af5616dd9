//! The destroy and repair operators: random removal, worst removal, random
//! repair, greedy repair and regret-2 repair. Each is a transformation of a
//! caller-owned solution; randomized operators take an explicit seed.

use crate::instance::Instance;
use crate::routing::{
    apply_insertion, evaluate_insertion, remove_customer, InsertionEval, RoutingError, Solution,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("no served customer to remove")]
    NothingToRemove,
    #[error("no feasible insertion for customer {0}")]
    NoFeasibleInsertion(usize),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Destroy operators in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestroyKind {
    RandomRemoval,
    WorstRemoval,
}

/// Repair operators in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairKind {
    RandomRepair,
    GreedyRepair,
    RegretRepair,
}

/// How much to destroy this iteration: a ratio for random removal, a count
/// for worst removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DestroyScale {
    Ratio(f64),
    Count(usize),
}

/// The fixed operator sets with stable indices (they define the actor action
/// spaces and the normalized destroy id) and per-operator usage counters.
#[derive(Debug, Clone)]
pub struct OperatorCatalog {
    pub destroy_ops: Vec<DestroyKind>,
    pub repair_ops: Vec<RepairKind>,
    pub destroy_uses: Vec<u64>,
    pub repair_uses: Vec<u64>,
}

impl OperatorCatalog {
    /// The full five-operator catalog.
    pub fn standard() -> Self {
        Self::with_ops(
            vec![DestroyKind::RandomRemoval, DestroyKind::WorstRemoval],
            vec![
                RepairKind::RandomRepair,
                RepairKind::GreedyRepair,
                RepairKind::RegretRepair,
            ],
        )
    }

    pub fn with_ops(destroy_ops: Vec<DestroyKind>, repair_ops: Vec<RepairKind>) -> Self {
        let destroy_uses = vec![0; destroy_ops.len()];
        let repair_uses = vec![0; repair_ops.len()];
        OperatorCatalog {
            destroy_ops,
            repair_ops,
            destroy_uses,
            repair_uses,
        }
    }

    pub fn apply_destroy(
        &mut self,
        index: usize,
        sol: &mut Solution,
        inst: &Instance,
        scale: DestroyScale,
        seed: u64,
    ) -> Result<Vec<usize>, OperatorError> {
        self.destroy_uses[index] += 1;
        match (self.destroy_ops[index], scale) {
            (DestroyKind::RandomRemoval, DestroyScale::Ratio(rho)) => {
                random_removal(sol, inst, rho, seed)
            }
            (DestroyKind::RandomRemoval, DestroyScale::Count(k)) => {
                let served = sol.served_count().max(1);
                random_removal(sol, inst, k as f64 / served as f64, seed)
            }
            (DestroyKind::WorstRemoval, DestroyScale::Count(k)) => {
                worst_removal(sol, inst, k, seed)
            }
            (DestroyKind::WorstRemoval, DestroyScale::Ratio(rho)) => {
                let served = sol.served_count();
                let k = ((rho * served as f64).round() as usize).max(1);
                worst_removal(sol, inst, k, seed)
            }
        }
    }

    pub fn apply_repair(
        &mut self,
        index: usize,
        sol: &mut Solution,
        inst: &Instance,
        seed: u64,
    ) -> Result<(), OperatorError> {
        self.repair_uses[index] += 1;
        match self.repair_ops[index] {
            RepairKind::RandomRepair => random_repair(sol, inst, seed),
            RepairKind::GreedyRepair => greedy_repair(sol, inst),
            RepairKind::RegretRepair => regret_repair(sol, inst, 2),
        }
    }
}

/// Removes `k = max(1, round(rho * served))` distinct served customers
/// uniformly at random. Deterministic in `seed`.
pub fn random_removal(
    sol: &mut Solution,
    inst: &Instance,
    rho: f64,
    seed: u64,
) -> Result<Vec<usize>, OperatorError> {
    let served = sol.served_customers();
    if served.is_empty() {
        return Err(OperatorError::NothingToRemove);
    }
    let k = ((rho * served.len() as f64).round() as usize)
        .max(1)
        .min(served.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = served;
    pool.shuffle(&mut rng);
    let mut removed = pool[..k].to_vec();
    removed.sort_unstable();
    for &c in &removed {
        remove_customer(sol, inst, c)?;
    }
    Ok(removed)
}

/// Saving obtained by removing `customer` right now (positive = cost drops).
fn removal_saving(sol: &Solution, inst: &Instance, customer: usize) -> f64 {
    let (ri, pos) = sol.locate(customer).expect("customer served");
    let route = &sol.routes[ri];
    let prev = if pos == 0 { 0 } else { route.customers[pos - 1] };
    let next = if pos + 1 == route.customers.len() {
        0
    } else {
        route.customers[pos + 1]
    };
    inst.dist(prev, customer) + inst.dist(customer, next) - inst.dist(prev, next)
}

/// Iteratively removes the served customer whose removal yields the largest
/// cost saving, recomputing savings after each removal. Ties break on the
/// lowest customer id. Removes `min(count, served)` customers.
pub fn worst_removal(
    sol: &mut Solution,
    inst: &Instance,
    count: usize,
    _seed: u64,
) -> Result<Vec<usize>, OperatorError> {
    if sol.served_count() == 0 {
        return Err(OperatorError::NothingToRemove);
    }
    let k = count.min(sol.served_count());
    let mut removed = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for c in sol.served_customers() {
            let saving = removal_saving(sol, inst, c);
            let better = match best {
                None => true,
                Some((bs, bc)) => saving > bs || (saving == bs && c < bc),
            };
            if better {
                best = Some((saving, c));
            }
        }
        let (_, victim) = best.unwrap();
        remove_customer(sol, inst, victim)?;
        removed.push(victim);
    }
    Ok(removed)
}

/// All feasible `(route, position, delta)` slots for a customer, including
/// the fresh-route slot at `routes.len()`.
fn feasible_slots(
    sol: &Solution,
    inst: &Instance,
    customer: usize,
) -> Result<Vec<(usize, usize, f64)>, OperatorError> {
    let mut slots = Vec::new();
    for ri in 0..sol.routes.len() {
        for pos in 0..=sol.routes[ri].customers.len() {
            if let InsertionEval::Feasible { delta } =
                evaluate_insertion(sol, inst, customer, ri, pos)?
            {
                slots.push((ri, pos, delta));
            }
        }
    }
    if let InsertionEval::Feasible { delta } =
        evaluate_insertion(sol, inst, customer, sol.routes.len(), 0)?
    {
        slots.push((sol.routes.len(), 0, delta));
    }
    Ok(slots)
}

/// Takes removed customers in seeded random order and inserts each at a
/// uniformly chosen feasible slot (fresh route included).
pub fn random_repair(sol: &mut Solution, inst: &Instance, seed: u64) -> Result<(), OperatorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = sol.removed.iter().copied().collect();
    order.shuffle(&mut rng);
    for c in order {
        let slots = feasible_slots(sol, inst, c)?;
        if slots.is_empty() {
            return Err(OperatorError::NoFeasibleInsertion(c));
        }
        let (ri, pos, _) = slots[rng.gen_range(0..slots.len())];
        apply_insertion(sol, inst, c, ri, pos)?;
    }
    Ok(())
}

/// The `(customer, route, position)` triple a greedy-repair step would
/// insert: globally minimal insertion delta, ties broken by lowest customer
/// id, then route index, then position.
pub fn greedy_step(
    sol: &Solution,
    inst: &Instance,
) -> Result<Option<(usize, usize, usize)>, OperatorError> {
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for &c in &sol.removed {
        for (ri, pos, delta) in feasible_slots(sol, inst, c)? {
            let better = match best {
                None => true,
                Some((bd, bc, bri, bpos)) => (delta, c, ri, pos) < (bd, bc, bri, bpos),
            };
            if better {
                best = Some((delta, c, ri, pos));
            }
        }
    }
    Ok(best.map(|(_, c, ri, pos)| (c, ri, pos)))
}

/// Repeatedly applies [`greedy_step`] until the removed pool is empty.
/// Deterministic; a no-op when nothing is removed.
pub fn greedy_repair(sol: &mut Solution, inst: &Instance) -> Result<(), OperatorError> {
    while !sol.removed.is_empty() {
        let (c, ri, pos) = greedy_step(sol, inst)?.ok_or_else(|| {
            OperatorError::NoFeasibleInsertion(*sol.removed.iter().next().unwrap())
        })?;
        apply_insertion(sol, inst, c, ri, pos)?;
    }
    Ok(())
}

/// Regret value of a customer: delta of its second-best feasible slot minus
/// delta of its best; infinite when fewer than two slots are feasible.
fn regret_of(slots: &[(usize, usize, f64)]) -> (f64, Option<(usize, usize, f64)>) {
    let mut best: Option<(usize, usize, f64)> = None;
    let mut second: Option<f64> = None;
    for &(ri, pos, delta) in slots {
        match best {
            None => best = Some((ri, pos, delta)),
            Some((bri, bpos, bd)) => {
                if (delta, ri, pos) < (bd, bri, bpos) {
                    second = Some(bd);
                    best = Some((ri, pos, delta));
                } else if second.map_or(true, |s| delta < s) {
                    second = Some(delta);
                }
            }
        }
    }
    match (best, second) {
        (Some(b), Some(s)) => (s - b.2, Some(b)),
        (Some(b), None) => (f64::INFINITY, Some(b)),
        (None, _) => (f64::NEG_INFINITY, None),
    }
}

/// The move a regret-2 step would make: the removed customer with the
/// largest regret, inserted at its best slot. Customers with fewer than two
/// feasible slots carry infinite regret and go first. Ties break as in
/// [`greedy_step`].
pub fn regret_step(
    sol: &Solution,
    inst: &Instance,
) -> Result<Option<(usize, usize, usize)>, OperatorError> {
    let mut chosen: Option<(f64, usize, usize, usize, f64)> = None;
    for &c in &sol.removed {
        let slots = feasible_slots(sol, inst, c)?;
        let (regret, best_slot) = regret_of(&slots);
        let Some((ri, pos, delta)) = best_slot else {
            return Err(OperatorError::NoFeasibleInsertion(c));
        };
        let better = match chosen {
            None => true,
            Some((cr, cc, cri, cpos, cd)) => {
                regret > cr || (regret == cr && (delta, c, ri, pos) < (cd, cc, cri, cpos))
            }
        };
        if better {
            chosen = Some((regret, c, ri, pos, delta));
        }
    }
    Ok(chosen.map(|(_, c, ri, pos, _)| (c, ri, pos)))
}

/// Regret-N insertion (N = 2): repeatedly applies [`regret_step`] until the
/// removed pool is empty.
pub fn regret_repair(sol: &mut Solution, inst: &Instance, _n: usize) -> Result<(), OperatorError> {
    while !sol.removed.is_empty() {
        let Some((c, ri, pos)) = regret_step(sol, inst)? else {
            break;
        };
        apply_insertion(sol, inst, c, ri, pos)?;
    }
    Ok(())
}
