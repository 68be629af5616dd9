//! Solution representation, objective evaluation, feasibility checking and
//! incremental insertion/removal.
//!
//! Solutions are single-owner mutable values; callers clone before
//! speculative edits. A customer is always either on exactly one route or in
//! the `removed` pool. The cached cost is maintained incrementally by
//! [`apply_insertion`] and [`remove_customer`] and must stay within 1e-6
//! relative of a full recomputation.

use crate::instance::{Instance, ProblemKind};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

/// Arrival/waiting bookkeeping for one stop of a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub arrival: f64,
    pub wait: f64,
}

/// One vehicle route. The depot is implicit at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub customers: Vec<usize>,
    pub load: f64,
    /// Parallel to `customers`; service starts at `arrival + wait`.
    pub schedule: Vec<ScheduleEntry>,
    /// Arrival time back at the depot.
    pub depot_return: f64,
}

impl Route {
    fn new() -> Self {
        Route {
            customers: Vec::new(),
            load: 0.0,
            schedule: Vec::new(),
            depot_return: 0.0,
        }
    }

    /// Recomputes load and the forward schedule from scratch.
    pub fn propagate(&mut self, inst: &Instance) {
        self.load = self.customers.iter().map(|&c| inst.nodes[c].demand).sum();
        self.schedule.clear();
        let mut time = inst.horizon_start();
        let mut prev = 0usize;
        for &c in &self.customers {
            let arrival = time + inst.dist(prev, c);
            let node = &inst.nodes[c];
            let wait = (node.ready - arrival).max(0.0);
            self.schedule.push(ScheduleEntry { arrival, wait });
            time = arrival + wait + node.service;
            prev = c;
        }
        self.depot_return = time + inst.dist(prev, 0);
    }

    fn leg_cost(&self, inst: &Instance) -> f64 {
        let mut cost = 0.0;
        let mut prev = 0usize;
        for &c in &self.customers {
            cost += inst.dist(prev, c);
            prev = c;
        }
        if !self.customers.is_empty() {
            cost += inst.dist(prev, 0);
        }
        cost
    }
}

/// A (possibly partial) solution: routes plus the pool of removed customers.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub routes: Vec<Route>,
    pub removed: BTreeSet<usize>,
    /// Cached total travel distance, maintained incrementally.
    pub cost: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("customer id {0} is not a customer of this instance")]
    UnknownCustomer(usize),
    #[error("route {route} position {position} out of range")]
    PositionOutOfRange { route: usize, position: usize },
    #[error("insertion of customer {0} is infeasible")]
    InfeasibleApplication(usize),
    #[error("customer {0} is not currently served")]
    NotServed(usize),
    #[error("customer {0} is not in the removed pool")]
    NotRemoved(usize),
    #[error("customer {0} cannot be served by any single route")]
    UnservableCustomer(usize),
}

/// Outcome of a speculative insertion: the cost delta, or an explicit
/// infeasibility marker (never a sentinel cost).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InsertionEval {
    Feasible { delta: f64 },
    Infeasible,
}

impl InsertionEval {
    pub fn delta(&self) -> Option<f64> {
        match self {
            InsertionEval::Feasible { delta } => Some(*delta),
            InsertionEval::Infeasible => None,
        }
    }
}

/// A constraint violation found by [`check_feasible`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    CapacityExceeded { route: usize },
    TimeWindowMissed { route: usize, stop: usize },
    LateDepotReturn { route: usize },
}

/// Report-style result of a feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub unserved: Vec<usize>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty() && self.unserved.is_empty()
    }
}

impl Solution {
    /// All customers removed, no routes.
    pub fn empty(inst: &Instance) -> Self {
        Solution {
            routes: Vec::new(),
            removed: (1..=inst.n()).collect(),
            cost: 0.0,
        }
    }

    pub fn served_count(&self) -> usize {
        self.routes.iter().map(|r| r.customers.len()).sum()
    }

    /// Served customers in route order; the deterministic iteration order
    /// used by the seeded operators.
    pub fn served_customers(&self) -> Vec<usize> {
        self.routes
            .iter()
            .flat_map(|r| r.customers.iter().copied())
            .collect()
    }

    /// Locates a served customer as `(route index, position)`.
    pub fn locate(&self, customer: usize) -> Option<(usize, usize)> {
        for (ri, route) in self.routes.iter().enumerate() {
            if let Some(pos) = route.customers.iter().position(|&c| c == customer) {
                return Some((ri, pos));
            }
        }
        None
    }

    /// Dump consumed by the harness and `--emit-solution`.
    pub fn dump(&self, inst: &Instance) -> SolutionDump {
        SolutionDump {
            cost: self.cost,
            removed: self.removed.iter().copied().collect(),
            routes: self
                .routes
                .iter()
                .map(|r| RouteDump {
                    customers: r.customers.clone(),
                    load: r.load,
                    schedule: (inst.kind == ProblemKind::Vrptw).then(|| r.schedule.clone()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolutionDump {
    pub cost: f64,
    pub removed: Vec<usize>,
    pub routes: Vec<RouteDump>,
}

#[derive(Debug, Serialize)]
pub struct RouteDump {
    pub customers: Vec<usize>,
    pub load: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ScheduleEntry>>,
}

/// Sum of Euclidean leg lengths depot -> ... -> depot over all routes,
/// recomputed from scratch. Empty routes contribute 0.
pub fn total_cost(sol: &Solution, inst: &Instance) -> Result<f64, RoutingError> {
    let n = inst.n();
    for route in &sol.routes {
        for &c in &route.customers {
            if c == 0 || c > n {
                return Err(RoutingError::UnknownCustomer(c));
            }
        }
    }
    Ok(sol.routes.iter().map(|r| r.leg_cost(inst)).sum())
}

/// Checks capacity, time windows and depot return per route, and that no
/// customer is left unserved. Reports the first violation per route.
pub fn check_feasible(sol: &Solution, inst: &Instance) -> FeasibilityReport {
    let mut violations = Vec::new();
    for (ri, route) in sol.routes.iter().enumerate() {
        if route.load > inst.capacity + 1e-9 {
            violations.push(Violation::CapacityExceeded { route: ri });
            continue;
        }
        if inst.kind == ProblemKind::Vrptw {
            let mut violated = false;
            for (si, (&c, entry)) in route.customers.iter().zip(&route.schedule).enumerate() {
                if entry.arrival > inst.nodes[c].due + 1e-9 {
                    violations.push(Violation::TimeWindowMissed { route: ri, stop: si });
                    violated = true;
                    break;
                }
            }
            if !violated && route.depot_return > inst.horizon_end() + 1e-9 {
                violations.push(Violation::LateDepotReturn { route: ri });
            }
        }
    }
    FeasibilityReport {
        violations,
        unserved: sol.removed.iter().copied().collect(),
    }
}

/// Cost delta of inserting `customer` at `(route_index, position)` if the
/// capacity and all downstream time windows stay satisfied. `route_index`
/// equal to `routes.len()` addresses a fresh route (position 0 only).
/// Does not mutate the solution.
pub fn evaluate_insertion(
    sol: &Solution,
    inst: &Instance,
    customer: usize,
    route_index: usize,
    position: usize,
) -> Result<InsertionEval, RoutingError> {
    if customer == 0 || customer > inst.n() {
        return Err(RoutingError::UnknownCustomer(customer));
    }
    if !sol.removed.contains(&customer) {
        return Err(RoutingError::NotRemoved(customer));
    }
    let node = &inst.nodes[customer];

    if route_index == sol.routes.len() {
        // fresh out-and-back route
        if position != 0 {
            return Err(RoutingError::PositionOutOfRange {
                route: route_index,
                position,
            });
        }
        return Ok(eval_fresh_route(inst, customer, node));
    }
    let route = sol
        .routes
        .get(route_index)
        .ok_or(RoutingError::PositionOutOfRange {
            route: route_index,
            position,
        })?;
    if position > route.customers.len() {
        return Err(RoutingError::PositionOutOfRange {
            route: route_index,
            position,
        });
    }
    if route.load + node.demand > inst.capacity + 1e-9 {
        return Ok(InsertionEval::Infeasible);
    }

    let prev = if position == 0 {
        0
    } else {
        route.customers[position - 1]
    };
    let next = if position == route.customers.len() {
        0
    } else {
        route.customers[position]
    };
    let delta = inst.dist(prev, customer) + inst.dist(customer, next) - inst.dist(prev, next);

    if inst.kind == ProblemKind::Vrptw {
        // forward time propagation from the insertion point
        let mut time = if position == 0 {
            inst.horizon_start()
        } else {
            let entry = route.schedule[position - 1];
            entry.arrival + entry.wait + inst.nodes[prev].service
        };
        let arrival = time + inst.dist(prev, customer);
        if arrival > node.due + 1e-9 {
            return Ok(InsertionEval::Infeasible);
        }
        time = arrival.max(node.ready) + node.service;
        let mut from = customer;
        for pos in position..route.customers.len() {
            let c = route.customers[pos];
            let arr = time + inst.dist(from, c);
            if arr <= route.schedule[pos].arrival + 1e-12 {
                // downstream unchanged from here on
                return Ok(InsertionEval::Feasible { delta });
            }
            if arr > inst.nodes[c].due + 1e-9 {
                return Ok(InsertionEval::Infeasible);
            }
            time = arr.max(inst.nodes[c].ready) + inst.nodes[c].service;
            from = c;
        }
        if time + inst.dist(from, 0) > inst.horizon_end() + 1e-9 {
            return Ok(InsertionEval::Infeasible);
        }
    }
    Ok(InsertionEval::Feasible { delta })
}

fn eval_fresh_route(
    inst: &Instance,
    customer: usize,
    node: &crate::instance::Node,
) -> InsertionEval {
    if node.demand > inst.capacity + 1e-9 {
        return InsertionEval::Infeasible;
    }
    let out = inst.dist(0, customer);
    if inst.kind == ProblemKind::Vrptw {
        let arrival = inst.horizon_start() + out;
        if arrival > node.due + 1e-9 {
            return InsertionEval::Infeasible;
        }
        let back = arrival.max(node.ready) + node.service + out;
        if back > inst.horizon_end() + 1e-9 {
            return InsertionEval::Infeasible;
        }
    }
    InsertionEval::Feasible { delta: 2.0 * out }
}

/// Moves `customer` from the removed pool into the route, updating the
/// cached cost by the insertion delta and re-propagating the schedule.
pub fn apply_insertion(
    sol: &mut Solution,
    inst: &Instance,
    customer: usize,
    route_index: usize,
    position: usize,
) -> Result<f64, RoutingError> {
    let delta = match evaluate_insertion(sol, inst, customer, route_index, position)? {
        InsertionEval::Feasible { delta } => delta,
        InsertionEval::Infeasible => return Err(RoutingError::InfeasibleApplication(customer)),
    };
    if route_index == sol.routes.len() {
        sol.routes.push(Route::new());
    }
    let route = &mut sol.routes[route_index];
    route.customers.insert(position, customer);
    route.propagate(inst);
    sol.removed.remove(&customer);
    sol.cost += delta;
    Ok(delta)
}

/// Moves a served customer to the removed pool, splicing its route and
/// applying the cost delta. A route emptied by the removal is deleted.
pub fn remove_customer(
    sol: &mut Solution,
    inst: &Instance,
    customer: usize,
) -> Result<f64, RoutingError> {
    let (ri, pos) = sol
        .locate(customer)
        .ok_or(RoutingError::NotServed(customer))?;
    let route = &mut sol.routes[ri];
    let prev = if pos == 0 { 0 } else { route.customers[pos - 1] };
    let next = if pos + 1 == route.customers.len() {
        0
    } else {
        route.customers[pos + 1]
    };
    let delta = inst.dist(prev, next) - inst.dist(prev, customer) - inst.dist(customer, next);
    route.customers.remove(pos);
    if route.customers.is_empty() {
        sol.routes.remove(ri);
    } else {
        route.propagate(inst);
    }
    sol.removed.insert(customer);
    sol.cost += delta;
    if sol.routes.is_empty() {
        // an emptied solution costs exactly zero; clear accumulated drift
        sol.cost = 0.0;
    }
    Ok(delta)
}

/// Seeded greedy nearest-feasible-neighbor construction. Each new route
/// starts at one of the three nearest feasible unserved customers (chosen by
/// the seeded generator) and is extended by the nearest feasible customer
/// until none fits, then a new route opens. Deterministic in `(inst, seed)`.
pub fn build_initial_solution(inst: &Instance, seed: u64) -> Result<Solution, RoutingError> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed_0117));

    let mut sol = Solution::empty(inst);
    while !sol.removed.is_empty() {
        let route_index = sol.routes.len();
        // candidates feasible as a fresh out-and-back route
        let mut starters: Vec<usize> = Vec::new();
        for &c in &sol.removed {
            match evaluate_insertion(&sol, inst, c, route_index, 0)? {
                InsertionEval::Feasible { .. } => starters.push(c),
                InsertionEval::Infeasible => {}
            }
        }
        if starters.is_empty() {
            let &worst = sol.removed.iter().next().unwrap();
            return Err(RoutingError::UnservableCustomer(worst));
        }
        starters.sort_by(|&a, &b| {
            inst.dist(0, a)
                .partial_cmp(&inst.dist(0, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let pick = starters[rng.gen_range(0..starters.len().min(3))];
        apply_insertion(&mut sol, inst, pick, route_index, 0)?;

        // extend with the nearest feasible unserved customer (append only)
        loop {
            let route = &sol.routes[route_index];
            let last = *route.customers.last().unwrap();
            let tail = route.customers.len();
            let mut best: Option<(f64, usize)> = None;
            for &c in &sol.removed {
                if let InsertionEval::Feasible { .. } =
                    evaluate_insertion(&sol, inst, c, route_index, tail)?
                {
                    let d = inst.dist(last, c);
                    if best.map_or(true, |(bd, bc)| d < bd || (d == bd && c < bc)) {
                        best = Some((d, c));
                    }
                }
            }
            match best {
                Some((_, c)) => {
                    apply_insertion(&mut sol, inst, c, route_index, tail)?;
                }
                None => break,
            }
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_cvrp, synthetic_cvrp, synthetic_vrptw};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(coords: &[(f64, f64)], demands: &[f64], cap: f64) -> Instance {
        let mut text = format!(
            "NAME : toy\nDIMENSION : {}\nCAPACITY : {}\nNODE_COORD_SECTION\n",
            coords.len(),
            cap
        );
        for (i, (x, y)) in coords.iter().enumerate() {
            text.push_str(&format!("{} {} {}\n", i + 1, x, y));
        }
        text.push_str("DEMAND_SECTION\n");
        for (i, d) in demands.iter().enumerate() {
            text.push_str(&format!("{} {}\n", i + 1, d));
        }
        text.push_str("DEPOT_SECTION\n1\n-1\nEOF\n");
        parse_cvrp(&text).unwrap()
    }

    /// Independent leg-by-leg re-summation used as the cost oracle.
    fn recompute(sol: &Solution, inst: &Instance) -> f64 {
        let mut total = 0.0;
        for route in &sol.routes {
            let mut prev = 0;
            for &c in &route.customers {
                total += ((inst.nodes[prev].x - inst.nodes[c].x).powi(2)
                    + (inst.nodes[prev].y - inst.nodes[c].y).powi(2))
                .sqrt();
                prev = c;
            }
            if !route.customers.is_empty() {
                total += ((inst.nodes[prev].x - inst.nodes[0].x).powi(2)
                    + (inst.nodes[prev].y - inst.nodes[0].y).powi(2))
                .sqrt();
            }
        }
        total
    }

    #[test]
    fn empty_solution_costs_zero() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let sol = Solution::empty(&inst);
        assert_eq!(total_cost(&sol, &inst).unwrap(), 0.0);
    }

    #[test]
    fn single_customer_out_and_back() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        assert_relative_eq!(sol.cost, 10.0);
        assert_relative_eq!(total_cost(&sol, &inst).unwrap(), 10.0);
    }

    #[test]
    fn random_solution_cost_matches_oracle() {
        let inst = synthetic_cvrp(8, 3);
        let sol = build_initial_solution(&inst, 1).unwrap();
        assert_relative_eq!(
            total_cost(&sol, &inst).unwrap(),
            recompute(&sol, &inst),
            max_relative = 1e-12
        );
        assert_relative_eq!(sol.cost, recompute(&sol, &inst), max_relative = 1e-9);
    }

    #[test]
    fn unknown_customer_is_reported() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let mut sol = Solution::empty(&inst);
        sol.routes.push(Route {
            customers: vec![9],
            load: 0.0,
            schedule: Vec::new(),
            depot_return: 0.0,
        });
        assert_eq!(
            total_cost(&sol, &inst).unwrap_err(),
            RoutingError::UnknownCustomer(9)
        );
    }

    #[test]
    fn all_removed_is_infeasible() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let sol = Solution::empty(&inst);
        let report = check_feasible(&sol, &inst);
        assert!(!report.is_feasible());
        assert_eq!(report.unserved, vec![1]);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn load_at_capacity_is_feasible() {
        let inst = toy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], &[0.0, 5.0, 5.0], 10.0);
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        apply_insertion(&mut sol, &inst, 2, 0, 1).unwrap();
        assert_eq!(sol.routes[0].load, 10.0);
        assert!(check_feasible(&sol, &inst).is_feasible());
    }

    #[test]
    fn late_arrival_is_a_time_window_violation() {
        let text = "tw\n\nVEHICLE\nNUMBER     CAPACITY\n  5         100\n\nCUSTOMER\n\
            CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME\n\n\
            0 0 0 0 0 100 0\n1 10 0 1 0 12 5\n2 30 0 1 0 35 5\n";
        let inst = crate::instance::parse_solomon(text).unwrap();
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        // force the violation: splice 2 in front without feasibility checks
        sol.routes[0].customers.insert(0, 2);
        sol.removed.remove(&2);
        sol.routes[0].propagate(&inst);
        // arrive 2 at 30, depart 35, arrive 1 at 55 > 12
        let report = check_feasible(&sol, &inst);
        assert_eq!(
            report.violations,
            vec![Violation::TimeWindowMissed { route: 0, stop: 1 }]
        );
    }

    #[test]
    fn insertion_into_empty_solution() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let sol = Solution::empty(&inst);
        let eval = evaluate_insertion(&sol, &inst, 1, 0, 0).unwrap();
        assert_eq!(eval, InsertionEval::Feasible { delta: 10.0 });
    }

    #[test]
    fn overload_insertion_is_infeasible() {
        let inst = toy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], &[0.0, 6.0, 5.0], 10.0);
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        let eval = evaluate_insertion(&sol, &inst, 2, 0, 1).unwrap();
        assert_eq!(eval, InsertionEval::Infeasible);
    }

    #[test]
    fn position_out_of_range_is_an_error() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let sol = Solution::empty(&inst);
        assert!(matches!(
            evaluate_insertion(&sol, &inst, 1, 0, 1),
            Err(RoutingError::PositionOutOfRange { .. })
        ));
        assert!(matches!(
            evaluate_insertion(&sol, &inst, 1, 3, 0),
            Err(RoutingError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn insertion_delta_matches_recompute_oracle() {
        let inst = synthetic_cvrp(8, 11);
        let mut sol = build_initial_solution(&inst, 2).unwrap();
        remove_customer(&mut sol, &inst, 3).unwrap();
        remove_customer(&mut sol, &inst, 6).unwrap();
        let before = recompute(&sol, &inst);
        for ri in 0..=sol.routes.len() {
            let max_pos = if ri == sol.routes.len() {
                0
            } else {
                sol.routes[ri].customers.len()
            };
            for pos in 0..=max_pos {
                if let InsertionEval::Feasible { delta } =
                    evaluate_insertion(&sol, &inst, 3, ri, pos).unwrap()
                {
                    let mut trial = sol.clone();
                    apply_insertion(&mut trial, &inst, 3, ri, pos).unwrap();
                    let after = recompute(&trial, &inst);
                    assert_relative_eq!(delta, after - before, max_relative = 1e-9);
                    assert_relative_eq!(trial.cost, after, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn vrptw_downstream_window_check() {
        // depot horizon [0, 100]; inserting 2 first pushes customer 1 late
        let text = "tw\n\nVEHICLE\nNUMBER     CAPACITY\n  5         100\n\nCUSTOMER\n\
            CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME\n\n\
            0 0 0 0 0 100 0\n1 10 0 1 0 12 5\n2 5 0 1 0 50 5\n";
        let inst = crate::instance::parse_solomon(text).unwrap();
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        // inserting 2 before 1: arrive 2 at 5, depart 10, arrive 1 at 15 > 12
        assert_eq!(
            evaluate_insertion(&sol, &inst, 2, 0, 0).unwrap(),
            InsertionEval::Infeasible
        );
        // inserting 2 after 1 is fine: arrive 1 at 10, depart 15, arrive 2 at 20
        assert!(matches!(
            evaluate_insertion(&sol, &inst, 2, 0, 1).unwrap(),
            InsertionEval::Feasible { .. }
        ));
    }

    #[test]
    fn remove_sole_customer_deletes_route() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let mut sol = Solution::empty(&inst);
        apply_insertion(&mut sol, &inst, 1, 0, 0).unwrap();
        let delta = remove_customer(&mut sol, &inst, 1).unwrap();
        assert_relative_eq!(delta, -10.0);
        assert!(sol.routes.is_empty());
        assert_relative_eq!(sol.cost, 0.0);
        assert!(sol.removed.contains(&1));
    }

    #[test]
    fn middle_removal_uses_splice_identity() {
        let inst = toy(
            &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 0.0)],
            &[0.0, 1.0, 1.0, 1.0],
            10.0,
        );
        let mut sol = Solution::empty(&inst);
        for (pos, c) in [1, 2, 3].iter().enumerate() {
            apply_insertion(&mut sol, &inst, *c, 0, pos).unwrap();
        }
        let expected = inst.dist(1, 3) - inst.dist(1, 2) - inst.dist(2, 3);
        let delta = remove_customer(&mut sol, &inst, 2).unwrap();
        assert_relative_eq!(delta, expected);
        assert_relative_eq!(sol.cost, recompute(&sol, &inst), max_relative = 1e-9);
    }

    #[test]
    fn not_served_removal_is_an_error() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let mut sol = Solution::empty(&inst);
        assert_eq!(
            remove_customer(&mut sol, &inst, 1).unwrap_err(),
            RoutingError::NotServed(1)
        );
    }

    #[test]
    fn single_customer_initial_solution() {
        let inst = toy(&[(0.0, 0.0), (3.0, 4.0)], &[0.0, 1.0], 10.0);
        let sol = build_initial_solution(&inst, 0).unwrap();
        assert_eq!(sol.routes.len(), 1);
        assert_eq!(sol.routes[0].customers, vec![1]);
        assert_relative_eq!(sol.cost, 10.0);
    }

    #[test]
    fn initial_solution_is_deterministic() {
        let inst = synthetic_vrptw(25, 7, true);
        let a = build_initial_solution(&inst, 5).unwrap();
        let b = build_initial_solution(&inst, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_solution_is_feasible_on_vrptw_subsample() {
        let big = synthetic_vrptw(100, 0, true);
        let inst = crate::instance::subsample_instance(&big, 25, 0).unwrap();
        let sol = build_initial_solution(&inst, 0).unwrap();
        assert!(check_feasible(&sol, &inst).is_feasible());
        assert!(sol.removed.is_empty());
    }

    #[test]
    fn schedule_invariant_holds() {
        let inst = synthetic_vrptw(20, 3, false);
        let sol = build_initial_solution(&inst, 1).unwrap();
        for route in &sol.routes {
            for (&c, entry) in route.customers.iter().zip(&route.schedule) {
                let node = &inst.nodes[c];
                assert_relative_eq!(entry.wait, (node.ready - entry.arrival).max(0.0));
                let start = entry.arrival + entry.wait;
                assert!(start >= node.ready - 1e-9);
            }
        }
    }

    #[test]
    fn partition_and_cached_cost_survive_random_interleaving() {
        for seed in 0..6u64 {
            let inst = if seed % 2 == 0 {
                synthetic_cvrp(10, seed)
            } else {
                synthetic_vrptw(10, seed, false)
            };
            let mut sol = build_initial_solution(&inst, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                if !sol.removed.is_empty() && rng.gen_bool(0.5) {
                    let pool: Vec<usize> = sol.removed.iter().copied().collect();
                    let c = pool[rng.gen_range(0..pool.len())];
                    let ri = rng.gen_range(0..=sol.routes.len());
                    let pos = if ri == sol.routes.len() {
                        0
                    } else {
                        rng.gen_range(0..=sol.routes[ri].customers.len())
                    };
                    match evaluate_insertion(&sol, &inst, c, ri, pos).unwrap() {
                        InsertionEval::Feasible { .. } => {
                            apply_insertion(&mut sol, &inst, c, ri, pos).unwrap();
                        }
                        InsertionEval::Infeasible => {
                            let fresh = sol.routes.len();
                            apply_insertion(&mut sol, &inst, c, fresh, 0).unwrap();
                        }
                    }
                } else if sol.served_count() > 0 {
                    let served = sol.served_customers();
                    let c = served[rng.gen_range(0..served.len())];
                    remove_customer(&mut sol, &inst, c).unwrap();
                }
                // partition invariant
                let served = sol.served_customers();
                assert_eq!(served.len() + sol.removed.len(), inst.n());
                for c in &served {
                    assert!(!sol.removed.contains(c));
                }
                // incremental-cost invariant
                let full = total_cost(&sol, &inst).unwrap();
                let denom = full.abs().max(1.0);
                assert!((sol.cost - full).abs() / denom < 1e-6);
            }
        }
    }
}
