//! Seeded synthetic instance generators in the style of the classic CVRP and
//! VRPTW benchmark suites. Every generated instance is servable: demands fit
//! the capacity and every window is individually reachable from the depot.

use super::{Instance, Node, ProblemKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform random CVRP instance: integer coordinates on `[0, 100]^2`,
/// integer demands in `[1, 30]`, capacity 100.
pub fn synthetic_cvrp(n: usize, seed: u64) -> Instance {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(Node {
        id: 0,
        x: rng.gen_range(30..=70) as f64,
        y: rng.gen_range(30..=70) as f64,
        demand: 0.0,
        ready: 0.0,
        due: f64::INFINITY,
        service: 0.0,
    });
    for id in 1..=n {
        nodes.push(Node {
            id,
            x: rng.gen_range(0..=100) as f64,
            y: rng.gen_range(0..=100) as f64,
            demand: rng.gen_range(1..=30) as f64,
            ready: 0.0,
            due: f64::INFINITY,
            service: 0.0,
        });
    }
    Instance::new(
        format!("synth-cvrp-n{n}-s{seed}"),
        ProblemKind::Cvrp,
        100.0,
        nodes,
        None,
    )
    .expect("generator output is valid")
}

/// Random VRPTW instance with a Solomon-style layout: capacity 200, service
/// time 10, horizon `[0, 1000]`. With `clustered` the customers sit in a few
/// Gaussian clusters, otherwise they are uniform on `[0, 100]^2`. Windows are
/// drawn around a feasible visit time so each customer is individually
/// reachable from the depot.
pub fn synthetic_vrptw(n: usize, seed: u64, clustered: bool) -> Instance {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 1000.0;
    let service = 10.0;
    let (dx, dy) = (50.0, 50.0);

    let mut centers = Vec::new();
    if clustered {
        let k = (n / 10).clamp(2, 6);
        for _ in 0..k {
            centers.push((rng.gen_range(10.0..90.0), rng.gen_range(10.0..90.0)));
        }
    }

    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(Node {
        id: 0,
        x: dx,
        y: dy,
        demand: 0.0,
        ready: 0.0,
        due: horizon,
        service: 0.0,
    });
    for id in 1..=n {
        let (x, y) = if clustered {
            let (cx, cy) = centers[rng.gen_range(0..centers.len())];
            (
                (cx + rng.gen_range(-8.0..8.0f64)).clamp(0.0, 100.0),
                (cy + rng.gen_range(-8.0..8.0f64)).clamp(0.0, 100.0),
            )
        } else {
            (
                rng.gen_range(0..=100) as f64,
                rng.gen_range(0..=100) as f64,
            )
        };
        let travel = ((x - dx).powi(2) + (y - dy).powi(2)).sqrt();
        // latest service start that still allows returning to the depot
        let latest_start = horizon - service - travel;
        let center = rng.gen_range(travel..latest_start.max(travel + 1.0));
        let half_width = rng.gen_range(15.0..100.0);
        let ready = (center - half_width).max(0.0);
        let due = (center + half_width).min(latest_start).max(ready);
        nodes.push(Node {
            id,
            x,
            y,
            demand: rng.gen_range(1..=30) as f64,
            ready,
            due,
            service,
        });
    }
    let style = if clustered { "c" } else { "r" };
    Instance::new(
        format!("synth-vrptw-{style}-n{n}-s{seed}"),
        ProblemKind::Vrptw,
        200.0,
        nodes,
        Some(25),
    )
    .expect("generator output is valid")
}
