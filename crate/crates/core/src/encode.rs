//! Solution-state encoding: a weighted graph over the current solution
//! (static k-NN backbone plus route-induced arcs, inverse-distance weights),
//! normalized node features (4 columns for CVRP, 10 for VRPTW), a two-layer
//! GCN, attention-weighted average + element-wise max pooling into
//! `g` of length `2d`, and the destroy/repair state vectors `[g|rho|d~]`.

use crate::instance::{Instance, ProblemKind};
use crate::nn::{NnError, ParamStore, Tape, Tensor2, Var};
use crate::routing::Solution;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Distances below this are clamped when inverting to edge weights.
const MIN_DIST: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("feature builder does not match the instance kind")]
    KindMismatch,
    #[error("cannot pool an empty embedding matrix")]
    EmptyGraph,
    #[error("bad state context: {0}")]
    BadContext(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Weighted graph plus node features for one solution snapshot.
#[derive(Debug, Clone)]
pub struct SolutionGraph {
    /// Undirected edges `(u, v, weight)` with `u < v`, self-loops excluded.
    pub edges: Vec<(usize, usize, f64)>,
    /// `(n+1) x feature_dim` node feature matrix.
    pub features: Tensor2,
    /// Symmetrically degree-normalized dense adjacency with self-loops.
    pub norm_adj: Tensor2,
}

/// Which actor a state feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Destroy,
    Repair,
}

/// Search-phase context appended to the pooled embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateContext {
    pub kind: StateKind,
    /// Fraction of customers currently removed.
    pub rho: f64,
    /// Destroy operator id normalized to [0, 1].
    pub destroy_id_norm: f64,
}

impl StateContext {
    pub fn destroy() -> Self {
        StateContext {
            kind: StateKind::Destroy,
            rho: 0.0,
            destroy_id_norm: 0.0,
        }
    }

    pub fn repair(rho: f64, destroy_id: usize, num_destroy_ops: usize) -> Self {
        StateContext {
            kind: StateKind::Repair,
            rho,
            destroy_id_norm: destroy_id as f64 / 1.0f64.max(num_destroy_ops as f64 - 1.0),
        }
    }
}

/// Builds the solution graph: undirected k-NN edges (symmetrized, distance
/// ties with the k-th neighbor included), arcs between consecutive stops of
/// every route including depot legs, weight `1 / max(d, 1e-6)`, and
/// self-loops of weight 1 folded into the normalized adjacency.
pub fn build_graph(inst: &Instance, sol: &Solution, k: usize) -> SolutionGraph {
    let n_nodes = inst.nodes.len();
    let mut weights = vec![0.0f64; n_nodes * n_nodes];
    let set_edge = |u: usize, v: usize, w: f64, buf: &mut Vec<f64>| {
        buf[u * n_nodes + v] = w;
        buf[v * n_nodes + u] = w;
    };

    // static k-NN backbone; neighbors tied with the k-th nearest are all
    // included so the edge set is a pure function of the geometry
    let k = k.min(n_nodes - 1);
    for u in 0..n_nodes {
        let mut near: Vec<(f64, usize)> = (0..n_nodes)
            .filter(|&v| v != u)
            .map(|v| (inst.dist(u, v), v))
            .collect();
        near.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let threshold = near[k - 1].0;
        for &(d, v) in near.iter().take_while(|&&(d, _)| d <= threshold) {
            set_edge(u, v, 1.0 / d.max(MIN_DIST), &mut weights);
        }
    }
    // dynamic route arcs
    for route in &sol.routes {
        let mut prev = 0usize;
        for &c in &route.customers {
            set_edge(prev, c, 1.0 / inst.dist(prev, c).max(MIN_DIST), &mut weights);
            prev = c;
        }
        set_edge(prev, 0, 1.0 / inst.dist(prev, 0).max(MIN_DIST), &mut weights);
    }

    let mut edges = Vec::new();
    for u in 0..n_nodes {
        for v in (u + 1)..n_nodes {
            let w = weights[u * n_nodes + v];
            if w > 0.0 {
                edges.push((u, v, w));
            }
        }
    }

    // self-loops, then symmetric degree normalization
    for u in 0..n_nodes {
        weights[u * n_nodes + u] = 1.0;
    }
    let mut inv_sqrt_deg = vec![0.0f64; n_nodes];
    for u in 0..n_nodes {
        let deg: f64 = (0..n_nodes).map(|v| weights[u * n_nodes + v]).sum();
        inv_sqrt_deg[u] = 1.0 / deg.sqrt();
    }
    let mut norm = Tensor2::zeros(n_nodes, n_nodes);
    for u in 0..n_nodes {
        for v in 0..n_nodes {
            let w = weights[u * n_nodes + v];
            if w > 0.0 {
                norm.set(u, v, w * inv_sqrt_deg[u] * inv_sqrt_deg[v]);
            }
        }
    }

    let features = match inst.kind {
        ProblemKind::Cvrp => node_features_cvrp(inst, sol).expect("kind checked"),
        ProblemKind::Vrptw => node_features_vrptw(inst, sol).expect("kind checked"),
    };

    SolutionGraph {
        edges,
        features,
        norm_adj: norm,
    }
}

fn coord_scale(inst: &Instance) -> f64 {
    inst.nodes
        .iter()
        .map(|n| n.x.abs().max(n.y.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-9)
}

fn served_flag(sol: &Solution, id: usize) -> f64 {
    if id == 0 || !sol.removed.contains(&id) {
        1.0
    } else {
        0.0
    }
}

/// CVRP features per node: `[x, y, q, served]` with coordinates scaled by
/// the instance-wide max absolute coordinate and demand by the capacity.
pub fn node_features_cvrp(inst: &Instance, sol: &Solution) -> Result<Tensor2, EncodeError> {
    if inst.kind != ProblemKind::Cvrp {
        return Err(EncodeError::KindMismatch);
    }
    let scale = coord_scale(inst);
    let mut feats = Tensor2::zeros(inst.nodes.len(), 4);
    for (i, node) in inst.nodes.iter().enumerate() {
        feats.set(i, 0, node.x / scale);
        feats.set(i, 1, node.y / scale);
        feats.set(i, 2, node.demand / inst.capacity);
        feats.set(i, 3, served_flag(sol, i));
    }
    Ok(feats)
}

/// VRPTW features per node: the four CVRP columns plus
/// `[(e-S)/H, (l-S)/H, w/max_w, s/max_s, t/H, wt/H]`. Window width and
/// service maxima are taken over customers; the depot's width column is 1
/// (it spans the whole horizon) and its service column 0. Arrival and
/// waiting columns come from the current schedule and are 0 for unserved
/// nodes and the depot.
pub fn node_features_vrptw(inst: &Instance, sol: &Solution) -> Result<Tensor2, EncodeError> {
    if inst.kind != ProblemKind::Vrptw {
        return Err(EncodeError::KindMismatch);
    }
    let scale = coord_scale(inst);
    let (s0, h) = (inst.horizon_start(), inst.horizon());
    let max_width = inst.nodes[1..]
        .iter()
        .map(|n| n.window_width())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let max_service = inst.nodes[1..]
        .iter()
        .map(|n| n.service)
        .fold(0.0f64, f64::max)
        .max(1e-9);

    let mut schedule = vec![(0.0f64, 0.0f64); inst.nodes.len()];
    for route in &sol.routes {
        for (&c, entry) in route.customers.iter().zip(&route.schedule) {
            schedule[c] = (entry.arrival, entry.wait);
        }
    }

    let mut feats = Tensor2::zeros(inst.nodes.len(), 10);
    for (i, node) in inst.nodes.iter().enumerate() {
        let (t, wt) = schedule[i];
        feats.set(i, 0, node.x / scale);
        feats.set(i, 1, node.y / scale);
        feats.set(i, 2, node.demand / inst.capacity);
        feats.set(i, 3, served_flag(sol, i));
        feats.set(i, 4, (node.ready - s0) / h);
        feats.set(i, 5, (node.due - s0) / h);
        feats.set(i, 6, if i == 0 { 1.0 } else { node.window_width() / max_width });
        feats.set(i, 7, node.service / max_service);
        feats.set(i, 8, t / h);
        feats.set(i, 9, wt / h);
    }
    Ok(feats)
}

/// Registers the encoder parameters (two GCN layers plus the attention
/// vector) on the store.
pub fn init_encoder_params(
    store: &mut ParamStore,
    feature_dim: usize,
    embed_dim: usize,
    rng: &mut ChaCha8Rng,
) {
    store.add_param("gcn.w1", Tensor2::glorot(feature_dim, embed_dim, rng));
    store.add_param("gcn.b1", Tensor2::zeros(1, embed_dim));
    store.add_param("gcn.w2", Tensor2::glorot(embed_dim, embed_dim, rng));
    store.add_param("gcn.b2", Tensor2::zeros(1, embed_dim));
    store.add_param("pool.attn", Tensor2::glorot(embed_dim, 1, rng));
}

/// Two GCN layers: `h' = relu(A_norm * (h * W) + b)`.
pub fn gcn_forward(
    tape: &mut Tape,
    store: &ParamStore,
    graph: &SolutionGraph,
) -> Result<Var, EncodeError> {
    let adj = tape.constant(graph.norm_adj.clone());
    let x = tape.constant(graph.features.clone());
    let w1 = tape.param(store, "gcn.w1")?;
    let b1 = tape.param(store, "gcn.b1")?;
    let w2 = tape.param(store, "gcn.w2")?;
    let b2 = tape.param(store, "gcn.b2")?;

    let xw = tape.matmul(x, w1)?;
    let agg = tape.matmul(adj, xw)?;
    let h1 = tape.add_bias(agg, b1)?;
    let h1 = tape.relu(h1);

    let hw = tape.matmul(h1, w2)?;
    let agg2 = tape.matmul(adj, hw)?;
    let h2 = tape.add_bias(agg2, b2)?;
    Ok(tape.relu(h2))
}

/// Attention-weighted average pooling concatenated with element-wise max
/// pooling: `g = [sum_i softmax(h a)_i h_i || max_i h_i]`, length `2d`.
pub fn pool(tape: &mut Tape, store: &ParamStore, embeddings: Var) -> Result<Var, EncodeError> {
    if tape.value(embeddings).rows == 0 {
        return Err(EncodeError::EmptyGraph);
    }
    let attn = tape.param(store, "pool.attn")?;
    let scores = tape.matmul(embeddings, attn)?;
    let scores_row = tape.transpose(scores);
    let alpha = tape.softmax_rows(scores_row);
    let avg = tape.matmul(alpha, embeddings)?;
    let mx = tape.col_max(embeddings)?;
    Ok(tape.concat_cols(avg, mx)?)
}

/// Appends the context scalars: destroy states are `[g | 0 | 0]`, repair
/// states `[g | rho | d~]` with `rho` in (0, 1] and `d~` in [0, 1].
pub fn assemble_state(tape: &mut Tape, g: Var, ctx: &StateContext) -> Result<Var, EncodeError> {
    let (rho, id) = match ctx.kind {
        StateKind::Destroy => (0.0, 0.0),
        StateKind::Repair => {
            if !(ctx.rho > 0.0 && ctx.rho <= 1.0) {
                return Err(EncodeError::BadContext(format!(
                    "destruction ratio {} outside (0, 1]",
                    ctx.rho
                )));
            }
            if !(0.0..=1.0).contains(&ctx.destroy_id_norm) {
                return Err(EncodeError::BadContext(format!(
                    "normalized destroy id {} outside [0, 1]",
                    ctx.destroy_id_norm
                )));
            }
            (ctx.rho, ctx.destroy_id_norm)
        }
    };
    let ctx_var = tape.constant(Tensor2::row_vector(&[rho, id]));
    Ok(tape.concat_cols(g, ctx_var)?)
}

/// Full encoding pipeline: GCN, pooling, context concatenation. The result
/// is a `1 x (2d + 2)` state vector on the tape.
pub fn encode_state(
    tape: &mut Tape,
    store: &ParamStore,
    graph: &SolutionGraph,
    ctx: &StateContext,
) -> Result<Var, EncodeError> {
    let embeddings = gcn_forward(tape, store, graph)?;
    let g = pool(tape, store, embeddings)?;
    assemble_state(tape, g, ctx)
}

/// Value-only encoding for tests and inspection.
pub fn encode_value(
    store: &ParamStore,
    graph: &SolutionGraph,
    ctx: &StateContext,
) -> Result<Vec<f64>, EncodeError> {
    let mut tape = Tape::new();
    let state = encode_state(&mut tape, store, graph, ctx)?;
    Ok(tape.value(state).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_cvrp, subsample_instance, synthetic_cvrp, synthetic_vrptw, Node};
    use crate::routing::build_initial_solution;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn store_for(feature_dim: usize, embed_dim: usize, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        init_encoder_params(&mut store, feature_dim, embed_dim, &mut rng);
        store
    }

    #[test]
    fn inverse_distance_edge_weight() {
        let inst = parse_cvrp(
            "NAME : t\nDIMENSION : 3\nCAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 2 0\n3 0 9\nDEMAND_SECTION\n1 0\n2 1\n3 1\nDEPOT_SECTION\n1\n-1\nEOF\n",
        )
        .unwrap();
        let sol = Solution::empty(&inst);
        let graph = build_graph(&inst, &sol, 2);
        let w = graph
            .edges
            .iter()
            .find(|&&(u, v, _)| u == 0 && v == 1)
            .map(|&(_, _, w)| w)
            .unwrap();
        assert_relative_eq!(w, 0.5);
    }

    #[test]
    fn route_arcs_are_present() {
        let inst = synthetic_cvrp(15, 0);
        let sol = build_initial_solution(&inst, 0).unwrap();
        let graph = build_graph(&inst, &sol, 1);
        let has_edge = |a: usize, b: usize| {
            let (u, v) = (a.min(b), a.max(b));
            graph.edges.iter().any(|&(eu, ev, _)| eu == u && ev == v)
        };
        for route in &sol.routes {
            let mut prev = 0usize;
            for &c in &route.customers {
                assert!(has_edge(prev, c), "missing arc {prev}-{c}");
                prev = c;
            }
            assert!(has_edge(prev, 0));
        }
    }

    #[test]
    fn coincident_nodes_get_clamped_weight() {
        let inst = parse_cvrp(
            "NAME : t\nDIMENSION : 3\nCAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 0 0\n3 5 5\nDEMAND_SECTION\n1 0\n2 1\n3 1\nDEPOT_SECTION\n1\n-1\nEOF\n",
        )
        .unwrap();
        let sol = Solution::empty(&inst);
        let graph = build_graph(&inst, &sol, 2);
        let w = graph
            .edges
            .iter()
            .find(|&&(u, v, _)| u == 0 && v == 1)
            .map(|&(_, _, w)| w)
            .unwrap();
        assert_relative_eq!(w, 1e6);
        assert!(w.is_finite());
    }

    #[test]
    fn cvrp_served_flag_tracks_removed_pool() {
        let inst = synthetic_cvrp(6, 1);
        let mut sol = build_initial_solution(&inst, 0).unwrap();
        crate::routing::remove_customer(&mut sol, &inst, 2).unwrap();
        let feats = node_features_cvrp(&inst, &sol).unwrap();
        assert_relative_eq!(feats.at(2, 3), 0.0);
        assert_relative_eq!(feats.at(1, 3), 1.0);
        assert_relative_eq!(feats.at(0, 3), 1.0);
        assert_relative_eq!(feats.at(0, 2), 0.0);
        // node at the max coordinate scales to magnitude 1
        let scale = super::coord_scale(&inst);
        let (imax, _) = inst
            .nodes
            .iter()
            .enumerate()
            .max_by(|a, b| {
                (a.1.x.abs().max(a.1.y.abs()))
                    .partial_cmp(&b.1.x.abs().max(b.1.y.abs()))
                    .unwrap()
            })
            .unwrap();
        let row_max = feats.at(imax, 0).abs().max(feats.at(imax, 1).abs());
        assert_relative_eq!(row_max, 1.0, epsilon = 1e-12);
        assert_relative_eq!(scale, inst.nodes[imax].x.abs().max(inst.nodes[imax].y.abs()));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let cvrp = synthetic_cvrp(5, 0);
        let vrptw = synthetic_vrptw(5, 0, false);
        let sc = Solution::empty(&cvrp);
        let sv = Solution::empty(&vrptw);
        assert_eq!(
            node_features_vrptw(&cvrp, &sc).unwrap_err(),
            EncodeError::KindMismatch
        );
        assert_eq!(
            node_features_cvrp(&vrptw, &sv).unwrap_err(),
            EncodeError::KindMismatch
        );
    }

    #[test]
    fn vrptw_feature_columns() {
        let inst = synthetic_vrptw(10, 2, false);
        let sol = build_initial_solution(&inst, 0).unwrap();
        let feats = node_features_vrptw(&inst, &sol).unwrap();
        // depot row: (e-S)/H = 0, (l-S)/H = 1
        assert_relative_eq!(feats.at(0, 4), 0.0);
        assert_relative_eq!(feats.at(0, 5), 1.0);
        // widest customer window scales to 1
        let widest = inst.nodes[1..]
            .iter()
            .map(|n: &Node| n.window_width())
            .fold(0.0f64, f64::max);
        let found = (1..=inst.n())
            .map(|i| feats.at(i, 6))
            .fold(0.0f64, f64::max);
        assert_relative_eq!(found, 1.0, epsilon = 1e-12);
        assert!(widest > 0.0);
        // unserved customer has zero arrival/wait columns
        let mut partial = sol.clone();
        crate::routing::remove_customer(&mut partial, &inst, 1).unwrap();
        let feats2 = node_features_vrptw(&inst, &partial).unwrap();
        assert_relative_eq!(feats2.at(1, 8), 0.0);
        assert_relative_eq!(feats2.at(1, 9), 0.0);
        assert_relative_eq!(feats2.at(1, 3), 0.0);
    }

    #[test]
    fn feature_entries_stay_in_sanity_band() {
        for seed in 0..4u64 {
            let inst = synthetic_vrptw(20, seed, seed % 2 == 0);
            let sol = build_initial_solution(&inst, seed).unwrap();
            let feats = node_features_vrptw(&inst, &sol).unwrap();
            for v in feats.data() {
                assert!((-1.0..=2.0).contains(v), "feature {v} outside band");
            }
        }
    }

    #[test]
    fn single_node_gcn_is_a_plain_dense_layer() {
        // single customer very far: keep k=0 edges impossible, so build a
        // 1-node graph by hand
        let mut store = store_for(4, 8, 0);
        let graph = SolutionGraph {
            edges: vec![],
            features: Tensor2::row_vector(&[0.5, -0.25, 0.1, 1.0]),
            norm_adj: Tensor2::from_vec(1, 1, vec![1.0]).unwrap(),
        };
        let mut tape = Tape::new();
        let h = gcn_forward(&mut tape, &store, &graph).unwrap();
        // reference: relu(relu(x W1 + b1) W2 + b2)
        let w1 = store.get("gcn.w1").unwrap().clone();
        let w2 = store.get("gcn.w2").unwrap().clone();
        let h1 = graph.features.matmul(&w1).unwrap().map(|v| v.max(0.0));
        let want = h1.matmul(&w2).unwrap().map(|v| v.max(0.0));
        for (got, want) in tape.value(h).data().iter().zip(want.data()) {
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
        store.zero_grads();
    }

    #[test]
    fn gcn_matches_dense_reference_on_small_graph() {
        let inst = synthetic_cvrp(4, 3);
        let sol = build_initial_solution(&inst, 0).unwrap();
        let graph = build_graph(&inst, &sol, 2);
        let store = store_for(4, 6, 1);
        let mut tape = Tape::new();
        let h = gcn_forward(&mut tape, &store, &graph).unwrap();
        // independent dense-matrix reference
        let relu = |t: &Tensor2| t.map(|v| v.max(0.0));
        let a = &graph.norm_adj;
        let h1 = relu(&add_bias_ref(
            &a.matmul(&graph.features.matmul(store.get("gcn.w1").unwrap()).unwrap())
                .unwrap(),
            store.get("gcn.b1").unwrap(),
        ));
        let h2 = relu(&add_bias_ref(
            &a.matmul(&h1.matmul(store.get("gcn.w2").unwrap()).unwrap())
                .unwrap(),
            store.get("gcn.b2").unwrap(),
        ));
        for (got, want) in tape.value(h).data().iter().zip(h2.data()) {
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    fn add_bias_ref(m: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = m.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                let v = out.at(r, c) + b.at(0, c);
                out.set(r, c, v);
            }
        }
        out
    }

    #[test]
    fn pool_of_single_node_duplicates_embedding() {
        let store = store_for(4, 5, 2);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor2::row_vector(&[1.0, -2.0, 0.5, 3.0, 0.0]));
        let g = pool(&mut tape, &store, h).unwrap();
        let v = tape.value(g).data();
        assert_eq!(v.len(), 10);
        assert_eq!(&v[..5], &v[5..]);
        assert_eq!(&v[..5], &[1.0, -2.0, 0.5, 3.0, 0.0]);
    }

    #[test]
    fn pooled_embedding_has_length_2d() {
        let inst = synthetic_cvrp(10, 0);
        let sol = build_initial_solution(&inst, 0).unwrap();
        let graph = build_graph(&inst, &sol, 10);
        let store = store_for(4, 64, 0);
        let mut tape = Tape::new();
        let h = gcn_forward(&mut tape, &store, &graph).unwrap();
        let g = pool(&mut tape, &store, h).unwrap();
        assert_eq!(tape.value(g).cols, 128);
        let state = assemble_state(&mut tape, g, &StateContext::destroy()).unwrap();
        assert_eq!(tape.value(state).cols, 130);
    }

    /// Rebuilds an instance and solution under a customer relabeling.
    fn permuted(
        inst: &Instance,
        sol: &Solution,
        perm: &[usize],
    ) -> (Instance, Solution) {
        // perm maps old customer id (1-based index into perm) to new id
        let mut nodes = vec![inst.nodes[0].clone()];
        let mut by_new: Vec<(usize, Node)> = inst.nodes[1..]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut node = n.clone();
                node.id = perm[i];
                (perm[i], node)
            })
            .collect();
        by_new.sort_by_key(|(id, _)| *id);
        nodes.extend(by_new.into_iter().map(|(_, n)| n));
        let inst2 = Instance::new(
            inst.name.clone(),
            inst.kind,
            inst.capacity,
            nodes,
            inst.vehicles,
        )
        .unwrap();
        let mut sol2 = sol.clone();
        for route in &mut sol2.routes {
            for c in &mut route.customers {
                *c = perm[*c - 1];
            }
            route.propagate(&inst2);
        }
        sol2.removed = sol.removed.iter().map(|&c| perm[c - 1]).collect();
        (inst2, sol2)
    }

    #[test]
    fn pooled_embedding_is_permutation_invariant() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..5u64 {
            let inst = synthetic_vrptw(12, seed, false);
            let mut sol = build_initial_solution(&inst, seed).unwrap();
            crate::routing::remove_customer(&mut sol, &inst, 3).unwrap();
            let store = store_for(10, 16, seed);
            let graph = build_graph(&inst, &sol, 5);
            let mut tape = Tape::new();
            let h = gcn_forward(&mut tape, &store, &graph).unwrap();
            let g = pool(&mut tape, &store, h).unwrap();
            let base = tape.value(g).data().to_vec();

            let mut perm: Vec<usize> = (1..=inst.n()).collect();
            perm.shuffle(&mut rng);
            let (inst2, sol2) = permuted(&inst, &sol, &perm);
            let graph2 = build_graph(&inst2, &sol2, 5);
            let mut tape2 = Tape::new();
            let h2 = gcn_forward(&mut tape2, &store, &graph2).unwrap();
            let g2 = pool(&mut tape2, &store, h2).unwrap();
            for (a, b) in base.iter().zip(tape2.value(g2).data()) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn state_context_rules() {
        let store = store_for(4, 4, 0);
        let inst = synthetic_cvrp(30, 0);
        let sol = build_initial_solution(&inst, 0).unwrap();
        let graph = build_graph(&inst, &sol, 5);
        // destroy state ends in exactly [0, 0]
        let v = encode_value(&store, &graph, &StateContext::destroy()).unwrap();
        assert_eq!(v[v.len() - 2], 0.0);
        assert_eq!(v[v.len() - 1], 0.0);
        // repair after removing 3 of 30 customers with destroy id 1 of 2
        let ctx = StateContext::repair(3.0 / 30.0, 1, 2);
        assert_relative_eq!(ctx.rho, 0.1);
        assert_relative_eq!(ctx.destroy_id_norm, 1.0);
        let v = encode_value(&store, &graph, &ctx).unwrap();
        assert_relative_eq!(v[v.len() - 2], 0.1);
        assert_relative_eq!(v[v.len() - 1], 1.0);
        // out-of-range context is rejected
        let bad = StateContext {
            kind: StateKind::Repair,
            rho: 1.5,
            destroy_id_norm: 0.0,
        };
        let mut tape = Tape::new();
        let g = tape.constant(Tensor2::row_vector(&[0.0; 8]));
        assert!(matches!(
            assemble_state(&mut tape, g, &bad),
            Err(EncodeError::BadContext(_))
        ));
    }

    #[test]
    fn rho_matches_removed_fraction_and_delta_flags() {
        let big = synthetic_vrptw(100, 1, true);
        let inst = subsample_instance(&big, 20, 0).unwrap();
        let mut sol = build_initial_solution(&inst, 0).unwrap();
        for c in [2, 5, 9] {
            crate::routing::remove_customer(&mut sol, &inst, c).unwrap();
        }
        let graph = build_graph(&inst, &sol, 5);
        for c in 1..=inst.n() {
            let want = if sol.removed.contains(&c) { 0.0 } else { 1.0 };
            assert_eq!(graph.features.at(c, 3), want);
        }
        let rho = sol.removed.len() as f64 / inst.n() as f64;
        assert_relative_eq!(rho, 0.15);
    }
}
