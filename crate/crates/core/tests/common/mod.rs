#![allow(dead_code)]

use std::sync::Arc;

use tkobench_core::graphgen::{BaseNetwork, Graph};
use tkobench_core::skeleton::{build_skeleton, build_skeleton_from_draws, DrawTables, Skeleton};

/// Graph on `n` nodes whose edges are the set bits of `mask` over the
/// upper-triangle pairs in row order.
pub fn graph_from_mask(n: usize, mask: u64) -> Graph {
    let mut edges = Vec::new();
    let mut bit = 0;
    for u in 0..n {
        for v in u + 1..n {
            if mask >> (bit % 64) & 1 == 1 {
                edges.push((u, v));
            }
            bit += 1;
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_skeleton(n: usize, horizon: usize, mask: u64, seed: u64) -> Skeleton {
    build_skeleton(BaseNetwork::explicit(graph_from_mask(n, mask)), horizon, seed)
}

/// SIR witness where removing agent 1 at step 1 enlarges the outbreak:
/// agent 2 is then infected later, after its only recovery chance, and
/// goes on to infect agents 4 and 5.
pub fn negative_tko_fixture() -> Skeleton {
    let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 3), (3, 2), (2, 4), (2, 5)]).unwrap();
    let horizon = 8;
    let mut tables = DrawTables::constant(&g, horizon, 1.0, 0.0, 1.0);
    tables.set_activation(&g, 0, 1, 0, 0.0);
    tables.set_activation(&g, 1, 2, 1, 0.0);
    tables.set_activation(&g, 0, 3, 2, 0.0);
    tables.set_activation(&g, 3, 2, 3, 0.0);
    for t in 4..horizon {
        tables.set_activation(&g, 2, 4, t, 0.0);
        tables.set_activation(&g, 2, 5, t, 0.0);
    }
    tables.set_recovery(&g, 2, 2, 0.0);
    build_skeleton_from_draws(Arc::new(BaseNetwork::explicit(g)), horizon, tables).unwrap()
}

/// Path 0-1-2, every contact active, certain transmission, no recovery.
pub fn path_fixture(horizon: usize) -> Skeleton {
    let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let tables = DrawTables::constant(&g, horizon, 0.0, 0.0, 1.0);
    build_skeleton_from_draws(BaseNetwork::explicit(g), horizon, tables).unwrap()
}
