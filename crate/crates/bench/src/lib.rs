//! Seeded inputs for the pipeline benchmarks.

use dualid_core::auth::Graph;
use dualid_core::CostMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `k`×`k` matrix with costs uniform in [0, 1).
pub fn random_cost(k: usize, seed: u64) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CostMatrix::from_rows(
        (0..k)
            .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
            .collect(),
    )
}

/// An Erdős-Rényi graph on `n` vertices with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                g.add_edge(a, b);
            }
        }
    }
    g
}
