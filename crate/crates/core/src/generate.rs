//! Synthetic graph generators used for experiments and test fixtures.
//!
//! Both generators patch isolated nodes by linking each one to a random
//! partner (from its own block, for the SBM), so every output can be
//! embedded directly.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Pair};
use crate::seed::{rng_for, streams};

pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    stochastic_block_model(&[n], p, 0.0, seed)
}

/// Planted-partition SBM: blocks of the given sizes, edge probability
/// `p_in` inside a block and `p_out` across blocks.
pub fn stochastic_block_model(sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Graph> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let n: usize = sizes.iter().sum();
    if n < 2 || sizes.iter().any(|&s| s < 2) {
        return Err(Error::invalid("every block needs at least two nodes"));
    }
    let block: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat(b).take(s))
        .collect();
    let start: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let here = *acc;
            *acc += s;
            Some(here)
        })
        .collect();

    let mut rng = rng_for(seed, streams::GENERATOR);
    let mut edges: Vec<Pair> = Vec::new();
    let mut degree = vec![0usize; n];
    for u in 0..n {
        for v in u + 1..n {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    }
    for u in 0..n {
        if degree[u] == 0 {
            let b = block[u];
            let mut v = start[b] + rng.gen_range(0..sizes[b] - 1);
            if v >= u {
                v += 1;
            }
            edges.push((u.min(v), u.max(v)));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    Graph::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_is_deterministic_and_has_no_isolated_nodes() {
        let a = stochastic_block_model(&[40, 40], 0.1, 0.005, 9).unwrap();
        let b = stochastic_block_model(&[40, 40], 0.1, 0.005, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.min_degree() >= 1);
        assert_eq!(a.node_count(), 80);
    }

    #[test]
    fn sbm_blocks_are_denser_inside() {
        let g = stochastic_block_model(&[100, 100], 0.1, 0.01, 1).unwrap();
        let inside = g.edges().filter(|&(u, v)| (u < 100) == (v < 100)).count();
        assert!(inside > 3 * (g.edge_count() - inside));
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(erdos_renyi(10, 1.5, 0).is_err());
    }
}
