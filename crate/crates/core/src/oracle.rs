//! Dense reference implementations.
//!
//! These evaluate the transformation matrix entry by entry from the full
//! adjacency matrix, with no sharing of code paths with [`crate::diffusion`].
//! They are quadratic-to-cubic in the graph size and meant for test graphs.

use crate::diffusion::AlgorithmSpec;
use crate::graph::BipartiteGraph;

/// Hybridization parameter for a source item of degree `k_beta`, written out
/// directly from the per-algorithm formulas.
fn source_lambda(spec: &AlgorithmSpec, k_beta: f64) -> f64 {
    let lambda = match *spec {
        AlgorithmSpec::Pbs => 1.0,
        AlgorithmSpec::Hts => 0.0,
        AlgorithmSpec::Hhp { lambda } => lambda,
        AlgorithmSpec::Ohhp { gamma, k_max, .. } => (k_beta / k_max).powf(gamma),
        AlgorithmSpec::Dcb {
            curve,
            k_min,
            k_max,
        } => {
            let mut x = (k_beta - k_min) / (k_max - k_min);
            x = x.max(0.0).min(1.0);
            curve.a * (curve.b * x).exp() + curve.c * (curve.d * x).exp()
        }
    };
    lambda.max(0.0).min(1.0)
}

/// The full `n x n` transformation matrix, row `α`, column `β`.
///
/// Rows and columns of items without links are zero.
pub fn dense_transform_matrix(g: &BipartiteGraph, spec: &AlgorithmSpec) -> Vec<Vec<f64>> {
    let m = g.num_users();
    let n = g.num_items();
    let mut adjacency = vec![vec![0.0f64; n]; m];
    for (u, i) in g.links() {
        adjacency[u as usize][i as usize] = 1.0;
    }
    let user_degree: Vec<f64> = adjacency.iter().map(|row| row.iter().sum()).collect();
    let item_degree: Vec<f64> = (0..n)
        .map(|i| adjacency.iter().map(|row| row[i]).sum())
        .collect();

    let mut w = vec![vec![0.0f64; n]; n];
    for alpha in 0..n {
        if item_degree[alpha] == 0.0 {
            continue;
        }
        for beta in 0..n {
            if item_degree[beta] == 0.0 {
                continue;
            }
            let mut overlap = 0.0;
            for j in 0..m {
                if user_degree[j] > 0.0 {
                    overlap += adjacency[j][alpha] * adjacency[j][beta] / user_degree[j];
                }
            }
            let lambda = source_lambda(spec, item_degree[beta]);
            let denom = item_degree[alpha].powf(1.0 - lambda) * item_degree[beta].powf(lambda);
            w[alpha][beta] = overlap / denom;
        }
    }
    w
}

/// `W · a_u` for the user's indicator vector `a_u`.
pub fn dense_scores(w: &[Vec<f64>], g: &BipartiteGraph, user: u32) -> Vec<f64> {
    let own = g.items_of_user(user);
    w.iter()
        .map(|row| own.iter().map(|&b| row[b as usize]).sum())
        .collect()
}

/// Position of `item` among `candidates`, averaging over ties. Computed by
/// counting strictly better and equal candidates.
pub fn brute_force_midrank(scores: &[f64], candidates: &[u32], item: u32) -> f64 {
    let s = scores[item as usize];
    let better = candidates
        .iter()
        .filter(|&&c| scores[c as usize] > s)
        .count() as f64;
    let tied = candidates
        .iter()
        .filter(|&&c| scores[c as usize] == s)
        .count() as f64;
    better + (tied + 1.0) / 2.0
}
