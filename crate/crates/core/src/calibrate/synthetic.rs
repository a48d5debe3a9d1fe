//! Synthetic power-law networks and the degree-scaling check on them.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{AlgorithmSpec, ItemProjection, Propagator};
use crate::graph::{build_graph, BipartiteGraph};
use crate::{Error, Result};

/// `E[floor(X)]` for `X` Pareto(`x_min`, `nu`) truncated at `x_max`.
fn expected_floor_degree(x_min: f64, x_max: f64, nu: f64, cap: usize) -> f64 {
    let e = 1.0 - nu;
    let lo = x_min.powf(e);
    let hi = x_max.powf(e);
    (1..=cap)
        .map(|k| {
            let k = k as f64;
            if k <= x_min {
                1.0
            } else if k >= x_max {
                0.0
            } else {
                (k.powf(e) - hi) / (lo - hi)
            }
        })
        .sum()
}

/// Random bipartite graph whose item degrees follow a truncated power law
/// `p(k) ∝ k^(−nu)` on `[k_min, m]`, each item wired to distinct users chosen
/// uniformly at random.
///
/// `k_min` is solved so that the expected item degree matches `mean_degree`;
/// degrees are floored at 1, so means below what `k_min = 1` gives are
/// rounded up.
pub fn generate_power_law_bipartite(
    users: usize,
    items: usize,
    nu: f64,
    mean_degree: f64,
    seed: u64,
) -> Result<BipartiteGraph> {
    if users == 0 || items == 0 {
        return Err(Error::InvalidParameter(
            "need at least one user and one item".into(),
        ));
    }
    if !(nu > 1.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "power-law exponent {nu} must exceed 1"
        )));
    }
    let x_max = users as f64 + 1.0;
    let cap = users;
    let feasible_max = expected_floor_degree(x_max - 1e-9, x_max, nu, cap);
    if !(mean_degree >= 1.0 && mean_degree <= feasible_max) {
        return Err(Error::InvalidParameter(format!(
            "mean degree {mean_degree} infeasible with {users} users (range [1, {feasible_max}])"
        )));
    }

    let mut lo = 1.0;
    let mut hi = x_max - 1e-9;
    if expected_floor_degree(lo, x_max, nu, cap) < mean_degree {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if expected_floor_degree(mid, x_max, nu, cap) < mean_degree {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let x_min = lo;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = 1.0 - nu;
    let (a, b) = (x_min.powf(e), x_max.powf(e));
    let mut links = Vec::new();
    for item in 0..items as u32 {
        let u: f64 = rng.gen();
        let x = (a - u * (a - b)).powf(1.0 / e);
        let k = (x.floor() as usize).clamp(1, users);
        for user in index::sample(&mut rng, users, k) {
            links.push((user as u32, item));
        }
    }
    build_graph(users, items, &links)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    /// Score at most this many users (the first ones with links); `None` = all.
    pub users: Option<usize>,
    /// Ratio between consecutive degree-bucket edges.
    pub bucket_ratio: f64,
    pub min_items_per_bucket: usize,
    pub min_buckets: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            users: None,
            bucket_ratio: std::f64::consts::SQRT_2,
            min_items_per_bucket: 20,
            min_buckets: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBucket {
    pub mean_ln_degree: f64,
    pub mean_score: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub lambda: f64,
    pub slope: f64,
    pub intercept: f64,
    pub buckets: Vec<DegreeBucket>,
}

const USER_CHUNK: usize = 64;

/// Log–log slope of mean HHP score against item degree.
///
/// Each item's score is averaged over the scored users that have not
/// collected it; items are then grouped into logarithmic degree buckets and
/// `ln(mean score)` is regressed on mean `ln k` over the buckets holding at
/// least `min_items_per_bucket` items.
pub fn verify_scaling_exponent(
    g: &BipartiteGraph,
    lambda: f64,
    options: &ScalingOptions,
) -> Result<ScalingFit> {
    let spec = AlgorithmSpec::hhp(lambda)?;
    if !(options.bucket_ratio > 1.0) {
        return Err(Error::InvalidParameter("bucket ratio must exceed 1".into()));
    }
    let n = g.num_items();
    let projection = ItemProjection::build(g);
    let propagator = Propagator::new(&projection, &spec);

    let mut scored: Vec<u32> = (0..g.num_users() as u32)
        .filter(|&u| g.user_degree(u) > 0)
        .collect();
    if let Some(limit) = options.users {
        scored.truncate(limit);
    }

    // Fixed-size chunks keep the summation order independent of thread count.
    let partials: Vec<(Vec<f64>, Vec<u32>)> = scored
        .par_chunks(USER_CHUNK)
        .map(|chunk| {
            let mut sum = vec![0.0; n];
            let mut count = vec![0u32; n];
            let mut buf = vec![0.0; n];
            for &u in chunk {
                let own = g.items_of_user(u);
                propagator.scores_into(own, &mut buf);
                let mut held = own.iter().peekable();
                for item in 0..n as u32 {
                    if held.peek() == Some(&&item) {
                        held.next();
                        continue;
                    }
                    sum[item as usize] += buf[item as usize];
                    count[item as usize] += 1;
                }
            }
            (sum, count)
        })
        .collect();
    let mut sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    for (s, c) in partials {
        for i in 0..n {
            sum[i] += s[i];
            count[i] += c[i];
        }
    }

    let k_min = g
        .linked_item_degree_range()
        .map(|(lo, _)| lo as f64)
        .ok_or_else(|| Error::InvalidParameter("graph has no links".into()))?;
    let ln_ratio = options.bucket_ratio.ln();
    let mut buckets: std::collections::BTreeMap<usize, (f64, f64, usize)> = Default::default();
    for item in 0..n as u32 {
        let k = g.item_degree(item);
        if k == 0 || count[item as usize] == 0 {
            continue;
        }
        let ln_k = (k as f64).ln();
        let b = ((ln_k - k_min.ln()) / ln_ratio).floor() as usize;
        let slot = buckets.entry(b).or_default();
        slot.0 += ln_k;
        slot.1 += sum[item as usize] / count[item as usize] as f64;
        slot.2 += 1;
    }
    let buckets: Vec<DegreeBucket> = buckets
        .into_values()
        .filter(|&(_, _, c)| c >= options.min_items_per_bucket)
        .map(|(lk, s, c)| DegreeBucket {
            mean_ln_degree: lk / c as f64,
            mean_score: s / c as f64,
            items: c,
        })
        .collect();
    if buckets.len() < options.min_buckets {
        return Err(Error::TooFewBuckets {
            found: buckets.len(),
            needed: options.min_buckets,
            min_items: options.min_items_per_bucket,
        });
    }
    let xs: Vec<f64> = buckets.iter().map(|b| b.mean_ln_degree).collect();
    let ys: Vec<f64> = buckets.iter().map(|b| b.mean_score.ln()).collect();
    let (slope, intercept) = least_squares_line(&xs, &ys);
    Ok(ScalingFit {
        lambda,
        slope,
        intercept,
        buckets,
    })
}

/// Ordinary least-squares `y = slope·x + intercept`.
pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_graph() {
        let a = generate_power_law_bipartite(300, 200, 2.5, 6.0, 9).unwrap();
        let b = generate_power_law_bipartite(300, 200, 2.5, 6.0, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_power_law_bipartite(300, 200, 2.5, 6.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_mean_floors_every_degree_at_one() {
        let g = generate_power_law_bipartite(500, 400, 3.0, 1.0, 1).unwrap();
        assert!(g.item_degrees().iter().all(|&k| k >= 1));
    }

    #[test]
    fn mean_degree_is_close_to_target() {
        let g = generate_power_law_bipartite(2000, 2000, 3.0, 20.0, 4).unwrap();
        let mean = g.num_links() as f64 / 2000.0;
        assert!((mean - 20.0).abs() < 2.0, "{mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_power_law_bipartite(10, 10, 1.0, 2.0, 0).is_err());
        assert!(generate_power_law_bipartite(10, 10, 3.0, 50.0, 0).is_err());
        assert!(generate_power_law_bipartite(10, 10, 3.0, 0.5, 0).is_err());
    }

    #[test]
    fn too_few_buckets_is_an_error() {
        let g = generate_power_law_bipartite(50, 40, 3.0, 3.0, 2).unwrap();
        assert!(matches!(
            verify_scaling_exponent(&g, 0.5, &ScalingOptions::default()),
            Err(Error::TooFewBuckets { .. })
        ));
    }

    #[test]
    fn line_fit() {
        let (s, i) = least_squares_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12);
    }
}
