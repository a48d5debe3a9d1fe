//! DCB calibration.
//!
//! HHP is run over a grid of λ values and list lengths, recording the mean
//! training degree of the recommended items. Those means are min–max
//! rescaled to `k̃ ∈ [0, 1]`, and a bi-exponential `λ = a·e^(b·k̃) + c·e^(d·k̃)`
//! is fitted through the pooled `(k̃, λ)` points. DCB then evaluates that
//! curve at each item's own normalized degree.

mod fit;
mod synthetic;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{top_l, AlgorithmSpec, ItemProjection, Propagator};
use crate::graph::BipartiteGraph;
use crate::{Error, Result};

pub use crate::diffusion::BiExponential;
pub use fit::{fit_double_exponential, rms_residual, CurveFit, FitOptions};
pub use synthetic::{
    generate_power_law_bipartite, verify_scaling_exponent, DegreeBucket, ScalingFit, ScalingOptions,
};

/// Mean training degree of the items in all top-`list_len` lists of HHP(λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub list_len: usize,
    pub mean_degree: f64,
}

/// `λ ∈ {0, 0.05, ..., 1}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

pub fn default_list_lengths() -> Vec<usize> {
    vec![10, 20, 30, 40, 50]
}

/// Runs HHP at every grid value and records the mean recommended degree for
/// every list length. Points come out grid-major, in the given orders.
///
/// `user_limit` restricts the lists to the first users with links.
pub fn sweep_mean_degree(
    g: &BipartiteGraph,
    lambda_grid: &[f64],
    list_lengths: &[usize],
    user_limit: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    let projection = ItemProjection::build(g);
    sweep_with_projection(g, &projection, lambda_grid, list_lengths, user_limit)
}

pub fn sweep_with_projection(
    g: &BipartiteGraph,
    projection: &ItemProjection,
    lambda_grid: &[f64],
    list_lengths: &[usize],
    user_limit: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if list_lengths.is_empty() || list_lengths.contains(&0) {
        return Err(Error::InvalidParameter(
            "list lengths must be nonempty and >= 1".into(),
        ));
    }
    let longest = *list_lengths.iter().max().unwrap_or(&1);
    let mut users: Vec<u32> = (0..g.num_users() as u32)
        .filter(|&u| g.user_degree(u) > 0)
        .collect();
    if let Some(limit) = user_limit {
        users.truncate(limit);
    }
    let degree = g.item_degrees();
    let n = g.num_items();

    let mut points = Vec::with_capacity(lambda_grid.len() * list_lengths.len());
    for &lambda in lambda_grid {
        let spec = AlgorithmSpec::hhp(lambda)?;
        let propagator = Propagator::new(projection, &spec);
        // Per user: cumulative degree sums of the ranked list.
        let prefix: Vec<Vec<u64>> = users
            .par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, &u| {
                    let own = g.items_of_user(u);
                    propagator.scores_into(own, buf);
                    let list = top_l(u, buf, own, longest);
                    let mut acc = 0u64;
                    list.items
                        .iter()
                        .map(|&i| {
                            acc += degree[i as usize] as u64;
                            acc
                        })
                        .collect()
                },
            )
            .collect();
        for &len in list_lengths {
            let (mut total, mut entries) = (0u64, 0u64);
            for p in &prefix {
                let take = len.min(p.len());
                if take > 0 {
                    total += p[take - 1];
                    entries += take as u64;
                }
            }
            points.push(SweepPoint {
                lambda,
                list_len: len,
                mean_degree: if entries > 0 {
                    total as f64 / entries as f64
                } else {
                    f64::NAN
                },
            });
        }
    }
    Ok(points)
}

/// Extremum scope for the mean-degree rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// One min/max over the whole sweep (all λ, all list lengths).
    Global,
    /// A separate min/max per list length, taken over λ.
    #[default]
    PerList,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledPoint {
    pub lambda: f64,
    pub list_len: usize,
    pub k_tilde: f64,
    pub lambda_tilde: f64,
}

fn extremes<'a>(points: impl Iterator<Item = &'a SweepPoint>) -> (f64, f64) {
    points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.mean_degree), hi.max(p.mean_degree))
    })
}

/// Min–max rescales each point's mean degree; `λ̃ = λ`.
pub fn rescale(points: &[SweepPoint], normalization: Normalization) -> Result<Vec<RescaledPoint>> {
    if points.iter().any(|p| !p.mean_degree.is_finite()) {
        return Err(Error::InvalidParameter(
            "sweep holds a point without lists".into(),
        ));
    }
    let global = extremes(points.iter());
    let mut per_list: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for p in points {
        let e = per_list
            .entry(p.list_len)
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(p.mean_degree);
        e.1 = e.1.max(p.mean_degree);
    }
    let bounds_for = |len: usize| match normalization {
        Normalization::Global => global,
        Normalization::PerList => per_list[&len],
    };
    points
        .iter()
        .map(|p| {
            let (lo, hi) = bounds_for(p.list_len);
            if !(hi > lo) {
                return Err(Error::DegenerateSweep(lo));
            }
            Ok(RescaledPoint {
                lambda: p.lambda,
                list_len: p.list_len,
                k_tilde: (p.mean_degree - lo) / (hi - lo),
                lambda_tilde: p.lambda,
            })
        })
        .collect()
}

/// How far each list length's rescaled curve sits from the pooled mean curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseSpread {
    /// RMS deviation per list length over the common grid.
    pub per_list: BTreeMap<usize, f64>,
    pub max: f64,
    /// Common `k̃` range shared by all curves.
    pub range: (f64, f64),
}

/// Piecewise-linear `λ̃(k̃)` through points sorted by `k̃`; duplicate `k̃`
/// values are averaged.
fn curve_knots(points: &[&RescaledPoint]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.k_tilde, p.lambda_tilde)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut knots: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y) in sorted {
        match knots.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => knots.push((x, y, 1)),
        }
    }
    knots
        .into_iter()
        .map(|(x, y, c)| (x, y / c as f64))
        .collect()
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    if x <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    knots[knots.len() - 1].1
}

/// RMS spread of the per-list-length curves around their mean, on
/// `grid_points` evenly spaced `k̃` values of the range every curve covers.
pub fn collapse_spread(points: &[RescaledPoint], grid_points: usize) -> Result<CollapseSpread> {
    let mut by_len: BTreeMap<usize, Vec<&RescaledPoint>> = BTreeMap::new();
    for p in points {
        by_len.entry(p.list_len).or_default().push(p);
    }
    if by_len.len() < 2 || grid_points < 2 {
        return Err(Error::InvalidParameter(
            "collapse needs at least two list lengths and two grid points".into(),
        ));
    }
    let curves: Vec<(usize, Vec<(f64, f64)>)> = by_len
        .into_iter()
        .map(|(len, pts)| (len, curve_knots(&pts)))
        .collect();
    let lo = curves
        .iter()
        .map(|(_, k)| k[0].0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|(_, k)| k[k.len() - 1].0)
        .fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "rescaled curves share no k~ range ({lo}, {hi})"
        )));
    }
    let xs: Vec<f64> = (0..grid_points)
        .map(|k| lo + (hi - lo) * k as f64 / (grid_points - 1) as f64)
        .collect();
    let values: Vec<Vec<f64>> = curves
        .iter()
        .map(|(_, knots)| xs.iter().map(|&x| interpolate(knots, x)).collect())
        .collect();
    let mean: Vec<f64> = (0..xs.len())
        .map(|k| values.iter().map(|v| v[k]).sum::<f64>() / values.len() as f64)
        .collect();
    let per_list: BTreeMap<usize, f64> = curves
        .iter()
        .zip(&values)
        .map(|((len, _), v)| {
            let ms = v
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / xs.len() as f64;
            (*len, ms.sqrt())
        })
        .collect();
    let max = per_list.values().copied().fold(0.0, f64::max);
    Ok(CollapseSpread {
        per_list,
        max,
        range: (lo, hi),
    })
}

/// The fitted curve with the bounds that produced its `k̃` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub curve: BiExponential,
    /// RMS residual on the pooled rescaled points.
    pub residual: f64,
    /// Smallest and largest mean recommended degree over the sweep.
    pub k_min: f64,
    pub k_max: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub lambda_grid: Vec<f64>,
    pub list_lengths: Vec<usize>,
    pub normalization: Normalization,
    pub user_limit: Option<usize>,
    pub fit: FitOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            list_lengths: default_list_lengths(),
            normalization: Normalization::PerList,
            user_limit: None,
            fit: FitOptions::default(),
        }
    }
}

/// Everything one calibration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// DCB with the fitted curve and the training graph's item-degree bounds.
    pub spec: AlgorithmSpec,
    pub fit: FitResult,
    pub sweep: Vec<SweepPoint>,
    pub rescaled: Vec<RescaledPoint>,
}

impl Calibration {
    pub fn fit_points(&self) -> Vec<(f64, f64)> {
        self.rescaled
            .iter()
            .map(|p| (p.k_tilde, p.lambda_tilde))
            .collect()
    }
}

/// Sweep, rescale and fit on the training graph `g`.
pub fn calibrate_dcb(g: &BipartiteGraph, options: &CalibrationOptions) -> Result<Calibration> {
    let projection = ItemProjection::build(g);
    calibrate_with_projection(g, &projection, options)
}

pub fn calibrate_with_projection(
    g: &BipartiteGraph,
    projection: &ItemProjection,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    let sweep = sweep_with_projection(
        g,
        projection,
        &options.lambda_grid,
        &options.list_lengths,
        options.user_limit,
    )?;
    let rescaled = rescale(&sweep, options.normalization)?;
    let points: Vec<(f64, f64)> = rescaled
        .iter()
        .map(|p| (p.k_tilde, p.lambda_tilde))
        .collect();
    let fitted = fit_double_exponential(&points, &options.fit)?;
    let (k_min, k_max) = extremes(sweep.iter());
    Ok(Calibration {
        spec: AlgorithmSpec::dcb(fitted.curve, g)?,
        fit: FitResult {
            curve: fitted.curve,
            residual: fitted.rms,
            k_min,
            k_max,
            seed: options.fit.seed,
            normalization: options.normalization,
        },
        sweep,
        rescaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn point(lambda: f64, list_len: usize, mean_degree: f64) -> SweepPoint {
        SweepPoint {
            lambda,
            list_len,
            mean_degree,
        }
    }

    #[test]
    fn rescale_endpoints() {
        let pts = vec![point(0.0, 10, 10.0), point(1.0, 10, 30.0)];
        let r = rescale(&pts, Normalization::Global).unwrap();
        assert_eq!(r[0].k_tilde, 0.0);
        assert_eq!(r[1].k_tilde, 1.0);
        assert_eq!(r[1].lambda_tilde, 1.0);
    }

    #[test]
    fn rescale_degenerate() {
        let pts = vec![point(0.0, 10, 5.0), point(1.0, 10, 5.0)];
        assert!(matches!(
            rescale(&pts, Normalization::Global),
            Err(Error::DegenerateSweep(_))
        ));
    }

    #[test]
    fn rescale_preserves_order() {
        let pts: Vec<_> = (0..6)
            .map(|k| point(k as f64 / 5.0, 10, 3.0 + (k * k) as f64))
            .collect();
        let r = rescale(&pts, Normalization::Global).unwrap();
        assert!(r.windows(2).all(|w| w[0].k_tilde < w[1].k_tilde));
    }

    #[test]
    fn per_list_normalization_maps_each_length_to_unit_range() {
        let pts = vec![
            point(0.0, 10, 10.0),
            point(1.0, 10, 30.0),
            point(0.0, 20, 5.0),
            point(1.0, 20, 15.0),
        ];
        let g = rescale(&pts, Normalization::Global).unwrap();
        assert_eq!(g[1].k_tilde, 1.0);
        assert_eq!(g[3].k_tilde, 0.4);
        let p = rescale(&pts, Normalization::PerList).unwrap();
        assert_eq!(p[3].k_tilde, 1.0);
        assert_eq!(p[2].k_tilde, 0.0);
    }

    #[test]
    fn identical_curves_have_zero_spread() {
        let mut pts = Vec::new();
        for len in [10, 20] {
            for k in 0..5 {
                let x = k as f64 / 4.0;
                pts.push(RescaledPoint {
                    lambda: x * x,
                    list_len: len,
                    k_tilde: x,
                    lambda_tilde: x * x,
                });
            }
        }
        let s = collapse_spread(&pts, 50).unwrap();
        assert!(s.max < 1e-15);
        // Offset one curve by 0.1 in λ: each deviates 0.05 from the mean.
        for p in pts.iter_mut().filter(|p| p.list_len == 20) {
            p.lambda_tilde += 0.1;
        }
        let s = collapse_spread(&pts, 50).unwrap();
        assert!((s.max - 0.05).abs() < 1e-12);
    }

    #[test]
    fn star_plus_leaves_sweep_by_hand() {
        // Hub item 0 held by users 0..4; leaf item k+1 held by user k only.
        // User k holds {0, k+1}; the uncollected pool is the other 3 leaves
        // (degree 1 each), so every list's mean degree is exactly 1.
        let mut links = Vec::new();
        for u in 0..4u32 {
            links.push((u, 0));
            links.push((u, u + 1));
        }
        let g = build_graph(4, 5, &links).unwrap();
        let pts = sweep_mean_degree(&g, &[0.0, 0.5, 1.0], &[1, 2], None).unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p.mean_degree == 1.0));
    }

    #[test]
    fn sweep_layout_and_user_limit() {
        let g = build_graph(
            4,
            5,
            &[
                (0, 0),
                (0, 1),
                (1, 1),
                (1, 2),
                (2, 0),
                (2, 3),
                (3, 1),
                (3, 3),
                (3, 4),
            ],
        )
        .unwrap();
        let pts = sweep_mean_degree(&g, &[0.0, 1.0], &[1, 2], Some(2)).unwrap();
        assert_eq!(
            pts.iter()
                .map(|p| (p.lambda, p.list_len))
                .collect::<Vec<_>>(),
            vec![(0.0, 1), (0.0, 2), (1.0, 1), (1.0, 2)]
        );
        assert!(sweep_mean_degree(&g, &[0.5], &[], None).is_err());
    }
}
