//! Multi-start damped Gauss–Newton fit of `y = a·e^(b·x) + c·e^(d·x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::BiExponential;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Random starts, in addition to `warm_starts`.
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub warm_starts: Vec<BiExponential>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            max_iterations: 1000,
            warm_starts: vec![
                BiExponential::RYM,
                BiExponential::NETFLIX,
                BiExponential::MOVIELENS,
            ],
        }
    }
}

/// Best curve found and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub curve: BiExponential,
    /// Root-mean-square residual on the fitted points.
    pub rms: f64,
    /// Index of the winning start (warm starts first, then random ones).
    pub start: usize,
    pub converged_starts: usize,
}

const DAMPING_INIT: f64 = 1e-3;
const DAMPING_CAP: f64 = 1e8;
const DAMPING_FLOOR: f64 = 1e-12;

/// Root-mean-square residual of `curve` on the points.
pub fn rms_residual(curve: &BiExponential, xs: &[f64], ys: &[f64]) -> f64 {
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - curve.eval(x);
            r * r
        })
        .sum();
    (ss / xs.len() as f64).sqrt()
}

fn sum_squares(p: &[f64; 4], xs: &[f64], ys: &[f64]) -> f64 {
    let curve = BiExponential::from_array(*p);
    let mut ss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - curve.eval(x);
        ss += r * r;
    }
    if ss.is_finite() {
        ss
    } else {
        f64::INFINITY
    }
}

/// Solves the 4x4 system `a · x = b` by Gaussian elimination with partial
/// pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct StartOutcome {
    params: [f64; 4],
    cost: f64,
    converged: bool,
}

fn levenberg_marquardt(
    start: [f64; 4],
    xs: &[f64],
    ys: &[f64],
    max_iterations: usize,
) -> StartOutcome {
    let mut p = start;
    let mut cost = sum_squares(&p, xs, ys);
    if !cost.is_finite() {
        return StartOutcome {
            params: p,
            cost,
            converged: false,
        };
    }
    let mut damping = DAMPING_INIT;
    for _ in 0..max_iterations {
        if cost <= 1e-30 {
            return StartOutcome {
                params: p,
                cost,
                converged: true,
            };
        }
        // Normal equations J^T J and J^T r for the model derivatives.
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let eb = (p[1] * x).exp();
            let ed = (p[3] * x).exp();
            let jac = [eb, p[0] * x * eb, ed, p[2] * x * ed];
            let r = y - (p[0] * eb + p[2] * ed);
            for i in 0..4 {
                jtr[i] += jac[i] * r;
                for k in 0..4 {
                    jtj[i][k] += jac[i] * jac[k];
                }
            }
        }
        let scale_floor = 1e-12 * (0..4).map(|i| jtj[i][i]).fold(0.0, f64::max).max(1e-300);

        let mut accepted = false;
        while damping <= DAMPING_CAP {
            let mut lhs = jtj;
            for (i, row) in lhs.iter_mut().enumerate() {
                row[i] += damping * jtj[i][i].max(scale_floor);
            }
            let trial = solve4(lhs, jtr).map(|step| {
                let mut q = p;
                for i in 0..4 {
                    q[i] += step[i];
                }
                (q, step)
            });
            match trial {
                Some((q, step)) => {
                    let trial_cost = sum_squares(&q, xs, ys);
                    if trial_cost < cost {
                        let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                        let param_norm = q.iter().map(|s| s * s).sum::<f64>().sqrt();
                        let relative_drop = (cost - trial_cost) / cost;
                        p = q;
                        cost = trial_cost;
                        damping = (damping / 10.0).max(DAMPING_FLOOR);
                        accepted = true;
                        if relative_drop < 1e-14 || step_norm <= 1e-14 * (param_norm + 1e-14) {
                            return StartOutcome {
                                params: p,
                                cost,
                                converged: true,
                            };
                        }
                        break;
                    }
                    damping *= 10.0;
                }
                None => damping *= 10.0,
            }
        }
        if !accepted {
            // No damped step reduces the cost any further: a stationary point.
            return StartOutcome {
                params: p,
                cost,
                converged: true,
            };
        }
    }
    StartOutcome {
        params: p,
        cost,
        converged: false,
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    sign * (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_starts(count: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            [
                log_uniform(&mut rng, 1e-9, 1.0),
                log_uniform(&mut rng, 0.1, 30.0),
                log_uniform(&mut rng, 1e-9, 1.0),
                log_uniform(&mut rng, 0.1, 30.0),
            ]
        })
        .collect()
}

/// Least-squares fit of a bi-exponential through `(x, y)` points.
///
/// Every warm start and `options.starts` seeded random starts are refined
/// independently; the lowest residual wins, ties going to the earlier start.
pub fn fit_double_exponential(points: &[(f64, f64)], options: &FitOptions) -> Result<CurveFit> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "a 4-parameter fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidParameter("fit points must be finite".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();

    let mut starts: Vec<[f64; 4]> = options.warm_starts.iter().map(|c| c.as_array()).collect();
    starts.extend(random_starts(options.starts, options.seed));

    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .map(|&s| levenberg_marquardt(s, &xs, &ys, options.max_iterations))
        .collect();

    let converged_starts = outcomes.iter().filter(|o| o.converged).count();
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.converged && o.cost.is_finite())
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)));
    match best {
        Some((start, o)) => {
            let curve = BiExponential::from_array(o.params);
            Ok(CurveFit {
                curve,
                rms: rms_residual(&curve, &xs, &ys),
                start,
                converged_starts,
            })
        }
        None => {
            let best_cost = outcomes
                .iter()
                .map(|o| o.cost)
                .fold(f64::INFINITY, f64::min);
            Err(Error::FitDidNotConverge {
                best_residual: (best_cost / xs.len() as f64).sqrt(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(count: usize) -> Vec<f64> {
        (0..count).map(|k| k as f64 / (count - 1) as f64).collect()
    }

    #[test]
    fn solve4_matches_known_system() {
        let a = [
            [4.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 0.0],
            [0.0, 1.0, 2.0, 1.0],
            [0.0, 0.0, 1.0, 5.0],
        ];
        let x = [1.0, -2.0, 0.5, 3.0];
        let b: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&x).map(|(p, q)| p * q).sum())
            .collect();
        let got = solve4(a, [b[0], b[1], b[2], b[3]]).unwrap();
        for (g, w) in got.iter().zip(x) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(solve4([[0.0; 4]; 4], [1.0; 4]).is_none());
    }

    #[test]
    fn recovers_generating_curve() {
        let truth = BiExponential::new(0.04, 3.31, -0.04, -12.28);
        let pts: Vec<(f64, f64)> = grid(41).into_iter().map(|x| (x, truth.eval(x))).collect();
        let fit = fit_double_exponential(&pts, &FitOptions::default()).unwrap();
        for x in grid(201) {
            assert!((fit.curve.eval(x) - truth.eval(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn recovers_curve_without_warm_start() {
        let truth = BiExponential::new(0.2, 1.5, 0.01, 4.0);
        let pts: Vec<(f64, f64)> = grid(30).into_iter().map(|x| (x, truth.eval(x))).collect();
        let opts = FitOptions {
            warm_starts: Vec::new(),
            seed: 11,
            ..FitOptions::default()
        };
        let fit = fit_double_exponential(&pts, &opts).unwrap();
        assert!(fit.rms < 1e-6, "{fit:?}");
    }

    #[test]
    fn constant_data_fits_flat_curve() {
        let pts: Vec<(f64, f64)> = grid(21).into_iter().map(|x| (x, 0.5)).collect();
        let fit = fit_double_exponential(&pts, &FitOptions::default()).unwrap();
        for x in grid(101) {
            assert!((fit.curve.eval(x) - 0.5).abs() < 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn never_worse_than_best_warm_start() {
        let pts: Vec<(f64, f64)> = grid(25)
            .into_iter()
            .map(|x| (x, 0.05 + 0.9 * x.powi(3) + 0.02 * (7.0 * x).sin()))
            .collect();
        let opts = FitOptions::default();
        let fit = fit_double_exponential(&pts, &opts).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for warm in &opts.warm_starts {
            assert!(fit.rms <= rms_residual(warm, &xs, &ys));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<(f64, f64)> = grid(15).into_iter().map(|x| (x, x * x + 0.1)).collect();
        let opts = FitOptions {
            seed: 5,
            ..FitOptions::default()
        };
        assert_eq!(
            fit_double_exponential(&pts, &opts).unwrap(),
            fit_double_exponential(&pts, &opts).unwrap()
        );
    }

    #[test]
    fn too_few_points() {
        let pts = vec![(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)];
        assert!(fit_double_exponential(&pts, &FitOptions::default()).is_err());
    }
}
