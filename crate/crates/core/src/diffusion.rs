//! Resource-diffusion scoring.
//!
//! All five scorers share one transformation matrix,
//!
//! ```text
//! W[α][β] = k_α^(λ_β − 1) · k_β^(−λ_β) · Σ_j a_αj a_βj / k_j
//! ```
//!
//! and differ only in how `λ_β` is chosen for the source item `β`: constant 1
//! (PBS, mass diffusion), constant 0 (HTS, heat conduction), a global constant
//! (HHP), a power of the relative degree (OHHP), or a fitted bi-exponential of
//! the min–max normalized degree (DCB). A user's scores are `f = W · a_u`.
//!
//! [`score_user`] walks the two hops directly for a single user. For batch
//! work, [`ItemProjection`] precomputes the degree-free overlap
//! `Σ_j a_αj a_βj / k_j` once per graph and [`Propagator`] folds the per-spec
//! degree weights into it.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{BipartiteGraph, ResourceVector};
use crate::{Error, Result};

/// `a·e^(b·x) + c·e^(d·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiExponential {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl BiExponential {
    /// MovieLens coefficients reported for the published fit.
    pub const MOVIELENS: Self = Self::new(0.03, 2.48, 4.95e-7, 14.05);
    /// Netflix coefficients reported for the published fit.
    pub const NETFLIX: Self = Self::new(0.03, 2.25, 1.75e-9, 19.78);
    /// RateYourMusic coefficients reported for the published fit.
    pub const RYM: Self = Self::new(0.04, 3.31, -0.04, -12.28);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp() + self.c * (self.d * x).exp()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        Self::new(p[0], p[1], p[2], p[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Which scorer to run and its parameters.
///
/// OHHP and DCB carry the item-degree bounds used to normalize `k_β`; take
/// them from the training graph with [`AlgorithmSpec::ohhp`] /
/// [`AlgorithmSpec::dcb`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlgorithmSpec {
    Pbs,
    Hts,
    Hhp {
        lambda: f64,
    },
    Ohhp {
        gamma: f64,
        k_min: f64,
        k_max: f64,
    },
    Dcb {
        curve: BiExponential,
        k_min: f64,
        k_max: f64,
    },
}

impl AlgorithmSpec {
    pub fn hhp(lambda: f64) -> Result<Self> {
        let spec = Self::Hhp { lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ohhp(gamma: f64, train: &BipartiteGraph) -> Result<Self> {
        let (k_min, k_max) = degree_bounds(train)?;
        let spec = Self::Ohhp {
            gamma,
            k_min,
            k_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dcb(curve: BiExponential, train: &BipartiteGraph) -> Result<Self> {
        let (k_min, k_max) = degree_bounds(train)?;
        let spec = Self::Dcb {
            curve,
            k_min,
            k_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Self::Pbs | Self::Hts => Ok(()),
            Self::Hhp { lambda } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return bad(format!("HHP lambda {lambda} outside [0, 1]"));
                }
                Ok(())
            }
            Self::Ohhp {
                gamma,
                k_min,
                k_max,
            } => {
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return bad(format!("OHHP gamma {gamma} must be finite and >= 0"));
                }
                check_bounds(k_min, k_max)
            }
            Self::Dcb {
                curve,
                k_min,
                k_max,
            } => {
                if !curve.is_finite() {
                    return bad(format!("DCB coefficients {curve:?} not finite"));
                }
                check_bounds(k_min, k_max)
            }
        }
    }

    /// Short algorithm name, e.g. `"HHP"`.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pbs => "PBS",
            Self::Hts => "HTS",
            Self::Hhp { .. } => "HHP",
            Self::Ohhp { .. } => "OHHP",
            Self::Dcb { .. } => "DCB",
        }
    }

    /// Name plus the tuned parameter, e.g. `"HHP(lambda=0.2)"`.
    pub fn label(&self) -> String {
        match self {
            Self::Pbs | Self::Hts => self.name().to_string(),
            Self::Hhp { lambda } => format!("HHP(lambda={lambda})"),
            Self::Ohhp { gamma, .. } => format!("OHHP(gamma={gamma})"),
            Self::Dcb { curve, .. } => format!(
                "DCB(a={}, b={}, c={}, d={})",
                curve.a, curve.b, curve.c, curve.d
            ),
        }
    }

    fn is_per_item(&self) -> bool {
        matches!(self, Self::Ohhp { .. } | Self::Dcb { .. })
    }
}

fn check_bounds(k_min: f64, k_max: f64) -> Result<()> {
    if !(k_min.is_finite() && k_max.is_finite() && k_min < k_max && k_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degree bounds need 0 < k_max and k_min < k_max, got [{k_min}, {k_max}]"
        )));
    }
    Ok(())
}

fn degree_bounds(train: &BipartiteGraph) -> Result<(f64, f64)> {
    match train.linked_item_degree_range() {
        Some((lo, hi)) if lo < hi => Ok((lo as f64, hi as f64)),
        _ => Err(Error::InvalidParameter(
            "training graph needs at least two distinct item degrees".into(),
        )),
    }
}

/// Hybridization parameter used when `k_beta` is the source item's degree.
///
/// OHHP gives `(k_β/k_max)^γ`; DCB evaluates its curve at
/// `(k_β − k_min)/(k_max − k_min)`. Both results are clamped to `[0, 1]` so
/// that the pure methods stay the extremes.
pub fn per_item_lambda(spec: &AlgorithmSpec, k_beta: f64) -> f64 {
    let raw = match *spec {
        AlgorithmSpec::Pbs => 1.0,
        AlgorithmSpec::Hts => 0.0,
        AlgorithmSpec::Hhp { lambda } => lambda,
        AlgorithmSpec::Ohhp { gamma, k_max, .. } => (k_beta / k_max).powf(gamma),
        AlgorithmSpec::Dcb {
            curve,
            k_min,
            k_max,
        } => {
            let x = ((k_beta - k_min) / (k_max - k_min)).clamp(0.0, 1.0);
            curve.eval(x)
        }
    };
    if raw.is_nan() {
        return 0.0;
    }
    raw.clamp(0.0, 1.0)
}

/// Scores every item for `user` by walking item → user → item paths.
///
/// Source items are grouped by degree, since `λ_β` depends on `β` only
/// through `k_β`. Users without training links get an all-zero vector.
pub fn score_user(g: &BipartiteGraph, user: u32, spec: &AlgorithmSpec) -> ResourceVector {
    let n = g.num_items();
    let mut f = vec![0.0; n];
    let own = g.items_of_user(user);
    if own.is_empty() {
        return ResourceVector { values: f };
    }

    let mut by_degree: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &beta in own {
        by_degree.entry(g.item_degree(beta)).or_default().push(beta);
    }

    let mut user_share = vec![0.0; g.num_users()];
    let mut touched_users: Vec<u32> = Vec::new();
    let mut gathered = vec![0.0; n];
    let mut touched_items: Vec<u32> = Vec::new();

    for (&degree, sources) in &by_degree {
        let lambda = per_item_lambda(spec, degree as f64);

        // Hop 1: each source item hands a_βj / k_j to its users.
        for &beta in sources {
            for &j in g.users_of_item(beta) {
                let slot = &mut user_share[j as usize];
                if *slot == 0.0 {
                    touched_users.push(j);
                }
                *slot += 1.0 / g.user_degree(j) as f64;
            }
        }
        touched_users.sort_unstable_by(|&x, &y| {
            user_share[x as usize]
                .total_cmp(&user_share[y as usize])
                .then(x.cmp(&y))
        });

        // Hop 2: users hand their share back to every item they hold.
        for &j in &touched_users {
            let share = user_share[j as usize];
            for &alpha in g.items_of_user(j) {
                let slot = &mut gathered[alpha as usize];
                if *slot == 0.0 {
                    touched_items.push(alpha);
                }
                *slot += share;
            }
            user_share[j as usize] = 0.0;
        }
        touched_users.clear();

        let source_factor = (degree as f64).powf(-lambda);
        for &alpha in &touched_items {
            let k_alpha = g.item_degree(alpha) as f64;
            f[alpha as usize] +=
                gathered[alpha as usize] * source_factor * k_alpha.powf(lambda - 1.0);
            gathered[alpha as usize] = 0.0;
        }
        touched_items.clear();
    }
    ResourceVector { values: f }
}

/// Degree-free item–item overlap `Σ_j a_αj a_βj / k_j`, stored per source
/// item `β` as ascending `(α, overlap)` runs.
#[derive(Debug, Clone)]
pub struct ItemProjection {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    overlap: Vec<f64>,
    ln_degree: Vec<f64>,
    degree: Vec<u32>,
}

impl ItemProjection {
    pub fn build(g: &BipartiteGraph) -> Self {
        let n = g.num_items();
        let columns: Vec<(Vec<u32>, Vec<f64>)> = (0..n as u32)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; n], vec![false; n]),
                |(acc, seen), beta| {
                    // Visiting users by degree makes every sum independent of
                    // user numbering, so equal overlaps are bit-equal.
                    let mut users = g.users_of_item(beta).to_vec();
                    users.sort_by_key(|&j| (g.user_degree(j), j));
                    let mut touched = Vec::new();
                    for &j in &users {
                        let share = 1.0 / g.user_degree(j) as f64;
                        for &alpha in g.items_of_user(j) {
                            let a = alpha as usize;
                            if !seen[a] {
                                seen[a] = true;
                                touched.push(alpha);
                            }
                            acc[a] += share;
                        }
                    }
                    touched.sort_unstable();
                    let values = touched
                        .iter()
                        .map(|&a| {
                            let v = acc[a as usize];
                            acc[a as usize] = 0.0;
                            seen[a as usize] = false;
                            v
                        })
                        .collect();
                    (touched, values)
                },
            )
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let nnz = columns.iter().map(|(t, _)| t.len()).sum();
        let mut targets = Vec::with_capacity(nnz);
        let mut overlap = Vec::with_capacity(nnz);
        for (t, v) in columns {
            targets.extend_from_slice(&t);
            overlap.extend_from_slice(&v);
            offsets.push(targets.len());
        }
        let degree = g.item_degrees();
        let ln_degree = degree.iter().map(|&k| (k as f64).ln()).collect();
        Self {
            offsets,
            targets,
            overlap,
            ln_degree,
            degree,
        }
    }

    pub fn num_items(&self) -> usize {
        self.degree.len()
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    fn column(&self, beta: u32) -> std::ops::Range<usize> {
        self.offsets[beta as usize]..self.offsets[beta as usize + 1]
    }
}

/// Optional accelerator: snap per-item λ onto `levels` evenly spaced values.
///
/// Each weight is off by at most a factor `exp(Δ·ln(k_max/k_min))` with
/// `Δ = 1/(2(levels−1))`, see [`LambdaQuantization::relative_bound`]. With
/// 256 levels on MovieLens-sized degree ranges that is about 1.2%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaQuantization {
    pub levels: u16,
}

impl LambdaQuantization {
    pub const DEFAULT_LEVELS: u16 = 256;

    pub fn apply(&self, lambda: f64) -> f64 {
        let steps = (self.levels.max(2) - 1) as f64;
        (lambda * steps).round() / steps
    }

    /// Upper bound on the relative change of any score when item degrees lie
    /// in `[k_min, k_max]`.
    pub fn relative_bound(&self, k_min: f64, k_max: f64) -> f64 {
        let delta = 0.5 / (self.levels.max(2) - 1) as f64;
        (delta * (k_max / k_min).ln().abs()).exp_m1()
    }
}

/// The transformation matrix `W` for one spec, materialized over an
/// [`ItemProjection`].
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    projection: &'a ItemProjection,
    weights: Vec<f64>,
    spec: AlgorithmSpec,
}

impl<'a> Propagator<'a> {
    pub fn new(projection: &'a ItemProjection, spec: &AlgorithmSpec) -> Self {
        Self::with_quantization(projection, spec, None)
    }

    pub fn with_quantization(
        projection: &'a ItemProjection,
        spec: &AlgorithmSpec,
        quantization: Option<LambdaQuantization>,
    ) -> Self {
        let n = projection.num_items();
        let weights: Vec<Vec<f64>> = (0..n as u32)
            .into_par_iter()
            .map(|beta| {
                let range = projection.column(beta);
                if range.is_empty() {
                    return Vec::new();
                }
                let k_beta = projection.degree[beta as usize] as f64;
                let mut lambda = per_item_lambda(spec, k_beta);
                if let (Some(q), true) = (quantization, spec.is_per_item()) {
                    lambda = q.apply(lambda);
                }
                let ln_beta = projection.ln_degree[beta as usize];
                range
                    .map(|e| {
                        let alpha = projection.targets[e] as usize;
                        let ln_alpha = projection.ln_degree[alpha];
                        let ratio = (lambda * (ln_alpha - ln_beta)).exp();
                        projection.overlap[e] * ratio / projection.degree[alpha] as f64
                    })
                    .collect()
            })
            .collect();
        Self {
            projection,
            weights: weights.concat(),
            spec: *spec,
        }
    }

    pub fn spec(&self) -> &AlgorithmSpec {
        &self.spec
    }

    /// Accumulates `f = Σ_{β ∈ sources} W[·][β]` into `out`, visiting sources
    /// in the given order.
    pub fn scores_into(&self, sources: &[u32], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &beta in sources {
            for e in self.projection.column(beta) {
                out[self.projection.targets[e] as usize] += self.weights[e];
            }
        }
    }

    pub fn score_user(&self, g: &BipartiteGraph, user: u32) -> ResourceVector {
        let mut values = vec![0.0; self.projection.num_items()];
        self.scores_into(g.items_of_user(user), &mut values);
        ResourceVector { values }
    }

    /// Top-`list_len` lists for every user, indexed by user.
    pub fn recommend_all(&self, g: &BipartiteGraph, list_len: usize) -> Vec<RecommendationList> {
        let n = self.projection.num_items();
        (0..g.num_users() as u32)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, user| {
                    let own = g.items_of_user(user);
                    if own.is_empty() {
                        return RecommendationList::empty(user);
                    }
                    self.scores_into(own, buf);
                    top_l(user, buf, own, list_len)
                },
            )
            .collect()
    }
}

/// A user's ranked recommendations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: u32,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
}

impl RecommendationList {
    pub fn empty(user: u32) -> Self {
        Self {
            user,
            items: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The first `len` entries (a top-`len` list, since entries are ranked).
    pub fn truncated(&self, len: usize) -> Self {
        let keep = len.min(self.items.len());
        Self {
            user: self.user,
            items: self.items[..keep].to_vec(),
            scores: self.scores[..keep].to_vec(),
        }
    }
}

/// Ranking order: higher score first, ties by lower item index.
pub(crate) fn rank_order(scores: &[f64], a: u32, b: u32) -> std::cmp::Ordering {
    scores[b as usize]
        .total_cmp(&scores[a as usize])
        .then(a.cmp(&b))
}

/// Best `list_len` items of `scores` not present in `collected` (sorted).
pub fn top_l(user: u32, scores: &[f64], collected: &[u32], list_len: usize) -> RecommendationList {
    let mut candidates: Vec<u32> = Vec::with_capacity(scores.len().saturating_sub(collected.len()));
    let mut own = collected.iter().peekable();
    for item in 0..scores.len() as u32 {
        while own.peek().is_some_and(|&&c| c < item) {
            own.next();
        }
        if own.peek().is_some_and(|&&c| c == item) {
            continue;
        }
        candidates.push(item);
    }
    if list_len == 0 {
        return RecommendationList::empty(user);
    }
    if candidates.len() > list_len {
        candidates.select_nth_unstable_by(list_len - 1, |&a, &b| rank_order(scores, a, b));
        candidates.truncate(list_len);
    }
    candidates.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    let scores = candidates.iter().map(|&i| scores[i as usize]).collect();
    RecommendationList {
        user,
        items: candidates,
        scores,
    }
}

/// Scores and ranks every user of `g`. Users without training links get
/// empty lists.
pub fn recommend_all(
    g: &BipartiteGraph,
    spec: &AlgorithmSpec,
    list_len: usize,
) -> Vec<RecommendationList> {
    let projection = ItemProjection::build(g);
    Propagator::new(&projection, spec).recommend_all(g, list_len)
}

/// Writes `user<TAB>item<TAB>score<TAB>rank` lines, rank starting at 1.
pub fn write_recommendations<W: Write>(mut out: W, lists: &[RecommendationList]) -> Result<()> {
    for list in lists {
        for (rank, (item, score)) in list.items.iter().zip(&list.scores).enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", list.user, item, score, rank + 1)?;
        }
    }
    Ok(())
}
