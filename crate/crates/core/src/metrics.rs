//! Accuracy and diversity of top-L recommendations against held-out links.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{top_l, AlgorithmSpec, Propagator, RecommendationList};
use crate::graph::{BipartiteGraph, ResourceVector};
use crate::{Error, Result};

/// Ranking score summary. Lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingScore {
    /// Mean of `p_α / (n − k_i)` over every ranked probe link.
    pub mean: f64,
    /// Mean per training degree of the probe item.
    pub by_degree: BTreeMap<u32, f64>,
    /// Mean over probe items with training degree `<= k_cold`.
    pub cold: Option<f64>,
    pub k_cold: u32,
    pub links: usize,
    /// Probe links whose user has no uncollected item left.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub mean: f64,
    pub by_degree: BTreeMap<u32, f64>,
    pub cold: f64,
    pub k_cold: u32,
}

/// Per-user probe items, sorted.
fn probe_by_user(users: usize, probe: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); users];
    for &(u, i) in probe {
        out[u as usize].push(i);
    }
    for v in &mut out {
        v.sort_unstable();
        v.dedup();
    }
    out
}

/// Midrank positions of `targets` among the items not in `collected`.
///
/// Returns `None` when nothing is uncollected.
fn midrank_scores(scores: &[f64], collected: &[u32], targets: &[u32]) -> Option<Vec<f64>> {
    let n = scores.len();
    let pool = n - collected.len();
    if pool == 0 {
        return None;
    }
    let mut better = vec![0usize; targets.len()];
    let mut tied = vec![0usize; targets.len()];
    let mut own = collected.iter().peekable();
    for (item, &s) in scores.iter().enumerate() {
        let item = item as u32;
        while own.peek().is_some_and(|&&c| c < item) {
            own.next();
        }
        if own.peek().is_some_and(|&&c| c == item) {
            continue;
        }
        for (k, &t) in targets.iter().enumerate() {
            let st = scores[t as usize];
            if s > st {
                better[k] += 1;
            } else if s == st {
                tied[k] += 1;
            }
        }
    }
    Some(
        better
            .iter()
            .zip(&tied)
            .map(|(&b, &t)| (b as f64 + (t as f64 + 1.0) / 2.0) / pool as f64)
            .collect(),
    )
}

#[derive(Default)]
struct RankAccumulator {
    sum: f64,
    count: usize,
    skipped: usize,
    by_degree: BTreeMap<u32, (f64, usize)>,
}

impl RankAccumulator {
    fn add_user(&mut self, train: &BipartiteGraph, items: &[u32], ranks: Option<Vec<f64>>) {
        match ranks {
            None => self.skipped += items.len(),
            Some(ranks) => {
                for (&item, r) in items.iter().zip(ranks) {
                    self.sum += r;
                    self.count += 1;
                    let slot = self.by_degree.entry(train.item_degree(item)).or_default();
                    slot.0 += r;
                    slot.1 += 1;
                }
            }
        }
    }

    fn finish(self, k_cold: u32) -> RankingScore {
        let (cold_sum, cold_n) = self
            .by_degree
            .range(..=k_cold)
            .fold((0.0, 0usize), |acc, (_, &(s, c))| (acc.0 + s, acc.1 + c));
        RankingScore {
            mean: if self.count > 0 {
                self.sum / self.count as f64
            } else {
                f64::NAN
            },
            by_degree: self
                .by_degree
                .iter()
                .map(|(&k, &(s, c))| (k, s / c as f64))
                .collect(),
            cold: (cold_n > 0).then(|| cold_sum / cold_n as f64),
            k_cold,
            links: self.count,
            skipped: self.skipped,
        }
    }
}

/// Ranking score of the probe links given every user's full score vector.
///
/// `scores[u]` scores all items for user `u`. Tied items share the average
/// of the positions they span.
pub fn ranking_score(
    train: &BipartiteGraph,
    probe: &[(u32, u32)],
    scores: &[ResourceVector],
    k_cold: u32,
) -> RankingScore {
    let per_user = probe_by_user(train.num_users(), probe);
    let mut acc = RankAccumulator::default();
    for (u, items) in per_user.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let ranks = midrank_scores(&scores[u].values, train.items_of_user(u as u32), items);
        acc.add_user(train, items, ranks);
    }
    acc.finish(k_cold)
}

/// Precision of the lists against the probe links, averaged over all users
/// of `train` (users without probe links count as zero hits).
pub fn precision(
    train: &BipartiteGraph,
    probe: &[(u32, u32)],
    lists: &[RecommendationList],
    list_len: usize,
    k_cold: u32,
) -> Precision {
    let per_user = probe_by_user(train.num_users(), probe);
    let mut hits = 0usize;
    let mut by_degree: BTreeMap<u32, usize> = BTreeMap::new();
    for list in lists {
        let held = &per_user[list.user as usize];
        for &item in list.items.iter().take(list_len) {
            if held.binary_search(&item).is_ok() {
                hits += 1;
                *by_degree.entry(train.item_degree(item)).or_default() += 1;
            }
        }
    }
    let denom = train.num_users() as f64 * list_len as f64;
    let cold: usize = by_degree.range(..=k_cold).map(|(_, &c)| c).sum();
    Precision {
        mean: hits as f64 / denom,
        by_degree: by_degree
            .into_iter()
            .map(|(k, c)| (k, c as f64 / denom))
            .collect(),
        cold: cold as f64 / denom,
        k_cold,
    }
}

/// Pair sampling for inter-diversity on large user sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSampling {
    /// Exact evaluation is used up to this many pairs.
    pub threshold: usize,
    /// Number of pairs drawn (with replacement) above the threshold.
    pub pairs: usize,
    pub seed: u64,
}

fn sorted_items(lists: &[RecommendationList], list_len: usize) -> Vec<Vec<u32>> {
    lists
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut v: Vec<u32> = l.items.iter().take(list_len).copied().collect();
            v.sort_unstable();
            v
        })
        .collect()
}

fn overlap(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Mean over user pairs of `1 − |L_i ∩ L_j| / L`.
///
/// Users with empty lists are left out. `L` is the nominal list length even
/// when some lists are shorter.
pub fn inter_diversity(
    lists: &[RecommendationList],
    list_len: usize,
    sampling: Option<PairSampling>,
) -> f64 {
    let sets = sorted_items(lists, list_len);
    let users = sets.len();
    if users < 2 || list_len == 0 {
        return f64::NAN;
    }
    let pairs = users * (users - 1) / 2;
    match sampling {
        Some(s) if pairs > s.threshold && s.pairs > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut shared = 0u64;
            for _ in 0..s.pairs {
                let i = rng.gen_range(0..users);
                let mut j = rng.gen_range(0..users - 1);
                if j >= i {
                    j += 1;
                }
                shared += overlap(&sets[i], &sets[j]) as u64;
            }
            1.0 - shared as f64 / (s.pairs as f64 * list_len as f64)
        }
        _ => {
            let shared: u64 = (0..users)
                .into_par_iter()
                .map(|i| {
                    sets[i + 1..]
                        .iter()
                        .map(|other| overlap(&sets[i], other) as u64)
                        .sum::<u64>()
                })
                .sum();
            1.0 - shared as f64 / (pairs as f64 * list_len as f64)
        }
    }
}

/// Training user sets of the items appearing in `lists`, as bitsets.
struct UserBits {
    words: usize,
    slot: HashMap<u32, usize>,
    bits: Vec<u64>,
}

impl UserBits {
    fn new(train: &BipartiteGraph, lists: &[RecommendationList], list_len: usize) -> Self {
        let words = train.num_users().div_ceil(64);
        let mut slot = HashMap::new();
        let mut bits = Vec::new();
        for l in lists {
            for &item in l.items.iter().take(list_len) {
                slot.entry(item).or_insert_with(|| {
                    let base = bits.len();
                    bits.resize(base + words, 0u64);
                    for &u in train.users_of_item(item) {
                        bits[base + u as usize / 64] |= 1u64 << (u % 64);
                    }
                    base / words.max(1)
                });
            }
        }
        Self { words, slot, bits }
    }

    fn common(&self, a: u32, b: u32) -> u32 {
        let (x, y) = (self.slot[&a] * self.words, self.slot[&b] * self.words);
        self.bits[x..x + self.words]
            .iter()
            .zip(&self.bits[y..y + self.words])
            .map(|(p, q)| (p & q).count_ones())
            .sum()
    }
}

/// `1/(m L (L−1)) Σ_i Σ_{α≠β ∈ L_i} (1 − S_αβ)` with `S` the cosine
/// similarity on the training graph; `m` counts users with nonempty lists.
pub fn inner_diversity(
    lists: &[RecommendationList],
    train: &BipartiteGraph,
    list_len: usize,
) -> Result<f64> {
    if list_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "inner diversity needs L >= 2, got {list_len}"
        )));
    }
    let bits = UserBits::new(train, lists, list_len);
    let cosine = |a: u32, b: u32| {
        let ka = train.item_degree(a);
        let kb = train.item_degree(b);
        if ka == 0 || kb == 0 {
            return 0.0;
        }
        bits.common(a, b) as f64 / ((ka as f64) * (kb as f64)).sqrt()
    };
    let per_user: Vec<f64> = lists
        .par_iter()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let items = &l.items[..l.items.len().min(list_len)];
            let mut sum = 0.0;
            for (x, &a) in items.iter().enumerate() {
                for &b in &items[x + 1..] {
                    sum += 1.0 - cosine(a, b);
                }
            }
            2.0 * sum
        })
        .collect();
    if per_user.is_empty() {
        return Ok(f64::NAN);
    }
    let total: f64 = per_user.iter().sum();
    let l = list_len as f64;
    Ok(total / (per_user.len() as f64 * l * (l - 1.0)))
}

/// Relative difference `(q_alg − q_ref) / q_ref`.
pub fn improvement(q_alg: f64, q_ref: f64) -> Result<f64> {
    if q_ref == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((q_alg - q_ref) / q_ref)
}

/// Share of list entries per training degree, pooled over users.
pub fn recommended_degree_distribution(
    lists: &[RecommendationList],
    train: &BipartiteGraph,
) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total = 0usize;
    for list in lists {
        for &item in &list.items {
            *counts.entry(train.item_degree(item)).or_default() += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

/// The six headline quantities for one algorithm at one list length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub algorithm: String,
    pub spec: AlgorithmSpec,
    pub list_len: usize,
    pub k_cold: u32,
    pub r: f64,
    pub r_cold: Option<f64>,
    pub p: f64,
    pub p_cold: f64,
    pub d_inter: f64,
    pub d_inner: f64,
    pub r_by_degree: BTreeMap<u32, f64>,
    pub p_by_degree: BTreeMap<u32, f64>,
    pub probe_links: usize,
    pub skipped_links: usize,
}

/// Report plus the lists it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub lists: Vec<RecommendationList>,
}

struct UserOutcome {
    list: RecommendationList,
    ranks: Option<Vec<f64>>,
}

fn score_users(
    train: &BipartiteGraph,
    per_user: &[Vec<u32>],
    propagator: &Propagator<'_>,
    list_len: usize,
) -> Vec<UserOutcome> {
    let n = train.num_items();
    (0..train.num_users() as u32)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, user| {
                let own = train.items_of_user(user);
                propagator.scores_into(own, buf);
                let held = &per_user[user as usize];
                let ranks = if held.is_empty() {
                    Some(Vec::new())
                } else {
                    midrank_scores(buf, own, held)
                };
                let list = if own.is_empty() || list_len == 0 {
                    RecommendationList::empty(user)
                } else {
                    top_l(user, buf, own, list_len)
                };
                UserOutcome { list, ranks }
            },
        )
        .collect()
}

/// Ranking score only, for parameter searches.
pub fn evaluate_ranking(
    train: &BipartiteGraph,
    probe: &[(u32, u32)],
    propagator: &Propagator<'_>,
    k_cold: u32,
) -> RankingScore {
    let per_user = probe_by_user(train.num_users(), probe);
    let outcomes = score_users(train, &per_user, propagator, 0);
    let mut acc = RankAccumulator::default();
    for (u, o) in outcomes.into_iter().enumerate() {
        acc.add_user(train, &per_user[u], o.ranks);
    }
    acc.finish(k_cold)
}

/// Scores every user once and derives all metrics from the same pass.
pub fn evaluate_with_lists(
    train: &BipartiteGraph,
    probe: &[(u32, u32)],
    propagator: &Propagator<'_>,
    list_len: usize,
    k_cold: u32,
    sampling: Option<PairSampling>,
) -> Result<Evaluation> {
    let per_user = probe_by_user(train.num_users(), probe);
    let outcomes = score_users(train, &per_user, propagator, list_len);
    let mut acc = RankAccumulator::default();
    let mut lists = Vec::with_capacity(outcomes.len());
    for (u, o) in outcomes.into_iter().enumerate() {
        acc.add_user(train, &per_user[u], o.ranks);
        lists.push(o.list);
    }
    let rank = acc.finish(k_cold);
    let prec = precision(train, probe, &lists, list_len, k_cold);
    let d_inter = inter_diversity(&lists, list_len, sampling);
    let d_inner = inner_diversity(&lists, train, list_len)?;
    let spec = *propagator.spec();
    Ok(Evaluation {
        report: EvaluationReport {
            algorithm: spec.label(),
            spec,
            list_len,
            k_cold,
            r: rank.mean,
            r_cold: rank.cold,
            p: prec.mean,
            p_cold: prec.cold,
            d_inter,
            d_inner,
            r_by_degree: rank.by_degree,
            p_by_degree: prec.by_degree,
            probe_links: rank.links,
            skipped_links: rank.skipped,
        },
        lists,
    })
}

pub fn evaluate(
    train: &BipartiteGraph,
    probe: &[(u32, u32)],
    propagator: &Propagator<'_>,
    list_len: usize,
    k_cold: u32,
    sampling: Option<PairSampling>,
) -> Result<EvaluationReport> {
    evaluate_with_lists(train, probe, propagator, list_len, k_cold, sampling).map(|e| e.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn list(user: u32, items: &[u32]) -> RecommendationList {
        RecommendationList {
            user,
            items: items.to_vec(),
            scores: vec![0.0; items.len()],
        }
    }

    #[test]
    fn ranking_score_top_of_two() {
        let train = build_graph(1, 2, &[]).unwrap();
        let scores = vec![ResourceVector {
            values: vec![0.9, 0.1],
        }];
        let r = ranking_score(&train, &[(0, 0)], &scores, 10);
        assert_eq!(r.mean, 0.5);
    }

    #[test]
    fn ranking_score_all_tied() {
        // n = 6, user holds item 5, so five uncollected items all tie.
        let train = build_graph(1, 6, &[(0, 5)]).unwrap();
        let scores = vec![ResourceVector {
            values: vec![1.0; 6],
        }];
        let r = ranking_score(&train, &[(0, 0), (0, 3)], &scores, 10);
        assert_eq!(r.mean, 0.6);
        assert_eq!(r.by_degree[&0], 0.6);
        assert_eq!(r.cold, Some(0.6));
    }

    #[test]
    fn ranking_score_skips_full_users() {
        let train = build_graph(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let scores = vec![ResourceVector::zeros(2), ResourceVector::zeros(2)];
        let r = ranking_score(&train, &[(0, 1), (1, 0)], &scores, 10);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.links, 1);
        assert_eq!(r.mean, 0.75);
    }

    #[test]
    fn precision_extremes() {
        let train = build_graph(2, 6, &[]).unwrap();
        let probe = vec![(0, 0), (0, 1), (0, 2), (1, 3), (1, 4)];
        let lists = vec![list(0, &[0, 1]), list(1, &[3, 4])];
        let p = precision(&train, &probe, &lists, 2, 10);
        assert_eq!(p.mean, 1.0);
        let lists = vec![list(0, &[5, 4]), list(1, &[5, 0])];
        assert_eq!(precision(&train, &probe, &lists, 2, 10).mean, 0.0);
    }

    #[test]
    fn precision_counts_users_without_probe() {
        let train = build_graph(4, 6, &[(2, 5)]).unwrap();
        let lists = vec![list(0, &[0, 1]), list(1, &[1, 2])];
        let p = precision(&train, &[(0, 0)], &lists, 2, 10);
        assert_eq!(p.mean, 1.0 / 8.0);
        assert_eq!(p.by_degree[&0], 1.0 / 8.0);
        assert_eq!(p.cold, 1.0 / 8.0);
    }

    #[test]
    fn inter_diversity_cases() {
        let same = vec![list(0, &[1, 2]), list(1, &[2, 1]), list(2, &[1, 2])];
        assert_eq!(inter_diversity(&same, 2, None), 0.0);
        let disjoint = vec![list(0, &[1, 2]), list(1, &[3, 4]), list(2, &[5, 6])];
        assert_eq!(inter_diversity(&disjoint, 2, None), 1.0);
        // {A,B},{B,C},{C,D}: pair diversities 1/2, 1, 1/2
        let chain = vec![list(0, &[0, 1]), list(1, &[1, 2]), list(2, &[2, 3])];
        assert!((inter_diversity(&chain, 2, None) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inner_diversity_cases() {
        // items 0 and 1 never share a user
        let train = build_graph(2, 4, &[(0, 0), (1, 1), (0, 2), (1, 2), (0, 3), (1, 3)]).unwrap();
        assert_eq!(
            inner_diversity(&[list(0, &[0, 1])], &train, 2).unwrap(),
            1.0
        );
        // items 2 and 3 have identical user sets
        assert_eq!(
            inner_diversity(&[list(0, &[2, 3])], &train, 2).unwrap(),
            0.0
        );
        assert!(inner_diversity(&[list(0, &[2])], &train, 1).is_err());
    }

    #[test]
    fn improvement_cases() {
        assert_eq!(improvement(0.3, 0.3).unwrap(), 0.0);
        assert!((improvement(0.106, 0.091).unwrap() - 0.164_835).abs() < 1e-6);
        assert!((improvement(0.573, 0.345).unwrap() - 0.660_870).abs() < 1e-6);
        assert!(matches!(improvement(1.0, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn degree_distribution() {
        let train = build_graph(3, 3, &[(0, 0), (1, 0), (2, 0), (0, 1)]).unwrap();
        let p = recommended_degree_distribution(&[list(0, &[0, 2]), list(1, &[0, 1])], &train);
        assert_eq!(p, BTreeMap::from([(0, 0.25), (1, 0.25), (3, 0.5)]));
        let point = recommended_degree_distribution(&[list(0, &[1])], &train);
        assert_eq!(point, BTreeMap::from([(1, 1.0)]));
    }
}
