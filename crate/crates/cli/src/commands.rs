//! The six subcommands. Each reads an [`ExperimentConfig`], writes its files
//! under `output.dir`, and returns what it wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dcbrec_core::calibrate::{
    calibrate_with_projection, collapse_spread, rms_residual, CollapseSpread, ScalingOptions,
};
use dcbrec_core::diffusion::write_recommendations;
use dcbrec_core::ingest::{write_id_map, write_links};
use dcbrec_core::metrics::{evaluate_ranking, evaluate_with_lists};
use dcbrec_core::{
    dataset_stats, generate_power_law_bipartite, inner_diversity, inter_diversity, par,
    parse_ratings, recommended_degree_distribution, split, verify_scaling_exponent, AlgorithmSpec,
    BiExponential, BipartiteGraph, Dataset, DatasetStats, EvaluationReport, FitResult,
    ItemProjection, Propagator, SplitDataset,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algo::AlgoRequest;
use crate::config::ExperimentConfig;
use crate::output::{create, write_csv, write_json, write_text, Stage, StageResult};
use crate::report::{self, improvement_rows, summarize, DeltaRow, MetricStats, SummaryRow};

/// Curve the calibrated fit is compared against.
pub const REFERENCE_CURVE: BiExponential = BiExponential::MOVIELENS;

fn out_dir(cfg: &ExperimentConfig) -> &Path {
    &cfg.output.dir
}

fn split_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    out_dir(cfg).join(format!("split-{seed}"))
}

fn prepare(cfg: &ExperimentConfig) -> StageResult<()> {
    cfg.validate().stage("config")?;
    std::fs::create_dir_all(out_dir(cfg))
        .with_context(|| format!("cannot create {}", out_dir(cfg).display()))
        .stage("config")
}

/// Parsed, coarse-grained and trimmed dataset.
pub struct LoadedData {
    pub dataset: Dataset,
    pub raw_records: usize,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> StageResult<LoadedData> {
    let d = cfg.dataset().stage("ingest")?;
    let file = File::open(&d.path)
        .with_context(|| format!("cannot open {}", d.path.display()))
        .stage("ingest")?;
    let records = parse_ratings(BufReader::new(file), &d.rating_format())
        .with_context(|| format!("while parsing {}", d.path.display()))
        .stage("ingest")?;
    let dataset = Dataset::from_records(&records, d.threshold)
        .without_top_items(d.remove_top)
        .stage("ingest")?;
    Ok(LoadedData {
        dataset,
        raw_records: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub config_digest: String,
    pub raw_records: usize,
    pub threshold: i64,
    pub removed_items: usize,
    #[serde(flatten)]
    pub stats: DatasetStats,
}

/// Writes `links.tsv`, `users.tsv`, `items.tsv` and `stats.json`.
pub fn ingest(cfg: &ExperimentConfig) -> StageResult<IngestSummary> {
    prepare(cfg)?;
    let loaded = load_dataset(cfg)?;
    let ds = &loaded.dataset;
    let g = ds.graph().stage("ingest")?;
    let d = cfg.dataset().stage("ingest")?;
    let summary = IngestSummary {
        config_digest: cfg.digest(),
        raw_records: loaded.raw_records,
        threshold: d.threshold,
        removed_items: d.remove_top,
        stats: dataset_stats(&g),
    };
    let dir = out_dir(cfg);
    (|| -> anyhow::Result<()> {
        write_links(create(&dir.join("links.tsv"))?, &ds.links)?;
        write_id_map(create(&dir.join("users.tsv"))?, &ds.users)?;
        write_id_map(create(&dir.join("items.tsv"))?, &ds.items)?;
        write_json(&dir.join("stats.json"), &summary)
    })()
    .stage("ingest")?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub config_digest: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub users: usize,
    pub items: usize,
    pub train_links: usize,
    pub probe_links: usize,
}

fn split_seed(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> StageResult<SplitDataset> {
    split(
        ds.num_users(),
        ds.num_items(),
        &ds.links,
        cfg.split.test_fraction,
        seed,
    )
    .stage("split")
}

fn write_split(cfg: &ExperimentConfig, s: &SplitDataset) -> StageResult<SplitSummary> {
    let dir = split_dir(cfg, s.seed);
    let summary = SplitSummary {
        config_digest: cfg.digest(),
        seed: s.seed,
        test_fraction: s.test_fraction,
        users: s.train.num_users(),
        items: s.train.num_items(),
        train_links: s.train.num_links(),
        probe_links: s.probe.len(),
    };
    (|| -> anyhow::Result<()> {
        write_links(create(&dir.join("train.tsv"))?, &s.train.links())?;
        write_links(create(&dir.join("probe.tsv"))?, &s.probe)?;
        write_json(&dir.join("split.json"), &summary)
    })()
    .stage("split")?;
    Ok(summary)
}

/// Writes `split-<seed>/{train,probe}.tsv` and `split.json` per split seed.
pub fn split_cmd(cfg: &ExperimentConfig) -> StageResult<Vec<SplitSummary>> {
    prepare(cfg)?;
    let ds = load_dataset(cfg)?.dataset;
    par::with_workers(cfg.output.workers, || {
        cfg.split
            .seeds
            .par_iter()
            .map(|&seed| write_split(cfg, &split_seed(cfg, &ds, seed)?))
            .collect()
    })
}

/// A persisted calibration; `run` reuses it when `calibration_key` matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub calibration_key: String,
    pub seed: u64,
    pub spec: AlgorithmSpec,
    pub fit: FitResult,
    pub collapse: Option<CollapseSpread>,
    pub reference_curve: BiExponential,
    /// RMS residual of `reference_curve` on the same rescaled points.
    pub reference_residual: f64,
}

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    list_len: usize,
    mean_degree: f64,
}

#[derive(Serialize)]
struct RescaledRow {
    lambda: f64,
    list_len: usize,
    k_tilde: f64,
    lambda_tilde: f64,
}

#[derive(Serialize)]
struct FitCurveRow {
    k_tilde: f64,
    lambda_fit: f64,
    lambda_reference: f64,
}

fn calibrate_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    train: &BipartiteGraph,
    projection: &ItemProjection,
    reuse: bool,
) -> StageResult<CalibrationRecord> {
    let dir = split_dir(cfg, seed);
    let path = dir.join("calibration.json");
    let key = cfg.calibration_digest(seed);
    if reuse {
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(rec) = serde_json::from_str::<CalibrationRecord>(&text) {
                if rec.calibration_key == key {
                    return Ok(rec);
                }
            }
        }
    }
    let cal = calibrate_with_projection(train, projection, &cfg.calibration.options())
        .stage("calibrate")?;
    let xs: Vec<f64> = cal.rescaled.iter().map(|p| p.k_tilde).collect();
    let ys: Vec<f64> = cal.rescaled.iter().map(|p| p.lambda_tilde).collect();
    let rec = CalibrationRecord {
        calibration_key: key,
        seed,
        spec: cal.spec,
        fit: cal.fit.clone(),
        collapse: collapse_spread(&cal.rescaled, cfg.calibration.collapse_grid).ok(),
        reference_curve: REFERENCE_CURVE,
        reference_residual: rms_residual(&REFERENCE_CURVE, &xs, &ys),
    };
    let sweep: Vec<SweepRow> = cal
        .sweep
        .iter()
        .map(|p| SweepRow {
            lambda: p.lambda,
            list_len: p.list_len,
            mean_degree: p.mean_degree,
        })
        .collect();
    let rescaled: Vec<RescaledRow> = cal
        .rescaled
        .iter()
        .map(|p| RescaledRow {
            lambda: p.lambda,
            list_len: p.list_len,
            k_tilde: p.k_tilde,
            lambda_tilde: p.lambda_tilde,
        })
        .collect();
    let curve: Vec<FitCurveRow> = (0..=100)
        .map(|k| {
            let x = k as f64 / 100.0;
            FitCurveRow {
                k_tilde: x,
                lambda_fit: rec.fit.curve.eval(x),
                lambda_reference: REFERENCE_CURVE.eval(x),
            }
        })
        .collect();
    (|| -> anyhow::Result<()> {
        write_csv(&dir.join("fig1_sweep.csv"), &sweep)?;
        write_csv(&dir.join("fig2_rescaled.csv"), &rescaled)?;
        write_csv(&dir.join("fig2_fit.csv"), &curve)?;
        write_json(&path, &rec)
    })()
    .stage("calibrate")?;
    Ok(rec)
}

/// Sweeps, rescales and fits on every split's training graph.
pub fn calibrate(cfg: &ExperimentConfig) -> StageResult<Vec<CalibrationRecord>> {
    prepare(cfg)?;
    let ds = load_dataset(cfg)?.dataset;
    par::with_workers(cfg.output.workers, || {
        cfg.split
            .seeds
            .par_iter()
            .map(|&seed| {
                let s = split_seed(cfg, &ds, seed)?;
                let projection = ItemProjection::build(&s.train);
                calibrate_seed(cfg, seed, &s.train, &projection, false)
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub value: f64,
    pub r: f64,
    pub r_cold: Option<f64>,
}

/// Ranking-score search over one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuning {
    pub parameter: String,
    pub best: f64,
    pub grid: Vec<GridPoint>,
}

/// An algorithm request with its parameters fixed for one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub label: String,
    pub request: String,
    pub spec: AlgorithmSpec,
    pub tuning: Option<Tuning>,
}

pub fn label(req: &AlgoRequest) -> String {
    match req {
        AlgoRequest::Pbs | AlgoRequest::Hts | AlgoRequest::Hhp(None) | AlgoRequest::Ohhp(None) => {
            req.name().to_string()
        }
        AlgoRequest::Dcb(None) => "DCB".into(),
        AlgoRequest::Hhp(Some(l)) => format!("HHP(lambda={l})"),
        AlgoRequest::Ohhp(Some(g)) => format!("OHHP(gamma={g})"),
        AlgoRequest::Dcb(Some(c)) => format!("DCB({},{},{},{})", c.a, c.b, c.c, c.d),
    }
}

fn tune(
    parameter: &str,
    grid: &[f64],
    make: impl Fn(f64) -> dcbrec_core::Result<AlgorithmSpec>,
    s: &SplitDataset,
    projection: &ItemProjection,
    k_cold: u32,
) -> StageResult<(AlgorithmSpec, Tuning)> {
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, AlgorithmSpec, f64)> = None;
    for &value in grid {
        let spec = make(value).stage("tune")?;
        let rank = evaluate_ranking(
            &s.train,
            &s.probe,
            &Propagator::new(projection, &spec),
            k_cold,
        );
        points.push(GridPoint {
            value,
            r: rank.mean,
            r_cold: rank.cold,
        });
        if best.map_or(true, |(r, _, _)| rank.mean < r) {
            best = Some((rank.mean, spec, value));
        }
    }
    let (_, spec, value) = best
        .filter(|(r, _, _)| r.is_finite())
        .context("no grid value produced a ranking score (empty probe set?)")
        .stage("tune")?;
    Ok((
        spec,
        Tuning {
            parameter: parameter.to_string(),
            best: value,
            grid: points,
        },
    ))
}

/// Fixes every requested algorithm's parameters on split `s`.
fn resolve(
    cfg: &ExperimentConfig,
    requests: &[AlgoRequest],
    s: &SplitDataset,
    projection: &ItemProjection,
) -> StageResult<(Vec<Resolved>, Option<CalibrationRecord>)> {
    let mut calibration = None;
    let mut out = Vec::with_capacity(requests.len());
    for req in requests {
        let (spec, tuning) = match *req {
            AlgoRequest::Pbs => (AlgorithmSpec::Pbs, None),
            AlgoRequest::Hts => (AlgorithmSpec::Hts, None),
            AlgoRequest::Hhp(Some(l)) => (AlgorithmSpec::hhp(l).stage("resolve")?, None),
            AlgoRequest::Ohhp(Some(g)) => {
                (AlgorithmSpec::ohhp(g, &s.train).stage("resolve")?, None)
            }
            AlgoRequest::Dcb(Some(c)) => (AlgorithmSpec::dcb(c, &s.train).stage("resolve")?, None),
            AlgoRequest::Hhp(None) => {
                let (spec, t) = tune(
                    "lambda",
                    &cfg.run.hhp_grid,
                    AlgorithmSpec::hhp,
                    s,
                    projection,
                    cfg.run.k_cold,
                )?;
                (spec, Some(t))
            }
            AlgoRequest::Ohhp(None) => {
                let make = |g| AlgorithmSpec::ohhp(g, &s.train);
                let (spec, t) = tune(
                    "gamma",
                    &cfg.run.ohhp_grid,
                    make,
                    s,
                    projection,
                    cfg.run.k_cold,
                )?;
                (spec, Some(t))
            }
            AlgoRequest::Dcb(None) => {
                if calibration.is_none() {
                    calibration = Some(calibrate_seed(cfg, s.seed, &s.train, projection, true)?);
                }
                (calibration.as_ref().map(|c| c.spec).unwrap(), None)
            }
        };
        out.push(Resolved {
            label: label(req),
            request: req.to_string(),
            spec,
            tuning,
        });
    }
    Ok((out, calibration))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmRun {
    #[serde(flatten)]
    pub resolved: Resolved,
    /// One report per list length, in `run.list_lengths` order.
    pub reports: Vec<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub train_links: usize,
    pub probe_links: usize,
    pub calibration: Option<FitResult>,
    pub algorithms: Vec<AlgorithmRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub list_lengths: Vec<usize>,
    pub k_cold: u32,
    pub reference: Option<String>,
    pub summary: Vec<SummaryRow>,
    pub improvements: Vec<DeltaRow>,
    pub runs: Vec<SeedRun>,
}

#[derive(Serialize)]
struct DegreeRow<'a> {
    algorithm: &'a str,
    seed: u64,
    list_len: usize,
    k: u32,
    value: f64,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct SeedOutput {
    run: SeedRun,
    degree_dist: Vec<(String, u64, usize, u32, f64)>,
}

fn run_seed(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    requests: &[AlgoRequest],
    seed: u64,
) -> StageResult<SeedOutput> {
    let s = split_seed(cfg, ds, seed)?;
    write_split(cfg, &s)?;
    let projection = ItemProjection::build(&s.train);
    let (resolved, calibration) = resolve(cfg, requests, &s, &projection)?;
    let sampling = cfg.run.sampling.pair_sampling();
    let mut algorithms = Vec::with_capacity(resolved.len());
    let mut degree_dist = Vec::new();
    for res in resolved {
        let propagator = Propagator::new(&projection, &res.spec);
        let mut reports = Vec::with_capacity(cfg.run.list_lengths.len());
        for &l in &cfg.run.list_lengths {
            let mut eval =
                evaluate_with_lists(&s.train, &s.probe, &propagator, l, cfg.run.k_cold, sampling)
                    .stage("evaluate")?;
            eval.report.algorithm = res.label.clone();
            for (k, p) in recommended_degree_distribution(&eval.lists, &s.train) {
                degree_dist.push((res.label.clone(), seed, l, k, p));
            }
            if cfg.run.dump_lists {
                let path =
                    split_dir(cfg, seed).join(format!("lists_{}_L{l}.tsv", slug(&res.request)));
                (|| -> anyhow::Result<()> {
                    let mut w = create(&path)?;
                    write_recommendations(&mut w, &eval.lists)?;
                    std::io::Write::flush(&mut w)?;
                    Ok(())
                })()
                .stage("report")?;
            }
            reports.push(eval.report);
        }
        algorithms.push(AlgorithmRun {
            resolved: res,
            reports,
        });
    }
    Ok(SeedOutput {
        run: SeedRun {
            seed,
            train_links: s.train.num_links(),
            probe_links: s.probe.len(),
            calibration: calibration.map(|c| c.fit),
            algorithms,
        },
        degree_dist,
    })
}

fn reference_index(cfg: &ExperimentConfig, requests: &[AlgoRequest]) -> StageResult<Option<usize>> {
    if requests.len() < 2 {
        return Ok(None);
    }
    match &cfg.run.reference {
        Some(r) => {
            let want: AlgoRequest = r.parse().stage("config")?;
            requests
                .iter()
                .position(|q| *q == want)
                .with_context(|| format!("reference algorithm {r:?} is not in run.algorithms"))
                .stage("config")
                .map(Some)
        }
        None => Ok(Some(
            requests
                .iter()
                .position(|q| matches!(q, AlgoRequest::Dcb(_)))
                .unwrap_or(requests.len() - 1),
        )),
    }
}

/// Evaluates every configured algorithm on every split and list length.
///
/// Writes `report.json`, `report.txt`, `report.csv`, the per-degree
/// `fig3_*.csv` tables and each split's manifests.
pub fn run(cfg: &ExperimentConfig) -> StageResult<RunReport> {
    prepare(cfg)?;
    let requests = cfg.algorithms().stage("config")?;
    let reference = reference_index(cfg, &requests)?;
    let ds = load_dataset(cfg)?.dataset;
    let outputs: Vec<SeedOutput> = par::with_workers(cfg.output.workers, || {
        cfg.split
            .seeds
            .par_iter()
            .map(|&seed| run_seed(cfg, &ds, &requests, seed))
            .collect::<StageResult<_>>()
    })?;
    let runs: Vec<SeedRun> = outputs.iter().map(|o| o.run.clone()).collect();
    let labels: Vec<String> = requests.iter().map(label).collect();
    let summary = summarize(&labels, &cfg.run.list_lengths, &runs);
    let improvements = reference
        .map(|r| improvement_rows(&summary, &labels[r]))
        .unwrap_or_default();
    let report = RunReport {
        config_digest: cfg.digest(),
        seeds: cfg.split.seeds.clone(),
        list_lengths: cfg.run.list_lengths.clone(),
        k_cold: cfg.run.k_cold,
        reference: reference.map(|r| labels[r].clone()),
        summary,
        improvements,
        runs,
    };

    let dir = out_dir(cfg);
    let mut degree_rows = Vec::new();
    let mut r_rows = Vec::new();
    let mut p_rows = Vec::new();
    for o in &outputs {
        for (alg, seed, l, k, p) in &o.degree_dist {
            degree_rows.push(DegreeRow {
                algorithm: alg,
                seed: *seed,
                list_len: *l,
                k: *k,
                value: *p,
            });
        }
        for a in &o.run.algorithms {
            for rep in &a.reports {
                for (&k, &v) in &rep.r_by_degree {
                    r_rows.push(DegreeRow {
                        algorithm: &a.resolved.label,
                        seed: o.run.seed,
                        list_len: rep.list_len,
                        k,
                        value: v,
                    });
                }
                for (&k, &v) in &rep.p_by_degree {
                    p_rows.push(DegreeRow {
                        algorithm: &a.resolved.label,
                        seed: o.run.seed,
                        list_len: rep.list_len,
                        k,
                        value: v,
                    });
                }
            }
        }
    }
    (|| -> anyhow::Result<()> {
        write_json(&dir.join("report.json"), &report)?;
        write_text(&dir.join("report.txt"), &report::render_run(&report))?;
        write_csv(
            &dir.join("report.csv"),
            &report::flat_summary(&report.summary),
        )?;
        write_csv(&dir.join("fig3_degree_distribution.csv"), &degree_rows)?;
        write_csv(&dir.join("fig3_ranking_by_degree.csv"), &r_rows)?;
        write_csv(&dir.join("fig3_precision_by_degree.csv"), &p_rows)?;
        Ok(())
    })()
    .stage("report")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityRow {
    pub algorithm: String,
    pub list_len: usize,
    pub d_inter: MetricStats,
    pub d_inner: MetricStats,
}

/// `D_inter` rising from one list length to the next.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub algorithm: String,
    pub from_len: usize,
    pub to_len: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<DiversityRow>,
    pub violations: Vec<Violation>,
    pub resolved: Vec<Vec<Resolved>>,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    algorithm: &'a str,
    list_len: usize,
    mean: Option<f64>,
    std: Option<f64>,
    splits: usize,
}

/// Diversity of each configured algorithm as a function of `L`
/// (`sweep.list_lengths`), plus the recommended-degree distribution per `L`.
pub fn sweep_l(cfg: &ExperimentConfig) -> StageResult<SweepReport> {
    prepare(cfg)?;
    let requests = cfg.algorithms().stage("config")?;
    let ds = load_dataset(cfg)?.dataset;
    let mut lengths = cfg.sweep.list_lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    let max_len = *lengths.last().expect("validated nonempty");
    let sampling = cfg.run.sampling.pair_sampling();

    type PerSeed = (
        Vec<Resolved>,
        Vec<Vec<(f64, f64)>>,
        Vec<(String, u64, usize, u32, f64)>,
    );
    let per_seed: Vec<PerSeed> = par::with_workers(cfg.output.workers, || {
        cfg.split
            .seeds
            .par_iter()
            .map(|&seed| -> StageResult<PerSeed> {
                let s = split_seed(cfg, &ds, seed)?;
                let projection = ItemProjection::build(&s.train);
                let (resolved, _) = resolve(cfg, &requests, &s, &projection)?;
                let mut curves = Vec::with_capacity(resolved.len());
                let mut dist = Vec::new();
                for res in &resolved {
                    let lists =
                        Propagator::new(&projection, &res.spec).recommend_all(&s.train, max_len);
                    let mut curve = Vec::with_capacity(lengths.len());
                    for &l in &lengths {
                        let inter = inter_diversity(&lists, l, sampling);
                        let inner = inner_diversity(&lists, &s.train, l).unwrap_or(f64::NAN);
                        curve.push((inter, inner));
                        let short: Vec<_> = lists.iter().map(|x| x.truncated(l)).collect();
                        for (k, p) in recommended_degree_distribution(&short, &s.train) {
                            dist.push((res.label.clone(), seed, l, k, p));
                        }
                    }
                    curves.push(curve);
                }
                Ok((resolved, curves, dist))
            })
            .collect::<StageResult<_>>()
    })?;

    let labels: Vec<String> = requests.iter().map(label).collect();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (a, name) in labels.iter().enumerate() {
        let mut prev: Option<(usize, f64)> = None;
        for (x, &l) in lengths.iter().enumerate() {
            let inter: Vec<f64> = per_seed.iter().map(|p| p.1[a][x].0).collect();
            let inner: Vec<f64> = per_seed.iter().map(|p| p.1[a][x].1).collect();
            let row = DiversityRow {
                algorithm: name.clone(),
                list_len: l,
                d_inter: MetricStats::of(&inter),
                d_inner: MetricStats::of(&inner),
            };
            if let (Some((pl, pv)), Some(v)) = (prev, row.d_inter.mean) {
                if v > pv {
                    violations.push(Violation {
                        algorithm: name.clone(),
                        from_len: pl,
                        to_len: l,
                        from: pv,
                        to: v,
                    });
                }
            }
            prev = row.d_inter.mean.map(|v| (l, v));
            rows.push(row);
        }
    }
    let report = SweepReport {
        config_digest: cfg.digest(),
        seeds: cfg.split.seeds.clone(),
        rows,
        violations,
        resolved: per_seed.iter().map(|p| p.0.clone()).collect(),
    };

    let curve_rows = |pick: fn(&DiversityRow) -> &MetricStats| -> Vec<CurveRow<'_>> {
        report
            .rows
            .iter()
            .map(|r| {
                let m = pick(r);
                CurveRow {
                    algorithm: &r.algorithm,
                    list_len: r.list_len,
                    mean: m.mean,
                    std: m.std,
                    splits: m.n,
                }
            })
            .collect()
    };
    let dist_rows: Vec<DegreeRow> = per_seed
        .iter()
        .flat_map(|p| p.2.iter())
        .map(|(alg, seed, l, k, v)| DegreeRow {
            algorithm: alg,
            seed: *seed,
            list_len: *l,
            k: *k,
            value: *v,
        })
        .collect();
    let dir = out_dir(cfg);
    (|| -> anyhow::Result<()> {
        write_csv(
            &dir.join("fig5_inter_diversity.csv"),
            &curve_rows(|r| &r.d_inter),
        )?;
        write_csv(
            &dir.join("fig6_inner_diversity.csv"),
            &curve_rows(|r| &r.d_inner),
        )?;
        write_csv(&dir.join("fig3_degree_distribution_by_L.csv"), &dist_rows)?;
        write_json(&dir.join("sweep.json"), &report)
    })()
    .stage("report")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthRow {
    pub seed: u64,
    pub lambda: f64,
    pub slope: f64,
    pub intercept: f64,
    pub deviation: f64,
    pub within_tolerance: bool,
    pub buckets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub config_digest: String,
    pub users: usize,
    pub items: usize,
    pub nu: f64,
    pub mean_degree: f64,
    pub tolerance: f64,
    pub rows: Vec<SynthRow>,
    pub all_within: bool,
}

#[derive(Serialize)]
struct BucketRow {
    seed: u64,
    lambda: f64,
    mean_ln_degree: f64,
    mean_score: f64,
    items: usize,
}

/// Checks that HHP(λ) scores scale as `k^λ` on synthetic power-law graphs.
pub fn synth_check(cfg: &ExperimentConfig) -> StageResult<SynthReport> {
    prepare(cfg)?;
    let sc = &cfg.synth;
    let options = ScalingOptions {
        users: sc.user_limit,
        ..ScalingOptions::default()
    };
    let per_seed: Vec<Vec<(SynthRow, Vec<BucketRow>)>> =
        par::with_workers(cfg.output.workers, || {
            sc.seeds
                .par_iter()
                .map(|&seed| -> StageResult<_> {
                    let g = generate_power_law_bipartite(
                        sc.users,
                        sc.items,
                        sc.nu,
                        sc.mean_degree,
                        seed,
                    )
                    .stage("synth-check")?;
                    sc.lambdas
                        .iter()
                        .map(|&lambda| {
                            let fit = verify_scaling_exponent(&g, lambda, &options)
                                .stage("synth-check")?;
                            let deviation = fit.slope - lambda;
                            let buckets = fit
                                .buckets
                                .iter()
                                .map(|b| BucketRow {
                                    seed,
                                    lambda,
                                    mean_ln_degree: b.mean_ln_degree,
                                    mean_score: b.mean_score,
                                    items: b.items,
                                })
                                .collect();
                            Ok((
                                SynthRow {
                                    seed,
                                    lambda,
                                    slope: fit.slope,
                                    intercept: fit.intercept,
                                    deviation,
                                    within_tolerance: deviation.abs() <= sc.tolerance,
                                    buckets: fit.buckets.len(),
                                },
                                buckets,
                            ))
                        })
                        .collect()
                })
                .collect::<StageResult<_>>()
        })?;
    let mut rows = Vec::new();
    let mut buckets = Vec::new();
    for (row, b) in per_seed.into_iter().flatten() {
        rows.push(row);
        buckets.extend(b);
    }
    let report = SynthReport {
        config_digest: cfg.digest(),
        users: sc.users,
        items: sc.items,
        nu: sc.nu,
        mean_degree: sc.mean_degree,
        tolerance: sc.tolerance,
        all_within: rows.iter().all(|r| r.within_tolerance),
        rows,
    };
    let dir = out_dir(cfg);
    (|| -> anyhow::Result<()> {
        write_csv(&dir.join("synth_buckets.csv"), &buckets)?;
        write_json(&dir.join("synth_check.json"), &report)
    })()
    .stage("report")?;
    Ok(report)
}

/// Every split's report, grouped by algorithm label and `L`.
pub fn reports_by_label(report: &RunReport) -> BTreeMap<(String, usize), Vec<&EvaluationReport>> {
    let mut out: BTreeMap<(String, usize), Vec<&EvaluationReport>> = BTreeMap::new();
    for run in &report.runs {
        for a in &run.algorithms {
            for rep in &a.reports {
                out.entry((a.resolved.label.clone(), rep.list_len))
                    .or_default()
                    .push(rep);
            }
        }
    }
    out
}
