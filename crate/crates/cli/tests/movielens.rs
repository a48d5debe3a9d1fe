//! Checks against the public MovieLens 100K ratings. The file is looked up at
//! `data/ml-100k/u.data` (see `scripts/fetch_movielens.py`) or at
//! `DCBREC_MOVIELENS`; these tests fail when it is missing.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use dcbrec_cli::{commands, ExperimentConfig};
use dcbrec_core::diffusion::write_recommendations;
use dcbrec_core::{
    calibrate_dcb, dataset_stats, evaluate, inter_diversity, par, parse_ratings, split,
    sweep_mean_degree, AlgorithmSpec, BiExponential, CalibrationOptions, Dataset, ItemProjection,
    PairSampling, Propagator, RatingFormat, SplitDataset,
};

fn data_path() -> PathBuf {
    let path = std::env::var_os("DCBREC_MOVIELENS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data"));
    assert!(
        path.is_file(),
        "MovieLens 100K not found at {}; run scripts/fetch_movielens.py or set DCBREC_MOVIELENS",
        path.display()
    );
    path
}

fn dataset() -> &'static (usize, Dataset) {
    static DATA: OnceLock<(usize, Dataset)> = OnceLock::new();
    DATA.get_or_init(|| {
        let file = std::fs::File::open(data_path()).unwrap();
        let records = parse_ratings(
            std::io::BufReader::new(file),
            &RatingFormat::movielens_100k(),
        )
        .unwrap();
        (records.len(), Dataset::from_records(&records, 3))
    })
}

fn split_seed(seed: u64) -> SplitDataset {
    let ds = &dataset().1;
    split(ds.num_users(), ds.num_items(), &ds.links, 0.1, seed).unwrap()
}

#[test]
fn coarse_grained_counts() {
    let (records, ds) = dataset();
    assert_eq!(*records, 100_000);
    let stats = dataset_stats(&ds.graph().unwrap());
    assert_eq!((stats.users, stats.items, stats.links), (943, 1682, 82_520));
    assert_eq!(format!("{:.2}%", 100.0 * stats.sparsity), "5.20%");
}

#[test]
fn probe_holds_a_tenth_of_the_links() {
    let s = split_seed(1);
    assert_eq!(s.probe.len(), 8252);
    assert_eq!(s.train.num_links(), 82_520 - 8252);
    assert_eq!((s.train.num_users(), s.train.num_items()), (943, 1682));
}

#[test]
fn sampled_inter_diversity_tracks_exact() {
    let s = split_seed(1);
    let proj = ItemProjection::build(&s.train);
    let lists = Propagator::new(&proj, &AlgorithmSpec::Pbs).recommend_all(&s.train, 50);
    let exact = inter_diversity(&lists, 50, None);
    let sampling = PairSampling {
        threshold: 0,
        pairs: 100_000,
        seed: 7,
    };
    let sampled = inter_diversity(&lists, 50, Some(sampling));
    assert!(
        (exact - sampled).abs() <= 0.01,
        "exact {exact} sampled {sampled}"
    );
    assert_ne!(exact, sampled);
}

#[test]
fn pbs_diversity_and_precision() {
    let mut inner = Vec::new();
    let mut p = Vec::new();
    for seed in 1..=5 {
        let s = split_seed(seed);
        let proj = ItemProjection::build(&s.train);
        let r = evaluate(
            &s.train,
            &s.probe,
            &Propagator::new(&proj, &AlgorithmSpec::Pbs),
            50,
            10,
            None,
        )
        .unwrap();
        inner.push(r.d_inner);
        p.push(r.p);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&inner) - 0.645).abs() <= 0.010, "D_inner {inner:?}");
    assert!((mean(&p) - 0.075).abs() <= 0.010, "P {p:?}");
}

#[test]
fn calibration_lands_near_the_published_curve() {
    let s = split_seed(1);
    let cal = calibrate_dcb(&s.train, &CalibrationOptions::default()).unwrap();
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let rms = (grid
        .iter()
        .map(|&x| (cal.fit.curve.eval(x) - BiExponential::MOVIELENS.eval(x)).powi(2))
        .sum::<f64>()
        / grid.len() as f64)
        .sqrt();
    assert!(rms <= 0.15, "curve {:?} rms {rms}", cal.fit.curve);
    assert!(cal.spec.validate().is_ok());

    // pure mass diffusion gives the most popular lists at every length
    for l in [10, 20, 30, 40, 50] {
        let points: Vec<_> = cal.sweep.iter().filter(|p| p.list_len == l).collect();
        let top = points.iter().find(|p| p.lambda == 1.0).unwrap().mean_degree;
        assert!(points.iter().all(|p| p.mean_degree <= top), "L={l}");
    }

    let again = calibrate_dcb(&s.train, &CalibrationOptions::default()).unwrap();
    assert_eq!(cal, again);
}

#[test]
fn one_point_sweep_reruns_identically() {
    let s = split_seed(1);
    let a = sweep_mean_degree(&s.train, &[0.5], &[10], None).unwrap();
    let b = sweep_mean_degree(&s.train, &[0.5], &[10], None).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a, b);
}

#[test]
fn recommendation_dump_ignores_worker_count() {
    let s = split_seed(2);
    let proj = ItemProjection::build(&s.train);
    let spec = AlgorithmSpec::dcb(BiExponential::MOVIELENS, &s.train).unwrap();
    let dump = |workers| {
        par::with_workers(workers, || {
            let lists = Propagator::new(&proj, &spec).recommend_all(&s.train, 50);
            let mut bytes = Vec::new();
            write_recommendations(&mut bytes, &lists).unwrap();
            bytes
        })
    };
    let one = dump(1);
    assert!(!one.is_empty());
    assert_eq!(one, dump(8));
}

#[test]
fn inter_diversity_falls_with_list_length() {
    let out = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&format!(
        r#"
[dataset]
path = {:?}

[split]
seeds = [1]

[output]
dir = {:?}
"#,
        data_path(),
        out.path()
    ))
    .unwrap();
    let report = commands::sweep_l(&cfg).unwrap();
    let algorithms: Vec<&str> = report.rows.iter().map(|r| r.algorithm.as_str()).collect();
    for name in ["PBS", "HHP", "OHHP", "DCB"] {
        assert!(algorithms.contains(&name), "{name} missing");
    }
    assert!(report.violations.is_empty(), "{:#?}", report.violations);
}
