//! Diffusion-based recommendation on user–item bipartite networks.
//!
//! The crate covers the whole experimental pipeline:
//!
//! * [`graph`]: the immutable unary bipartite network,
//! * [`ingest`]: rating-file parsing, coarse-graining and seeded train/probe splits,
//! * [`diffusion`]: mass diffusion (PBS), heat conduction (HTS), their hybrid (HHP),
//!   the degree-power hybrid (OHHP) and the fitted degree-adaptive hybrid (DCB),
//! * [`calibrate`]: the λ sweep, rescaling and bi-exponential fit that produce DCB parameters,
//! * [`metrics`]: ranking score, precision, inter/inner diversity and friends,
//! * [`oracle`]: dense reference implementations used by the test suites.

pub mod calibrate;
pub mod diffusion;
mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod par;

pub use calibrate::{
    calibrate_dcb, fit_double_exponential, generate_power_law_bipartite, rescale,
    sweep_mean_degree, verify_scaling_exponent, BiExponential, Calibration, CalibrationOptions,
    CurveFit, FitOptions, FitResult, Normalization, RescaledPoint, ScalingFit, SweepPoint,
};
pub use diffusion::{
    per_item_lambda, recommend_all, score_user, top_l, AlgorithmSpec, ItemProjection, Propagator,
    RecommendationList,
};
pub use error::{Error, Result};
pub use graph::{build_graph, BipartiteGraph, ResourceVector};
pub use ingest::{
    coarse_grain, dataset_stats, parse_ratings, remove_top_degree_items, split, Dataset,
    DatasetStats, InteractionRecord, RatingFormat, SplitDataset,
};
pub use metrics::{
    evaluate, improvement, inner_diversity, inter_diversity, precision, ranking_score,
    recommended_degree_distribution, EvaluationReport, PairSampling, Precision, RankingScore,
};
