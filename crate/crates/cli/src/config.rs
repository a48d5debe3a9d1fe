//! Experiment configuration (TOML) and command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcbrec_core::calibrate::{default_lambda_grid, default_list_lengths, FitOptions};
use dcbrec_core::ingest::Delimiter;
use dcbrec_core::{CalibrationOptions, Normalization, PairSampling, RatingFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algo::AlgoRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatPreset {
    /// Tab-separated `user item rating timestamp`, ratings 1–5.
    #[default]
    Movielens100k,
    /// `user,item,rating`, ratings 1–10.
    TenLevelCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Ratings file; relative paths resolve against the working directory.
    pub path: PathBuf,
    #[serde(default)]
    pub format: FormatPreset,
    /// `"whitespace"` or a literal separator; overrides the preset.
    pub delimiter: Option<String>,
    pub user_column: Option<usize>,
    pub item_column: Option<usize>,
    pub rating_column: Option<usize>,
    pub min_rating: Option<i64>,
    pub max_rating: Option<i64>,
    pub skip_lines: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: i64,
    /// Number of highest-degree items to drop after coarse-graining.
    #[serde(default)]
    pub remove_top: usize,
}

fn default_threshold() -> i64 {
    3
}

impl DatasetConfig {
    pub fn rating_format(&self) -> RatingFormat {
        let mut f = match self.format {
            FormatPreset::Movielens100k => RatingFormat::movielens_100k(),
            FormatPreset::TenLevelCsv => RatingFormat::ten_level_csv(),
        };
        if let Some(d) = &self.delimiter {
            f.delimiter = if d == "whitespace" {
                Delimiter::Whitespace
            } else {
                Delimiter::Literal(d.clone())
            };
        }
        f.user_column = self.user_column.unwrap_or(f.user_column);
        f.item_column = self.item_column.unwrap_or(f.item_column);
        f.rating_column = self.rating_column.unwrap_or(f.rating_column);
        f.min_rating = self.min_rating.unwrap_or(f.min_rating);
        f.max_rating = self.max_rating.unwrap_or(f.max_rating);
        f.skip_lines = self.skip_lines.unwrap_or(f.skip_lines);
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            seeds: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub list_lengths: Vec<usize>,
    pub normalization: Normalization,
    /// Random starts on top of the warm starts.
    pub starts: usize,
    pub max_iterations: usize,
    /// Sweep only the first users with links.
    pub user_limit: Option<usize>,
    /// Grid size for the collapse-spread check.
    pub collapse_grid: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            seed: 0,
            lambda_grid: default_lambda_grid(),
            list_lengths: default_list_lengths(),
            normalization: Normalization::default(),
            starts: fit.starts,
            max_iterations: fit.max_iterations,
            user_limit: None,
            collapse_grid: 101,
        }
    }
}

impl CalibrationConfig {
    pub fn options(&self) -> CalibrationOptions {
        CalibrationOptions {
            lambda_grid: self.lambda_grid.clone(),
            list_lengths: self.list_lengths.clone(),
            normalization: self.normalization,
            user_limit: self.user_limit,
            fit: FitOptions {
                starts: self.starts,
                seed: self.seed,
                max_iterations: self.max_iterations,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Sample pairs for inter-diversity once the exact pair count exceeds this.
    pub threshold: Option<usize>,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            pairs: 100_000,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn pair_sampling(&self) -> Option<PairSampling> {
        self.threshold.map(|threshold| PairSampling {
            threshold,
            pairs: self.pairs,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `pbs`, `hts`, `hhp`, `hhp=0.2`, `ohhp`, `ohhp=1.5`, `dcb`,
    /// `dcb=a,b,c,d`, `dcb=movielens|netflix|rym`.
    pub algorithms: Vec<String>,
    pub list_lengths: Vec<usize>,
    pub k_cold: u32,
    pub hhp_grid: Vec<f64>,
    pub ohhp_grid: Vec<f64>,
    /// Algorithm the improvement table is measured against; defaults to the
    /// first DCB entry, else the last algorithm.
    pub reference: Option<String>,
    /// Write every recommendation list.
    pub dump_lists: bool,
    pub sampling: SamplingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithms: ["pbs", "hhp", "ohhp", "dcb"].map(String::from).to_vec(),
            list_lengths: vec![50],
            k_cold: 10,
            hhp_grid: default_lambda_grid(),
            ohhp_grid: (1..=16).map(|k| k as f64 / 4.0).collect(),
            reference: None,
            dump_lists: false,
            sampling: SamplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub list_lengths: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            list_lengths: (1..=10).map(|k| 10 * k).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub nu: f64,
    pub mean_degree: f64,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub tolerance: f64,
    pub user_limit: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 2000,
            nu: 3.0,
            mean_degree: 20.0,
            seeds: vec![1, 2, 3, 4, 5],
            lambdas: vec![0.25, 0.5, 0.75],
            tolerance: 0.15,
            user_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Thread cap; 0 uses every core.
    pub workers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

/// Command-line flags that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces `split.seeds` (and `synth.seeds` for synth-check).
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Replaces `run.list_lengths`.
    pub list_lengths: Option<Vec<usize>>,
    /// Replaces `run.algorithms`.
    pub algorithms: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid experiment config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.split.seeds = vec![seed];
            self.synth.seeds = vec![seed];
        }
        if let Some(w) = o.workers {
            self.output.workers = w;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(ls) = &o.list_lengths {
            self.run.list_lengths = ls.clone();
        }
        if let Some(a) = &o.algorithms {
            self.run.algorithms = a.clone();
        }
    }

    pub fn dataset(&self) -> Result<&DatasetConfig> {
        self.dataset
            .as_ref()
            .context("config has no [dataset] section")
    }

    pub fn algorithms(&self) -> Result<Vec<AlgoRequest>> {
        self.run.algorithms.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.dataset {
            if !d.path.is_file() {
                bail!("dataset file {} does not exist", d.path.display());
            }
        }
        if self.split.seeds.is_empty() {
            bail!("split.seeds is empty");
        }
        if self.run.algorithms.is_empty() {
            bail!("run.algorithms is empty");
        }
        self.algorithms()?;
        for (key, ls) in [
            ("run.list_lengths", &self.run.list_lengths),
            ("sweep.list_lengths", &self.sweep.list_lengths),
            ("calibration.list_lengths", &self.calibration.list_lengths),
        ] {
            if ls.is_empty() || ls.contains(&0) {
                bail!("{key} must be nonempty with every L >= 1");
            }
        }
        for (key, grid) in [
            ("run.hhp_grid", &self.run.hhp_grid),
            ("calibration.lambda_grid", &self.calibration.lambda_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
                bail!("{key} must be nonempty with values in [0, 1]");
            }
        }
        if self.run.ohhp_grid.is_empty() || self.run.ohhp_grid.iter().any(|g| !(*g >= 0.0)) {
            bail!("run.ohhp_grid must be nonempty with values >= 0");
        }
        if let Some(r) = &self.run.reference {
            r.parse::<AlgoRequest>()?;
        }
        Ok(())
    }

    /// SHA-256 over everything except `[output]`, which only says where and
    /// how fast results are produced.
    pub fn digest(&self) -> String {
        let mut scoped = self.clone();
        scoped.output = OutputConfig::default();
        let canonical = serde_json::to_string(&scoped).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Digest of the sections a calibration depends on.
    pub fn calibration_digest(&self, seed: u64) -> String {
        let key = serde_json::json!({
            "dataset": self.dataset,
            "test_fraction": self.split.test_fraction,
            "seed": seed,
            "calibration": self.calibration,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = ExperimentConfig::from_toml("[dataset]\npath = \"x\"\n").unwrap();
        assert_eq!(c.dataset.unwrap().threshold, 3);
        assert_eq!(c.run.list_lengths, vec![50]);
        assert_eq!(c.calibration.lambda_grid.len(), 21);
        assert_eq!(c.run.ohhp_grid.last(), Some(&4.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("[run]\nlist_length = 5\n").is_err());
    }

    #[test]
    fn digest_ignores_output_only() {
        let a = ExperimentConfig::from_toml("[output]\nworkers = 1\n").unwrap();
        let b =
            ExperimentConfig::from_toml("[output]\nworkers = 8\ndir = \"elsewhere\"\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentConfig::from_toml("[run]\nk_cold = 5\n").unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut c = ExperimentConfig::from_toml("").unwrap();
        c.apply(&Overrides {
            seed: Some(7),
            list_lengths: Some(vec![10, 20]),
            algorithms: Some(vec!["pbs".into()]),
            ..Default::default()
        });
        assert_eq!(c.split.seeds, vec![7]);
        assert_eq!(c.run.list_lengths, vec![10, 20]);
        assert_eq!(c.run.algorithms, vec!["pbs"]);
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::from_toml("").unwrap();
        assert!(c.validate().is_ok());
        c.run.list_lengths = vec![0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml("").unwrap();
        c.run.algorithms = vec!["nope".into()];
        assert!(c.validate().is_err());
        let c = ExperimentConfig::from_toml("[dataset]\npath = \"/no/such/file\"\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn custom_format_overrides_preset() {
        let c = ExperimentConfig::from_toml(
            "[dataset]\npath = \"x\"\nformat = \"ten-level-csv\"\ndelimiter = \"::\"\nskip_lines = 1\n",
        )
        .unwrap();
        let f = c.dataset.unwrap().rating_format();
        assert_eq!(f.delimiter, Delimiter::Literal("::".into()));
        assert_eq!(f.max_rating, 10);
        assert_eq!(f.skip_lines, 1);
    }
}
