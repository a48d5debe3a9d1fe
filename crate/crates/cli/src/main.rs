use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcbrec_cli::{commands, ExperimentConfig, Overrides, StageResult};

#[derive(Parser)]
#[command(
    name = "dcbrec",
    version,
    about = "Diffusion-based recommendation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single split seed (synth-check: single graph seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recommendation list lengths, comma-separated.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    list_lengths: Option<Vec<usize>>,
    /// Algorithms, comma-separated or repeated:
    /// pbs, hts, hhp[=l], ohhp[=g], dcb[=a,b,c,d|movielens|netflix|rym].
    #[arg(long, global = true)]
    algo: Option<Vec<String>>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse and coarse-grain the dataset; write links and stats.
    Ingest,
    /// Write train/probe manifests for each split seed.
    Split,
    /// Sweep HHP, rescale and fit the DCB curve.
    Calibrate,
    /// Evaluate the configured algorithms and write the report tables.
    Run,
    /// Diversity and recommended-degree curves over a range of L.
    #[command(name = "sweep-L")]
    SweepL,
    /// Degree-scaling check on synthetic power-law graphs.
    SynthCheck,
}

fn split_algos(raw: Vec<String>) -> Vec<String> {
    // commas separate algorithms except inside a dcb coefficient list
    let mut out: Vec<String> = Vec::new();
    for part in raw.iter().flat_map(|s| s.split(',')) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match out.last_mut() {
            Some(last)
                if last.starts_with("dcb=")
                    && last.matches(',').count() < 3
                    && part.parse::<f64>().is_ok() =>
            {
                last.push(',');
                last.push_str(part);
            }
            _ => out.push(part.to_string()),
        }
    }
    out
}

fn execute(command: Command, cfg: &ExperimentConfig) -> StageResult<String> {
    Ok(match command {
        Command::Ingest => {
            let s = commands::ingest(cfg)?;
            format!(
                "users={} items={} links={} sparsity={:.2}%",
                s.stats.users,
                s.stats.items,
                s.stats.links,
                100.0 * s.stats.sparsity
            )
        }
        Command::Split => commands::split_cmd(cfg)?
            .iter()
            .map(|s| format!("split {}: train={} probe={}", s.seed, s.train_links, s.probe_links))
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Calibrate => commands::calibrate(cfg)?
            .iter()
            .map(|c| {
                let f = &c.fit;
                let spread = c
                    .collapse
                    .as_ref()
                    .map_or("n/a".to_string(), |s| format!("{:.4}", s.max));
                format!(
                    "split {}: a={} b={} c={} d={} residual={:.4} (reference {:.4}) collapse spread={}",
                    c.seed, f.curve.a, f.curve.b, f.curve.c, f.curve.d, f.residual, c.reference_residual, spread
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Run => dcbrec_cli::report::render_run(&commands::run(cfg)?),
        Command::SweepL => {
            let r = commands::sweep_l(cfg)?;
            for v in &r.violations {
                eprintln!(
                    "warning: {} inter-diversity rises from {:.4} at L={} to {:.4} at L={}",
                    v.algorithm, v.from, v.from_len, v.to, v.to_len
                );
            }
            let mut lines = vec!["algorithm,L,D_inter,D_inner".to_string()];
            for row in &r.rows {
                let f = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.4}"));
                lines.push(format!(
                    "{},{},{},{}",
                    row.algorithm,
                    row.list_len,
                    f(row.d_inter.mean),
                    f(row.d_inner.mean)
                ));
            }
            lines.join("\n")
        }
        Command::SynthCheck => {
            let r = commands::synth_check(cfg)?;
            let mut lines: Vec<String> = r
                .rows
                .iter()
                .map(|x| {
                    format!(
                        "seed {} lambda {}: slope {:.4} ({})",
                        x.seed,
                        x.lambda,
                        x.slope,
                        if x.within_tolerance { "ok" } else { "out of tolerance" }
                    )
                })
                .collect();
            lines.push(format!("all within ±{}: {}", r.tolerance, r.all_within));
            lines.join("\n")
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: stage `config` failed: {e:#}");
                return ExitCode::FAILURE;
            }
        },
        None => ExperimentConfig::from_toml("").expect("empty config parses"),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
        list_lengths: cli.list_lengths,
        algorithms: cli.algo.map(split_algos),
    });
    match execute(cli.command, &cfg) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
