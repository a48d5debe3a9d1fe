//! Split aggregation, the improvement table, and the text report layout.

use std::fmt::Write as _;

use serde::Serialize;

use crate::commands::{RunReport, SeedRun};

/// Mean and sample standard deviation over splits, skipping missing and
/// non-finite values. One value gives a deviation of 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self {
                mean: None,
                std: None,
                n: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean: Some(mean),
            std: Some(std),
            n: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub list_len: usize,
    pub r: MetricStats,
    pub r_cold: MetricStats,
    pub p: MetricStats,
    pub p_cold: MetricStats,
    pub d_inter: MetricStats,
    pub d_inner: MetricStats,
}

impl SummaryRow {
    /// The six metrics in table order.
    pub fn metrics(&self) -> [&MetricStats; 6] {
        [
            &self.r,
            &self.r_cold,
            &self.p,
            &self.p_cold,
            &self.d_inter,
            &self.d_inner,
        ]
    }
}

pub const METRIC_NAMES: [&str; 6] = ["r", "r_k<=K", "P", "P_k<=K", "D_inter", "D_inner"];

/// Lower is better for the two ranking scores only.
const LOWER_IS_BETTER: [bool; 6] = [true, true, false, false, false, false];

pub fn summarize(labels: &[String], list_lengths: &[usize], runs: &[SeedRun]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (a, label) in labels.iter().enumerate() {
        for (x, &l) in list_lengths.iter().enumerate() {
            let reps: Vec<_> = runs
                .iter()
                .map(|run| &run.algorithms[a].reports[x])
                .collect();
            let stat = |f: &dyn Fn(&dcbrec_core::EvaluationReport) -> f64| {
                MetricStats::of(&reps.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            rows.push(SummaryRow {
                algorithm: label.clone(),
                list_len: l,
                r: stat(&|r| r.r),
                r_cold: stat(&|r| r.r_cold.unwrap_or(f64::NAN)),
                p: stat(&|r| r.p),
                p_cold: stat(&|r| r.p_cold),
                d_inter: stat(&|r| r.d_inter),
                d_inner: stat(&|r| r.d_inner),
            });
        }
    }
    rows
}

/// `δ_ALG = (Q_ALG − Q_ref) / Q_ref` on split means, negated for
/// higher-is-better metrics so that a positive entry always favors the
/// reference algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub algorithm: String,
    pub reference: String,
    pub list_len: usize,
    pub r: Option<f64>,
    pub r_cold: Option<f64>,
    pub p: Option<f64>,
    pub p_cold: Option<f64>,
    pub d_inter: Option<f64>,
    pub d_inner: Option<f64>,
}

impl DeltaRow {
    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.r,
            self.r_cold,
            self.p,
            self.p_cold,
            self.d_inter,
            self.d_inner,
        ]
    }
}

pub fn improvement_rows(summary: &[SummaryRow], reference: &str) -> Vec<DeltaRow> {
    let mut out = Vec::new();
    for refr in summary.iter().filter(|s| s.algorithm == reference) {
        for row in summary
            .iter()
            .filter(|s| s.algorithm != reference && s.list_len == refr.list_len)
        {
            let mut d = [None; 6];
            for (k, slot) in d.iter_mut().enumerate() {
                let (q_alg, q_ref) = (row.metrics()[k].mean, refr.metrics()[k].mean);
                if let (Some(a), Some(b)) = (q_alg, q_ref) {
                    if let Ok(v) = dcbrec_core::improvement(a, b) {
                        *slot = Some(if LOWER_IS_BETTER[k] { v } else { -v });
                    }
                }
            }
            out.push(DeltaRow {
                algorithm: row.algorithm.clone(),
                reference: reference.to_string(),
                list_len: refr.list_len,
                r: d[0],
                r_cold: d[1],
                p: d[2],
                p_cold: d[3],
                d_inter: d[4],
                d_inner: d[5],
            });
        }
    }
    out
}

#[derive(Serialize)]
pub struct FlatRow {
    algorithm: String,
    list_len: usize,
    r_mean: Option<f64>,
    r_std: Option<f64>,
    r_cold_mean: Option<f64>,
    r_cold_std: Option<f64>,
    p_mean: Option<f64>,
    p_std: Option<f64>,
    p_cold_mean: Option<f64>,
    p_cold_std: Option<f64>,
    d_inter_mean: Option<f64>,
    d_inter_std: Option<f64>,
    d_inner_mean: Option<f64>,
    d_inner_std: Option<f64>,
    splits: usize,
}

pub fn flat_summary(summary: &[SummaryRow]) -> Vec<FlatRow> {
    summary
        .iter()
        .map(|s| FlatRow {
            algorithm: s.algorithm.clone(),
            list_len: s.list_len,
            r_mean: s.r.mean,
            r_std: s.r.std,
            r_cold_mean: s.r_cold.mean,
            r_cold_std: s.r_cold.std,
            p_mean: s.p.mean,
            p_std: s.p.std,
            p_cold_mean: s.p_cold.mean,
            p_cold_std: s.p_cold.std,
            d_inter_mean: s.d_inter.mean,
            d_inter_std: s.d_inter.std,
            d_inner_mean: s.d_inner.mean,
            d_inner_std: s.d_inner.std,
            splits: s.r.n,
        })
        .collect()
}

fn cell(m: &MetricStats, decimals: usize, multi: bool) -> String {
    match (m.mean, m.std) {
        (Some(mean), Some(std)) if multi => format!("{mean:.decimals$} ± {std:.decimals$}"),
        (Some(mean), _) => format!("{mean:.decimals$}"),
        _ => "n/a".into(),
    }
}

fn pad(s: &str, width: usize) -> String {
    let len = s.chars().count();
    if len >= width {
        format!("{s}  ")
    } else {
        format!("{s}{}", " ".repeat(width - len))
    }
}

/// Human-readable tables: the six metrics per algorithm, then the
/// improvement of the reference over each other algorithm.
pub fn render_run(report: &RunReport) -> String {
    let multi = report.seeds.len() > 1;
    let k = report.k_cold;
    let names: Vec<String> = METRIC_NAMES
        .iter()
        .map(|n| n.replace('K', &k.to_string()))
        .collect();
    let seeds: Vec<String> = report.seeds.iter().map(|s| s.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "config digest: {}", report.config_digest);
    let _ = writeln!(out, "split seeds:   {}", seeds.join(", "));
    let label_w = report
        .summary
        .iter()
        .map(|s| s.algorithm.chars().count())
        .max()
        .unwrap_or(0)
        .max(9)
        + 2;
    let col_w = if multi { 20 } else { 11 };

    for &l in &report.list_lengths {
        let _ = writeln!(out);
        let scope = if multi {
            format!(" (mean ± std over {} splits)", report.seeds.len())
        } else {
            String::new()
        };
        let _ = writeln!(out, "Accuracy and diversity, L = {l}{scope}");
        let mut header = pad("Algorithm", label_w);
        for n in &names {
            header.push_str(&pad(n, col_w));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for row in report.summary.iter().filter(|s| s.list_len == l) {
            let mut line = pad(&row.algorithm, label_w);
            for (x, m) in row.metrics().iter().enumerate() {
                let decimals = if x == 3 { 5 } else { 4 };
                line.push_str(&pad(&cell(m, decimals, multi), col_w));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }

        let deltas: Vec<_> = report
            .improvements
            .iter()
            .filter(|d| d.list_len == l)
            .collect();
        if let Some(first) = deltas.first() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Improvement of {} over each algorithm, L = {l} (positive favors {})",
                first.reference, first.reference
            );
            let mut header = pad("Algorithm", label_w);
            for n in &names {
                header.push_str(&pad(n, 11));
            }
            let _ = writeln!(out, "{}", header.trim_end());
            for d in deltas {
                let mut line = pad(&d.algorithm, label_w);
                for v in d.values() {
                    let s = v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
                    line.push_str(&pad(&s, 11));
                }
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
    }

    let tuned: Vec<String> = report
        .runs
        .first()
        .map(|r| {
            r.algorithms
                .iter()
                .enumerate()
                .filter_map(|(a, alg)| {
                    let t = alg.resolved.tuning.as_ref()?;
                    let values: Vec<String> = report
                        .runs
                        .iter()
                        .filter_map(|run| run.algorithms[a].resolved.tuning.as_ref())
                        .map(|t| t.best.to_string())
                        .collect();
                    Some(format!(
                        "{}: {} = {}",
                        alg.resolved.label,
                        t.parameter,
                        values.join(", ")
                    ))
                })
                .collect()
        })
        .unwrap_or_default();
    let curves: Vec<String> = report
        .runs
        .iter()
        .filter_map(|run| {
            let c = run.calibration.as_ref()?.curve;
            Some(format!(
                "split {}: a={} b={} c={} d={}",
                run.seed, c.a, c.b, c.c, c.d
            ))
        })
        .collect();
    if !tuned.is_empty() || !curves.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Tuned parameters (per split, minimum ranking score)");
        for t in tuned {
            let _ = writeln!(out, "  {t}");
        }
        for c in curves {
            let _ = writeln!(out, "  DCB curve, {c}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = MetricStats::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        let one = MetricStats::of(&[0.5, f64::NAN]);
        assert_eq!((one.mean, one.std, one.n), (Some(0.5), Some(0.0), 1));
        assert_eq!(MetricStats::of(&[]).mean, None);
    }

    fn row(name: &str, r: f64, p: f64) -> SummaryRow {
        let m = |v| MetricStats::of(&[v]);
        SummaryRow {
            algorithm: name.into(),
            list_len: 50,
            r: m(r),
            r_cold: m(r),
            p: m(p),
            p_cold: m(0.0),
            d_inter: m(p),
            d_inner: m(p),
        }
    }

    #[test]
    fn improvement_signs_favor_reference() {
        // PBS 0.106 / 0.075 against DCB 0.091 / 0.081
        let rows = vec![row("PBS", 0.106, 0.075), row("DCB", 0.091, 0.081)];
        let d = improvement_rows(&rows, "DCB");
        assert_eq!(d.len(), 1);
        assert!((d[0].r.unwrap() - 0.164_835).abs() < 1e-6);
        assert!((d[0].p.unwrap() - 0.074_074).abs() < 1e-6);
        // zero reference value has no improvement
        assert_eq!(d[0].p_cold, None);
    }
}
