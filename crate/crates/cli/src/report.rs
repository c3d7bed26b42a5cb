//! `report`: aggregates run directories into comparison tables and
//! plot-ready CSVs. Inputs are only read.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcirl::eval::{cluster_purity, MetricRecord};
use bcirl::io::{read_json, ModelFile};
use serde::Serialize;

use crate::data::read_labels;
use crate::run::{read_trace, SeedRecord, CONFIG_FILE, MODEL_FILE, TRACE_FILE};

/// Iterations averaged at each end of a run for the timing split.
pub const TIMING_WINDOW: usize = 25;

pub struct SeedRun {
    pub algo: String,
    pub record: SeedRecord,
    pub trace: Vec<MetricRecord>,
    pub model: ModelFile,
    /// `None` when the dataset's labels are unavailable.
    pub purity: Option<f64>,
}

/// Loads every seed directory under each run directory.
pub fn load_runs(run_dirs: &[PathBuf]) -> Result<Vec<SeedRun>> {
    let mut runs = Vec::new();
    for dir in run_dirs {
        let mut seeds: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading run directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(CONFIG_FILE).is_file())
            .collect();
        seeds.sort();
        for seed_dir in seeds {
            runs.push(load_seed(&seed_dir)?);
        }
    }
    Ok(runs)
}

fn load_seed(dir: &Path) -> Result<SeedRun> {
    let record: SeedRecord = read_json(&dir.join(CONFIG_FILE))?;
    let trace = read_trace(&dir.join(TRACE_FILE))?;
    let model: ModelFile = read_json(&dir.join(MODEL_FILE))?;
    let purity = match read_labels(&record.data_dir) {
        Ok(labels) if labels.len() == model.beta.len() => Some(cluster_purity(&model.responsibilities()?, &labels)),
        _ => None,
    };
    Ok(SeedRun {
        algo: record.config.algo.name().to_string(),
        record,
        trace,
        model,
        purity,
    })
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn quartiles(mut xs: Vec<f64>) -> [f64; 3] {
    xs.retain(|x| x.is_finite());
    xs.sort_by(f64::total_cmp);
    [quantile(&xs, 0.25), quantile(&xs, 0.5), quantile(&xs, 0.75)]
}

/// Per-iteration durations from cumulative wall-clock stamps.
fn step_ms(trace: &[MetricRecord]) -> Vec<f64> {
    let mut prev = 0.0;
    trace
        .iter()
        .map(|r| {
            let d = r.wall_ms - prev;
            prev = r.wall_ms;
            d
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub algo: String,
    pub runs: usize,
    pub converged: usize,
    pub final_loglik_q1: f64,
    pub final_loglik_median: f64,
    pub final_loglik_q3: f64,
    pub final_clusters_median: f64,
    pub purity_median: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub algo: String,
    pub iteration: usize,
    pub runs: usize,
    pub loglik_q1: f64,
    pub loglik_median: f64,
    pub loglik_q3: f64,
    /// Running maximum of the median.
    pub loglik_best: f64,
    pub gap_q1: f64,
    pub gap_median: f64,
    pub gap_q3: f64,
    /// Running minimum of the median.
    pub gap_best: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub algo: String,
    pub num_clusters: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub algo: String,
    pub mean_s_per_iter: f64,
    pub first_mean_s: f64,
    pub last_mean_s: f64,
}

pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurveRow>,
    pub clusters: Vec<ClusterRow>,
    pub timing: Vec<TimingRow>,
}

pub fn build_report(runs: &[SeedRun]) -> Result<Report> {
    if runs.is_empty() {
        bail!("no completed runs found");
    }
    let mut by_algo: BTreeMap<&str, Vec<&SeedRun>> = BTreeMap::new();
    for r in runs {
        by_algo.entry(&r.algo).or_default().push(r);
    }
    let mut report = Report {
        summary: Vec::new(),
        curves: Vec::new(),
        clusters: Vec::new(),
        timing: Vec::new(),
    };
    for (algo, group) in by_algo {
        let finals = group.iter().map(|r| r.trace.last().map_or(f64::NAN, |m| m.loglik)).collect();
        let [q1, med, q3] = quartiles(finals);
        let k = quartiles(group.iter().map(|r| r.model.clusters.len() as f64).collect())[1];
        let purities: Vec<f64> = group.iter().filter_map(|r| r.purity).collect();
        report.summary.push(SummaryRow {
            algo: algo.to_string(),
            runs: group.len(),
            converged: group.iter().filter(|r| r.record.converged).count(),
            final_loglik_q1: q1,
            final_loglik_median: med,
            final_loglik_q3: q3,
            final_clusters_median: k,
            purity_median: (!purities.is_empty()).then(|| quartiles(purities)[1]),
        });

        let len = group.iter().map(|r| r.trace.len()).max().unwrap_or(0);
        let (mut best_ll, mut best_gap) = (f64::NEG_INFINITY, f64::INFINITY);
        for it in 0..len {
            let rows: Vec<&MetricRecord> = group.iter().filter_map(|r| r.trace.get(it)).collect();
            let ll = quartiles(rows.iter().map(|m| m.loglik).collect());
            let gap = quartiles(rows.iter().map(|m| m.feature_gap_ms).collect());
            best_ll = best_ll.max(ll[1]);
            best_gap = best_gap.min(gap[1]);
            report.curves.push(CurveRow {
                algo: algo.to_string(),
                iteration: it,
                runs: rows.len(),
                loglik_q1: ll[0],
                loglik_median: ll[1],
                loglik_q3: ll[2],
                loglik_best: best_ll,
                gap_q1: gap[0],
                gap_median: gap[1],
                gap_q3: gap[2],
                gap_best: best_gap,
            });
        }

        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &group {
            *hist.entry(r.model.clusters.len()).or_default() += 1;
        }
        report.clusters.extend(hist.into_iter().map(|(num_clusters, runs)| ClusterRow {
            algo: algo.to_string(),
            num_clusters,
            runs,
        }));

        let (mut all, mut first, mut last) = (Vec::new(), Vec::new(), Vec::new());
        for r in &group {
            let steps = step_ms(&r.trace);
            let w = TIMING_WINDOW.min(steps.len());
            first.extend_from_slice(&steps[..w]);
            last.extend_from_slice(&steps[steps.len() - w..]);
            all.extend(steps);
        }
        report.timing.push(TimingRow {
            algo: algo.to_string(),
            mean_s_per_iter: mean(&all) / 1e3,
            first_mean_s: mean(&first) / 1e3,
            last_mean_s: mean(&last) / 1e3,
        });
    }
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join("summary.csv"), &report.summary)?;
    write_csv(&dir.join("curves.csv"), &report.curves)?;
    write_csv(&dir.join("clusters.csv"), &report.clusters)?;
    write_csv(&dir.join("timing.csv"), &report.timing)?;
    Ok(())
}

pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>5} {:>12} {:>20} {:>8} {:>7} {:>10} {:>10} {:>10}",
        "algo", "runs", "conv", "loglik/demo", "iqr", "clusters", "purity", "s/iter", "first", "last"
    );
    for (s, t) in report.summary.iter().zip(&report.timing) {
        let purity = s.purity_median.map_or("-".to_string(), |p| format!("{p:.3}"));
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>5} {:>12.3} {:>20} {:>8} {:>7} {:>10.4} {:>10.4} {:>10.4}",
            s.algo,
            s.runs,
            s.converged,
            s.final_loglik_median,
            format!("[{:.3}, {:.3}]", s.final_loglik_q1, s.final_loglik_q3),
            s.final_clusters_median,
            purity,
            t.mean_s_per_iter,
            t.first_mean_s,
            t.last_mean_s
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quartiles(vec![3.0, f64::NAN, 1.0, 2.0]), [1.5, 2.0, 2.5]);
    }

    #[test]
    fn steps_from_cumulative_clock() {
        let rec = |wall_ms| MetricRecord {
            iteration: 0,
            feature_gap_ms: 0.0,
            loglik: 0.0,
            num_clusters: 1,
            cluster_purity: None,
            wall_ms,
        };
        assert_eq!(step_ms(&[rec(2.0), rec(5.0), rec(6.0)]), vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(build_report(&[]).is_err());
    }
}
