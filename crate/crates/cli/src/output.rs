//! CSV and JSON writers. Column order is part of the interface.

use std::path::Path;

use serde::Serialize;

use sslab::metrics::{mean, std_dev, EpochMetrics, Method, RunResult};

use crate::error::Result;

pub const METRIC_COLUMNS: [&str; 12] = [
    "run_id",
    "method",
    "seed",
    "epoch",
    "loss_a",
    "loss_b",
    "test_metric",
    "pseudo_acc",
    "mean_p_labeled",
    "mean_p_unlabeled",
    "auc_p_mask",
    "wall_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metric_record(m: &EpochMetrics, no_timing: bool) -> Vec<String> {
    vec![
        m.run_id.clone(),
        m.method.to_string(),
        m.seed.to_string(),
        m.epoch.to_string(),
        m.loss_a.to_string(),
        opt(m.loss_b),
        opt(m.test_metric),
        opt(m.pseudo_acc),
        opt(m.mean_p_labeled),
        opt(m.mean_p_unlabeled),
        opt(m.auc_p_mask),
        if no_timing { String::new() } else { opt(m.wall_ms) },
    ]
}

pub fn write_metrics(path: &Path, runs: &[RunResult], no_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRIC_COLUMNS)?;
    for r in runs {
        for m in &r.history {
            w.write_record(metric_record(m, no_timing))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Final test metric aggregated over seeds for one listed method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation; absent with a single seed.
    pub std: Option<f64>,
    pub n: usize,
    /// Best mean among the listed methods (higher accuracy or lower MSE).
    pub win: bool,
}

/// One summary row per entry of `methods`, in order. `runs` must be the
/// method-major grid produced by [`crate::runner::run_grid`].
pub fn summarize(methods: &[Method], seeds: usize, runs: &[RunResult], higher_is_better: bool) -> Vec<MethodSummary> {
    let mut rows: Vec<MethodSummary> = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let finals: Vec<f64> = runs[i * seeds..(i + 1) * seeds]
                .iter()
                .filter_map(RunResult::final_test_metric)
                .collect();
            MethodSummary {
                method,
                mean: if finals.is_empty() { f64::NAN } else { mean(&finals) },
                std: (finals.len() >= 2).then(|| std_dev(&finals)),
                n: finals.len(),
                win: false,
            }
        })
        .collect();
    let best = rows
        .iter()
        .map(|r| r.mean)
        .filter(|m| m.is_finite())
        .reduce(|a, b| if higher_is_better { a.max(b) } else { a.min(b) });
    if let Some(best) = best {
        for r in &mut rows {
            r.win = r.mean == best;
        }
    }
    rows
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Counts of `p` in `bins` equal-width bins over `[0, 1]`; the last bin is
/// closed on the right.
pub fn histogram(p: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in p {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}
