//! The four subcommands. Each validates its spec up front, runs, and
//! writes its files under `spec.out`.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use sslab::game::GameRun;
use sslab::metrics::{auc, mean, Method, RunResult};

use crate::error::{Error, Result};
use crate::output::{histogram, metric_record, summarize, write_json, write_metrics, MethodSummary, METRIC_COLUMNS};
use crate::runner::{run_grid, run_jobs};
use crate::spec::ExperimentSpec;

pub const HIST_BINS: usize = 20;

fn prepare(spec: &ExperimentSpec, default_methods: &[Method]) -> Result<(ExperimentSpec, Vec<Method>)> {
    let methods = spec.methods_or(default_methods);
    let spec = ExperimentSpec {
        methods: methods.clone(),
        ..spec.clone()
    };
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    Ok((spec, methods))
}

fn compare_methods(spec: &ExperimentSpec) -> Vec<Method> {
    if spec.is_classification() {
        Method::ALL.to_vec()
    } else {
        vec![Method::Supervised, Method::Flexssl]
    }
}

/// One run per (method, seed). Writes `metrics.csv` and the final models
/// under `models/`.
pub fn cmd_train(spec: &ExperimentSpec) -> Result<Vec<RunResult>> {
    let (spec, methods) = prepare(spec, &[Method::Flexssl])?;
    let runs = run_grid(&spec, &methods)?;
    write_metrics(&spec.out.join("metrics.csv"), &runs, spec.no_timing)?;
    let dir = spec.out.join("models");
    fs::create_dir_all(&dir)?;
    for r in &runs {
        let id = format!("{}-s{}", r.method, r.seed);
        r.model.save(dir.join(format!("{id}.json")))?;
        if let Some(d) = &r.discriminator {
            fs::write(dir.join(format!("{id}.discriminator.json")), d.to_json()?)?;
        }
    }
    Ok(runs)
}

pub struct Comparison {
    pub runs: Vec<RunResult>,
    pub summary: Vec<MethodSummary>,
}

/// All methods over all seeds. Writes `metrics.csv` and `summary.json`.
pub fn cmd_compare(spec: &ExperimentSpec) -> Result<Comparison> {
    let (spec, methods) = prepare(spec, &compare_methods(spec))?;
    let runs = run_grid(&spec, &methods)?;
    let summary = summarize(&methods, spec.seeds.len(), &runs, spec.is_classification());
    write_metrics(&spec.out.join("metrics.csv"), &runs, spec.no_timing)?;
    write_json(&spec.out.join("summary.json"), &summary)?;
    Ok(Comparison { runs, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    MissingRate,
    Alpha,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::MissingRate => "missing_rate",
            Axis::Alpha => "alpha",
        }
    }

    fn apply(self, spec: &ExperimentSpec, value: f64) -> ExperimentSpec {
        let mut s = spec.clone();
        match self {
            Axis::MissingRate => s.missing_rate = value,
            Axis::Alpha => s.alpha = value,
        }
        s
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missing_rate" | "missing-rate" => Ok(Axis::MissingRate),
            "alpha" => Ok(Axis::Alpha),
            other => Err(Error::Spec(format!("unknown sweep axis `{other}` (expected missing_rate or alpha)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub axis: Axis,
    pub value: f64,
    pub methods: Vec<MethodSummary>,
}

pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Method-major grid per point, in `values` order.
    pub runs: Vec<Vec<RunResult>>,
}

/// One comparison per value. Every value is validated before the first
/// run. Writes long-format `sweep.csv` and `summary.json`.
pub fn cmd_sweep(spec: &ExperimentSpec, axis: Axis, values: &[f64]) -> Result<Sweep> {
    if values.is_empty() {
        return Err(Error::Spec("sweep needs at least one value".into()));
    }
    let (spec, methods) = prepare(spec, &compare_methods(spec))?;
    let specs: Vec<ExperimentSpec> = values.iter().map(|&v| axis.apply(&spec, v)).collect();
    for (s, v) in specs.iter().zip(values) {
        s.validate().map_err(|e| Error::Spec(format!("{} = {v}: {e}", axis.as_str())))?;
    }

    let jobs: Vec<_> = specs
        .iter()
        .flat_map(|s| methods.iter().flat_map(move |&m| s.seeds.iter().map(move |&seed| (s, m, seed))))
        .collect();
    let mut all = run_jobs(&jobs)?.into_iter();
    let per_point = methods.len() * spec.seeds.len();
    let runs: Vec<Vec<RunResult>> = values.iter().map(|_| all.by_ref().take(per_point).collect()).collect();

    let mut w = csv::Writer::from_path(spec.out.join("sweep.csv"))?;
    let mut header = vec!["axis", "value"];
    header.extend(METRIC_COLUMNS);
    w.write_record(&header)?;
    let mut points = Vec::with_capacity(values.len());
    for (&value, point_runs) in values.iter().zip(&runs) {
        for r in point_runs {
            for m in &r.history {
                let mut rec = vec![axis.as_str().to_string(), value.to_string()];
                rec.extend(metric_record(m, spec.no_timing));
                w.write_record(&rec)?;
            }
        }
        points.push(SweepPoint {
            axis,
            value,
            methods: summarize(&methods, spec.seeds.len(), point_runs, spec.is_classification()),
        });
    }
    w.flush()?;
    write_json(&spec.out.join("summary.json"), &points)?;
    Ok(Sweep { points, runs })
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub seed: u64,
    pub epoch: usize,
    pub n: usize,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_p_labeled: Option<f64>,
    pub mean_p_unlabeled: Option<f64>,
    pub mean_p_clean_labeled: Option<f64>,
    pub mean_p_noisy: Option<f64>,
    pub auc_p_mask: Option<f64>,
    #[serde(skip)]
    pub p: Vec<f64>,
}

fn mean_of(p: &[f64], idx: impl Iterator<Item = usize>) -> Option<f64> {
    let v: Vec<f64> = idx.map(|i| p[i]).collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Records d's confidences on the training set at the requested epochs
/// (0 = before training). Writes `discriminator/s{seed}_e{epoch}.csv`
/// with per-sample rows and a matching `.json` histogram.
pub fn cmd_dump_discriminator(spec: &ExperimentSpec, snapshots: &[usize]) -> Result<Vec<Snapshot>> {
    if spec.methods.iter().any(|&m| m != Method::Flexssl) {
        return Err(Error::Spec("dump-discriminator only runs flexssl".into()));
    }
    let (spec, _) = prepare(spec, &[Method::Flexssl])?;
    let mut epochs: Vec<usize> = if snapshots.is_empty() { vec![spec.epochs] } else { snapshots.to_vec() };
    epochs.sort_unstable();
    epochs.dedup();
    if let Some(&e) = epochs.iter().find(|&&e| e > spec.epochs) {
        return Err(Error::Spec(format!("snapshot epoch {e} is beyond the {} training epochs", spec.epochs)));
    }
    let dir: PathBuf = spec.out.join("discriminator");
    fs::create_dir_all(&dir)?;

    let per_seed: Vec<Vec<Snapshot>> = spec
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Snapshot>> {
            let data = spec.data(seed)?;
            let ds = &data.train;
            let mut run = GameRun::new(spec.game_config(seed), &spec.arch, ds, Some(&data.test))?;
            let mut out = Vec::new();
            for &e in &epochs {
                while run.epoch() < e {
                    run.train_epoch()?;
                }
                let p = run.confidences()?;
                let mask = ds.mask();
                let mut noisy = vec![false; ds.len()];
                for &i in ds.noisy_idx() {
                    noisy[i] = true;
                }
                out.push(Snapshot {
                    seed,
                    epoch: e,
                    n: p.len(),
                    bin_edges: (0..=HIST_BINS).map(|b| b as f64 / HIST_BINS as f64).collect(),
                    counts: histogram(&p, HIST_BINS),
                    mean_p_labeled: mean_of(&p, (0..p.len()).filter(|&i| mask[i])),
                    mean_p_unlabeled: mean_of(&p, (0..p.len()).filter(|&i| !mask[i])),
                    mean_p_clean_labeled: mean_of(&p, (0..p.len()).filter(|&i| mask[i] && !noisy[i])),
                    mean_p_noisy: mean_of(&p, (0..p.len()).filter(|&i| noisy[i])),
                    auc_p_mask: auc(&p, mask),
                    p,
                });
                let snap = out.last().expect("just pushed");
                let stem = format!("s{seed}_e{e}");
                let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
                w.write_record(["index", "p", "observed", "noisy"])?;
                for (i, v) in snap.p.iter().enumerate() {
                    w.write_record([i.to_string(), v.to_string(), (mask[i] as u8).to_string(), (noisy[i] as u8).to_string()])?;
                }
                w.flush()?;
                write_json(&dir.join(format!("{stem}.json")), snap)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
