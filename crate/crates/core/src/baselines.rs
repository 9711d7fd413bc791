//! Comparison arms: supervised training on `L` only, and classic
//! confidence-threshold self-training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Adam;
use crate::datasets::SemiDataset;
use crate::error::{Error, Result};
use crate::game::losses::mean_loss;
use crate::metrics::{self, accuracy_on, argmax, EpochMetrics, Method, RunResult};
use crate::models::{build_main_model, Architecture, MainModel};
use crate::rng::{self, Rng, Stream};
use crate::training::{apply_step, epoch_batches, forward_batch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Adam::with_lr(self.lr).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfTrainConfig {
    /// Admission threshold on the max class probability. `1.0` admits
    /// nothing.
    pub tau: f64,
    /// Epochs between labeling rounds.
    pub interval: usize,
    pub train: TrainConfig,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            interval: 10,
            train: TrainConfig::default(),
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must be in (0.5, 1], got {}", self.tau)));
        }
        if self.interval == 0 {
            return Err(Error::config("self-training interval must be >= 1"));
        }
        self.train.validate()
    }
}

/// Shared epoch loop over a growing training set.
struct Trainer<'a> {
    ds: &'a SemiDataset,
    test: Option<&'a SemiDataset>,
    cfg: TrainConfig,
    method: Method,
    f: MainModel,
    rng: Rng,
    history: Vec<EpochMetrics>,
}

impl<'a> Trainer<'a> {
    fn new(method: Method, cfg: &TrainConfig, arch: &Architecture, ds: &'a SemiDataset, test: Option<&'a SemiDataset>) -> Result<Self> {
        cfg.validate()?;
        if ds.labeled_idx().is_empty() {
            return Err(Error::config("training needs at least one labeled row"));
        }
        Ok(Self {
            f: build_main_model(ds.task(), ds.dim(), &arch.main_hidden, cfg.seed)?,
            rng: rng::stream(cfg.seed, Stream::Shuffle),
            ds,
            test,
            cfg: cfg.clone(),
            method,
            history: Vec::new(),
        })
    }

    /// One epoch over `rows` with targets taken from `targets` (`n × out`).
    fn epoch(&mut self, rows: &[usize], targets: &crate::autodiff::Tensor) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.history.len() + 1;
        let opt = Adam::with_lr(self.cfg.lr);
        let batches = epoch_batches(rows, self.cfg.batch_size, &mut self.rng);
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let x_b = self.ds.x().select_rows(idx);
            let y_b = targets.select_rows(idx);
            let mut fwd = forward_batch(&self.f, &x_b, &y_b)?;
            let root = mean_loss(&mut fwd.graph, fwd.loss);
            let value = fwd.graph.value(root).item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    what: "main loss",
                });
            }
            apply_step(&mut self.f, fwd.graph, root, &opt)?;
            total += value;
        }
        let mut m = EpochMetrics::new(self.method, self.cfg.seed, epoch);
        m.loss_a = total / batches.len().max(1) as f64;
        m.test_metric = self.test.map(|t| metrics::evaluate(&self.f, t)).transpose()?;
        m.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        Ok(m)
    }

    fn finish(self, pseudo_rounds: Vec<f64>, admitted_sizes: Vec<usize>) -> RunResult {
        RunResult {
            method: self.method,
            seed: self.cfg.seed,
            history: self.history,
            model: self.f,
            discriminator: None,
            final_p: None,
            pseudo_rounds,
            admitted_sizes,
        }
    }
}

/// Trains on the labeled rows only with the unweighted loss.
pub fn train_supervised(cfg: &TrainConfig, arch: &Architecture, ds: &SemiDataset, test: Option<&SemiDataset>) -> Result<RunResult> {
    let mut t = Trainer::new(Method::Supervised, cfg, arch, ds, test)?;
    let rows = ds.labeled_idx();
    let targets = ds.targets_for(&(0..ds.len()).collect::<Vec<_>>());
    for _ in 0..cfg.epochs {
        let m = t.epoch(&rows, &targets)?;
        t.history.push(m);
    }
    Ok(t.finish(Vec::new(), Vec::new()))
}

/// Every `interval` epochs, unlabeled rows whose max class probability
/// exceeds `tau` join the training set with their current hard
/// prediction. Admitted labels are frozen and membership only grows.
pub fn train_self_training(
    cfg: &SelfTrainConfig,
    arch: &Architecture,
    ds: &SemiDataset,
    test: Option<&SemiDataset>,
) -> Result<RunResult> {
    cfg.validate()?;
    let classes = match ds.labels().classes() {
        Some(c) => c,
        None => return Err(Error::config("self-training needs a classification task")),
    };
    let mut t = Trainer::new(Method::SelfTraining, &cfg.train, arch, ds, test)?;
    let k = ds.task().out_dim();
    let mut rows = ds.labeled_idx();
    // Rows of `U` start as zero targets and are only read once admitted.
    let mut targets = ds.targets_for(&(0..ds.len()).collect::<Vec<_>>());
    for j in ds.unlabeled_idx() {
        targets.data_mut()[j * k..(j + 1) * k].fill(0.0);
    }
    let mut admitted: Vec<usize> = Vec::new();
    let mut is_admitted = vec![false; ds.len()];
    let (mut rounds, mut sizes) = (Vec::new(), Vec::new());

    for epoch in 1..=cfg.train.epochs {
        let mut m = t.epoch(&rows, &targets)?;
        if epoch % cfg.interval == 0 {
            let candidates: Vec<usize> = ds.unlabeled_idx().into_iter().filter(|&j| !is_admitted[j]).collect();
            if !candidates.is_empty() {
                let probs = t.f.predict(&ds.x().select_rows(&candidates))?;
                for (r, &j) in candidates.iter().enumerate() {
                    let row = probs.row(r);
                    let best = argmax(row);
                    if row[best] > cfg.tau {
                        let tr = &mut targets.data_mut()[j * k..(j + 1) * k];
                        tr.fill(0.0);
                        tr[best] = 1.0;
                        is_admitted[j] = true;
                        admitted.push(j);
                        rows.push(j);
                    }
                }
            }
            sizes.push(admitted.len());
            if let Some(acc) = admitted_accuracy(&targets, classes, &admitted) {
                rounds.push(acc);
            }
        }
        m.pseudo_acc = admitted_accuracy(&targets, classes, &admitted);
        t.history.push(m);
    }
    Ok(t.finish(rounds, sizes))
}

fn admitted_accuracy(targets: &crate::autodiff::Tensor, truth: &[usize], admitted: &[usize]) -> Option<f64> {
    accuracy_on(targets, truth, admitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{apply_missing, gen_tabular_regression, gen_two_moons};

    fn small() -> (SemiDataset, SemiDataset) {
        let ds = apply_missing(&gen_two_moons(120, 0.2, 1).unwrap(), 0.5, 1).unwrap();
        let test = gen_two_moons(100, 0.2, 99).unwrap();
        (ds, test)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr: 0.01,
            seed: 3,
        }
    }

    #[test]
    fn unreachable_threshold_reduces_to_supervised() {
        let (ds, test) = small();
        let arch = Architecture::default();
        let sup = train_supervised(&quick(25), &arch, &ds, Some(&test)).unwrap();
        let st = train_self_training(
            &SelfTrainConfig {
                tau: 1.0,
                interval: 5,
                train: quick(25),
            },
            &arch,
            &ds,
            Some(&test),
        )
        .unwrap();
        assert!(st.admitted_sizes.iter().all(|&s| s == 0));
        let strip = |h: &[EpochMetrics]| -> Vec<(usize, f64, Option<f64>, Option<f64>)> {
            h.iter().map(|m| (m.epoch, m.loss_a, m.test_metric, m.pseudo_acc)).collect()
        };
        assert_eq!(strip(&sup.history), strip(&st.history));
        assert_eq!(sup.model.params().flat_values(), st.model.params().flat_values());
    }

    #[test]
    fn long_interval_coincides_with_supervised() {
        let (ds, test) = small();
        let arch = Architecture::default();
        let sup = train_supervised(&quick(12), &arch, &ds, Some(&test)).unwrap();
        let st = train_self_training(
            &SelfTrainConfig {
                tau: 0.6,
                interval: 13,
                train: quick(12),
            },
            &arch,
            &ds,
            Some(&test),
        )
        .unwrap();
        assert_eq!(sup.model.params().flat_values(), st.model.params().flat_values());
    }

    #[test]
    fn admitted_sets_grow_monotonically_and_never_touch_labels() {
        let (ds, test) = small();
        let before = ds.clone();
        let st = train_self_training(
            &SelfTrainConfig {
                tau: 0.7,
                interval: 3,
                train: quick(30),
            },
            &Architecture::default(),
            &ds,
            Some(&test),
        )
        .unwrap();
        assert_eq!(st.admitted_sizes.len(), 10);
        assert!(st.admitted_sizes.windows(2).all(|w| w[0] <= w[1]));
        assert!(*st.admitted_sizes.last().unwrap() <= ds.unlabeled_idx().len());
        assert!(*st.admitted_sizes.last().unwrap() > 0);
        assert_eq!(ds, before);
    }

    #[test]
    fn self_training_rejects_regression() {
        let ds = apply_missing(&gen_tabular_regression(40, 2, 0).unwrap(), 0.5, 0).unwrap();
        assert!(train_self_training(&SelfTrainConfig::default(), &Architecture::default(), &ds, None).is_err());
    }

    #[test]
    fn invalid_tau_rejected() {
        let cfg = SelfTrainConfig {
            tau: 0.5,
            ..SelfTrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fully_labeled_trains_on_everything() {
        let ds = gen_two_moons(64, 0.2, 5).unwrap();
        let r = train_supervised(&quick(3), &Architecture::default(), &ds, None).unwrap();
        assert_eq!(r.history.len(), 3);
        assert!(r.history.iter().all(|m| m.test_metric.is_none()));
    }
}
