use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Graph, Tensor};
use crate::datasets::SemiDataset;
use crate::error::{Error, Result};
use crate::metrics::{self, auc, EpochMetrics, Method, RunResult};
use crate::models::{build_discriminator, build_main_model, Architecture, Discriminator, MainModel};
use crate::rng::{self, Rng, Stream};
use crate::training::{apply_step, epoch_batches, forward_batch};

use super::losses::{discriminator_loss, elementwise_loss_values, main_loss};
use super::pseudo::{init_pseudo_labels, refresh_pseudo_labels, PseudoState};
use super::weights::{soft_weights, LossVariant, SoftWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub alpha: f64,
    pub variant: LossVariant,
    pub clip: f64,
    pub refresh_interval: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_f: f64,
    pub lr_d: f64,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            variant: LossVariant::Bce,
            clip: 10.0,
            refresh_interval: 10,
            epochs: 300,
            batch_size: 64,
            lr_f: 1e-3,
            lr_d: 1e-3,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.clip > 1.0) {
            return Err(Error::config(format!("clip must be > 1, got {}", self.clip)));
        }
        if self.refresh_interval == 0 {
            return Err(Error::config("refresh_interval must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Adam::with_lr(self.lr_f).validate()?;
        Adam::with_lr(self.lr_d).validate()?;
        Ok(())
    }
}

/// How the f-update weights are obtained. `Unit` forces every weight to 1
/// and exists so tests can compare against plain supervised steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeightMode {
    #[default]
    Game,
    Unit,
}

/// A game in progress. Holds both models, the working labels and the
/// shuffle stream; [`train_epoch`](Self::train_epoch) advances it by one
/// epoch.
pub struct GameRun<'a> {
    cfg: GameConfig,
    ds: &'a SemiDataset,
    test: Option<&'a SemiDataset>,
    f: MainModel,
    d: Discriminator,
    state: PseudoState,
    rng: Rng,
    epoch: usize,
    weight_mode: WeightMode,
    history: Vec<EpochMetrics>,
}

impl<'a> GameRun<'a> {
    pub fn new(cfg: GameConfig, arch: &Architecture, ds: &'a SemiDataset, test: Option<&'a SemiDataset>) -> Result<Self> {
        cfg.validate()?;
        let task = ds.task();
        if let Some(t) = test {
            if t.task() != task || t.dim() != ds.dim() {
                return Err(Error::config("test set does not match the training set"));
            }
        }
        let f = build_main_model(task, ds.dim(), &arch.main_hidden, cfg.seed)?;
        let d = build_discriminator(task, ds.dim(), &arch.disc_hidden, cfg.seed)?;
        let state = init_pseudo_labels(task, ds, cfg.seed)?;
        Ok(Self {
            rng: rng::stream(cfg.seed, Stream::Shuffle),
            cfg,
            ds,
            test,
            f,
            d,
            state,
            epoch: 0,
            weight_mode: WeightMode::Game,
            history: Vec::new(),
        })
    }

    pub fn with_weight_mode(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &MainModel {
        &self.f
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.d
    }

    pub fn state(&self) -> &PseudoState {
        &self.state
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    /// Discriminator confidences on the whole training set for the current
    /// `f`, `d` and working labels.
    pub fn confidences(&self) -> Result<Vec<f64>> {
        let x = self.ds.x();
        let yhat = self.f.predict(x)?;
        let g = elementwise_loss_values(self.f.task(), self.state.working(), &yhat)?;
        self.d.confidence(x, &yhat, &g)
    }

    /// One pass over all rows in shuffled minibatches, then a pseudo-label
    /// refresh if the epoch count is a multiple of the refresh interval.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let view = self.ds.view();
        let all: Vec<usize> = (0..view.x.rows()).collect();
        let batches = epoch_batches(&all, self.cfg.batch_size, &mut self.rng);
        let opt_f = Adam::with_lr(self.cfg.lr_f);
        let opt_d = Adam::with_lr(self.cfg.lr_d);

        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let x_b = view.x.select_rows(idx);
            let y_b = self.state.working().select_rows(idx);
            let m_b: Vec<bool> = idx.iter().map(|&i| view.mask[i]).collect();

            let mut fwd = forward_batch(&self.f, &x_b, &y_b)?;
            let yhat = fwd.graph.value(fwd.yhat).clone();
            let g = fwd.graph.value(fwd.loss).clone();

            let (p, loss_b) = discriminator_step(&mut self.d, &x_b, &yhat, &g, &m_b, self.cfg.variant, &opt_d)?;
            if !loss_b.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    what: "discriminator loss",
                });
            }

            let w = match self.weight_mode {
                WeightMode::Game => soft_weights(self.cfg.variant, &p, &m_b, self.cfg.alpha, self.cfg.clip)?,
                WeightMode::Unit => SoftWeights::ones(idx.len()),
            };
            let root = main_loss(&mut fwd.graph, fwd.loss, &w)?;
            let loss_a = fwd.graph.value(root).item();
            if !loss_a.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    what: "main loss",
                });
            }
            apply_step(&mut self.f, fwd.graph, root, &opt_f)?;
            sum_a += loss_a;
            sum_b += loss_b;
        }

        let mut m = EpochMetrics::new(Method::Flexssl, self.cfg.seed, epoch);
        let nb = batches.len().max(1) as f64;
        m.loss_a = sum_a / nb;
        m.loss_b = Some(sum_b / nb);

        let p = self.confidences()?;
        let (mut pl, mut pu) = (Vec::new(), Vec::new());
        for (&pi, &obs) in p.iter().zip(view.mask) {
            if obs { pl.push(pi) } else { pu.push(pi) }
        }
        m.mean_p_labeled = (!pl.is_empty()).then(|| metrics::mean(&pl));
        m.mean_p_unlabeled = (!pu.is_empty()).then(|| metrics::mean(&pu));
        m.auc_p_mask = auc(&p, view.mask);

        if epoch % self.cfg.refresh_interval == 0 {
            refresh_pseudo_labels(&self.f, &mut self.state, self.ds)?;
        }
        m.pseudo_acc = self.state.quality(self.ds);
        m.test_metric = self.test.map(|t| metrics::evaluate(&self.f, t)).transpose()?;
        m.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);

        self.epoch = epoch;
        self.history.push(m.clone());
        Ok(m)
    }

    pub fn finish(self) -> Result<RunResult> {
        let final_p = if self.epoch > 0 { Some(self.confidences()?) } else { None };
        Ok(RunResult {
            method: Method::Flexssl,
            seed: self.cfg.seed,
            history: self.history,
            pseudo_rounds: self.state.history().to_vec(),
            model: self.f,
            discriminator: Some(self.d),
            final_p,
            admitted_sizes: Vec::new(),
        })
    }
}

/// Scores a batch with `d`, takes one Adam step on `d`'s loss, and returns
/// the pre-update confidences with the loss value.
fn discriminator_step(
    d: &mut Discriminator,
    x: &Tensor,
    yhat: &Tensor,
    g: &Tensor,
    mask: &[bool],
    variant: LossVariant,
    opt: &Adam,
) -> Result<(Vec<f64>, f64)> {
    let mut graph = Graph::new();
    let p = d.forward(&mut graph, x, yhat, g)?;
    let confidences = graph.value(p).data().to_vec();
    let loss = discriminator_loss(&mut graph, variant, p, mask)?;
    let value = graph.value(loss).item();
    if value.is_finite() {
        graph.backward(loss)?;
        let store = d.params_mut();
        store.zero_grads();
        store.collect_grads(&graph);
        store.adam_step(opt)?;
    }
    Ok((confidences, value))
}

/// Initializes pseudo-labels and runs `cfg.epochs` epochs of the game.
pub fn run_game(cfg: &GameConfig, arch: &Architecture, ds: &SemiDataset, test: Option<&SemiDataset>) -> Result<RunResult> {
    let mut run = GameRun::new(cfg.clone(), arch, ds, test)?;
    for _ in 0..cfg.epochs {
        run.train_epoch()?;
    }
    run.finish()
}
