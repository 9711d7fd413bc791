//! Experiment description shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sslab::baselines::{SelfTrainConfig, TrainConfig};
use sslab::datasets::{apply_missing, gen_two_moons, inject_label_noise, SemiDataset, TabularProblem};
use sslab::game::{GameConfig, LossVariant};
use sslab::metrics::Method;
use sslab::models::Architecture;
use sslab::rng::{derive_seed, Stream};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "two-moons")]
    TwoMoons,
    #[serde(rename = "tabular")]
    Tabular,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-moons" => Ok(DatasetKind::TwoMoons),
            "tabular" => Ok(DatasetKind::Tabular),
            other => Err(Error::Spec(format!("unknown dataset `{other}`"))),
        }
    }
}

/// Everything that determines an experiment's outputs. Field names are the
/// JSON keys accepted by `--spec`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetKind,
    /// Training rows.
    pub n: usize,
    /// Two-moons Gaussian noise.
    pub noise_sigma: f64,
    /// Tabular feature count.
    pub dim: usize,
    pub n_test: usize,
    pub missing_rate: f64,
    /// Fraction of labeled rows whose label is corrupted.
    pub noise_rate: f64,
    /// Empty means the subcommand's default.
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub variant: LossVariant,
    pub clip: f64,
    pub epochs: usize,
    pub refresh_interval: usize,
    pub tau: f64,
    /// Self-training labeling interval.
    pub label_interval: usize,
    pub lr_f: f64,
    pub lr_d: f64,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub arch: Architecture,
    pub out: PathBuf,
    pub no_timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let g = GameConfig::default();
        let s = SelfTrainConfig::default();
        Self {
            dataset: DatasetKind::TwoMoons,
            n: 1000,
            noise_sigma: 0.2,
            dim: 4,
            n_test: 1000,
            missing_rate: 0.5,
            noise_rate: 0.0,
            methods: Vec::new(),
            alpha: g.alpha,
            variant: g.variant,
            clip: g.clip,
            epochs: g.epochs,
            refresh_interval: g.refresh_interval,
            tau: s.tau,
            label_interval: s.interval,
            lr_f: g.lr_f,
            lr_d: g.lr_d,
            batch_size: g.batch_size,
            seeds: vec![0],
            arch: Architecture::default(),
            out: PathBuf::from("out"),
            no_timing: false,
        }
    }
}

/// Train and test data for one seed.
pub struct Data {
    pub train: SemiDataset,
    pub test: SemiDataset,
}

impl ExperimentSpec {
    /// Overlays the keys of a JSON object onto `self`.
    pub fn merged_with(&self, overrides: &Value) -> Result<Self> {
        let Value::Object(over) = overrides else {
            return Err(Error::Spec("spec file must hold a JSON object".into()));
        };
        let mut base = serde_json::to_value(self)?;
        let obj = base.as_object_mut().expect("spec serializes to an object");
        for (k, v) in over {
            obj.insert(k.clone(), v.clone());
        }
        serde_json::from_value(base).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn merged_with_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?;
        self.merged_with(&v)
    }

    pub fn methods_or(&self, default: &[Method]) -> Vec<Method> {
        if self.methods.is_empty() {
            default.to_vec()
        } else {
            self.methods.clone()
        }
    }

    pub fn is_classification(&self) -> bool {
        self.dataset == DatasetKind::TwoMoons
    }

    /// Checks everything that can be checked before any run starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.n_test == 0 {
            return bad("n_test must be >= 1".into());
        }
        if self.dataset == DatasetKind::Tabular && self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must be in [0, 1), got {}", self.missing_rate));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate must be in [0, 1), got {}", self.noise_rate));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.methods.contains(&Method::SelfTraining) && !self.is_classification() {
            return bad("self-training needs a classification dataset".into());
        }
        self.game_config(0).validate()?;
        self.self_train_config(0).validate()?;
        Ok(())
    }

    pub fn game_config(&self, seed: u64) -> GameConfig {
        GameConfig {
            alpha: self.alpha,
            variant: self.variant,
            clip: self.clip,
            refresh_interval: self.refresh_interval,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_f: self.lr_f,
            lr_d: self.lr_d,
            seed,
        }
    }

    /// Baselines share f's optimizer settings.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr_f,
            seed,
        }
    }

    pub fn self_train_config(&self, seed: u64) -> SelfTrainConfig {
        SelfTrainConfig {
            tau: self.tau,
            interval: self.label_interval,
            train: self.train_config(seed),
        }
    }

    /// Generates, masks and corrupts the training set for `seed`, plus an
    /// independent test set from the same distribution.
    pub fn data(&self, seed: u64) -> Result<Data> {
        let test_seed = derive_seed(seed, Stream::TestData);
        let (full, test) = match self.dataset {
            DatasetKind::TwoMoons => (
                gen_two_moons(self.n, self.noise_sigma, seed)?,
                gen_two_moons(self.n_test, self.noise_sigma, test_seed)?,
            ),
            DatasetKind::Tabular => {
                let problem = TabularProblem::new(self.dim, seed)?;
                (problem.sample(self.n, seed)?, problem.sample(self.n_test, test_seed)?)
            }
        };
        let mut train = apply_missing(&full, self.missing_rate, seed)?;
        if self.noise_rate > 0.0 {
            train = inject_label_noise(&train, self.noise_rate, seed)?;
        }
        Ok(Data { train, test })
    }
}

/// Parses `"0,1,2"` or a half-open range `"0..5"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Spec(format!("cannot parse seeds `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}
