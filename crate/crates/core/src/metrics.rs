//! Per-epoch metrics and the evaluation helpers behind them.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datasets::{Labels, SemiDataset};
use crate::error::{Error, Result};
use crate::models::{Discriminator, MainModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Method {
    #[serde(rename = "supervised")]
    Supervised,
    #[serde(rename = "self-training")]
    SelfTraining,
    #[serde(rename = "flexssl")]
    Flexssl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Supervised, Method::SelfTraining, Method::Flexssl];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::SelfTraining => "self-training",
            Method::Flexssl => "flexssl",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Method::Supervised),
            "self-training" | "self_training" => Ok(Method::SelfTraining),
            "flexssl" => Ok(Method::Flexssl),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }
}

/// One row of a run's history. `test_metric` is accuracy for
/// classification and MSE for regression; `pseudo_acc` follows the same
/// convention for the current pseudo-labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub run_id: String,
    pub method: Method,
    pub seed: u64,
    pub epoch: usize,
    pub loss_a: f64,
    pub loss_b: Option<f64>,
    pub test_metric: Option<f64>,
    pub pseudo_acc: Option<f64>,
    pub mean_p_labeled: Option<f64>,
    pub mean_p_unlabeled: Option<f64>,
    pub auc_p_mask: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl EpochMetrics {
    pub fn new(method: Method, seed: u64, epoch: usize) -> Self {
        Self {
            run_id: format!("{method}-s{seed}"),
            method,
            seed,
            epoch,
            loss_a: 0.0,
            loss_b: None,
            test_metric: None,
            pseudo_acc: None,
            mean_p_labeled: None,
            mean_p_unlabeled: None,
            auc_p_mask: None,
            wall_ms: None,
        }
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub history: Vec<EpochMetrics>,
    pub model: MainModel,
    pub discriminator: Option<Discriminator>,
    /// Discriminator confidences on the training set after the last epoch.
    pub final_p: Option<Vec<f64>>,
    /// Pseudo-label quality after each labeling round.
    pub pseudo_rounds: Vec<f64>,
    /// Self-training only: admitted-set size after each round.
    pub admitted_sizes: Vec<usize>,
}

impl RunResult {
    pub fn final_test_metric(&self) -> Option<f64> {
        self.history.last().and_then(|m| m.test_metric)
    }
}

/// Area under the ROC curve of scores against binary labels, computed as
/// the Mann–Whitney U statistic with average ranks for ties. `None` when
/// either class is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n1 = positive.iter().filter(|&&b| b).count();
    let n0 = positive.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied block i..=j shares the average rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| positive[order[k]]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Some(u / (n1 as f64 * n0 as f64))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of argmax predictions against class labels on `idx`.
pub fn accuracy_on(pred: &Tensor, labels: &[usize], idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let hits = idx.iter().filter(|&&i| argmax(pred.row(i)) == labels[i]).count();
    Some(hits as f64 / idx.len() as f64)
}

/// Mean squared error over rows `idx` and all output columns.
pub fn mse_on(pred: &Tensor, truth: &Tensor, idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let c = pred.cols();
    let total: f64 = idx
        .iter()
        .map(|&i| pred.row(i).iter().zip(truth.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Some(total / (idx.len() * c) as f64)
}

/// Test metric of `f` on a fully labeled set: accuracy or MSE.
pub fn evaluate(f: &MainModel, test: &SemiDataset) -> Result<f64> {
    let pred = f.predict(test.x())?;
    let all: Vec<usize> = (0..test.len()).collect();
    let v = match test.labels() {
        Labels::Class(c) => accuracy_on(&pred, c, &all),
        Labels::Real(t) => mse_on(&pred, t, &all),
    };
    v.ok_or_else(|| Error::config("test set is empty"))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
