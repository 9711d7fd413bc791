//! Closed-form soft-labeling weights.
//!
//! For a discriminator loss `loss_B`, the main-task loss of sample `i`
//! is multiplied by `1 + α·a(pᵢ)` when its label is observed and by
//! `1 − α·b(pⱼ)` when it is a pseudo-label:
//!
//! | variant     | a(p)                 | b(p)                |
//! |-------------|----------------------|---------------------|
//! | BCE         | min(1/p, H)          | min(1/(1−p), H)     |
//! | Exponential | e^(−p)               | e^p                 |
//! | Logistic    | e^(−p) / (1+e^(−p))  | e^p / (1+e^p)       |
//!
//! The reciprocal terms are capped at `H`. The cap never binds for the
//! exponential and logistic rows since their factors stay below `e` on (0,1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    Bce,
    Exp,
    Logistic,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [LossVariant::Bce, LossVariant::Exp, LossVariant::Logistic];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::Bce => "bce",
            LossVariant::Exp => "exp",
            LossVariant::Logistic => "logistic",
        }
    }

    /// Factor applied to the loss of an observed label.
    pub fn labeled_factor(self, p: f64, clip: f64) -> f64 {
        match self {
            LossVariant::Bce => (1.0 / p).min(clip),
            LossVariant::Exp => (-p).exp().min(clip),
            LossVariant::Logistic => {
                let e = (-p).exp();
                (e / (1.0 + e)).min(clip)
            }
        }
    }

    /// Factor applied to the loss of a pseudo-label.
    pub fn unlabeled_factor(self, p: f64, clip: f64) -> f64 {
        match self {
            LossVariant::Bce => (1.0 / (1.0 - p)).min(clip),
            LossVariant::Exp => p.exp().min(clip),
            LossVariant::Logistic => {
                let e = p.exp();
                (e / (1.0 + e)).min(clip)
            }
        }
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossVariant::Bce),
            "exp" => Ok(LossVariant::Exp),
            "logistic" => Ok(LossVariant::Logistic),
            other => Err(Error::config(format!("unknown loss variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-sample loss multipliers. Always treated as constants by the
/// optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftWeights(pub Vec<f64>);

impl SoftWeights {
    pub fn ones(n: usize) -> Self {
        SoftWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_confidences(op: &'static str, p: &[f64]) -> Result<()> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
        return Err(Error::domain(op, format!("confidence p[{i}] = {v} outside (0, 1)")));
    }
    Ok(())
}

pub fn soft_weights(variant: LossVariant, p: &[f64], mask: &[bool], alpha: f64, clip: f64) -> Result<SoftWeights> {
    if p.len() != mask.len() {
        return Err(Error::Shape {
            op: "soft_weights",
            lhs: vec![p.len()],
            rhs: vec![mask.len()],
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if !(clip > 1.0) {
        return Err(Error::config(format!("clip bound must be > 1, got {clip}")));
    }
    check_confidences("soft_weights", p)?;
    let w = p
        .iter()
        .zip(mask)
        .map(|(&p, &observed)| {
            if observed {
                1.0 + alpha * variant.labeled_factor(p, clip)
            } else {
                1.0 - alpha * variant.unlabeled_factor(p, clip)
            }
        })
        .collect();
    Ok(SoftWeights(w))
}
