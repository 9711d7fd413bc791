use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::TaskKind;

use super::weights::{check_confidences, LossVariant, SoftWeights};

/// Lower clamp for probabilities entering a log inside loss code.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-sample main-task loss `g` as an `n × 1` column: cross entropy
/// against one-hot targets for classification, mean squared error over
/// output dimensions for regression.
pub fn elementwise_loss(g: &mut Graph, task: TaskKind, targets: &Tensor, yhat: Var) -> Result<Var> {
    let t = g.constant(targets.clone());
    match task {
        TaskKind::Classification { .. } => {
            let p = g.clamp(yhat, PROB_FLOOR, 1.0);
            let lp = g.log(p)?;
            let picked = g.mul(t, lp)?;
            let s = g.sum_rows(picked)?;
            Ok(g.scale(s, -1.0))
        }
        TaskKind::Regression { out_dim } => {
            let diff = g.sub(yhat, t)?;
            let sq = g.square(diff);
            let s = g.sum_rows(sq)?;
            Ok(g.scale(s, 1.0 / out_dim as f64))
        }
    }
}

/// Graph-free evaluation of [`elementwise_loss`].
pub fn elementwise_loss_values(task: TaskKind, targets: &Tensor, yhat: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let y = g.constant(yhat.clone());
    let l = elementwise_loss(&mut g, task, targets, y)?;
    Ok(g.value(l).clone())
}

/// `mean(wᵢ · gᵢ)` with the weights entering as constants.
pub fn main_loss(g: &mut Graph, loss: Var, weights: &SoftWeights) -> Result<Var> {
    let n = g.value(loss).numel();
    if weights.0.len() != n {
        return Err(Error::Shape {
            op: "main_loss",
            lhs: g.value(loss).shape().to_vec(),
            rhs: vec![weights.0.len()],
        });
    }
    let w = g.constant(Tensor::column(weights.0.clone()));
    let weighted = g.mul(loss, w)?;
    Ok(g.mean(weighted))
}

/// Unweighted `mean(gᵢ)`.
pub fn mean_loss(g: &mut Graph, loss: Var) -> Var {
    g.mean(loss)
}

/// Discriminator loss between confidences `p` (`n × 1`) and the mask.
pub fn discriminator_loss(g: &mut Graph, variant: LossVariant, p: Var, mask: &[bool]) -> Result<Var> {
    let pv = g.value(p);
    if pv.shape() != [mask.len(), 1] {
        return Err(Error::Shape {
            op: "discriminator_loss",
            lhs: pv.shape().to_vec(),
            rhs: vec![mask.len(), 1],
        });
    }
    check_confidences("discriminator_loss", pv.data())?;

    let m = g.constant(Tensor::column(mask.iter().map(|&b| f64::from(u8::from(b))).collect()));
    let om = g.constant(Tensor::column(mask.iter().map(|&b| f64::from(u8::from(!b))).collect()));
    let neg_p = g.scale(p, -1.0);
    let (on_labeled, on_unlabeled) = match variant {
        LossVariant::Bce => {
            let a = g.clamp(p, PROB_FLOOR, 1.0);
            let la = g.log(a)?;
            let one_minus = g.offset(neg_p, 1.0);
            let b = g.clamp(one_minus, PROB_FLOOR, 1.0);
            let lb = g.log(b)?;
            (g.scale(la, -1.0), g.scale(lb, -1.0))
        }
        LossVariant::Exp => (g.exp(neg_p), g.exp(p)),
        LossVariant::Logistic => {
            let en = g.exp(neg_p);
            let ep = g.exp(p);
            let a = g.offset(en, 1.0);
            let b = g.offset(ep, 1.0);
            (g.log(a)?, g.log(b)?)
        }
    };
    let l = g.mul(m, on_labeled)?;
    let u = g.mul(om, on_unlabeled)?;
    let total = g.add(l, u)?;
    Ok(g.mean(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINARY: TaskKind = TaskKind::Classification { classes: 2 };

    fn row(v: &[f64]) -> Tensor {
        Tensor::matrix(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_reference_values() {
        let t = row(&[1.0, 0.0]);
        assert_eq!(elementwise_loss_values(BINARY, &t, &row(&[1.0, 0.0])).unwrap().item(), 0.0);
        let half = elementwise_loss_values(BINARY, &t, &row(&[0.5, 0.5])).unwrap().item();
        assert!((half - 0.693147).abs() < 1e-6);
        let zero = elementwise_loss_values(BINARY, &t, &row(&[0.0, 1.0])).unwrap().item();
        assert!((zero - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn squared_error_reference_value() {
        let task = TaskKind::Regression { out_dim: 1 };
        let g = elementwise_loss_values(task, &row(&[2.0]), &row(&[0.0])).unwrap();
        assert_eq!(g.item(), 4.0);
    }

    #[test]
    fn elementwise_loss_shape_mismatch() {
        let err = elementwise_loss_values(BINARY, &row(&[1.0, 0.0, 0.0]), &row(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn main_loss_unit_weights_is_mean() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::column(vec![0.5, 1.5, 4.0]));
        let m = main_loss(&mut g, l, &SoftWeights::ones(3)).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
    }

    #[test]
    fn main_loss_may_be_negative() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::column(vec![1.0, 1.0]));
        let m = main_loss(&mut g, l, &SoftWeights(vec![2.2, -5.0])).unwrap();
        assert!((g.value(m).item() - (-1.4)).abs() < 1e-12);
        g.backward(m).unwrap();
        assert_eq!(g.grad(l).unwrap(), &[1.1, -2.5]);
    }

    fn disc(variant: LossVariant, p: &[f64], mask: &[bool]) -> f64 {
        let mut g = Graph::new();
        let pv = g.leaf(Tensor::column(p.to_vec()));
        let l = discriminator_loss(&mut g, variant, pv, mask).unwrap();
        g.value(l).item()
    }

    #[test]
    fn discriminator_loss_reference_values() {
        let perfect = disc(LossVariant::Bce, &[1.0 - 1e-12, 1e-12], &[true, false]);
        assert!(perfect.abs() < 1e-11, "{perfect}");
        let half = disc(LossVariant::Bce, &[0.5, 0.5, 0.5], &[true, false, true]);
        assert!((half - 0.693147).abs() < 1e-6);
        // p = 0 is outside the domain; approach it.
        let e = disc(LossVariant::Exp, &[1e-15], &[true]);
        assert!((e - 1.0).abs() < 1e-12);
        let lg = disc(LossVariant::Logistic, &[1e-15, 1e-15], &[true, false]);
        assert!((lg - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn discriminator_loss_rejects_saturated_p() {
        let mut g = Graph::new();
        let pv = g.leaf(Tensor::column(vec![1.0]));
        assert!(discriminator_loss(&mut g, LossVariant::Bce, pv, &[true]).is_err());
    }

    #[test]
    fn discriminator_loss_gradient_pushes_toward_mask() {
        for variant in LossVariant::ALL {
            let mut g = Graph::new();
            let pv = g.leaf(Tensor::column(vec![0.5, 0.5]));
            let l = discriminator_loss(&mut g, variant, pv, &[true, false]).unwrap();
            g.backward(l).unwrap();
            let grad = g.grad(pv).unwrap();
            assert!(grad[0] < 0.0 && grad[1] > 0.0, "{variant}: {grad:?}");
        }
    }
}
