use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Tensor,
    grad: Option<Vec<f64>>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("adam lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("adam {name} must be in [0,1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Ordered, uniquely named learnable tensors with their Adam state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::DuplicateParam(name));
        }
        let n = value.numel();
        self.params.push(Param {
            name,
            value,
            grad: None,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Adam steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].grad.as_deref()
    }

    pub fn set_grad(&mut self, id: ParamId, grad: Vec<f64>) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.len() != p.value.numel() {
            return Err(Error::Shape {
                op: "set_grad",
                lhs: p.value.shape().to_vec(),
                rhs: vec![grad.len()],
            });
        }
        p.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds the gradients that `graph` accumulated on leaves created with
    /// [`Graph::param`] into this store.
    pub fn collect_grads(&mut self, graph: &Graph) {
        for (id, g) in graph.param_grads() {
            let p = &mut self.params[id.0];
            match &mut p.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => p.grad = Some(g.to_vec()),
            }
        }
    }

    /// Flattened values in parameter order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    /// Flattened gradients in parameter order; missing gradients read as 0.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| match &p.grad {
                Some(g) => g.clone(),
                None => vec![0.0; p.value.numel()],
            })
            .collect()
    }

    /// Named flat parameter arrays, in order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// One bias-corrected Adam update. Consumes and clears all gradients.
    pub fn adam_step(&mut self, opt: &Adam) -> Result<()> {
        opt.validate()?;
        if let Some(p) = self.params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::MissingGrad(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - opt.beta1.powi(t);
        let bc2 = 1.0 - opt.beta2.powi(t);
        for p in &mut self.params {
            let grad = p.grad.take().expect("checked above");
            let values = p.value.data_mut();
            for (((x, g), m), v) in values.iter_mut().zip(&grad).zip(&mut p.m).zip(&mut p.v) {
                *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
                *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
            }
        }
        Ok(())
    }
}
