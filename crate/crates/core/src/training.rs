//! Minibatch plumbing shared by the game and the baselines.

use rand::seq::SliceRandom;

use crate::autodiff::{Adam, Graph, Tensor, Var};
use crate::error::Result;
use crate::game::losses::elementwise_loss;
use crate::models::MainModel;
use crate::rng::Rng;

/// Shuffles `idx` and splits it into consecutive batches; the last batch
/// may be short.
pub fn epoch_batches(idx: &[usize], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order = idx.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Forward pass of `f` on a batch plus the per-sample loss column.
pub struct BatchForward {
    pub graph: Graph,
    pub yhat: Var,
    pub loss: Var,
}

pub fn forward_batch(f: &MainModel, x: &Tensor, targets: &Tensor) -> Result<BatchForward> {
    let mut graph = Graph::new();
    let xv = graph.constant(x.clone());
    let yhat = f.forward(&mut graph, xv)?;
    let loss = elementwise_loss(&mut graph, f.task(), targets, yhat)?;
    Ok(BatchForward { graph, yhat, loss })
}

/// Backpropagates `root` through `graph` into `f` and takes one Adam step.
/// Returns the objective value.
pub fn apply_step(f: &mut MainModel, mut graph: Graph, root: Var, opt: &Adam) -> Result<f64> {
    let value = graph.value(root).item();
    graph.backward(root)?;
    let store = f.params_mut();
    store.zero_grads();
    store.collect_grads(&graph);
    store.adam_step(opt)?;
    Ok(value)
}
