use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

/// Compares reverse-mode gradients of `objective` against central finite
/// differences with step `h`.
///
/// `objective` builds a scalar on a fresh graph from the given parameters.
/// Returns the max over all scalar parameters of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(objective: F, params: &ParamStore, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut store = params.clone();
    store.zero_grads();
    let mut graph = Graph::new();
    let root = objective(&mut graph, &store)?;
    graph.backward(root)?;
    store.collect_grads(&graph);
    let analytic = store.flat_grads();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let r = objective(&mut g, s)?;
        Ok(g.value(r).item())
    };

    let mut worst = 0.0f64;
    let mut offset = 0;
    let mut probe = params.clone();
    let ids: Vec<_> = probe.ids().collect();
    for id in ids {
        for k in 0..probe.value(id).numel() {
            let orig = probe.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = orig + h;
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = orig - h;
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic[offset + k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
        offset += probe.value(id).numel();
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn linear_objective_is_exact() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::matrix(3, 1, vec![0.3, -1.2, 2.0]).unwrap())
            .unwrap();
        let x = Tensor::matrix(1, 3, vec![1.5, 0.25, -4.0]).unwrap();
        let err = finite_diff_check(
            |g, s| {
                let xv = g.constant(x.clone());
                let wv = g.param(s, w);
                let b = g.constant(Tensor::zeros(&[1, 1]));
                let y = g.affine(xv, wv, b)?;
                Ok(g.sum(y))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(2.0)).unwrap();
        let err = finite_diff_check(|g, _| Ok(g.constant(Tensor::scalar(7.0))), &store, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }
}
