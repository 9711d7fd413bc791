//! The main-task MLP and the label-observability discriminator.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

/// Logits entering the discriminator's sigmoid are clamped to this range
/// so the output stays strictly inside (0, 1) in `f64`.
pub const DISC_LOGIT_BOUND: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression { out_dim: usize },
}

impl TaskKind {
    pub fn out_dim(self) -> usize {
        match self {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression { out_dim } => out_dim,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }

    pub fn validate(self) -> Result<()> {
        match self {
            TaskKind::Classification { classes } if classes < 2 => Err(Error::config(format!(
                "classification needs at least 2 classes, got {classes}"
            ))),
            TaskKind::Regression { out_dim: 0 } => Err(Error::config("regression out_dim must be >= 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    /// Kaiming-normal weights (std = sqrt(2 / fan_in)), zero bias.
    fn init(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Self> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
        let w = store.add(format!("{name}.weight"), Tensor::matrix(fan_in, fan_out, w)?)?;
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]))?;
        Ok(Self { w, b })
    }

    fn apply(self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.affine(x, w, b)
    }
}

fn check_widths(what: &str, widths: &[usize]) -> Result<()> {
    if widths.contains(&0) {
        return Err(Error::config(format!("{what} widths must be positive, got {widths:?}")));
    }
    Ok(())
}

fn check_cols(op: &'static str, t: &Tensor, cols: usize) -> Result<()> {
    if !t.is_matrix() || t.cols() != cols {
        return Err(Error::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![t.shape().first().copied().unwrap_or(0), cols],
        });
    }
    Ok(())
}

/// Architecture knobs shared by the training entry points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub main_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            main_hidden: vec![32, 32],
            disc_hidden: vec![32],
        }
    }
}

/// Task model `f`: an MLP with ReLU hidden layers and a softmax head for
/// classification or an identity head for regression.
#[derive(Clone, Debug)]
pub struct MainModel {
    task: TaskKind,
    input_dim: usize,
    hidden: Vec<usize>,
    layers: Vec<Dense>,
    params: ParamStore,
}

pub fn build_main_model(task: TaskKind, input_dim: usize, hidden: &[usize], seed: u64) -> Result<MainModel> {
    task.validate()?;
    if input_dim == 0 {
        return Err(Error::config("input_dim must be >= 1"));
    }
    check_widths("hidden", hidden)?;
    let mut rng = rng::stream(seed, Stream::MainInit);
    let mut params = ParamStore::new();
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut fan_in = input_dim;
    for (i, &w) in hidden.iter().chain(std::iter::once(&task.out_dim())).enumerate() {
        layers.push(Dense::init(&mut params, &format!("layer{i}"), fan_in, w, &mut rng)?);
        fan_in = w;
    }
    Ok(MainModel {
        task,
        input_dim,
        hidden: hidden.to_vec(),
        layers,
        params,
    })
}

impl MainModel {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `Ŷ = f(X)` recorded on `g`. `x` must be `n × input_dim`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.forward_with(g, &self.params, x)
    }

    /// Same as [`forward`](Self::forward) but reading weights from `store`,
    /// which must have this model's layout. Used by gradient checks.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols("forward_main", g.value(x), self.input_dim)?;
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(g, store, h)?;
            if i < last {
                h = g.relu(h);
            }
        }
        match self.task {
            TaskKind::Classification { .. } => g.softmax_rows(h),
            TaskKind::Regression { .. } => Ok(h),
        }
    }

    /// Forward pass without keeping the graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, xv)?;
        Ok(g.value(y).clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            model: "main".into(),
            task: self.task,
            dims: Dims {
                input_dim: self.input_dim,
                hidden: self.hidden.clone(),
                disc_hidden: None,
            },
            params: flat_params(&self.params),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.model != "main" {
            return Err(Error::config(format!("expected a main model, found `{}`", file.model)));
        }
        let mut m = build_main_model(file.task, file.dims.input_dim, &file.dims.hidden, 0)?;
        load_params(&mut m.params, file.params)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Label-observability discriminator `d(X, Ŷ, g) = P`.
///
/// Two ReLU extractors embed `X` and `Ŷ` to the same width, the embeddings
/// are fused by a Hadamard product, the per-sample loss `g` is appended as
/// one extra column, and a single affine layer plus sigmoid produces `p`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    task: TaskKind,
    input_dim: usize,
    hidden: Vec<usize>,
    x_layers: Vec<Dense>,
    y_layers: Vec<Dense>,
    head: Dense,
    params: ParamStore,
}

pub fn build_discriminator(task: TaskKind, input_dim: usize, hidden: &[usize], seed: u64) -> Result<Discriminator> {
    build_discriminator_with(task, input_dim, hidden, hidden, seed)
}

/// Variant with separate extractor widths. Their last widths must agree
/// for the Hadamard fusion.
pub fn build_discriminator_with(
    task: TaskKind,
    input_dim: usize,
    x_hidden: &[usize],
    y_hidden: &[usize],
    seed: u64,
) -> Result<Discriminator> {
    task.validate()?;
    if input_dim == 0 {
        return Err(Error::config("input_dim must be >= 1"));
    }
    if x_hidden.is_empty() || y_hidden.is_empty() {
        return Err(Error::config("discriminator extractors need at least one layer"));
    }
    check_widths("discriminator", x_hidden)?;
    check_widths("discriminator", y_hidden)?;
    let (ex, ey) = (*x_hidden.last().unwrap(), *y_hidden.last().unwrap());
    if ex != ey {
        return Err(Error::Shape {
            op: "discriminator fusion",
            lhs: vec![ex],
            rhs: vec![ey],
        });
    }

    let mut rng = rng::stream(seed, Stream::DiscInit);
    let mut params = ParamStore::new();
    let mut stack = |prefix: &str, mut fan_in: usize, widths: &[usize], params: &mut ParamStore| -> Result<Vec<Dense>> {
        let mut out = Vec::new();
        for (i, &w) in widths.iter().enumerate() {
            out.push(Dense::init(params, &format!("{prefix}{i}"), fan_in, w, &mut rng)?);
            fan_in = w;
        }
        Ok(out)
    };
    let x_layers = stack("x", input_dim, x_hidden, &mut params)?;
    let y_layers = stack("y", task.out_dim(), y_hidden, &mut params)?;
    let head = Dense::init(&mut params, "head", ex + 1, 1, &mut rng)?;

    Ok(Discriminator {
        task,
        input_dim,
        hidden: x_hidden.to_vec(),
        x_layers,
        y_layers,
        head,
        params,
    })
}

impl Discriminator {
    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records `P` (an `n × 1` column) on `g`. All three inputs enter the
    /// graph as constants, so no gradient reaches whatever produced them.
    pub fn forward(&self, g: &mut Graph, x: &Tensor, yhat: &Tensor, loss: &Tensor) -> Result<Var> {
        self.forward_with(g, &self.params, x, yhat, loss)
    }

    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &Tensor,
        yhat: &Tensor,
        loss: &Tensor,
    ) -> Result<Var> {
        check_cols("forward_discriminator x", x, self.input_dim)?;
        check_cols("forward_discriminator yhat", yhat, self.task.out_dim())?;
        check_cols("forward_discriminator g", loss, 1)?;
        let n = x.rows();
        for t in [yhat, loss] {
            if t.rows() != n {
                return Err(Error::Shape {
                    op: "forward_discriminator rows",
                    lhs: x.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }

        let mut hx = g.constant(x.clone());
        for layer in &self.x_layers {
            let a = layer.apply(g, store, hx)?;
            hx = g.relu(a);
        }
        let mut hy = g.constant(yhat.clone());
        for layer in &self.y_layers {
            let a = layer.apply(g, store, hy)?;
            hy = g.relu(a);
        }
        let fused = g.hadamard(hx, hy)?;
        let gv = g.constant(loss.clone());
        let joined = g.concat_cols(fused, gv)?;
        let logit = self.head.apply(g, store, joined)?;
        let logit = g.clamp(logit, -DISC_LOGIT_BOUND, DISC_LOGIT_BOUND);
        Ok(g.sigmoid(logit))
    }

    /// Per-sample confidence vector without keeping the graph.
    pub fn confidence(&self, x: &Tensor, yhat: &Tensor, loss: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.forward(&mut g, x, yhat, loss)?;
        Ok(g.value(p).data().to_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            model: "discriminator".into(),
            task: self.task,
            dims: Dims {
                input_dim: self.input_dim,
                hidden: Vec::new(),
                disc_hidden: Some(self.hidden.clone()),
            },
            params: flat_params(&self.params),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        let hidden = match (&*file.model, file.dims.disc_hidden) {
            ("discriminator", Some(h)) => h,
            _ => return Err(Error::config("expected a discriminator model file")),
        };
        let mut d = build_discriminator(file.task, file.dims.input_dim, &hidden, 0)?;
        load_params(&mut d.params, file.params)?;
        Ok(d)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    input_dim: usize,
    hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disc_hidden: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: String,
    task: TaskKind,
    dims: Dims,
    params: BTreeMap<String, Vec<f64>>,
}

fn flat_params(store: &ParamStore) -> BTreeMap<String, Vec<f64>> {
    store
        .named_values()
        .map(|(n, t)| (n.to_string(), t.data().to_vec()))
        .collect()
}

fn load_params(store: &mut ParamStore, mut flat: BTreeMap<String, Vec<f64>>) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let values = flat
            .remove(&name)
            .ok_or_else(|| Error::config(format!("model file lacks parameter `{name}`")))?;
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = Tensor::new(shape, values)?;
    }
    if let Some(extra) = flat.keys().next() {
        return Err(Error::config(format!("model file has unknown parameter `{extra}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINARY: TaskKind = TaskKind::Classification { classes: 2 };

    fn random_input(n: usize, d: usize, seed: u64) -> Tensor {
        let mut r = rng::rng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        Tensor::matrix(n, d, (0..n * d).map(|_| normal.sample(&mut r)).collect()).unwrap()
    }

    #[test]
    fn parameter_count_matches_layer_arithmetic() {
        let m = build_main_model(BINARY, 2, &[32, 32], 0).unwrap();
        assert_eq!(m.params().numel(), 2 * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2);
        assert_eq!(m.params().numel(), 1218);
    }

    #[test]
    fn empty_hidden_is_linear_model() {
        let m = build_main_model(BINARY, 3, &[], 0).unwrap();
        assert_eq!(m.params().numel(), 3 * 2 + 2);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(build_main_model(BINARY, 0, &[4], 0).is_err());
        assert!(build_main_model(BINARY, 2, &[4, 0], 0).is_err());
        assert!(build_main_model(TaskKind::Classification { classes: 1 }, 2, &[4], 0).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        let a = build_main_model(BINARY, 2, &[8], 42).unwrap();
        let b = build_main_model(BINARY, 2, &[8], 42).unwrap();
        let c = build_main_model(BINARY, 2, &[8], 43).unwrap();
        assert_eq!(a.params().flat_values(), b.params().flat_values());
        assert_ne!(a.params().flat_values(), c.params().flat_values());
    }

    #[test]
    fn classification_rows_are_stochastic() {
        let m = build_main_model(TaskKind::Classification { classes: 3 }, 4, &[16], 1).unwrap();
        let y = m.predict(&random_input(20, 4, 9)).unwrap();
        for r in 0..20 {
            let row = y.row(r);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn regression_head_is_identity() {
        let m = build_main_model(TaskKind::Regression { out_dim: 5 }, 3, &[], 2).unwrap();
        let x = random_input(4, 3, 3);
        let y = m.predict(&x).unwrap();
        assert_eq!(y.shape(), &[4, 5]);
        let w = m.params().value(m.params().id("layer0.weight").unwrap());
        let manual: f64 = (0..3).map(|k| x.get(0, k) * w.get(k, 0)).sum();
        assert!((y.get(0, 0) - manual).abs() < 1e-12);
        let sums: Vec<f64> = (0..4).map(|r| y.row(r).iter().sum()).collect();
        assert!(sums.iter().any(|s| (s - 1.0).abs() > 1e-6));
    }

    #[test]
    fn empty_batch_gives_empty_output() {
        let m = build_main_model(BINARY, 2, &[8], 0).unwrap();
        let y = m.predict(&Tensor::zeros(&[0, 2])).unwrap();
        assert_eq!(y.shape(), &[0, 2]);
    }

    #[test]
    fn wrong_input_width_rejected() {
        let m = build_main_model(BINARY, 2, &[8], 0).unwrap();
        assert!(matches!(m.predict(&Tensor::zeros(&[3, 5])), Err(Error::Shape { .. })));
    }

    #[test]
    fn discriminator_output_in_open_interval_and_per_row() {
        let d = build_discriminator(BINARY, 2, &[16], 5).unwrap();
        let mut x = random_input(6, 2, 1);
        let yhat = Tensor::matrix(6, 2, vec![0.3, 0.7, 0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut g = Tensor::column(vec![0.1, 3.0, 0.0, 25.0, 1.0, 0.7]);
        let p = d.confidence(&x, &yhat, &g).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));

        // Duplicate row 1 into row 4 of every input.
        let xr = x.row(1).to_vec();
        x.data_mut()[8..10].copy_from_slice(&xr);
        let mut yh = yhat.clone();
        let yr = yhat.row(1).to_vec();
        yh.data_mut()[8..10].copy_from_slice(&yr);
        g.data_mut()[4] = g.data()[1];
        let q = d.confidence(&x, &yh, &g).unwrap();
        assert_eq!(q[4], q[1]);
        for i in [0, 1, 2, 3, 5] {
            assert_eq!(q[i], p[i], "row {i} changed");
        }
    }

    #[test]
    fn discriminator_saturated_logit_stays_below_one() {
        let d = build_discriminator(BINARY, 1, &[4], 0).unwrap();
        let x = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let yhat = Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap();
        for loss in [1e6, -1e6] {
            let p = d.confidence(&x, &yhat, &Tensor::column(vec![loss])).unwrap()[0];
            assert!(p > 0.0 && p < 1.0, "{p}");
        }
    }

    #[test]
    fn discriminator_row_count_mismatch_rejected() {
        let d = build_discriminator(BINARY, 2, &[4], 0).unwrap();
        let err = d
            .confidence(&random_input(3, 2, 0), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3, 1]))
            .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn fusion_width_checked_at_construction() {
        let err = build_discriminator_with(BINARY, 2, &[8], &[8, 4], 0).unwrap_err();
        assert!(err.to_string().contains("fusion"));
        assert!(build_discriminator_with(BINARY, 2, &[16, 8], &[8], 0).is_ok());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = build_main_model(TaskKind::Regression { out_dim: 2 }, 3, &[5, 4], 11).unwrap();
        let back = MainModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.task(), m.task());
        assert_eq!(back.hidden(), m.hidden());
        assert_eq!(back.params().flat_values(), m.params().flat_values());

        let d = build_discriminator(BINARY, 3, &[6], 4).unwrap();
        let back = Discriminator::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back.params().flat_values(), d.params().flat_values());
    }

    #[test]
    fn json_with_missing_parameter_rejected() {
        let m = build_main_model(BINARY, 2, &[3], 0).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["params"].as_object_mut().unwrap().remove("layer1.bias");
        assert!(MainModel::from_json(&v.to_string()).is_err());
    }
}
