//! Synthetic generators, label masking, label-noise injection and CSV I/O.
//!
//! A [`SemiDataset`] keeps the ground truth for unlabeled rows so that
//! pseudo-label accuracy can be measured on synthetic data. Training code
//! only ever sees a [`TrainView`], which exposes features and the
//! observability mask but no labels.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::TaskKind;
use crate::rng::{self, Stream};

/// Per-row labels: class indices or real-valued targets (`n × out_dim`).
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Class(Vec<usize>),
    Real(Tensor),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(c) => c.len(),
            Labels::Real(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Labels::Class(c) => Some(c),
            Labels::Real(_) => None,
        }
    }

    /// Dense target matrix: one-hot rows for classes, values otherwise.
    pub fn to_targets(&self, task: TaskKind) -> Tensor {
        match self {
            Labels::Class(c) => one_hot(c, task.out_dim()),
            Labels::Real(t) => t.clone(),
        }
    }
}

pub fn one_hot(classes: &[usize], k: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * k];
    for (r, &c) in classes.iter().enumerate() {
        data[r * k + c] = 1.0;
    }
    Tensor::matrix(classes.len(), k, data).expect("shape by construction")
}

/// Features, labels and the observability mask `M` (true = labeled).
#[derive(Clone, Debug, PartialEq)]
pub struct SemiDataset {
    task: TaskKind,
    x: Tensor,
    y: Labels,
    mask: Vec<bool>,
    noisy: Vec<usize>,
}

/// What training routines may look at.
#[derive(Clone, Copy, Debug)]
pub struct TrainView<'a> {
    pub x: &'a Tensor,
    pub mask: &'a [bool],
}

impl SemiDataset {
    pub fn new(task: TaskKind, x: Tensor, y: Labels, mask: Vec<bool>) -> Result<Self> {
        task.validate()?;
        let ds = Self {
            task,
            x,
            y,
            mask,
            noisy: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Fully labeled dataset.
    pub fn labeled(task: TaskKind, x: Tensor, y: Labels) -> Result<Self> {
        let n = y.len();
        Self::new(task, x, y, vec![true; n])
    }

    fn validate(&self) -> Result<()> {
        if !self.x.is_matrix() {
            return Err(Error::config(format!("features must be a matrix, got {:?}", self.x.shape())));
        }
        let n = self.x.rows();
        if self.y.len() != n || self.mask.len() != n {
            return Err(Error::Shape {
                op: "dataset rows",
                lhs: vec![n, self.y.len()],
                rhs: vec![self.mask.len()],
            });
        }
        match (&self.y, self.task) {
            (Labels::Class(c), TaskKind::Classification { classes }) => {
                if let Some(bad) = c.iter().find(|&&v| v >= classes) {
                    return Err(Error::config(format!("class label {bad} outside [0, {classes})")));
                }
                let mut seen = vec![false; classes];
                for (i, &cl) in c.iter().enumerate() {
                    seen[cl] |= self.mask[i];
                }
                if n > 0 {
                    if let Some(k) = seen.iter().position(|s| !s) {
                        return Err(Error::config(format!("class {k} has no labeled sample")));
                    }
                }
            }
            (Labels::Real(t), TaskKind::Regression { out_dim }) => {
                if t.cols() != out_dim {
                    return Err(Error::Shape {
                        op: "regression labels",
                        lhs: t.shape().to_vec(),
                        rhs: vec![n, out_dim],
                    });
                }
            }
            _ => return Err(Error::config("label kind does not match task")),
        }
        Ok(())
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    /// Labels of every row. Entries of unlabeled rows are ground truth kept
    /// for evaluation only.
    pub fn labels(&self) -> &Labels {
        &self.y
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn labeled_idx(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn unlabeled_idx(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.mask[i]).collect()
    }

    /// Labeled rows whose label was corrupted by [`inject_label_noise`].
    pub fn noisy_idx(&self) -> &[usize] {
        &self.noisy
    }

    pub fn view(&self) -> TrainView<'_> {
        TrainView {
            x: &self.x,
            mask: &self.mask,
        }
    }

    /// Dense targets for the given rows.
    pub fn targets_for(&self, idx: &[usize]) -> Tensor {
        match &self.y {
            Labels::Class(c) => one_hot(&idx.iter().map(|&i| c[i]).collect::<Vec<_>>(), self.task.out_dim()),
            Labels::Real(t) => t.select_rows(idx),
        }
    }

    /// Restriction to the given rows, keeping their mask entries.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let y = match &self.y {
            Labels::Class(c) => Labels::Class(idx.iter().map(|&i| c[i]).collect()),
            Labels::Real(t) => Labels::Real(t.select_rows(idx)),
        };
        let mut out = Self::new(self.task, self.x.select_rows(idx), y, idx.iter().map(|&i| self.mask[i]).collect())?;
        out.noisy = idx
            .iter()
            .enumerate()
            .filter(|(_, i)| self.noisy.contains(i))
            .map(|(k, _)| k)
            .collect();
        Ok(out)
    }
}

/// Two interleaving half circles: class 0 on `(cos θ, sin θ)`, class 1 on
/// `(1 - cos θ, 0.5 - sin θ)`, θ uniform on [0, π], plus isotropic Gaussian
/// noise. Class 0 gets `n - n/2` points, class 1 gets `n/2`.
pub fn gen_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<SemiDataset> {
    if n < 2 {
        return Err(Error::config(format!("two-moons needs n >= 2, got {n}")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let n1 = n / 2;
    let n0 = n - n1;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (class, count) in [(0usize, n0), (1, n1)] {
        for _ in 0..count {
            let theta = rng.random_range(0.0..=std::f64::consts::PI);
            let (x, y) = if class == 0 {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            let (ex, ey) = if noise_sigma > 0.0 {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (noise_sigma * a, noise_sigma * b)
            } else {
                (0.0, 0.0)
            };
            data.extend_from_slice(&[x + ex, y + ey]);
            labels.push(class);
        }
    }
    SemiDataset::labeled(
        TaskKind::Classification { classes: 2 },
        Tensor::matrix(n, 2, data)?,
        Labels::Class(labels),
    )
}

/// Fixed regression function `y = x·w + sin(x·v) + ε`.
///
/// The coefficients are drawn once from the problem seed so that training
/// and test samples share the same target function.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularProblem {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub noise_std: f64,
    pub nonlinear: bool,
}

impl TabularProblem {
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("tabular regression needs d >= 1"));
        }
        let mut rng = rng::stream(seed, Stream::Data);
        let w = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let vs = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("finite");
        let v = (0..d).map(|_| vs.sample(&mut rng)).collect();
        Ok(Self {
            w,
            v,
            noise_std: 0.1,
            nonlinear: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SemiDataset> {
        if n == 0 {
            return Err(Error::config("tabular regression needs n >= 1"));
        }
        let d = self.dim();
        let mut rng = rng::stream(seed, Stream::TestData);
        let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut y = Vec::with_capacity(n);
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let lin: f64 = row.iter().zip(&self.w).map(|(a, b)| a * b).sum();
            let nl = if self.nonlinear {
                row.iter().zip(&self.v).map(|(a, b)| a * b).sum::<f64>().sin()
            } else {
                0.0
            };
            let eps: f64 = StandardNormal.sample(&mut rng);
            y.push(lin + nl + self.noise_std * eps);
        }
        SemiDataset::labeled(
            TaskKind::Regression { out_dim: 1 },
            Tensor::matrix(n, d, x)?,
            Labels::Real(Tensor::column(y)),
        )
    }
}

pub fn gen_tabular_regression(n: usize, d: usize, seed: u64) -> Result<SemiDataset> {
    TabularProblem::new(d, seed)?.sample(n, seed)
}

fn count_for(rate: f64, n: usize) -> usize {
    // Guard against products like 0.7 * 1000 landing a hair below an integer.
    ((rate * n as f64) + 1e-9).floor() as usize
}

/// Hides exactly `floor(rate · n)` labels, chosen by a seeded shuffle.
/// Draws are repeated until every class keeps at least one label.
pub fn apply_missing(ds: &SemiDataset, rate: f64, seed: u64) -> Result<SemiDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("missing rate must be in [0, 1), got {rate}")));
    }
    if !ds.noisy.is_empty() {
        return Err(Error::config("apply missing labels before injecting label noise"));
    }
    let n = ds.len();
    let hide = count_for(rate, n);
    if let TaskKind::Classification { classes } = ds.task {
        if n - hide < classes {
            return Err(Error::config(format!(
                "missing rate {rate} leaves {} labels for {classes} classes",
                n - hide
            )));
        }
    }
    let mut rng = rng::stream(seed, Stream::Missing);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..10_000 {
        order.shuffle(&mut rng);
        let mut mask = vec![true; n];
        for &i in &order[..hide] {
            mask[i] = false;
        }
        let mut out = ds.clone();
        out.mask = mask;
        if out.validate().is_ok() {
            return Ok(out);
        }
    }
    Err(Error::config(format!(
        "could not keep a label for every class at missing rate {rate}"
    )))
}

/// Corrupts `floor(noise_rate · |L|)` labeled rows: classes move to a
/// different uniformly drawn class, real targets shift by ±5σ of the
/// labeled targets. The corrupted rows are recorded in `noisy_idx`.
pub fn inject_label_noise(ds: &SemiDataset, noise_rate: f64, seed: u64) -> Result<SemiDataset> {
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(Error::config(format!("noise rate must be in [0, 1), got {noise_rate}")));
    }
    let mut labeled = ds.labeled_idx();
    let count = count_for(noise_rate, labeled.len());
    let mut rng = rng::stream(seed, Stream::LabelNoise);
    labeled.shuffle(&mut rng);
    let mut chosen: Vec<usize> = labeled[..count].to_vec();
    chosen.sort_unstable();

    let mut out = ds.clone();
    match (&mut out.y, ds.task) {
        (Labels::Class(c), TaskKind::Classification { classes }) => {
            for &i in &chosen {
                let shift = rng.random_range(1..classes);
                c[i] = (c[i] + shift) % classes;
            }
        }
        (Labels::Real(t), TaskKind::Regression { out_dim }) => {
            let sigma = labeled_std(t, ds.mask());
            for &i in &chosen {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                for k in 0..out_dim {
                    t.data_mut()[i * out_dim + k] += sign * 5.0 * sigma[k];
                }
            }
        }
        _ => unreachable!("validated at construction"),
    }
    out.noisy = chosen;
    // Corruption may leave a class without a clean label, never without a label.
    out.validate()?;
    Ok(out)
}

/// Per-column mean over labeled rows.
pub fn labeled_mean(t: &Tensor, mask: &[bool]) -> Vec<f64> {
    let c = t.cols();
    let mut sum = vec![0.0; c];
    let mut count = 0usize;
    for (r, &m) in mask.iter().enumerate() {
        if m {
            count += 1;
            for (s, v) in sum.iter_mut().zip(t.row(r)) {
                *s += v;
            }
        }
    }
    sum.iter().map(|s| s / count.max(1) as f64).collect()
}

/// Per-column population standard deviation over labeled rows.
pub fn labeled_std(t: &Tensor, mask: &[bool]) -> Vec<f64> {
    let mean = labeled_mean(t, mask);
    let c = t.cols();
    let mut ss = vec![0.0; c];
    let mut count = 0usize;
    for (r, &m) in mask.iter().enumerate() {
        if m {
            count += 1;
            for ((s, v), mu) in ss.iter_mut().zip(t.row(r)).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
    }
    ss.iter().map(|s| (s / count.max(1) as f64).sqrt()).collect()
}

/// Writes `x0..x{d-1}, y (or y0..y{m-1}), observed` with 17 significant
/// digits per real value.
pub fn save_csv(ds: &SemiDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let d = ds.dim();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    match ds.task {
        TaskKind::Regression { out_dim } if out_dim > 1 => header.extend((0..out_dim).map(|k| format!("y{k}"))),
        _ => header.push("y".into()),
    }
    header.push("observed".into());
    w.write_record(&header).map_err(csv_io)?;

    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        match &ds.y {
            Labels::Class(c) => rec.push(c[r].to_string()),
            Labels::Real(t) => rec.extend(t.row(r).iter().map(|v| format!("{v:.16e}"))),
        }
        rec.push(if ds.mask[r] { "1" } else { "0" }.into());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv {
            line,
            column: String::new(),
            detail: format!("{other:?}"),
        },
    }
}

/// Reads the format written by [`save_csv`]. The task decides how the `y`
/// column(s) are interpreted.
pub fn load_csv(path: impl AsRef<Path>, task: TaskKind) -> Result<SemiDataset> {
    task.validate()?;
    let mut rdr = csv::Reader::from_path(path).map_err(csv_io)?;
    let header: Vec<String> = rdr.headers().map_err(csv_io)?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
            line: 1,
            column: name.to_string(),
            detail: "missing column".into(),
        })
    };

    let d = header.iter().filter(|h| is_indexed(h, 'x')).count();
    if d == 0 {
        return Err(Error::Csv {
            line: 1,
            column: "x0".into(),
            detail: "missing column".into(),
        });
    }
    let x_cols: Vec<usize> = (0..d).map(|k| find(&format!("x{k}"))).collect::<Result<_>>()?;
    let y_names: Vec<String> = match task {
        TaskKind::Regression { out_dim } if out_dim > 1 => (0..out_dim).map(|k| format!("y{k}")).collect(),
        _ => vec!["y".into()],
    };
    let y_cols: Vec<usize> = y_names.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let obs_col = find("observed")?;

    let mut x = Vec::new();
    let mut classes = Vec::new();
    let mut reals = Vec::new();
    let mut mask = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_io)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |col: usize| -> Result<f64> {
            let raw = rec.get(col).ok_or_else(|| Error::Csv {
                line,
                column: header[col].clone(),
                detail: "missing cell".into(),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Csv {
                line,
                column: header[col].clone(),
                detail: format!("not a number: `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    column: header[col].clone(),
                    detail: format!("non-finite value `{raw}`"),
                });
            }
            Ok(v)
        };
        for &c in &x_cols {
            x.push(cell(c)?);
        }
        match task {
            TaskKind::Classification { classes: k } => {
                let v = cell(y_cols[0])?;
                if v.fract() != 0.0 || v < 0.0 || v >= k as f64 {
                    return Err(Error::Csv {
                        line,
                        column: "y".into(),
                        detail: format!("class label {v} outside [0, {k})"),
                    });
                }
                classes.push(v as usize);
            }
            TaskKind::Regression { .. } => {
                for &c in &y_cols {
                    reals.push(cell(c)?);
                }
            }
        }
        let o = cell(obs_col)?;
        mask.push(match o {
            1.0 => true,
            0.0 => false,
            _ => {
                return Err(Error::Csv {
                    line,
                    column: "observed".into(),
                    detail: format!("expected 0 or 1, got {o}"),
                })
            }
        });
    }
    let n = mask.len();
    let y = match task {
        TaskKind::Classification { .. } => Labels::Class(classes),
        TaskKind::Regression { out_dim } => Labels::Real(Tensor::matrix(n, out_dim, reals)?),
    };
    SemiDataset::new(task, Tensor::matrix(n, d, x)?, y, mask)
}

fn is_indexed(h: &str, prefix: char) -> bool {
    h.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}
