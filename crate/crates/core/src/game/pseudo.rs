use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::datasets::{labeled_mean, labeled_std, Labels, SemiDataset};
use crate::error::{Error, Result};
use crate::metrics::{accuracy_on, argmax, mse_on};
use crate::models::{MainModel, TaskKind};
use crate::rng::{self, Stream};

/// Relative scale of the Gaussian noise added to regression pseudo-labels
/// at initialization, in units of the labeled standard deviation.
pub const REGRESSION_INIT_NOISE: f64 = 0.1;

/// Working labels `Ỹ`: the observed labels on `L` and pseudo-labels on `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoState {
    working: Tensor,
    mask: Vec<bool>,
    round: usize,
    history: Vec<f64>,
}

impl PseudoState {
    /// Dense targets (`n × out_dim`; one-hot rows for classification).
    pub fn working(&self) -> &Tensor {
        &self.working
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Completed refresh rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Pseudo-label quality after each refresh round (accuracy for
    /// classification, MSE for regression). Rounds with `U = ∅` record
    /// nothing.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Quality of the current pseudo-labels against the held-out truth.
    pub fn quality(&self, ds: &SemiDataset) -> Option<f64> {
        let u = ds.unlabeled_idx();
        match ds.labels() {
            Labels::Class(c) => accuracy_on(&self.working, c, &u),
            Labels::Real(t) => mse_on(&self.working, t, &u),
        }
    }
}

/// Fills `U` with uniformly random classes, or with the labeled mean plus
/// Gaussian noise of `0.1 · σ_L` per output dimension for regression.
pub fn init_pseudo_labels(task: TaskKind, ds: &SemiDataset, seed: u64) -> Result<PseudoState> {
    if ds.task() != task {
        return Err(Error::config("task does not match dataset"));
    }
    let mask = ds.mask().to_vec();
    let labeled = ds.labeled_idx();
    let unlabeled = ds.unlabeled_idx();
    let mut rng = rng::stream(seed, Stream::PseudoInit);
    let mut working = ds.targets_for(&(0..ds.len()).collect::<Vec<_>>());
    let k = task.out_dim();

    match task {
        TaskKind::Classification { classes } => {
            for &j in &unlabeled {
                let row = &mut working.data_mut()[j * k..(j + 1) * k];
                row.fill(0.0);
                row[rng.random_range(0..classes)] = 1.0;
            }
        }
        TaskKind::Regression { .. } => {
            if labeled.is_empty() && !unlabeled.is_empty() {
                return Err(Error::config("regression pseudo-labels need at least one labeled row"));
            }
            let mu = labeled_mean(&working, &mask);
            let sigma = labeled_std(&working, &mask);
            for &j in &unlabeled {
                for c in 0..k {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    working.data_mut()[j * k + c] = mu[c] + REGRESSION_INIT_NOISE * sigma[c] * z;
                }
            }
        }
    }
    Ok(PseudoState {
        working,
        mask,
        round: 0,
        history: Vec::new(),
    })
}

/// Replaces every pseudo-label with `f`'s current hard prediction (argmax
/// one-hot or raw regression output). Labeled rows are left untouched.
pub fn refresh_pseudo_labels(f: &MainModel, state: &mut PseudoState, ds: &SemiDataset) -> Result<()> {
    let unlabeled = ds.unlabeled_idx();
    let k = f.task().out_dim();
    if !unlabeled.is_empty() {
        let pred = f.predict(&ds.x().select_rows(&unlabeled))?;
        for (r, &j) in unlabeled.iter().enumerate() {
            let row = &mut state.working.data_mut()[j * k..(j + 1) * k];
            match f.task() {
                TaskKind::Classification { .. } => {
                    row.fill(0.0);
                    row[argmax(pred.row(r))] = 1.0;
                }
                TaskKind::Regression { .. } => row.copy_from_slice(pred.row(r)),
            }
        }
    }
    state.round += 1;
    if let Some(q) = state.quality(ds) {
        state.history.push(q);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{apply_missing, gen_tabular_regression, gen_two_moons, one_hot};
    use crate::models::build_main_model;

    const BINARY: TaskKind = TaskKind::Classification { classes: 2 };

    fn labeled_rows(state: &PseudoState, ds: &SemiDataset) -> Vec<Vec<f64>> {
        ds.labeled_idx().iter().map(|&i| state.working().row(i).to_vec()).collect()
    }

    #[test]
    fn fully_observed_keeps_labels() {
        let ds = gen_two_moons(50, 0.2, 0).unwrap();
        let s = init_pseudo_labels(BINARY, &ds, 1).unwrap();
        assert_eq!(s.working(), &one_hot(ds.labels().classes().unwrap(), 2));
    }

    #[test]
    fn constant_regression_labels_fill_with_mean() {
        let base = gen_tabular_regression(40, 2, 0).unwrap();
        let x = base.x().clone();
        let ds = SemiDataset::new(
            base.task(),
            x,
            Labels::Real(Tensor::column(vec![3.25; 40])),
            (0..40).map(|i| i % 3 == 0).collect(),
        )
        .unwrap();
        let s = init_pseudo_labels(ds.task(), &ds, 5).unwrap();
        assert!(s.working().data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn regression_without_labels_rejected() {
        let base = gen_tabular_regression(5, 2, 0).unwrap();
        let ds = SemiDataset::new(base.task(), base.x().clone(), base.labels().clone(), vec![false; 5]).unwrap();
        assert!(init_pseudo_labels(ds.task(), &ds, 0).is_err());
    }

    #[test]
    fn random_classes_are_balanced() {
        // |U| = 1000 per seed; the binomial std of the class-0 share is
        // about 0.016, so ±0.05 is a 3σ band.
        let ds = apply_missing(&gen_two_moons(1100, 0.2, 0).unwrap(), 1000.0 / 1100.0, 0).unwrap();
        assert_eq!(ds.unlabeled_idx().len(), 1000);
        for seed in 0..10 {
            let s = init_pseudo_labels(BINARY, &ds, seed).unwrap();
            let zeros = ds.unlabeled_idx().iter().filter(|&&j| s.working().get(j, 0) == 1.0).count();
            let share = zeros as f64 / 1000.0;
            assert!((share - 0.5).abs() < 0.05, "seed {seed}: {share}");
        }
    }

    #[test]
    fn refresh_preserves_labeled_rows_and_counts_rounds() {
        let ds = apply_missing(&gen_two_moons(80, 0.2, 1).unwrap(), 0.5, 1).unwrap();
        let f = build_main_model(BINARY, 2, &[8], 3).unwrap();
        let mut s = init_pseudo_labels(BINARY, &ds, 2).unwrap();
        let before = labeled_rows(&s, &ds);
        refresh_pseudo_labels(&f, &mut s, &ds).unwrap();
        refresh_pseudo_labels(&f, &mut s, &ds).unwrap();
        assert_eq!(labeled_rows(&s, &ds), before);
        assert_eq!(s.round(), 2);
        assert_eq!(s.history().len(), 2);
        for &j in &ds.unlabeled_idx() {
            let row = s.working().row(j);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn refresh_with_oracle_model_is_perfect() {
        // A linear model that reads the label straight from a feature.
        let x: Vec<f64> = (0..20).flat_map(|i| [(i % 2) as f64, 1.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let mask = (0..20).map(|i| i < 4).collect();
        let ds = SemiDataset::new(BINARY, Tensor::matrix(20, 2, x).unwrap(), Labels::Class(labels), mask).unwrap();
        let mut f = build_main_model(BINARY, 2, &[], 0).unwrap();
        let w = f.params().id("layer0.weight").unwrap();
        *f.params_mut().value_mut(w) = Tensor::matrix(2, 2, vec![-10.0, 10.0, 5.0, -5.0]).unwrap();
        let mut s = init_pseudo_labels(BINARY, &ds, 0).unwrap();
        refresh_pseudo_labels(&f, &mut s, &ds).unwrap();
        assert_eq!(s.history(), &[1.0]);
    }
}
