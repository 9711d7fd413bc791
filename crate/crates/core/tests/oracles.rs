use rand::Rng as _;

use sslab::autodiff::Tensor;
use sslab::baselines::{train_supervised, TrainConfig};
use sslab::datasets::{apply_missing, gen_two_moons, Labels, TabularProblem};
use sslab::game::{soft_weights, LossVariant};
use sslab::metrics::evaluate;
use sslab::models::{build_main_model, Architecture};
use sslab::rng;

/// Table of soft-labeling weights written out case by case.
fn reference_weight(variant: &str, p: f64, observed: bool, alpha: f64) -> f64 {
    const H: f64 = 10.0;
    match (variant, observed) {
        ("bce", true) => 1.0 + alpha * f64::min(1.0 / p, H),
        ("bce", false) => 1.0 - alpha * f64::min(1.0 / (1.0 - p), H),
        ("exp", true) => 1.0 + alpha * (-p).exp(),
        ("exp", false) => 1.0 - alpha * p.exp(),
        ("logistic", true) => 1.0 + alpha * (-p).exp() / (1.0 + (-p).exp()),
        ("logistic", false) => 1.0 - alpha * p.exp() / (1.0 + p.exp()),
        _ => unreachable!(),
    }
}

#[test]
fn weights_match_reference_table() {
    let mut r = rng::rng(2024);
    for variant in [LossVariant::Bce, LossVariant::Exp, LossVariant::Logistic] {
        let n = 10_000;
        let p: Vec<f64> = (0..n).map(|_| r.random_range(1e-9..1.0 - 1e-9)).collect();
        let mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        // One α per call, so sweep α in chunks of 100 samples.
        for chunk in 0..100 {
            let alpha = r.random_range(1e-6..=1.0);
            let s = chunk * 100..(chunk + 1) * 100;
            let w = soft_weights(variant, &p[s.clone()], &mask[s.clone()], alpha, 10.0).unwrap();
            for (k, i) in s.enumerate() {
                let want = reference_weight(variant.as_str(), p[i], mask[i], alpha);
                assert!((w.0[k] - want).abs() <= 1e-12, "{variant} p={} alpha={alpha}", p[i]);
                if variant == LossVariant::Bce {
                    assert!(w.0[k] <= 1.0 + alpha * 10.0 && w.0[k] >= 1.0 - alpha * 10.0);
                }
            }
        }
    }
}

#[test]
fn untrained_model_is_near_chance() {
    // 1000 test points: binomial std of accuracy at 0.5 is ~0.016, but a
    // random net is a fixed classifier whose accuracy varies per seed, so
    // the per-seed band is wide and the average is checked tightly.
    let test = gen_two_moons(1000, 0.2, 1234).unwrap();
    let accs: Vec<f64> = (0..20)
        .map(|seed| {
            let f = build_main_model(test.task(), 2, &[32, 32], seed).unwrap();
            evaluate(&f, &test).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.1, "mean untrained accuracy {mean}");
}

#[test]
fn supervised_on_full_labels_separates_moons() {
    let ds = gen_two_moons(1000, 0.2, 0).unwrap();
    let test = gen_two_moons(1000, 0.2, 500).unwrap();
    let r = train_supervised(&TrainConfig::default(), &Architecture::default(), &ds, Some(&test)).unwrap();
    let acc = r.final_test_metric().unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}

/// Solves the normal equations `XᵀX w = Xᵀy` by Gaussian elimination.
fn ols(x: &Tensor, y: &[f64]) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut a = vec![vec![0.0; d + 1]; d];
    for i in 0..n {
        let row = x.row(i);
        for r in 0..d {
            for c in 0..d {
                a[r][c] += row[r] * row[c];
            }
            a[r][d] += row[r] * y[i];
        }
    }
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..d).map(|r| a[r][d] / a[r][r]).collect()
}

#[test]
fn least_squares_recovers_linear_weights() {
    let mut prob = TabularProblem::new(5, 3).unwrap();
    prob.noise_std = 0.0;
    prob.nonlinear = false;
    let ds = prob.sample(200, 3).unwrap();
    let Labels::Real(y) = ds.labels() else { panic!("regression labels expected") };
    let w = ols(ds.x(), y.data());
    for (a, b) in w.iter().zip(&prob.w) {
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
    }
}

/// Pearson χ² on the 2×2 table (class × observed), 1 degree of freedom.
fn chi_square(classes: &[usize], mask: &[bool]) -> f64 {
    let mut t = [[0.0f64; 2]; 2];
    for (&c, &m) in classes.iter().zip(mask) {
        t[c][m as usize] += 1.0;
    }
    let n: f64 = t.iter().flatten().sum();
    let mut s = 0.0;
    for (i, row) in t.iter().enumerate() {
        for j in 0..2 {
            let e = row.iter().sum::<f64>() * (t[0][j] + t[1][j]) / n;
            s += (t[i][j] - e).powi(2) / e;
        }
    }
    s
}

#[test]
fn mask_is_independent_of_class() {
    // 3.841 is the 95% point of χ²(1). Under independence about 2.5 of 50
    // seeds exceed it; more than 10 would be a clear sign of dependence.
    let exceed = (0..50u64)
        .filter(|&seed| {
            let ds = apply_missing(&gen_two_moons(400, 0.2, seed).unwrap(), 0.6, seed).unwrap();
            chi_square(ds.labels().classes().unwrap(), ds.mask()) > 3.841
        })
        .count();
    assert!(exceed <= 10, "{exceed} of 50 seeds reject independence");
}
