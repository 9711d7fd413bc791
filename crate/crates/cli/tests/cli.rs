use std::path::Path;
use std::process::{Command, Output};

use sslab::metrics::Method;
use sslab_harness::commands::{cmd_compare, cmd_dump_discriminator, cmd_sweep, Axis};
use sslab_harness::output::METRIC_COLUMNS;
use sslab_harness::ExperimentSpec;

fn sslab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sslab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run sslab")
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

fn small(out: &Path) -> ExperimentSpec {
    ExperimentSpec {
        n: 120,
        n_test: 100,
        epochs: 4,
        seeds: vec![0, 1],
        no_timing: true,
        out: out.to_path_buf(),
        ..ExperimentSpec::default()
    }
}

#[test]
fn one_epoch_one_seed_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = sslab(&["train", "--epochs", "1", "--seeds", "0", "--n", "80"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), METRIC_COLUMNS);
    assert_eq!(r.records().count(), 1);
    assert!(dir.path().join("models/flexssl-s0.json").exists());
    assert!(dir.path().join("models/flexssl-s0.discriminator.json").exists());
}

#[test]
fn loss_b_only_for_flexssl() {
    let dir = tempfile::tempdir().unwrap();
    let o = sslab(&["train", "--epochs", "2", "--n", "80", "--method", "supervised,flexssl"], dir.path());
    assert!(o.status.success());
    for row in read_rows(&dir.path().join("metrics.csv")) {
        match &row[1] {
            "supervised" => assert_eq!(&row[5], ""),
            "flexssl" => assert!(row[5].parse::<f64>().is_ok()),
            other => panic!("unexpected method {other}"),
        }
    }
}

#[test]
fn spec_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"epochs": 3, "seeds": [7]}"#).unwrap();
    let o = sslab(&["train", "--epochs", "9", "--n", "80", "--spec", spec.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let rows = read_rows(&dir.path().join("metrics.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "flexssl-s7");
}

#[test]
fn bad_requests_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"epochs": 3, "learning_rate": 0.1}"#).unwrap();
    for args in [
        vec!["train", "--spec", spec.to_str().unwrap()],
        vec!["train", "--missing-rate", "1.0"],
        vec!["train", "--variant", "hinge"],
        vec!["sweep", "--axis", "alpha", "--values", "0.5,1.2"],
        vec!["sweep", "--axis", "tau", "--values", "0.5"],
        vec!["dump-discriminator", "--epochs", "2", "--snapshots", "3"],
    ] {
        let o = sslab(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn divergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = sslab(&["train", "--dataset", "tabular", "--n", "100", "--lr-f", "1e100", "--epochs", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch 1"));
}

#[test]
fn duplicate_methods_give_identical_summary_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        methods: vec![Method::Flexssl, Method::Supervised, Method::Flexssl],
        ..small(dir.path())
    };
    let c = cmd_compare(&spec).unwrap();
    assert_eq!(c.summary.len(), 3);
    assert_eq!(c.summary[0], c.summary[2]);
    assert!(c.summary.iter().all(|r| r.n == 2 && r.std.is_some()));
    assert!(c.summary.iter().any(|r| r.win));
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(text.contains("\"win\""));
}

#[test]
fn sweep_covers_every_value_method_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small(dir.path());
    let values = [0.3, 0.6];
    let s = cmd_sweep(&spec, Axis::MissingRate, &values).unwrap();
    assert_eq!(s.points.len(), 2);
    let rows = read_rows(&dir.path().join("sweep.csv"));
    let mut triples: Vec<(String, String, String)> = rows.iter().map(|r| (r[1].to_string(), r[3].to_string(), r[4].to_string())).collect();
    triples.dedup();
    assert_eq!(triples.len(), values.len() * 3 * 2);
    assert_eq!(rows.len(), values.len() * 3 * 2 * spec.epochs);
}

#[test]
fn single_value_sweep_matches_compare() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small(dir.path());
    let sweep = cmd_sweep(&spec, Axis::Alpha, &[spec.alpha]).unwrap();
    let cmp = cmd_compare(&spec).unwrap();
    assert_eq!(sweep.points[0].methods, cmp.summary);
}

#[test]
fn dump_histograms_cover_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        noise_rate: 0.2,
        seeds: vec![2],
        ..small(dir.path())
    };
    let snaps = cmd_dump_discriminator(&spec, &[4, 0]).unwrap();
    assert_eq!(snaps.iter().map(|s| s.epoch).collect::<Vec<_>>(), vec![0, 4]);
    for s in &snaps {
        assert_eq!(s.counts.iter().sum::<usize>(), spec.n);
        assert_eq!(s.counts.len(), 20);
        assert_eq!(s.bin_edges.first(), Some(&0.0));
        assert_eq!(s.bin_edges.last(), Some(&1.0));
    }
    // Untrained d barely separates anything.
    let first = &snaps[0];
    let gap = first.mean_p_labeled.unwrap() - first.mean_p_noisy.unwrap();
    assert!(gap.abs() < 0.1, "{gap}");
    let rows = read_rows(&dir.path().join("discriminator/s2_e4.csv"));
    assert_eq!(rows.len(), spec.n);
    assert!(dir.path().join("discriminator/s2_e0.json").exists());
}
