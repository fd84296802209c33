use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlfht::data::{format_dataset, sample_discrete, Sample};
use mlfht::experiments::make_toy;
use mlfht::RandomSource;
use rand::Rng;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mlfht"));
    c.env_remove("MLFHT_WORKERS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn mlfht")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in output:\n{out}"))
}

fn write(dir: &Path, name: &str, s: &Sample) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format_dataset(s)).unwrap();
    p
}

fn real_file(dir: &Path, name: &str, n: usize, lo: f64, hi: f64, seed: u64) -> PathBuf {
    let mut g = RandomSource::new(seed).rng();
    let s = Sample::scalars((0..n).map(|_| g.random_range(lo..hi)).collect()).unwrap();
    write(dir, name, &s)
}

#[test]
fn bounds_table_for_identity_kernel() {
    let dir = TempDir::new().unwrap();
    let o = run(&["bounds", "--k", "100", "--epsilon", "0.06", "--c", "1.3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(value(&out, "lambda_sup"), "0.01");
    assert_eq!(value(&out, "lambda_l2"), "0.1");
    let up: f64 = value(&out, "upper_min_n_sqrt_nm").parse().unwrap();
    assert!((up - 108.2).abs() < 0.1, "{up}");
    assert!(out.lines().next().unwrap().contains("order-of-magnitude"));
    // No randomness involved: identical output on a second run.
    assert_eq!(stdout(&run(&["bounds", "--k", "100", "--epsilon", "0.06", "--c", "1.3"], dir.path())), out);
}

#[test]
fn bounds_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let o = run(&["bounds", "--k", "100", "--epsilon", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let o = run(&["bounds", "--kernel-kind", "gaussian", "--sigma", "1", "--epsilon", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--support"));
}

#[test]
fn spectrum_lists_eigenvalues() {
    let dir = TempDir::new().unwrap();
    let o = run(&["spectrum", "--k", "5"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "j,lambda");
    assert_eq!(lines.len(), 6);
    for l in &lines[1..] {
        let lam: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((lam - 0.2).abs() < 1e-12);
    }
}

#[test]
fn sweep_output_does_not_depend_on_workers() {
    let dir = TempDir::new().unwrap();
    let args = |g: &str, c: &str| {
        vec![
            "sweep".to_string(),
            "--m-grid=25,100,400".into(),
            "--n-grid=25,100,400".into(),
            "--trials=200".into(),
            "--seed=9".into(),
            format!("--grid-out={g}"),
            format!("--contour-out={c}"),
        ]
    };
    let one = bin()
        .args(args("g1.csv", "c1.csv"))
        .arg("--workers=1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    let many = bin()
        .args(args("g8.csv", "c8.csv"))
        .env("MLFHT_WORKERS", "8")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(many.status.success());
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("g1.csv"), read("g8.csv"));
    assert_eq!(read("c1.csv"), read("c8.csv"));
    assert!(String::from_utf8(read("g1.csv")).unwrap().starts_with("m,n,trials,type1,type2,total,se\n"));
    assert!(stdout(&one).starts_with("# mlfht sweep seed=9"));
}

#[test]
fn default_sizes_sweep_has_a_contour() {
    let dir = TempDir::new().unwrap();
    let o = run(&["sweep", "--trials", "100", "--seed", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pts: usize = value(&stdout(&o), "contour_points").parse().unwrap();
    assert!(pts > 0);
    let contour = fs::read_to_string(dir.path().join("contour.csv")).unwrap();
    assert!(contour.starts_with("m,n_at_level\n"));
}

#[test]
fn sweep_rejects_zero_trials() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["sweep", "--trials", "0"], dir.path()).status.code(), Some(1));
    fs::write(dir.path().join("c.toml"), "[experiment]\ntrials = 0\n").unwrap();
    let o = run(&["--config", "c.toml", "sweep"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}

#[test]
fn config_rejects_unknown_keys_and_flags_override() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.toml"), "[bounds]\nepsilonn = 0.1\n").unwrap();
    let o = run(&["--config", "bad.toml", "bounds", "--k", "4", "--epsilon", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    fs::write(dir.path().join("ok.toml"), "[kernel]\nk = 100\n[bounds]\nepsilon = 0.5\n").unwrap();
    let o = run(&["--config", "ok.toml", "bounds", "--epsilon", "0.004"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(value(&out, "epsilon"), "0.004");
    assert_eq!(value(&out, "jstar"), "100");
}

#[test]
fn missing_file_is_an_io_error_without_output() {
    let dir = TempDir::new().unwrap();
    let o = run(&["test", "--x", "absent.txt", "--y", "absent.txt", "--z", "absent.txt"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn toy_alternative_is_detected() {
    let dir = TempDir::new().unwrap();
    let toy = make_toy(100, 0.3).unwrap();
    let d = dir.path();
    let (mut rejects, mut small_p) = (0, 0);
    let runs = 20;
    for seed in 0..runs {
        let src = RandomSource::new(1000 + seed);
        // 2000 evaluation points per class followed by 2000 calibration points.
        write(d, "x.txt", &sample_discrete(&toy.px, 4000, &src.fork(&[0])).unwrap());
        write(d, "y.txt", &sample_discrete(&toy.py, 4000, &src.fork(&[1])).unwrap());
        write(d, "z.txt", &sample_discrete(&toy.py, 2000, &src.fork(&[2])).unwrap());
        let o = run(
            &["test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--n-ev", "2000", "--k-cal", "200", "--seed", &seed.to_string()],
            d,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        assert!(out.starts_with(&format!("# mlfht test seed={seed}")));
        rejects += usize::from(value(&out, "decision") == "reject");
        small_p += usize::from(value(&out, "p_value").parse::<f64>().unwrap() < 0.05);
    }
    assert!(rejects * 100 >= 95 * runs as usize, "{rejects}/{runs} rejections");
    assert!(small_p * 100 >= 95 * runs as usize, "{small_p}/{runs} small p-values");
}

#[test]
fn null_run_reports_a_complete_result_and_caches_the_table() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    real_file(d, "x.txt", 600, 0.0, 1.0, 1);
    real_file(d, "y.txt", 600, 0.2, 1.2, 2);
    real_file(d, "z.txt", 40, 0.0, 1.0, 3);
    let o = run(
        &[
            "test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--n-ev", "200", "--n-opt", "100", "--k-cal", "300",
            "--significance", "--cache", "t.txt",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for key in ["statistic", "threshold", "decision", "p_value", "p_value_smoothed", "significance_gaussian", "significance_binomial"] {
        value(&out, key);
    }
    let p: f64 = value(&out, "p_value").parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let stat = value(&out, "statistic").to_string();
    let o = run(&["pvalue", "--table", "t.txt", "--statistic", &stat], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "p_value"), value(&out, "p_value"));
    // Recomputing the statistic from the data gives the same answer.
    let o = run(&["pvalue", "--table", "t.txt", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--n-ev", "200"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "p_value"), value(&out, "p_value"));
}

#[test]
fn oversized_split_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    real_file(d, "x.txt", 100, 0.0, 1.0, 1);
    real_file(d, "y.txt", 100, 0.5, 1.5, 2);
    real_file(d, "z.txt", 10, 0.0, 1.0, 3);
    let o = run(&["test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--n-ev", "100", "--k-cal", "10"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    // Fewer calibration points than observations cannot be subsampled.
    let o = run(&["test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--n-ev", "95", "--k-cal", "10"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn training_is_deterministic_and_honours_patience() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    real_file(d, "x.txt", 300, 0.0, 1.0, 4);
    real_file(d, "y.txt", 300, 0.8, 1.8, 5);
    let train = |out: &str, extra: &[&str]| {
        let mut args = vec!["train", "--x", "x.txt", "--y", "y.txt", "--arch", "deep_g", "--hidden", "6", "--feature-dim", "3"];
        args.extend_from_slice(&["--max-epochs", "4", "--batch-size", "32", "--seed", "11", "--out", out]);
        args.extend_from_slice(extra);
        let o = run(&args, d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    train("k1.txt", &[]);
    train("k2.txt", &[]);
    assert_eq!(fs::read(d.join("k1.txt")).unwrap(), fs::read(d.join("k2.txt")).unwrap());
    let out = train("k3.txt", &["--patience", "0", "--report", "r.csv"]);
    assert_eq!(value(&out, "epochs_run"), "1");
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "{report}");
    assert!(report.starts_with("epoch,train_objective,val_objective\n"));
    // The written kernel is usable by `test`.
    real_file(d, "z.txt", 20, 0.8, 1.8, 6);
    let o = run(&["test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--kernel", "k1.txt", "--n-ev", "100", "--k-cal", "50"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "kernel"), "deep_g");
}

#[test]
fn training_rejects_single_class_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    real_file(d, "x.txt", 100, 0.0, 1.0, 4);
    let o = run(&["train", "--x", "x.txt", "--y", "x.txt", "--arch", "deep_o"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("identical"));
    assert!(!d.join("kernel.txt").exists());
}

#[test]
fn kernel_block_configures_training_and_testing() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    real_file(d, "x.txt", 200, 0.0, 1.0, 4);
    real_file(d, "y.txt", 200, 0.5, 1.5, 5);
    real_file(d, "z.txt", 20, 0.5, 1.5, 6);
    fs::write(d.join("c.toml"), "[kernel]\ntype = \"gaussian\"\nnormalized = true\nlayers = [4]\ntau = 0.25\n").unwrap();
    let o = run(&["--config", "c.toml", "train", "--x", "x.txt", "--y", "y.txt", "--arch", "deep_m", "--max-epochs", "1"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "arch"), "deep_m");
    let o = run(&["--config", "c.toml", "test", "--x", "x.txt", "--y", "y.txt", "--z", "z.txt", "--k-cal", "20"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "kernel"), "gaussian");
}
