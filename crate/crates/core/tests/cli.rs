use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tensorreg::tensor::io::parse_tensor_file;
use tensorreg::TensorGlmModel;

fn tensorreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorreg"))
        .args(args)
        .output()
        .expect("run tensorreg")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn simulate(dir: &Path, family: &str, n: usize, p0: usize) {
    let out = tensorreg(&[
        "simulate", "--shape", "square", "--dims", "8", "--n", &n.to_string(), "--family", family,
        "--p0", &p0.to_string(), "--seed", "7", "--out", path(dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in output:\n{stdout}"))
        .to_string()
}

#[test]
fn simulate_writes_a_consistent_dataset() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "poisson", 40, 2);
    let x = parse_tensor_file(&dir.path().join("x.tnsr")).unwrap();
    assert_eq!(x.len(), 40);
    assert_eq!(x[0].dims(), &[8, 8]);
    let y = fs::read_to_string(dir.path().join("y.csv")).unwrap();
    assert_eq!(y.lines().count(), 41);
    assert!(dir.path().join("z.csv").exists());
    let pgm = fs::read(dir.path().join("truth.pgm")).unwrap();
    assert!(pgm.starts_with(b"P2") || pgm.starts_with(b"P5"));
}

#[test]
fn fit_then_inspect_recomputes_the_same_bic() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    simulate(data.path(), "normal", 300, 1);
    let d = data.path();
    let fit = tensorreg(&[
        "fit", "--tensors", path(&d.join("x.tnsr")), "--response", path(&d.join("y.csv")),
        "--covariates", path(&d.join("z.csv")), "--rank", "1", "--restarts", "2", "--out", path(out.path()),
    ]);
    assert_eq!(fit.status.code(), Some(0), "{}", text(&fit.stderr));
    for f in ["model.json", "trace.csv", "coefficient.pgm"] {
        assert!(out.path().join(f).exists(), "{f} missing");
    }
    let stored: f64 = field(&text(&fit.stdout), "bic").parse().unwrap();

    let inspect = tensorreg(&[
        "inspect", "--model", path(&out.path().join("model.json")), "--tensors", path(&d.join("x.tnsr")),
        "--response", path(&d.join("y.csv")), "--covariates", path(&d.join("z.csv")),
    ]);
    assert_eq!(inspect.status.code(), Some(0), "{}", text(&inspect.stderr));
    let stdout = text(&inspect.stdout);
    let recomputed: f64 = field(&stdout, "recomputed_bic").parse().unwrap();
    assert!((stored - recomputed).abs() <= 1e-9 * stored.abs().max(1.0), "{stored} vs {recomputed}");
    // k1 + k2 >= 2R + 1 cannot hold for matrices since each k-rank is at most R.
    assert_eq!(field(&stdout, "uniqueness_sufficient"), "false");

    let model = TensorGlmModel::load(&out.path().join("model.json")).unwrap();
    assert_eq!(model.rank(), 1);
    assert_eq!(model.gamma.len(), 1);
}

#[test]
fn rank_select_writes_bic_table() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    simulate(data.path(), "normal", 200, 0);
    let d = data.path();
    let run = tensorreg(&[
        "rank-select", "--tensors", path(&d.join("x.tnsr")), "--response", path(&d.join("y.csv")),
        "--max-rank", "2", "--restarts", "1", "--out", path(out.path()),
    ]);
    assert!(matches!(run.status.code(), Some(0) | Some(2)), "{}", text(&run.stderr));
    let table = fs::read_to_string(out.path().join("bic.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("rank,bic,loglik,effective_parameters,converged,error"));
    assert_eq!(lines.count(), 2);
    assert!(text(&run.stdout).contains("selected rank: "));
}

#[test]
fn invalid_arguments_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "normal", 20, 0);
    let d = dir.path();
    let x = d.join("x.tnsr");
    let y = d.join("y.csv");
    let out = d.join("out");

    let zero_rank = tensorreg(&[
        "fit", "--tensors", path(&x), "--response", path(&y), "--rank", "0", "--out", path(&out),
    ]);
    assert_eq!(zero_rank.status.code(), Some(1));

    let bad_family = tensorreg(&[
        "fit", "--tensors", path(&x), "--response", path(&y), "--family", "gamma", "--out", path(&out),
    ]);
    assert_eq!(bad_family.status.code(), Some(1));
    assert!(text(&bad_family.stderr).contains("error"));

    let orphan_rho = tensorreg(&[
        "fit", "--tensors", path(&x), "--response", path(&y), "--rho", "2", "--out", path(&out),
    ]);
    assert_eq!(orphan_rho.status.code(), Some(1));

    let bad_shape = tensorreg(&["simulate", "--shape", "hexagon", "--n", "5", "--out", path(&out)]);
    assert_eq!(bad_shape.status.code(), Some(1));

    let missing = tensorreg(&["inspect", "--model", path(&d.join("absent.json"))]);
    assert_eq!(missing.status.code(), Some(1));

    assert_eq!(tensorreg(&["--help"]).status.code(), Some(0));
    assert_eq!(tensorreg(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn mismatched_or_corrupt_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "normal", 20, 0);
    let d = dir.path();
    let out = d.join("out");

    fs::write(d.join("short.csv"), "y\n1.0\n2.0\n").unwrap();
    let mismatch = tensorreg(&[
        "fit", "--tensors", path(&d.join("x.tnsr")), "--response", path(&d.join("short.csv")), "--out", path(&out),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(text(&mismatch.stderr).contains("responses"));

    let bytes = fs::read(d.join("x.tnsr")).unwrap();
    fs::write(d.join("cut.tnsr"), &bytes[..bytes.len() / 2]).unwrap();
    let truncated = tensorreg(&[
        "fit", "--tensors", path(&d.join("cut.tnsr")), "--response", path(&d.join("y.csv")), "--out", path(&out),
    ]);
    assert_eq!(truncated.status.code(), Some(1));

    fs::write(d.join("junk.tnsr"), b"not a tensor file").unwrap();
    let junk = tensorreg(&[
        "fit", "--tensors", path(&d.join("junk.tnsr")), "--response", path(&d.join("y.csv")), "--out", path(&out),
    ]);
    assert_eq!(junk.status.code(), Some(1));
    assert!(!out.join("model.json").exists());
}

#[test]
fn iteration_cap_exits_with_not_converged_and_keeps_the_model() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    simulate(data.path(), "normal", 200, 0);
    let d = data.path();
    let run = tensorreg(&[
        "fit", "--tensors", path(&d.join("x.tnsr")), "--response", path(&d.join("y.csv")), "--rank", "2",
        "--max-iters", "1", "--epsilon", "1e-14", "--restarts", "1", "--out", path(out.path()),
    ]);
    assert_eq!(run.status.code(), Some(2), "{}", text(&run.stderr));
    assert!(out.path().join("model.json").exists());
    assert_eq!(field(&text(&run.stdout), "converged"), "false");
}
