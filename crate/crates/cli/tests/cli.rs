use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gca::{save_dataset, Graph};
use ndarray::Array2;

fn gca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gca"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Three labelled rings of 100 nodes joined by a few bridges; features are the
/// one-hot labels.
fn toy_dataset(dir: &Path) -> PathBuf {
    let (n, classes) = (300, 3);
    let labels: Vec<usize> = (0..n).map(|i| i / 100).collect();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i / 100) * 100 + (i + 1) % 100)).collect();
    edges.extend([(0, 100), (100, 200), (200, 0), (5, 127)]);
    let features = Array2::from_shape_fn((n, classes), |(i, c)| f32::from(u8::from(labels[i] == c)));
    let graph = Graph::from_edges(n, &edges, false, features, Some(labels), Some(classes)).unwrap();
    let path = dir.join("toy");
    save_dataset(&path, &graph, None).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_documents_every_flag() {
    let out = ok(gca(&["--help"]));
    for cmd in ["train", "eval", "centrality", "sweep", "augment-stats", "verify"] {
        assert!(stdout(&out).contains(cmd), "{cmd} missing from help");
    }
    let train = stdout(&ok(gca(&["train", "--help"])));
    for flag in ["--config", "--dataset", "--out", "--seed", "--measure", "--variant"] {
        assert!(train.contains(flag), "{flag} missing from train help");
    }
    let eval = stdout(&ok(gca(&["eval", "--help"])));
    assert!(eval.contains("--runs") && eval.contains("[default: 20]"));
    assert!(stdout(&ok(gca(&["sweep", "--help"]))).contains("--grid"));
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-dataset");
    let out_dir = dir.path().join("out");
    let out = gca(&["train", "--dataset", path_str(&missing), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(path_str(&missing)));
}

#[test]
fn unknown_measure_exits_2() {
    let out = gca(&["centrality", "--dataset", "x", "--measure", "closeness", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let out = gca(&["train", "--dataset", "x", "--out", "y", "--variant", "gca-x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn karate_centrality_exports_78_edges() {
    let dir = tempfile::tempdir().unwrap();
    let karate = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/karate");
    for measure in ["degree", "eigenvector", "pagerank"] {
        let out_dir = dir.path().join(measure);
        ok(gca(&["centrality", "--dataset", path_str(&karate), "--measure", measure, "--out", path_str(&out_dir)]));
        let edges = std::fs::read_to_string(out_dir.join("edges.tsv")).unwrap();
        assert_eq!(edges.lines().count(), 79);
        let nodes = std::fs::read_to_string(out_dir.join("nodes.tsv")).unwrap();
        assert_eq!(nodes.lines().next(), Some("node_id\tscore"));
        assert_eq!(nodes.lines().count(), 35);
    }
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(dir.path());
    let model = dir.path().join("model");
    ok(gca(&[
        "train", "--dataset", path_str(&data), "--out", path_str(&model),
        "--epochs", "5", "--hidden-dim", "8", "--seed", "3", "--variant", "gca-t-a",
    ]));
    let losses = std::fs::read_to_string(model.join("loss.csv")).unwrap();
    assert_eq!(losses.lines().next(), Some("epoch,loss"));
    assert_eq!(losses.lines().count(), 6);
    let config = std::fs::read_to_string(model.join("config.txt")).unwrap();
    assert!(config.contains("adaptive_topology = false") && config.contains("seed = 3"));

    let ckpt = model.join("model.ckpt");
    let out = stdout(&ok(gca(&["eval", "--dataset", path_str(&data), "--checkpoint", path_str(&ckpt), "--runs", "3"])));
    assert_eq!(out.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 3);
    assert!(out.contains("over 3 runs"));

    let retrained_config = dir.path().join("retrain.txt");
    std::fs::write(&retrained_config, "epochs = 3\nhidden_dim = 8\n").unwrap();
    let out = stdout(&ok(gca(&[
        "eval", "--dataset", path_str(&data), "--retrain", "--config", path_str(&retrained_config), "--runs", "2",
    ])));
    assert!(out.contains("over 2 runs"));
}

#[test]
fn one_hot_label_features_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(dir.path());
    let tsv = dir.path().join("probe.tsv");
    let out = stdout(&ok(gca(&["eval", "--dataset", path_str(&data), "--raw-features", "--out", path_str(&tsv)])));
    assert!(out.contains("accuracy 1.0000 ± 0.0000 over 20 runs"), "{out}");
    let table = std::fs::read_to_string(tsv).unwrap();
    assert_eq!(table.lines().next(), Some("run\tseed\tl2\taccuracy"));
    assert_eq!(table.lines().count(), 22);
}

#[test]
fn sweep_fills_a_three_by_three_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(dir.path());
    let out = stdout(&ok(gca(&[
        "sweep", "--dataset", path_str(&data), "--grid", "0.1:0.9:0.4", "--epochs", "3",
        "--hidden-dim", "8", "--runs", "2",
    ])));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "p_e\\p_f\t0.1\t0.5\t0.9");
    let cells: Vec<f64> = lines[1..]
        .iter()
        .flat_map(|l| l.split('\t').skip(1).map(|c| c.parse::<f64>().unwrap()))
        .collect();
    assert_eq!(cells.len(), 9);
    assert!(cells.iter().all(|a| (0.0..=1.0).contains(a)));
    assert_eq!(gca(&["sweep", "--dataset", path_str(&data), "--grid", "0.1:1.5:0.4"]).status.code(), Some(2));
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(dir.path());
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        ok(gca(&[
            "train", "--dataset", path_str(&data), "--out", path_str(&out_dir), "--epochs", "4",
            "--hidden-dim", "8", "--seed", seed, "--measure", "pagerank",
        ]));
        (
            std::fs::read(out_dir.join("model.ckpt")).unwrap(),
            std::fs::read_to_string(out_dir.join("loss.csv")).unwrap(),
        )
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    assert_ne!(a.1, run("c", "12").1);

    let ckpt = dir.path().join("a/model.ckpt");
    let eval = |seed: &str| stdout(&ok(gca(&["eval", "--dataset", path_str(&data), "--checkpoint", path_str(&ckpt), "--runs", "4", "--seed", seed])));
    assert_eq!(eval("5"), eval("5"));

    let stats = |seed: &str| stdout(&ok(gca(&["augment-stats", "--dataset", path_str(&data), "--samples", "50", "--seed", seed])));
    assert_eq!(stats("1"), stats("1"));
    assert_eq!(stats("1").lines().count(), 305);
}

#[test]
fn verify_passes() {
    let out = stdout(&ok(gca(&["verify"])));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
