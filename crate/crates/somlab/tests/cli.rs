mod common;

use std::path::Path;
use std::process::{Command, Output};

use somlab::formats::{FeatureDump, LabelTable};
use somlab::ExperimentConfig;
use tempfile::tempdir;

fn somlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = somlab(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn presets_and_show_config() {
    let listed = ok(&["presets"]);
    assert!(listed.lines().any(|l| l == "snn-desk"));
    let shown = ok(&["show-config", "--preset", "raw-desk", "--seed", "9", "--reps", "3"]);
    let cfg = ExperimentConfig::from_json(&shown).unwrap();
    assert_eq!((cfg.seed, cfg.repetitions), (9, 3));

    assert!(!somlab(&["show-config", "--preset", "nope"]).status.success());
    assert!(!somlab(&["show-config"]).status.success());
    assert!(!somlab(&["show-config", "--preset", "smoke", "--reps", "0"]).status.success());
}

#[test]
fn full_workflow_on_synthetic_data() {
    let data = tempdir().unwrap();
    common::write_mnist(data.path(), 200, 60);
    let work = tempdir().unwrap();
    let w = |name: &str| work.path().join(name);
    std::fs::write(w("cfg.json"), common::tiny_config(data.path()).to_json()).unwrap();
    let cfg = s(&w("cfg.json")).to_owned();

    let run = ok(&["run", "--config", &cfg, "--out", s(&w("run"))]);
    assert!(run.contains("accuracy"), "{run}");
    assert!(w("run/report.json").is_file());
    assert!(w("run/grids/rep-01.somg").is_file());

    let sweep = ok(&["sweep", "--config", &cfg, "--axis", "som-neurons", "--values", "4,9", "--out", s(&w("sweep"))]);
    assert_eq!(sweep.lines().count(), 3, "{sweep}");
    assert!(w("sweep/sweep.csv").is_file());
    let empty = ok(&["sweep", "--config", &cfg, "--axis", "som_neurons", "--values"]);
    assert!(empty.lines().count() <= 1, "{empty}");
    assert!(!somlab(&["sweep", "--config", &cfg, "--axis", "colour", "--values", "1"]).status.success());

    ok(&["dump-features", "--config", &cfg, "--out", s(&w("feat"))]);
    let train = FeatureDump::load(&w("feat/train.feat")).unwrap();
    assert_eq!((train.features.len(), train.features.dim()), (200, 784));
    assert_eq!(train.metadata.extractor, "raw");

    ok(&[
        "label",
        "--grid",
        s(&w("run/grids/rep-00.somg")),
        "--features",
        s(&w("feat/train.feat")),
        "--fraction",
        "0.5",
        "--seed",
        "3",
        "--stratified",
        "--out",
        s(&w("labels.json")),
    ]);
    let table = LabelTable::load(&w("labels.json")).unwrap();
    assert_eq!((table.neurons, table.subset_seed), (16, 3));

    let eval = ok(&[
        "eval",
        "--grid",
        s(&w("run/grids/rep-00.somg")),
        "--labels",
        s(&w("labels.json")),
        "--features",
        s(&w("feat/test.feat")),
        "--out",
        s(&w("eval.json")),
    ]);
    assert!(eval.contains("on 60 samples"), "{eval}");
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w("eval.json")).unwrap()).unwrap();
    let acc = body["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    std::fs::write(
        w("grid.json"),
        r#"{"grid": {"eps_initial": [1.0], "eps_final": [0.01], "sigma_initial": [2.0, 4.0],
                     "sigma_final": [0.01], "alpha": [1.0], "epochs": [3]}}"#,
    )
    .unwrap();
    let search = ok(&["grid-search", "--config", &cfg, "--grid", s(&w("grid.json")), "--out", s(&w("search"))]);
    assert!(search.contains("best"), "{search}");
    assert!(w("search/grid_search.csv").is_file());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let work = tempdir().unwrap();
    let mut cfg = common::tiny_config(work.path());
    cfg.data.mnist_dir = Some(work.path().join("absent"));
    let path = work.path().join("cfg.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = somlab(&["run", "--config", s(&path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent"));

    let out = somlab(&["eval", "--grid", "missing.somg", "--labels", "x.json", "--features", "y.feat"]);
    assert!(!out.status.success());
}
