use ppgmm::metrics::ComparisonDocument;
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const FAST: &str = "seed = 3\ninput = \"data.csv\"\nmc_samples = 20000\n[gmm]\ng_max = 4\n[ga]\npop_size = 30\nmax_iter = 40\nrun_stall = 20\n";

fn ppgmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppgmm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ppgmm(dir, args);
    assert!(
        out.status.success(),
        "ppgmm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

fn json(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&read(dir, file)).unwrap()
}

fn numeric_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split(',').map(|c| c.parse().ok()).collect::<Option<Vec<f64>>>())
        .collect()
}

/// Triangle data and a fitted model in a fresh directory.
fn fitted(g_max: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), FAST).unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "triangle", "--n", "300", "--p", "5", "--seed", "3", "--out", "data.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "fit",
            "--config",
            "run.toml",
            "--g-max",
            &g_max.to_string(),
            "--out-dir",
            "fit",
        ],
    );
    dir
}

#[test]
fn simulated_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "triangle", "--n", "500", "--p", "10", "--seed", "1", "--out", "t.csv",
        ],
    );
    ok(
        dir.path(),
        &["simulate", "waveform", "--n", "400", "--seed", "1", "--out", "w.csv"],
    );
    for (file, rows, cols) in [("t.csv", 500, 11), ("w.csv", 400, 22)] {
        let text = read(dir.path(), file);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), rows + 1);
        assert!(lines[0].ends_with(",class"));
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
    }
}

#[test]
fn simulate_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.csv", "b.csv"] {
        ok(
            dir.path(),
            &["simulate", "waveform", "--n", "50", "--seed", "9", "--out", out],
        );
    }
    assert_eq!(read(dir.path(), "a.csv"), read(dir.path(), "b.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ppgmm(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(ppgmm(dir.path(), &["fit", "--bogus"]).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    // no seed
    assert_eq!(ppgmm(dir.path(), &["fit", "--input", "bad.csv"]).status.code(), Some(1));
    // malformed data
    assert_eq!(
        ppgmm(dir.path(), &["fit", "--input", "bad.csv", "--seed", "1"])
            .status
            .code(),
        Some(2)
    );
    // missing file
    assert_eq!(
        ppgmm(dir.path(), &["fit", "--input", "none.csv", "--seed", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn fit_report_bic_is_auditable() {
    let dir = fitted(4);
    let report = json(dir.path(), "fit/fit_report.json");
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 3);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let n = report["n"].as_f64().unwrap();
    let table = report["table"].as_array().unwrap();
    assert_eq!(table.len(), 4 * 6);
    for row in table.iter().filter(|r| r["error"].is_null()) {
        let (ll, k, bic) = (
            row["loglik"].as_f64().unwrap(),
            row["n_params"].as_f64().unwrap(),
            row["bic"].as_f64().unwrap(),
        );
        assert!((bic - (2.0 * ll - k * n.ln())).abs() <= 1e-9 * bic.abs());
    }
    assert_eq!(report["best"]["g"], 3);
    let model = json(dir.path(), "fit/model.json");
    assert_eq!(model["preprocessing"]["mode"], "center");
    assert_eq!(model["feature_names"].as_array().unwrap().len(), 5);
}

#[test]
fn diagonal_only_search_on_tall_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "triangle", "--n", "40", "--p", "60", "--seed", "2", "--out", "tall.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "fit",
            "--input",
            "tall.csv",
            "--seed",
            "2",
            "--g-max",
            "3",
            "--models",
            "EII,VII,EEI,VVI",
            "--preprocess",
            "center_scale",
            "--out-dir",
            "fit",
        ],
    );
    let report = json(dir.path(), "fit/fit_report.json");
    let models: Vec<&str> = report["table"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["model"].as_str().unwrap())
        .collect();
    assert!(models.iter().all(|m| ["EII", "VII", "EEI", "VVI"].contains(m)));
}

#[test]
fn pursue_outputs_are_consistent() {
    let dir = fitted(4);
    let d = dir.path();
    ok(
        d,
        &[
            "pursue",
            "--config",
            "run.toml",
            "--model",
            "fit/model.json",
            "--out-dir",
            "pp",
        ],
    );

    let basis = numeric_rows(&read(d, "pp/basis.csv"));
    assert!(read(d, "pp/basis.csv").starts_with("# features: x1,x2,x3,x4,x5\n"));
    assert_eq!((basis.len(), basis[0].len()), (5, 2));
    for a in 0..2 {
        for b in 0..2 {
            let dot: f64 = basis.iter().map(|r| r[a] * r[b]).sum();
            assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }

    // recompute centring and projection from the raw input
    let raw: Vec<Vec<f64>> = read(d, "data.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(5).map(|c| c.parse().unwrap()).collect())
        .collect();
    let n = raw.len() as f64;
    let means: Vec<f64> = (0..5).map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let projected = read(d, "pp/projected.csv");
    assert!(projected.starts_with("z1,z2,class\n"));
    let z = numeric_rows(&projected);
    assert_eq!(z.len(), raw.len());
    for (row, zr) in raw.iter().zip(&z) {
        for k in 0..2 {
            let expected: f64 = (0..5).map(|j| (row[j] - means[j]) * basis[j][k]).sum();
            assert!((expected - zr[k]).abs() < 1e-10);
        }
    }

    let result = json(d, "pp/result.json");
    assert_eq!(result["schema_version"], 1);
    let trace = result["fitness_trace"].as_array().unwrap();
    assert_eq!(trace.last().unwrap().as_f64(), result["best_fitness"].as_f64());
    assert!(read(d, "pp/trace.csv").starts_with("generation,best,mean\n"));

    ok(
        d,
        &[
            "project",
            "--config",
            "run.toml",
            "--model",
            "fit/model.json",
            "--basis",
            "pp/basis.csv",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(read(d, "z.csv"), projected);
}

#[test]
fn single_component_model_warns() {
    let dir = fitted(1);
    let stdout = ok(
        dir.path(),
        &[
            "pursue",
            "--config",
            "run.toml",
            "--model",
            "fit/model.json",
            "--out-dir",
            "pp",
        ],
    );
    let result = json(dir.path(), "pp/result.json");
    assert!(result["best_fitness"].as_f64().unwrap().abs() < 1e-8);
    assert!(stdout.contains("no non-Gaussian structure"));
}

#[test]
fn compare_report_validates() {
    let dir = fitted(4);
    ok(
        dir.path(),
        &[
            "compare",
            "--config",
            "run.toml",
            "--model",
            "fit/model.json",
            "--out-dir",
            "cmp",
        ],
    );
    let doc = ComparisonDocument::from_json(&read(dir.path(), "cmp/comparison.json")).unwrap();
    assert_eq!(doc.labels, ["UT", "VAR", "SOTE", "PCA"]);
    for (i, row) in doc.angles.iter().enumerate() {
        assert_eq!(row[i], Some(0.0));
    }
    assert_eq!(doc.schema_version, 1);
}

#[test]
fn reruns_are_byte_identical() {
    let a = fitted(3);
    let b = fitted(3);
    for dir in [&a, &b] {
        ok(
            dir.path(),
            &[
                "pursue",
                "--config",
                "run.toml",
                "--model",
                "fit/model.json",
                "--out-dir",
                "pp",
            ],
        );
    }
    for f in [
        "data.csv",
        "fit/model.json",
        "fit/fit_report.json",
        "pp/basis.csv",
        "pp/projected.csv",
        "pp/result.json",
    ] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn plots_are_well_formed_svg() {
    let dir = fitted(4);
    let d = dir.path();
    ok(
        d,
        &[
            "pursue",
            "--config",
            "run.toml",
            "--model",
            "fit/model.json",
            "--out-dir",
            "pp",
        ],
    );
    ok(
        d,
        &[
            "plot",
            "--input",
            "pp/projected.csv",
            "--basis",
            "pp/basis.csv",
            "--out",
            "scatter.svg",
        ],
    );
    let svg = read(d, "scatter.svg");
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let fills: std::collections::BTreeSet<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle"))
        .filter_map(|n| n.parent_element().and_then(|g| g.attribute("fill")))
        .collect();
    assert_eq!(fills.len(), 3);

    std::fs::write(d.join("one.csv"), "z1,class\n0.1,a\n0.4,b\n-0.3,a\n1.2,b\n0.0,a\n").unwrap();
    ok(d, &["plot", "--input", "one.csv", "--out", "hist.svg"]);
    roxmltree::Document::parse(&read(d, "hist.svg")).unwrap();

    ok(
        d,
        &["simulate", "waveform", "--n", "20", "--seed", "1", "--out", "wide.csv"],
    );
    let out = ppgmm(d, &["plot", "--input", "wide.csv", "--out", "bad.svg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pairs"));
}
