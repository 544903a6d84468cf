use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn onnevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onnevo"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const TINY_GA: &str = r#"{
    "dataset": {"kind": "triangle", "n": 60, "seed": 3},
    "algorithm": "ga",
    "ga": {"population_size": 12, "max_generations": 6, "stall_generations": 0},
    "split_seed": 1,
    "run_seed": 9
}"#;

/// Metrics with the timing column removed.
fn metrics_without_time(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn train(tmp: &Path, config: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out_dir = tmp.join(name);
    let mut args = vec!["train", "--config", p(config), "--out-dir", p(&out_dir)];
    args.extend_from_slice(extra);
    let out = onnevo(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    out_dir
}

#[test]
fn planar_generation_writes_headed_csv() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("ring.csv");
    let out = onnevo(&[
        "dataset",
        "gen",
        "--kind",
        "ring",
        "--n",
        "50",
        "--seed",
        "2",
        "--out",
        p(&path),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("f1,f2,label"));
    assert_eq!(lines.count(), 50);

    let again = tmp.path().join("again.csv");
    onnevo(&[
        "dataset",
        "gen",
        "--kind",
        "ring",
        "--n",
        "50",
        "--seed",
        "2",
        "--out",
        p(&again),
    ]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn modulation_features_csv() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("mod.csv");
    let out = onnevo(&[
        "dataset",
        "modfmt",
        "--n",
        "8",
        "--seed",
        "1",
        "--snr-db",
        "15",
        "--out",
        p(&path),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("gamma_max,sigma_aa,sigma_dp,sigma_df,label\n"));
    assert_eq!(text.lines().count(), 9);

    let odd = onnevo(&["dataset", "modfmt", "--n", "7", "--out", p(&path)]);
    assert_eq!(code(&odd), 2);
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), TINY_GA);
    let a = train(tmp.path(), &config, "a", &[]);
    let b = train(tmp.path(), &config, "b", &[]);

    for file in ["metrics.csv", "model.json", "config.echo.json"] {
        assert!(a.join(file).is_file(), "{file} missing");
    }
    assert_eq!(metrics_without_time(&a), metrics_without_time(&b));
    for file in ["model.json", "config.echo.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap()
        );
    }

    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("generation,best_loss,mean_loss,train_accuracy,test_accuracy,elapsed_ms")
    );
    let best: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(best.len() <= 7);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));

    let c = train(tmp.path(), &config, "c", &["--seed", "10"]);
    assert_ne!(metrics_without_time(&a), metrics_without_time(&c));
}

#[test]
fn algorithm_override() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"dataset": {"kind": "triangle", "n": 40}, "algorithm": "ga",
            "pso": {"population_size": 6, "max_generations": 3}}"#,
    );
    let dir = train(tmp.path(), &config, "pso", &["--algo", "pso"]);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["metadata"]["algorithm"], "pso");
    assert_eq!(model["metadata"]["timestamp"], "2023-11-14T22:13:20Z");

    let bad = onnevo(&[
        "train",
        "--config",
        p(&config),
        "--algo",
        "adam",
        "--out-dir",
        p(tmp.path()),
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn eval_and_boundary_on_a_trained_model() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), TINY_GA);
    let dir = train(tmp.path(), &config, "run", &[]);
    let model = dir.join("model.json");

    let data = tmp.path().join("tri.csv");
    onnevo(&[
        "dataset",
        "gen",
        "--kind",
        "triangle",
        "--n",
        "30",
        "--seed",
        "5",
        "--out",
        p(&data),
    ]);
    let out = onnevo(&["eval", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total"], 30);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let grid = tmp.path().join("grid.csv");
    let out = onnevo(&["boundary", "--model", p(&model), "--grid", "3", "--out", p(&grid)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("x,y,class,p0,p1\n"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn boundary_rejects_models_with_more_features() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"dataset": {"kind": "iris"}, "algorithm": "ga", "ga": {"population_size": 4, "max_generations": 1}}"#,
    );
    let dir = train(tmp.path(), &config, "iris", &[]);
    let out = onnevo(&[
        "boundary",
        "--model",
        p(&dir.join("model.json")),
        "--grid",
        "4",
        "--out",
        p(&tmp.path().join("g.csv")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn error_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");

    let bad = write_config(
        tmp.path(),
        r#"{"dataset": {"kind": "triangle"}, "algorithm": "ga", "ga": {"population_size": 1}, "train_fraction": 2.0}"#,
    );
    let out = onnevo(&["train", "--config", p(&bad), "--out-dir", p(&out_dir)]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("population_size") && stderr.contains("train_fraction"),
        "{stderr}"
    );

    let missing = tmp.path().join("absent.json");
    assert_eq!(
        code(&onnevo(&["train", "--config", p(&missing), "--out-dir", p(&out_dir)])),
        2
    );

    let model = tmp.path().join("model.json");
    std::fs::write(&model, "not json").unwrap();
    let data = tmp.path().join("d.csv");
    std::fs::write(&data, "f1,f2,label\n0.1,0.2,above\n").unwrap();
    assert_eq!(code(&onnevo(&["eval", "--model", p(&model), "--data", p(&data)])), 3);

    let good = write_config(tmp.path(), TINY_GA);
    let dir = train(tmp.path(), &good, "ok", &[]);
    std::fs::write(&data, "f1,f2,label\n0.1,oops,above\n").unwrap();
    assert_eq!(
        code(&onnevo(&[
            "eval",
            "--model",
            p(&dir.join("model.json")),
            "--data",
            p(&data)
        ])),
        3
    );

    assert_eq!(code(&onnevo(&["train"])), 2);
}

#[test]
fn sweep_prints_and_writes_summary() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("sweeps");
    let config = write_config(
        tmp.path(),
        &format!(
            r#"{{"dataset": {{"kind": "triangle", "n": 40}}, "algorithm": "ga",
                "ga": {{"population_size": 6, "max_generations": 2}}, "output_dir": {:?}}}"#,
            p(&out_dir)
        ),
    );
    let out = onnevo(&[
        "sweep",
        "--config",
        p(&config),
        "--axis",
        "population",
        "--values",
        "4, 8",
        "--seeds",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout,
        std::fs::read_to_string(out_dir.join("sweep_population.csv")).unwrap()
    );
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(
        rows[0],
        "axis,value,runs,median_best_loss,median_train_accuracy,median_test_accuracy"
    );
    assert!(rows[1].starts_with("population,4,5,"));
    assert!(rows[2].starts_with("population,8,5,"));

    let few = onnevo(&[
        "sweep",
        "--config",
        p(&config),
        "--axis",
        "population",
        "--values",
        "4",
        "--seeds",
        "2",
    ]);
    assert_eq!(code(&few), 2);
    let axis = onnevo(&[
        "sweep",
        "--config",
        p(&config),
        "--axis",
        "depth",
        "--values",
        "4",
        "--seeds",
        "5",
    ]);
    assert_eq!(code(&axis), 2);
}
