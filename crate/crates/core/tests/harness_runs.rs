use onnevo::datasets::triangle_class;
use onnevo::harness::{boundary_grid, load_model, run, ExperimentConfig};
use tempfile::TempDir;

fn without_elapsed(metrics: &str) -> Vec<String> {
    metrics
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

const GA_RUN: &str = r#"{
    "dataset": {"kind": "ring", "n": 80, "seed": 4},
    "algorithm": "ga",
    "ga": {"population_size": 20, "max_generations": 8, "stall_generations": 0},
    "split_seed": 2,
    "run_seed": 5
}"#;

#[test]
fn reruns_are_byte_identical() {
    std::env::set_var("SOURCE_DATE_EPOCH", "1600000000");
    let cfg = ExperimentConfig::from_json(GA_RUN).unwrap();
    let tmp = TempDir::new().unwrap();
    let a = run(&cfg, Some(&tmp.path().join("a"))).unwrap();
    let b = run(&cfg, Some(&tmp.path().join("b"))).unwrap();
    let read = |dir: &std::path::Path, f: &str| std::fs::read(dir.join(f)).unwrap();
    for f in ["model.json", "config.echo.json"] {
        assert_eq!(read(&a.dir, f), read(&b.dir, f), "{f} differs");
    }
    let metrics = |dir: &std::path::Path| without_elapsed(&String::from_utf8(read(dir, "metrics.csv")).unwrap());
    assert_eq!(metrics(&a.dir), metrics(&b.dir));

    let rows = metrics(&a.dir);
    assert!(rows.len() <= 8 + 2);
    let best: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));

    let echoed = ExperimentConfig::from_json(&String::from_utf8(read(&a.dir, "config.echo.json")).unwrap()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn saved_model_reproduces_powers() {
    let cfg = ExperimentConfig::from_json(GA_RUN).unwrap();
    let tmp = TempDir::new().unwrap();
    let out = run(&cfg, Some(tmp.path())).unwrap();
    let back = load_model(&tmp.path().join("model.json")).unwrap();
    for row in [[0.5, 0.5], [0.1, 0.9], [0.33, 0.71]] {
        let a = out
            .model
            .network()
            .forward(&out.model.encode_row(&row).unwrap())
            .unwrap();
        let b = back.network().forward(&back.encode_row(&row).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn trained_triangle_boundary_follows_the_rule() {
    let cfg = ExperimentConfig::from_json(
        r#"{
        "dataset": {"kind": "triangle", "n": 120, "seed": 1},
        "algorithm": "sgd",
        "sgd": {"learning_rate": 0.1, "max_iterations": 250},
        "run_seed": 3
    }"#,
    )
    .unwrap();
    let tmp = TempDir::new().unwrap();
    let out = run(&cfg, Some(tmp.path())).unwrap();
    let test_acc = out.result.final_record().test_accuracy;
    assert!(test_acc >= 0.9, "gradient run reached test accuracy {test_acc}");
    let grid = boundary_grid(&out.model, 20).unwrap();
    let agree = grid.iter().filter(|c| c.class == triangle_class(c.x, c.y)).count();
    assert!(
        agree as f64 >= 0.9 * grid.len() as f64,
        "{agree} of {} cells agree",
        grid.len()
    );
}
