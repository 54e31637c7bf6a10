use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ricci_experiments::{RunManifest, RunStatus, MANIFEST_FILE};
use serde_json::{json, Value};

fn ricci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricci"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_with(dir: &Path, sub: &str, config: &Value, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}_{out}.json"));
    std::fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let out = dir.join(out);
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (ricci(&args), out)
}

fn small_table() -> Value {
    json!({
        "datasets": [{"name": "syn_ii", "n_train": 200, "n_test": 120, "seed": 3}],
        "architectures": [{"width": 8, "depth": 4}],
        "seeds": [0, 1],
        "k_fraction": 0.06,
        "methods": ["ollivier_approx", "augmented_forman"],
        "train": {"max_epochs": 15, "target_train_accuracy": 0.5, "learning_rate": 0.01}
    })
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> Option<f64> {
    (!s.is_empty()).then(|| s.parse().unwrap())
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run_with(dir.path(), "table", &json!({"datasets": []}), "empty", &[]);
    assert_eq!(out.status.code(), Some(2));
    let bad_k = json!({"datasets": [{"name": "syn_i", "n_train": 10, "n_test": 10}], "k_fraction": 1.5});
    let (out, _) = run_with(dir.path(), "table", &bad_k, "badk", &[]);
    assert_eq!(out.status.code(), Some(2));
    let (out, _) = run_with(dir.path(), "monitor", &json!({"seed": 1}), "nodata", &[]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    let out = ricci(&["theory", "--config", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_seeds_below_target_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "datasets": [{"name": "syn_i", "n_train": 60, "n_test": 40}],
        "architectures": [{"width": 4, "depth": 3}],
        "seeds": [0],
        "train": {"max_epochs": 1, "learning_rate": 0.0, "target_train_accuracy": 1.0}
    });
    let (out, dir_out) = run_with(dir.path(), "table", &cfg, "fail", &[]);
    assert_eq!(out.status.code(), Some(3));
    let m = RunManifest::read(&dir_out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("seed"));
}

#[test]
fn table_summary_is_recomputable_from_vertex_files() {
    let dir = tempfile::tempdir().unwrap();
    let (out, root) = run_with(dir.path(), "table", &small_table(), "table", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cell = root.join("syn_ii").join("w8_d4");
    let seeds = read_csv(&cell.join("seeds.csv"));
    let included: Vec<&str> = seeds.iter().filter(|r| r[1] == "true").map(|r| r[0].as_str()).collect();
    assert!(!included.is_empty());
    for row in read_csv(&cell.join("summary.csv")) {
        let method = &row[0];
        let mut means = Vec::new();
        let mut pooled = Vec::new();
        for s in &included {
            let local = read_csv(&cell.join(format!("seed_{s}")).join(format!("local_{method}.csv")));
            let vals: Vec<f64> = local.iter().filter_map(|r| num(&r[1])).collect();
            if !vals.is_empty() {
                means.push(vals.iter().sum::<f64>() / vals.len() as f64);
            }
            pooled.extend(vals);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / means.len() as f64;
        let neg = pooled.iter().filter(|&&v| v < 0.0).count() as f64 / pooled.len() as f64;
        assert!((num(&row[1]).unwrap() - mean).abs() < 1e-12, "{method} mean");
        assert!((num(&row[2]).unwrap() - var.sqrt()).abs() < 1e-12, "{method} std");
        assert!((num(&row[3]).unwrap() - neg).abs() < 1e-12, "{method} frac_negative");
        assert_eq!(row[4].parse::<usize>().unwrap(), pooled.len());
    }
    let table = read_csv(&root.join("table.csv"));
    assert_eq!(table.len(), 2);
    let m = RunManifest::read(&root.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert!(m.outputs.iter().all(|p| root.join(p).is_file()));
}

#[test]
fn replay_reproduces_every_output_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (out, root) = run_with(dir.path(), "table", &small_table(), "orig", &["--seeds", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = root.join(MANIFEST_FILE);
    let again = dir.path().join("again");
    let out = ricci(&["replay", "--manifest", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::read(&manifest).unwrap();
    assert!(!m.outputs.is_empty());
    for rel in &m.outputs {
        assert_eq!(
            std::fs::read(root.join(rel)).unwrap(),
            std::fs::read(again.join(rel)).unwrap(),
            "{}",
            rel.display()
        );
    }
}

#[test]
fn monitor_with_zero_learning_rate_never_stops() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "dataset": {"name": "syn_iii", "n_train": 120, "n_test": 100},
        "architecture": {"width": 6, "depth": 4},
        "k_fraction": 0.08,
        "train": {"learning_rate": 0.0, "max_epochs": 30, "checkpoint_every": 2, "stop_at_target": false},
        "early_stop": {"window": 2, "patience": 2, "margin": 0.0, "halt": true}
    });
    let (out, root) = run_with(dir.path(), "monitor", &cfg, "mon", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let outcome: Value = serde_json::from_str(&std::fs::read_to_string(root.join("early_stop.json")).unwrap()).unwrap();
    assert!(outcome["early_stop"]["stop_epoch"].is_null());
    assert_eq!(outcome["halted"], json!(false));
    assert_eq!(outcome["final_epoch"], json!(30));
    let series = outcome["early_stop"]["series"].as_array().unwrap();
    assert_eq!(series.len(), 16);
    let first = &series[0][1];
    assert!(series.iter().all(|p| &p[1] == first));
}

#[test]
fn community_and_depth_sweep_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let train = json!({"max_epochs": 20, "target_train_accuracy": 0.5, "learning_rate": 0.01});
    let cfg = json!({
        "datasets": [{"name": "syn_iv", "n_train": 200, "n_test": 100}],
        "architecture": {"width": 8, "depth": 4},
        "seeds": [0],
        "k_fraction": 0.08,
        "train": train
    });
    let (out, root) = run_with(dir.path(), "community", &cfg, "comm", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let layers = read_csv(&root.join("syn_iv").join("seed_0").join("community.csv"));
    assert_eq!(layers.len(), 5);
    assert_eq!(read_csv(&root.join("community_summary.csv")).len(), 1);

    let cfg = json!({
        "dataset": {"name": "syn_ii", "n_train": 200, "n_test": 100},
        "width": 8,
        "depths": [4, 3],
        "seeds": [0, 1],
        "k_fraction": 0.08,
        "train": train
    });
    let (out, root) = run_with(dir.path(), "depth-sweep", &cfg, "depth", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = read_csv(&root.join("depth_sweep.csv"));
    assert_eq!(sweep.len(), 2 + 3);
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(root.join("recommendation.json")).unwrap()).unwrap();
    let d = rec["recommended_depth"].as_u64().unwrap();
    assert!(d == 3 || d == 4);
}

#[test]
fn theory_suite_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "preservation": {"n_points": 12, "trials": 20, "widths": [2, 64, 4096], "depths": [1]},
        "rewire": {"triples": 50},
        "gd": {"n_points": 8, "dim": 3, "k": 2, "widths": [16, 64], "runs": 3, "steps": 20}
    });
    let (out, root) = run_with(dir.path(), "theory", &cfg, "theory", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rewire: Value = serde_json::from_str(&std::fs::read_to_string(root.join("rewire.json")).unwrap()).unwrap();
    assert_eq!(rewire["reversed"], json!(50));
    assert_eq!(read_csv(&root.join("gd.csv")).len(), 2);
    assert_eq!(read_csv(&root.join("preservation.csv")).len(), 2 * 3);
}
