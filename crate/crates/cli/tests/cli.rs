use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn masim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masim")).args(args).env_remove("MASIM_OUT_DIR").output().expect("spawn masim")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run(name: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = config(name);
    let mut args = vec!["run", s(&cfg), "--out", s(out)];
    args.extend_from_slice(extra);
    let o = masim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn metrics(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

fn edited(name: &str, dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("{name}-edited.json"));
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_validate() {
    for name in ["usecase1", "usecase2", "usecase3"] {
        let o = masim(&["validate", s(&config(name))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}

#[test]
fn validation_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let nr = edited("usecase1", dir.path(), |v| v["encounter"]["mpc"]["robust_horizon"] = 8.into());
    let o = masim(&["validate", s(&nr)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("encounter.mpc.robust_horizon") && stderr(&o).contains("smaller than N"), "{}", stderr(&o));

    let formula = edited("usecase2", dir.path(), |v| v["formation"]["agents"][0]["task"] = "F[10,20] (x1 >= ".into());
    let o = masim(&["validate", s(&formula)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("formation.agents[0].task") && stderr(&o).contains("position"), "{}", stderr(&o));

    let unknown = edited("usecase3", dir.path(), |v| v["warehouse"]["epsilom"] = 0.1.into());
    let o = masim(&["validate", s(&unknown)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warehouse.epsilom"), "{}", stderr(&o));

    let cyclic = edited("usecase2", dir.path(), |v| {
        let e = v["formation"]["edges"][0].clone();
        let mut back = e.clone();
        back["leader"] = e["follower"].clone();
        back["follower"] = e["leader"].clone();
        v["formation"]["edges"].as_array_mut().unwrap().push(back);
    });
    let o = masim(&["validate", s(&cyclic)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn equal_seeds_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("usecase1", &a, &["--seed", "7"]);
    run("usecase1", &b, &["--seed", "7"]);
    let ta = std::fs::read(a.join("trace.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, std::fs::read(b.join("trace.csv")).unwrap());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"], metrics(&a)["config_hash"]);
    assert!(String::from_utf8_lossy(&ta).starts_with("# masim-trace v1 seed=7 config="));
}

#[test]
fn replayed_separation_matches_metrics() {
    let dir = tempfile::tempdir().unwrap();
    run("usecase1", dir.path(), &[]);
    let cfg = config("usecase1");
    let trace = dir.path().join("trace.csv");
    let o = masim(&["replay", s(&trace), "--metric", "separation", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let replayed: std::collections::BTreeMap<u64, f64> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    let samples = metrics(dir.path())["separations"].as_array().unwrap().clone();
    assert!(!samples.is_empty());
    for sample in samples {
        let step = sample["step"].as_u64().unwrap();
        let d = sample["separation"].as_f64().unwrap();
        assert!((replayed[&step] - d).abs() <= 1e-9, "step {step}");
    }
}

#[test]
fn formation_metrics_and_replayed_robustness() {
    let dir = tempfile::tempdir().unwrap();
    run("usecase2", dir.path(), &[]);
    let m = metrics(dir.path());
    assert!(m["min_barrier"].as_f64().unwrap() >= -1e-6);
    let cfg = config("usecase2");
    let trace = dir.path().join("trace.csv");
    let o = masim(&["replay", s(&trace), "--metric", "robustness", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 5);
    assert!(values.iter().all(|r| *r >= 0.0), "{values:?}");
    for (agent, r) in m["robustness"].as_object().unwrap() {
        let id: usize = agent.parse().unwrap();
        assert!((values[id - 1] - r.as_f64().unwrap()).abs() <= 1e-9);
    }
    let o = masim(&["replay", s(&trace), "--metric", "barrier", "--config", s(&cfg)]);
    assert!(o.status.success());
    let min = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!((min - m["min_barrier"].as_f64().unwrap()).abs() <= 1e-9);
}

#[test]
fn task_report_has_a_row_per_issued_task() {
    let dir = tempfile::tempdir().unwrap();
    run("usecase3", dir.path(), &[]);
    let text = std::fs::read_to_string(dir.path().join("task_report.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# masim-task-report seed=7 config="));
    assert!(lines.next().unwrap().starts_with("task_id,kind"));
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(config("usecase3")).unwrap()).unwrap();
    assert_eq!(lines.count(), cfg["warehouse"]["schedule"].as_array().unwrap().len());
}

#[test]
fn replay_rejects_bad_traces_and_foreign_configs() {
    let dir = tempfile::tempdir().unwrap();
    run("usecase1", dir.path(), &[]);
    let trace = dir.path().join("trace.csv");
    let full = std::fs::read_to_string(&trace).unwrap();
    let cut = dir.path().join("cut.csv");
    std::fs::write(&cut, &full[..full.len() / 2 - 3]).unwrap();
    let cfg = config("usecase1");
    let o = masim(&["replay", s(&cut), "--metric", "separation", "--config", s(&cfg)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));

    let future = dir.path().join("future.csv");
    std::fs::write(&future, full.replacen("masim-trace v1", "masim-trace v9", 1)).unwrap();
    let o = masim(&["replay", s(&future), "--metric", "separation", "--config", s(&cfg)]);
    assert!(stderr(&o).contains("unsupported trace version"), "{}", stderr(&o));

    let other = edited("usecase1", dir.path(), |v| v["encounter"]["mpc"]["rho"] = 2.5.into());
    let o = masim(&["replay", s(&trace), "--metric", "separation", "--config", s(&other)]);
    assert_eq!(o.status.code(), Some(2));
    let o = masim(&["replay", s(&trace), "--metric", "separation", "--config", s(&other), "--force"]);
    assert_eq!(o.status.code(), Some(0));

    let o = masim(&["replay", s(&trace), "--metric", "barrier", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let cfg = config("usecase1");
    let o = Command::new(env!("CARGO_BIN_EXE_masim"))
        .args(["run", s(&cfg)])
        .env("MASIM_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("trace.csv").exists() && out.join("manifest.json").exists());
}

#[test]
fn async_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run("usecase3", dir.path(), &["--mode", "async", "--wall-secs", "0.3"]);
    let m = metrics(dir.path());
    assert_eq!(m["mode"], "async");
    assert!(m["world_steps"].as_u64().unwrap() > 0);
    assert!(m["iterations"].as_object().unwrap().values().all(|n| n.as_u64().unwrap() > 0));
}

#[test]
fn missing_file_is_a_config_error() {
    let o = masim(&["validate", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
}
