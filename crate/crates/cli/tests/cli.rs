use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "env": {"curriculum": ["empty8"], "max_steps": 40},
  "trainer": {
    "total_steps": 300, "bootstrap_episodes": 2, "eval_every": 150,
    "batch_size": 16, "buffer_capacity": 2000,
    "net": {"encoder": {"kind": "downsample", "beams": 20}, "hidden": [16, 16]}
  },
  "transfer": {
    "meta": {"radius": 0.3, "v_max": 0.5, "omega_max": 1.0},
    "scaled": {"radius": 0.6, "v_max": 0.4, "omega_max": 0.5},
    "commands": [[0.5, 0.25], [0.0, -2.0], [0.3, 0.0]]
  }
}"#;

fn navsim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_navsim"));
    c.args(args).env_remove("NAVSIM_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// The single run directory created under `root` whose name starts with `prefix`.
fn run_dir(root: &Path, prefix: &str) -> PathBuf {
    let mut found: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .collect();
    assert_eq!(found.len(), 1, "{found:?}");
    found.pop().unwrap()
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

/// Trains one tiny run and returns its weights file.
fn tiny_weights(dir: &Path) -> (String, PathBuf) {
    let cfg = write_config(dir, "tiny.json", TINY);
    let out = dir.join("train");
    let o = navsim(&["train", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    (cfg, run_dir(&out, "train-").join("seed-5/weights.bin"))
}

#[test]
fn two_seeds_give_two_runs_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.json", TINY);
    let out = tmp.path().join("runs");
    let o = navsim(
        &["train", "--config", &cfg, "--seed", "1,2", "--out", out.to_str().unwrap()],
        &[("NAVSIM_THREADS", "2")],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let run = run_dir(&out, "train-");
    assert!(run.file_name().unwrap().to_str().unwrap().ends_with("-s1_2"));
    for s in [1, 2] {
        let d = run.join(format!("seed-{s}"));
        assert!(csv_rows(&d.join("metrics.csv")).len() > 1);
        assert!(d.join("weights.bin").is_file());
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["seeds"], serde_json::json!([1, 2]));
    assert!(m["finished_ms"].as_u64().unwrap() >= m["started_ms"].as_u64().unwrap());
    assert_eq!(m["config"]["trainer"]["total_steps"], 300);
}

#[test]
fn same_seed_twice_gives_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.json", TINY);
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("runs{k}"));
        let o = navsim(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()], &[]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let d = run_dir(&out, "train-").join("seed-7");
        csvs.push((fs::read(d.join("metrics.csv")).unwrap(), fs::read(d.join("weights.bin")).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    for (body, field) in [
        (r#"{"trainer": {"batch_size": "large"}}"#, "trainer.batch_size"),
        (r#"{"env": {"reward": {"c1": -1}}}"#, "env.reward.c1"),
        (r#"{"trainer": {"net": {"hiden": [8]}}}"#, "hiden"),
        ("{not json", "invalid config"),
    ] {
        let cfg = write_config(tmp.path(), "bad.json", body);
        let o = navsim(&["train", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(o.status.code(), Some(1), "{body}");
        assert!(text(&o.stderr).contains(field), "{body}: {}", text(&o.stderr));
    }
    assert!(!out.exists(), "no run directory for a rejected config");
}

#[test]
fn usage_and_environment_errors_are_validation_errors() {
    let o = navsim(&["train", "--seed", "x"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = navsim(&["oracle-check", "--samples", "1"], &[("NAVSIM_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(0), "oracle-check runs single-threaded");
    let o = navsim(&["train", "--seed", "1"], &[("NAVSIM_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("NAVSIM_THREADS"));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"eval": {"goals_layout": "nowhere"}}"#);
    let o = navsim(&["eval", "--config", &cfg, "--protocol", "goals", "--controller", "reactive"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("nowhere"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = navsim(
        &["eval", "--protocol", "goals", "--controller", "reactive", "--out", blocker.to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
}

#[test]
fn eval_protocols_write_reports_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, weights) = tiny_weights(tmp.path());
    let out = tmp.path().join("eval");
    let w = weights.to_str().unwrap();
    let o_str = out.to_str().unwrap();

    let o = navsim(&["eval", "--config", &cfg, "--weights", w, "--protocol", "goals", "--out", o_str], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let d = run_dir(&out, "eval-goals-");
    let rows = csv_rows(&d.join("report.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let score: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(score == -2.0 || (score > 1.0 && score < 2.0), "{r}");
    }
    let svg = fs::read_to_string(d.join("plot.svg")).unwrap();
    assert_eq!(svg.matches("class=\"trajectory\"").count(), 4);

    let o = navsim(&["eval", "--config", &cfg, "--weights", w, "--protocol", "sweep", "--out", o_str], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let d = run_dir(&out, "eval-sweep-");
    let rows = csv_rows(&d.join("report.csv"));
    assert_eq!(rows.len(), 12);
    let radii: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!((radii[0] - 0.20).abs() < 1e-12 && (radii[11] - 0.75).abs() < 1e-12);
    assert_eq!(fs::read_to_string(d.join("plot.svg")).unwrap().matches("class=\"legend-entry\"").count(), 12);

    // plot re-draws saved logs
    let logs: Vec<String> = ["R0.20_v0.50_w1.57.json", "R0.75_v0.50_w1.57.json"]
        .iter()
        .map(|f| d.join(f).to_str().unwrap().to_string())
        .collect();
    let svg_path = tmp.path().join("plots/two.svg");
    let o = navsim(&["plot", "--logs", &logs.join(","), "--out", svg_path.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("R=0.75"));
}

#[test]
fn dynamic_protocol_marks_swaps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eval");
    let o = navsim(
        &["eval", "--protocol", "dynamic", "--controller", "reactive", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let d = run_dir(&out, "eval-dynamic-");
    let swaps = csv_rows(&d.join("swaps.csv"));
    assert_eq!(swaps.len(), 1);
    assert!(swaps[0].contains("empty8+block"));
    let traj = csv_rows(&d.join("trajectory.csv"));
    assert!(traj.first().unwrap().ends_with(",empty8"));
    assert!(traj.last().unwrap().ends_with(",empty8+block"));
    let svg = fs::read_to_string(d.join("plot.svg")).unwrap();
    assert_eq!(svg.matches("class=\"swap\"").count(), 1);
    let report = csv_rows(&d.join("report.csv"));
    assert!(report[0].ends_with(",1"));
}

#[test]
fn architecture_mismatch_names_the_tensor() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, weights) = tiny_weights(tmp.path());
    // same family, wider hidden layer
    let other = TINY.replace("\"hidden\": [16, 16]", "\"hidden\": [32, 16]");
    let cfg = write_config(tmp.path(), "wide.json", &other);
    let o = navsim(
        &["eval", "--config", &cfg, "--weights", weights.to_str().unwrap(), "--protocol", "goals"],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("fc0.w"), "{err}");
    let o = navsim(&["eval", "--config", &cfg, "--protocol", "goals"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("--weights"));
}

#[test]
fn transfer_demo_writes_one_row_per_command() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.json", TINY);
    let out = tmp.path().join("t");
    let o = navsim(&["transfer", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rows = csv_rows(&run_dir(&out, "transfer-").join("transfer.csv"));
    assert_eq!(rows.len(), 3);
    let first: Vec<f64> = rows[0].split(',').take(7).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
    // ideal (1.0, 0.25) clipped at v_max 0.4 along the same curvature
    assert!((first[5] - 0.4).abs() < 1e-12 && (first[6] - 0.1).abs() < 1e-12, "{rows:?}");
    assert!(rows[0].ends_with(",reachable"));
    assert!(rows[1].ends_with(",spin") && rows[2].ends_with(",straight"));

    let no_scaled = write_config(tmp.path(), "n.json", r#"{"transfer": {"commands": [[0.1, 0.1]]}}"#);
    let o = navsim(&["transfer", "--config", &no_scaled, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("transfer.scaled"));
}

#[test]
fn oracle_check_default_run_passes() {
    let o = navsim(&["oracle-check"], &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("samples=10000") && out.contains("failures=0"), "{out}");
    assert!(out.trim_end().ends_with("PASS"));
}

#[test]
fn oracle_check_single_sample_is_deterministic() {
    let a = navsim(&["oracle-check", "--samples", "1", "--seed", "42"], &[]);
    let b = navsim(&["oracle-check", "--samples", "1", "--seed", "42"], &[]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let o = navsim(&["oracle-check", "--samples", "0"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn coarse_grid_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = navsim(
        &["oracle-check", "--samples", "200", "--grid-n", "10", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.code() == Some(0) || o.status.code() == Some(3));
    assert!(text(&o.stderr).contains("warning: grid_n=10"), "{}", text(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir(&out, "oracle-check-").join("oracle.json")).unwrap()).unwrap();
    assert_eq!(report["coarse_grid"], true);
    assert_eq!(report["grid_n"], 10);
}
