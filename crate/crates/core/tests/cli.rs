//! End-to-end checks of the `covertime-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

use covertime_lab::experiment::{CSV_HEADER, CSV_SCHEMA_LINE};
use covertime_lab::graph_models::TorusTopology;
use covertime_lab::trajectory::{DumpTopology, StepRecorder};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covertime-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("COVERTIME_LAB_JOBS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn tree_cover_writes_one_row_per_replica_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.csv");
    let args = ["tree-cover", "--b", "2", "--k", "4", "--replicas", "100", "--seed", "7"];
    let o = lab(&args, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_SCHEMA_LINE);
    assert_eq!(lines[1], CSV_HEADER);
    assert_eq!(lines.len() - 2, 101);
    assert!(lines[2..102].iter().enumerate().all(|(i, l)| l.split(',').nth(9) == Some(&i.to_string())));
    assert_eq!(lines[102].split(',').nth(9), Some("summary"));

    let again = dir.path().join("tree2.csv");
    assert!(lab(&args, &again).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn oracle_check_reports_a_z_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.csv");
    let o = lab(&["oracle-check", "--n", "3", "--replicas", "100000", "--seed", "3"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let summary = text.lines().last().unwrap();
    let z: f64 = summary
        .split(';')
        .find_map(|f| f.strip_prefix("z_score="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(z.abs() <= 4.0, "{summary}");
    assert!(summary.contains("reference=24.11"), "{summary}");
}

#[test]
fn bad_parameters_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    for (args, field) in [
        (&["tree-cover", "--b", "2"][..], "--k"),
        (&["tree-cover", "--b", "1", "--k", "3"][..], "b"),
        (&["eps-cover", "--n", "64", "--eps", "0.9"][..], "--eps"),
        (&["excursions", "--b", "2", "--k", "6", "--ell", "2"][..], "--lambda"),
        (&["special-vertices", "--b", "2", "--k", "8", "--ell", "2", "--lambda", "0.5", "--r", "0.4"][..], "lambda"),
        (&["gw-survival", "--steps", "10"][..], "--law"),
        (&["tree-cover", "--b", "2", "--k", "3", "--replicas", "0"][..], "--replicas"),
    ] {
        let o = lab(args, &out);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{args:?}: {}", stderr(&o));
    }
    let o = lab(&["no-such-experiment"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn oversized_graphs_exit_with_capacity_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = lab(&["tree-cover", "--b", "2", "--k", "40"], &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = lab(&["oracle-check", "--n", "5"], &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn jobs_environment_variable_takes_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_covertime-lab"))
        .args(["tree-cover", "--b", "2", "--k", "3", "--jobs", "2", "--out"])
        .arg(&out)
        .env("COVERTIME_LAB_JOBS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("COVERTIME_LAB_JOBS"));
}

#[test]
fn dumped_trajectory_replays_the_first_replica() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("torus.csv");
    let traj = dir.path().join("torus.traj");
    let traj_arg = traj.display().to_string();
    let o = lab(&["torus-cover", "--n", "12", "--replicas", "3", "--dump-trajectory", &traj_arg], &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let (topology, rec) = StepRecorder::read_from(std::fs::File::open(&traj).unwrap()).unwrap();
    assert_eq!(topology, DumpTopology::Torus(12));
    let torus = TorusTopology::new(12).unwrap();
    let (mut x, mut y) = (0i64, 0i64);
    let mut seen = vec![false; torus.site_count()];
    seen[0] = true;
    let mut left = torus.site_count() - 1;
    let mut steps = 0u64;
    for code in rec.codes() {
        match code {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        steps += 1;
        let v = torus.index(x.rem_euclid(12) as u32, y.rem_euclid(12) as u32);
        if !seen[v] {
            seen[v] = true;
            left -= 1;
        }
    }
    assert_eq!(left, 0);
    assert_eq!(steps, rec.len());
    let text = std::fs::read_to_string(&out).unwrap();
    let first = text.lines().nth(2).unwrap();
    assert!(first.ends_with(&format!("steps={steps}")), "{first}");
}

#[test]
fn json_output_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gw.json");
    let o = lab(
        &["gw-survival", "--law", "0:0.25,2:0.75", "--steps", "20", "--replicas", "50", "--format", "json"],
        &out,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["replicas"].as_array().unwrap().len(), 50);
    assert!((v["summary"]["reference"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

fn suite(manifest: &str, dir: &Path) -> Output {
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest).unwrap();
    Command::new(env!("CARGO_BIN_EXE_covertime-lab"))
        .args(["suite", "--manifest"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("results"))
        .env_remove("COVERTIME_LAB_JOBS")
        .output()
        .unwrap()
}

#[test]
fn suite_manifest_validation() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(suite("[]", dir.path()).status.code(), Some(2));
    let dup = r#"[
        {"experiment":"tree-cover","b":2,"k":3,"replicas":5,"seed":1,"out":"same.csv"},
        {"experiment":"tree-cover","b":2,"k":4,"replicas":5,"seed":1,"out":"same.csv"}
    ]"#;
    let o = suite(dup, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate"));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn suite_writes_results_and_trends() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = r#"[
        {"experiment":"torus-cover","n":8,"replicas":20,"seed":1,"out":"t8.csv"},
        {"experiment":"torus-cover","n":12,"replicas":20,"seed":1,"out":"t12.csv"},
        {"experiment":"torus-cover","n":16,"replicas":20,"seed":1,"out":"t16.csv"}
    ]"#;
    let o = suite(manifest, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let results = dir.path().join("results");
    for f in ["t8.csv", "t12.csv", "t16.csv", "trends.json"] {
        assert!(results.join(f).exists(), "{f}");
    }
    let trends: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("trends.json")).unwrap()).unwrap();
    assert_eq!(trends[0]["series"]["points"].as_array().unwrap().len(), 3);
    assert!(trends[0]["report"]["verdict"].is_string());
}

#[test]
fn shipped_acceptance_manifest_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests/acceptance.json");
    let configs = covertime_lab::suite::load_manifest(&path).unwrap();
    for c in &configs {
        c.validate().unwrap();
    }
    let kinds: std::collections::HashSet<_> = configs.iter().map(|c| c.experiment).collect();
    assert!(kinds.len() >= 6);
}

#[test]
fn failed_suite_keeps_finished_results_and_records_the_error() {
    let dir = tempfile::tempdir().unwrap();
    // the second output lives under the first output file, so writing it fails
    let manifest = r#"[
        {"experiment":"tree-cover","b":2,"k":3,"replicas":5,"seed":1,"out":"first.csv"},
        {"experiment":"tree-cover","b":2,"k":4,"replicas":5,"seed":1,"out":"first.csv/second.csv"}
    ]"#;
    let o = suite(manifest, dir.path());
    assert!(!o.status.success());
    let results = dir.path().join("results");
    assert!(results.join("first.csv").is_file());
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("suite-errors.json")).unwrap()).unwrap();
    assert_eq!(record["failed"]["k"], 4);
    assert_eq!(record["completed"].as_array().unwrap().len(), 1);
}
