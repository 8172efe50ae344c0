use std::path::Path;
use std::process::{Command, Output};

fn gw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gw"))
        .args(args)
        .output()
        .expect("gw runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn lebesgue_csv(depth: u32) -> String {
    let n = 1usize << depth;
    let mut s = String::from("x1,mass\n");
    for i in 0..n {
        s.push_str(&format!("{},{}\n", (i as f64 + 0.5) / n as f64, 1.0 / n as f64));
    }
    s
}

#[test]
fn constants_on_lebesgue_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 4}"#);
    let sigma = write(dir.path(), "s.csv", &lebesgue_csv(4));
    let out = gw(&["constants", "--config", &cfg, "--sigma", &sigma, "--w", &sigma, "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["a2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(v.get("timestamp").is_none());
    assert_eq!(v["provenance"]["grid"]["r"], 6);
}

#[test]
fn zero_w_gives_zero_testing_and_norm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 3}"#);
    let sigma = write(dir.path(), "s.csv", &lebesgue_csv(3));
    let w = write(dir.path(), "w.csv", "x1,mass\n");
    let out = gw(&["constants", "--config", &cfg, "--sigma", &sigma, "--w", &w, "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["testing"], 0.0);
    assert_eq!(v["g_norm"], 0.0);
}

#[test]
fn malformed_csv_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 3}"#);
    let sigma = write(dir.path(), "s.csv", "x1,mass\n0.1,0.5\n0.2,abc\n");
    let out = gw(&["constants", "--config", &cfg, "--sigma", &sigma, "--w", &sigma]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn negative_mass_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 3}"#);
    let sigma = write(dir.path(), "s.csv", "x1,mass\n0.1,-0.5\n");
    let out = gw(&["constants", "--config", &cfg, "--sigma", &sigma, "--w", &sigma]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
}

#[test]
fn unknown_lemma_exits_2_and_empty_selection_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 4, "corpus": {"size": 3}}"#);
    let out = gw(&["lemmas", "bogus", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
    let out = gw(&["lemmas", "--config", &cfg, "--json"]);
    assert!(out.status.success());
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap(), serde_json::json!([]));
}

#[test]
fn lemmas_orthogonality_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 5, "corpus": {"size": 5}}"#);
    let out_dir = dir.path().join("out");
    let out = gw(&["lemmas", "orthogonality", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let mut rd = csv::Reader::from_path(out_dir.join("lemmas.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "orthogonality");
    assert!(rows[0][2].parse::<f64>().unwrap() < 1e-10);
}

#[test]
fn equivalence_is_byte_identical_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 4, "corpus": {"size": 6}}"#);
    let a = gw(&["equivalence", "--config", &cfg, "--seed", "3", "--json"]);
    let b = gw(&["equivalence", "--config", &cfg, "--seed", "3", "--json"]);
    let c = gw(&["equivalence", "--config", &cfg, "--seed", "4", "--json"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"dept": 4}"#);
    let out = gw(&["pi-good", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grid_dump_and_pi_good() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 3, "r": 2, "pi_good_trials": 200}"#);
    let out = gw(&["grid", "--config", &cfg, "--seed", "5", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["root"]["good"], true);
    assert_eq!(v["root"]["children"].as_array().unwrap().len(), 2);
    let out = gw(&["pi-good", "--config", &cfg, "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 4);
    assert_eq!(v[0]["exact"], 1.0);
}

#[test]
fn stopping_tree_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 6, "r": 2}"#);
    let sigma = write(dir.path(), "s.csv", &lebesgue_csv(6));
    let f = write(dir.path(), "f.csv", "x1,value\n0.5,1\n");
    let out = gw(&["stopping", "--config", &cfg, "--sigma", &sigma, "--w", &sigma, "--f", &f, "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["nodes"].as_u64().unwrap() >= 2);
    assert_eq!(v["pass"], true);
}

#[test]
fn missing_weights_is_a_usage_error() {
    let out = gw(&["constants"]);
    assert_eq!(out.status.code(), Some(2));
}
