use std::path::Path;
use std::process::Command;

fn rfm(args: &[&str], config: &str, out: &Path) -> std::process::Output {
    let cfg = out.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rfm"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const DEMO: &str = r#"{
  "problem": { "solution": "sin(3*x) + exp(x)", "R": 0.5, "c": -1 },
  "features": { "kind": "plain", "features": 30, "band": 8 },
  "grid": { "n": 400 }
}"#;

#[test]
fn demo_solve_is_accurate_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfm(&["solve"], DEMO, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&dir.path().join("solve_seed0.json"));
    assert!(rec["e0"].as_f64().unwrap() <= 1e-6);
    for key in [
        "seed",
        "N",
        "P",
        "N_p",
        "S",
        "R",
        "n",
        "rcond",
        "loss",
        "e1",
        "e2",
        "rank",
        "kappa",
        "wall_time_s",
    ] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rec["config"]["problem"]["solution"], "sin(3*x) + exp(x)");
    let csv = std::fs::read_to_string(dir.path().join("solution_seed0.csv")).unwrap();
    assert!(csv.starts_with("# rfm-solution v1\nx,u_N,u_true,error\n"));
    assert_eq!(csv.lines().count(), 2 + 201);
}

#[test]
fn same_seed_gives_identical_records_apart_from_wall_time() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(rfm(&["solve", "--seeds", "3"], DEMO, d.path()).status.success());
    }
    let mut ra = json(&a.path().join("solve_seed3.json"));
    let mut rb = json(&b.path().join("solve_seed3.json"));
    ra.as_object_mut().unwrap().remove("wall_time_s");
    rb.as_object_mut().unwrap().remove("wall_time_s");
    assert_eq!(ra, rb);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        r#"{"problem": {"R": 1}}"#,
        r#"{"problem": {"solution": "sin(x)"}}"#,
        r#"{"problem": {"solution": "sin(x", "R": 1}}"#,
        r#"{"problem": {"solution": "sin(x)", "R": -1}}"#,
        r#"{"problem": {"solution": "sin(x)", "R": 1}, "seeds": []}"#,
        r#"not json"#,
    ] {
        let o = rfm(&["solve"], bad, dir.path());
        assert_eq!(
            o.status.code(),
            Some(2),
            "{bad}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = rfm(&["converge-r"], DEMO, dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_finite_results_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfm(
        &["solve"],
        r#"{"problem": {"solution": "exp(1000*x)", "R": 1}}"#,
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn patched_sparsity_has_one_band_per_patch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "problem": { "solution": "sin(x)", "R": 4 },
      "features": { "kind": "pum", "patches": 5, "per_patch": 10, "band": 1 },
      "grid": { "n": 501 }
    }"#;
    assert!(rfm(&["spectrum"], cfg, dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("sparsity_seed0.csv")).unwrap();
    assert!(text.starts_with("# rfm-sparsity v1"));
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); 6];
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let (r, c): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        // the two boundary rows come last
        if r < 499 {
            rows[c / 20].push(r);
        }
    }
    let ranges: Vec<(usize, usize)> = rows
        .iter()
        .map(|r| (*r.iter().min().unwrap(), *r.iter().max().unwrap()))
        .collect();
    // bands overlap their neighbours only
    for p in 0..4 {
        assert!(ranges[p].1 < ranges[p + 2].0);
        assert!(ranges[p].1 >= ranges[p + 1].0);
    }
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum_seed0.csv")).unwrap();
    assert!(spectrum.starts_with("# rfm-spectrum v1\nm,sigma,upper_bound,sandwich_lower,sandwich_upper,floor\n"));
}

#[test]
fn probability_suites_write_one_csv_per_claim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "problem": { "solution": "sin(x)", "R": 0.5, "c": 1 },
      "features": { "kind": "plain", "features": 50, "band": 1 },
      "probability": { "rho_trials": 2000, "event_trials": 20000, "moment_trials": 20000 }
    }"#;
    let o = rfm(&["probability"], cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["rho", "event", "moment", "quartic"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# rfm-probability v1"));
        lines.next();
        assert!(lines.all(|l| l.ends_with(",true")), "{name}: {text}");
    }
}

#[test]
fn converge_writes_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfm(&["converge-n", "--seeds", "0..4"], DEMO, dir.path());
    assert!(o.status.success());
    let fit = json(&dir.path().join("converge_n_fit.json"));
    assert_eq!(fit["points"].as_array().unwrap().len(), 6);
    let csv = std::fs::read_to_string(dir.path().join("converge_n.csv")).unwrap();
    assert!(csv.starts_with("# rfm-converge v1\nparam,r,median_loss,median_e0,median_rel_e0,seeds\n"));
    let o = rfm(
        &["converge-n"],
        &DEMO.replace("\"grid\"", "\"sweep\": [5, 10], \"grid\""),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}
