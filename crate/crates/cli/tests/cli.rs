use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_isospec"));
    c.env_remove("ISOSPEC_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("isospec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of an isospec CSV as (header, rows).
fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# isospec-csv-v1"));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn build_ex3x3_is_non_invertible() {
    let dir = scratch("build3");
    let out = dir.join("m.json");
    let o = run(&["build", "--fixture", "ex3x3", "--params", "E1=1,E2=2,E3=3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out);
    assert_eq!(m["schema"], "isospec-model-v1");
    assert_eq!(m["case"], "non_invertible");
    assert_eq!(m["kernel_set"], serde_json::json!([2]));
    let v = run(&["verify", "--model", s(&out)]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
    let r: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(r["all_pass"], true);
}

#[test]
fn generated_pair_round_trips_through_build() {
    let dir = scratch("gen");
    let o = run(&["generate", "--dim1", "6", "--dim2", "4", "--seed", "7", "--out-dir", s(&dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = dir.join("theta1.json");
    let x = dir.join("x.json");
    let model = dir.join("model.json");
    let b = run(&["build", "--theta1", s(&t), "--x", s(&x), "--out", s(&model)]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    let v = run(&["verify", "--model", s(&model)]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn square_singular_x_is_a_domain_error() {
    let dir = scratch("singular");
    let t = dir.join("t.json");
    let x = dir.join("x.csv");
    std::fs::write(&t, r#"{"rows":2,"cols":2,"entries":[[1,0],[0,0],[0,0],[2,0]]}"#).unwrap();
    std::fs::write(&x, "# isospec-csv-v1\n1,0,0,0\n0,0,0,0\n").unwrap();
    let o = run(&["build", "--theta1", s(&t), "--x", s(&x)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no-go"), "{err}");
}

#[test]
fn corrupted_model_fails_verification() {
    let dir = scratch("corrupt");
    let out = dir.join("m.json");
    assert_eq!(run(&["build", "--fixture", "ex3x3", "--out", s(&out)]).status.code(), Some(0));
    let mut m = json(&out);
    let e = &mut m["theta2"]["entries"][1][0];
    *e = serde_json::json!(e.as_f64().unwrap() + 0.25);
    std::fs::write(&out, serde_json::to_string(&m).unwrap()).unwrap();
    let v = run(&["verify", "--model", s(&out)]);
    assert_eq!(v.status.code(), Some(3));
    let r: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(r["all_pass"], false);
    assert!(!r["failures"].as_array().unwrap().is_empty());
}

#[test]
fn coherent_demo_normalization() {
    let dir = scratch("demo");
    let o = run(&["coherent", "--fixture", "coherent_demo", "--out-dir", s(&dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv(&dir.join("states.csv"));
    let (r, n) = (col(&h, "abs_z"), col(&h, "normalization"));
    assert_eq!(rows.len(), 20 * 16);
    for row in &rows {
        let want = (-row[r] * row[r] / 4.0).exp();
        assert!((row[n] - want).abs() < 1e-9, "|z| = {}: {} vs {want}", row[r], row[n]);
    }
    let report = json(&dir.join("coherent.json"));
    assert_eq!(report["measure"]["status"], "solved");
}

#[test]
fn linear_eps_resolution_residuals() {
    let dir = scratch("resolution");
    let o = run(&["coherent", "--fixture", "shift", "--params", "s=1", "--out-dir", s(&dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv(&dir.join("resolution.csv"));
    let res = col(&h, "residual");
    assert_eq!(rows.len(), 50);
    let worst = rows.iter().map(|r| r[res]).fold(0.0, f64::max);
    assert!(worst < 1e-7, "{worst}");
}

/// Diagonal Theta1 with eps_n = 2(1 - 2^-n) and a raising X; the radius is sqrt 2.
fn bounded_eps_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let n = 12;
    let mut t = vec![[0.0, 0.0]; n * n];
    for k in 0..n {
        t[k * n + k] = [2.0 * (1.0 - 0.5f64.powi(k as i32)), 0.0];
    }
    let mut x = vec![[0.0, 0.0]; n * (n - 1)];
    for k in 0..n - 1 {
        x[(k + 1) * (n - 1) + k] = [1.0, 0.0];
    }
    let tp = dir.join("theta1.json");
    let xp = dir.join("x.json");
    let m = |rows: usize, cols: usize, e: &[[f64; 2]]| serde_json::json!({"rows": rows, "cols": cols, "entries": e});
    std::fs::write(&tp, m(n, n, &t).to_string()).unwrap();
    std::fs::write(&xp, m(n, n - 1, &x).to_string()).unwrap();
    (tp, xp)
}

#[test]
fn bounded_eps_has_finite_radius() {
    let dir = scratch("radius");
    let (t, x) = bounded_eps_inputs(&dir);
    let out = dir.join("out");
    let o = run(&["coherent", "--theta1", s(&t), "--x", s(&x), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("coherent.json"));
    let rho = r["convergence"]["rho"].as_f64().unwrap();
    assert!((rho - 2f64.sqrt()).abs() < 1e-9, "{rho}");
    assert_eq!(r["measure"]["status"], "unavailable");
    let names: Vec<&str> = r["report"]["entries"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"sum_form"), "{names:?}");
    let o = run(&["coherent", "--theta1", s(&t), "--x", s(&x), "--max-radius", "1.5", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    for d in [&a, &b] {
        let o = run(&["coherent", "--fixture", "coherent_demo", "--seed", "11", "--out-dir", s(d)]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["states.csv", "resolution.csv", "quantize_z.csv", "coherent.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m1 = run(&["build", "--fixture", "block"]).stdout;
    let m2 = run(&["build", "--fixture", "block"]).stdout;
    assert_eq!(m1, m2);
}

#[test]
fn env_seed_is_used_when_flag_absent() {
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    let o = bin()
        .args(["generate", "--dim1", "5", "--dim2", "3", "--out-dir", s(&a)])
        .env("ISOSPEC_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["generate", "--dim1", "5", "--dim2", "3", "--seed", "42", "--out-dir", s(&b)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("x.json")).unwrap(), std::fs::read(b.join("x.json")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command":"build","fixture":"ex3x3","params":{"E1":1,"E2":"2","E3":5},"out":"model.json"}"#,
    )
    .unwrap();
    let o = run(&["--config", s(&cfg), "build"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.join("model.json"));
    assert_eq!(m["fixture"]["id"], "ex3x3");
    let o = run(&["--config", s(&cfg), "build", "--params", "E3=7", "--out", s(&dir.join("b.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let m = json(&dir.join("b.json"));
    let e3 = &m["fixture"]["params"]["E3"];
    assert!(e3.to_string().contains('7'), "{e3}");
    let o = run(&["--config", s(&cfg), "verify"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn input_errors_exit_one() {
    let dir = scratch("bad");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(run(&["verify", "--model", s(&bad)]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--model", s(&dir.join("missing.json"))]).status.code(), Some(1));
    assert_eq!(run(&["build", "--fixture", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["build", "--fixture", "ex3x3", "--params", "E9=1"]).status.code(), Some(1));
    assert_eq!(run(&["build", "--fixture", "shift", "--truncation", "3"]).status.code(), Some(1));
    assert_eq!(run(&["build"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn quantize_matches_ladder() {
    let o = run(&["quantize", "--fixture", "shift", "--symbol", "zbar", "--order", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# isospec-csv-v1\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 20);
}

#[test]
fn fixture_list_and_build() {
    let o = run(&["fixture", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["ex2x2", "ex3x3", "shift", "block", "coherent_demo"] {
        assert!(text.contains(id));
    }
    let o = run(&["fixture", "build", "block", "--truncation", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["theta1"]["rows"], 12);
}
