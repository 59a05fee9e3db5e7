use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sarsize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarsize"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const CONFIG: &str =
    "N: 8\nfs: 1.0e6\nV_DD: 1.0\nseed: 3\nglobal:\n  pop_size: 40\n  max_evals: 400\nharness:\n  K: 256\n";

const DESIGN: &str = r#"{
  "c_unit": 1e-15, "r_sw": 200.0, "t_sample": 2e-7, "sigma_cmp": 3e-4,
  "t_d0": 5e-11, "tau_reg": 2e-11, "r_drv_msb": 100.0, "t_dff": 1e-10
}"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_then_report_with_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", CONFIG);
    let out = dir.path().join("run");
    let o = sarsize(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.code().is_some_and(|c| c == 0 || c == 2), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("SNDR"));
    for f in [
        "result.json",
        "summary.txt",
        "metrics.csv",
        "capture.csv",
        "spectrum.csv",
        "global_trace.csv",
        "local_trace.csv",
        "timings.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let o = sarsize(&["report", out.to_str().unwrap(), "--audit"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).matches("audit ok").count(), 4);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", CONFIG);
    let out = dir.path().join("run");
    sarsize(&["run", &cfg, "--seed", "11", "--out", out.to_str().unwrap()]);
    let record = fs::read_to_string(out.join("result.json")).unwrap();
    assert!(record.contains("\"seed\": 11"));
}

#[test]
fn eval_prints_coarse_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", CONFIG);
    let design = write(dir.path(), "d.json", DESIGN);
    let o = sarsize(&["eval", &cfg, "--design", &design]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["slack"].as_array().unwrap().len(), 10);
    assert!(v["power"].as_f64().unwrap() > 0.0);
}

#[test]
fn sndr_is_segment_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", CONFIG);
    let design = write(dir.path(), "d.json", DESIGN);
    let line = |m: &str| {
        let o = sarsize(&["sndr", &cfg, "--design", &design, "--segments", m]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let s = text(&o.stdout);
        s[s.find("SNDR").unwrap()..].to_string()
    };
    assert_eq!(line("1"), line("8"));
    let o = sarsize(&["sndr", &cfg, "--design", &design, "--segments", "3"]);
    assert!(!o.status.success());
}

#[test]
fn out_of_bounds_design_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", CONFIG);
    let design = write(
        dir.path(),
        "d.json",
        &DESIGN.replace("\"r_sw\": 200.0", "\"r_sw\": 1e9"),
    );
    let o = sarsize(&["eval", &cfg, "--design", &design]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("r_sw"), "{}", text(&o.stderr));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", "N: 8\nfs: 1.0e6\nV_DD: [1\n");
    let o = sarsize(&["run", &cfg, "--out", dir.path().join("r").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("line"), "{}", text(&o.stderr));
}

#[test]
fn unknown_key_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", &format!("{CONFIG}colour: blue\n"));
    let design = write(dir.path(), "d.json", DESIGN);
    let o = sarsize(&["eval", &cfg, "--design", &design]);
    assert!(o.status.success());
    assert!(text(&o.stderr).contains("colour"), "{}", text(&o.stderr));
}
