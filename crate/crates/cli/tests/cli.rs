use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("qdlab-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn qdlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qdlab")).args(args).output().unwrap()
}

#[test]
fn passing_run_writes_artifacts() {
    let out = scratch("ok");
    let o = qdlab(&["thm-6-2", "--grid", "32", "--samples", "40", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for ext in ["csv", "json", "svg"] {
        assert!(out.join(format!("thm-6-2.{ext}")).is_file(), "missing {ext}");
    }
    assert!(!out.join("thm-6-2.failure.json").exists());
    let summary: String = std::fs::read_to_string(out.join("thm-6-2.json")).unwrap();
    assert!(summary.contains("\"passed\": true"));
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn config_file_overrides_flags() {
    let out = scratch("config");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "dirichlet", "count": 2, "seed": 3}"#).unwrap();
    let o = qdlab(&["thm-6-2", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("dirichlet.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn bad_inputs_exit_with_two() {
    let out = scratch("bad");
    assert_eq!(qdlab(&["no-such-experiment", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("c.json");
    std::fs::write(&cfg, r#"{"gird": 3}"#).unwrap();
    assert_eq!(qdlab(&["dirichlet", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn run_errors_write_a_failure_document() {
    let out = scratch("err");
    // a grid that does not align with the quadrilateral vertices
    let o = qdlab(&["thm-6-2", "--grid", "30", "--samples", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let doc = std::fs::read_to_string(out.join("thm-6-2.failure.json")).unwrap();
    assert!(doc.contains("violated"));
    let _ = std::fs::remove_dir_all(&out);
}
