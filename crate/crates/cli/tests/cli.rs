use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vortexlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortexlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn lists_the_builtin_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = vortexlab(dir.path(), &["--threads", "1", "scenario", "list"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names.len(), 5);
    assert!(names.iter().any(|n| n == "llg-bubbling"));
}

#[test]
fn renorm_prints_energy_and_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(
        dir.path(),
        "v.json",
        r#"[{"position": [0.5, 0.0], "degree": 1}, {"position": [-0.5, 0.0], "degree": -1}]"#,
    );
    let o = vortexlab(dir.path(), &["renorm", "--domain", "plane", "--vortices", &v]);
    assert!(o.status.success());
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // -pi sum_{m != n} d_m d_n log|a_m - a_n| vanishes at unit separation.
    assert!(j["W"].as_f64().unwrap().abs() < 1e-12);
    // The dipole attracts: dW/da_1 = 2 pi (1, 0).
    let gx = j["gradW"][0][0].as_f64().unwrap();
    assert!((gx - 2.0 * std::f64::consts::PI).abs() < 1e-12, "{gx}");
    assert_eq!(j["method"], "closed-form");
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"epsilon": 0.1}"#);
    let o = vortexlab(dir.path(), &["simulate-gl", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let o = vortexlab(dir.path(), &["scenario", "run", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ode_tracks_compare_to_zero_with_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ode.json",
        r#"{
            "vortices": [{"position": [0.3, 0.0], "degree": 1, "q": 0.5}],
            "alpha0": 1.0,
            "model": {"domain": {"kind": "unit-disk"}, "bc": {"kind": "dirichlet", "g": {"reference": [{"position": [0.0, 0.0], "degree": 1}]}}, "method": "closed-form"},
            "t_end": 0.5
        }"#,
    );
    let out = dir.path().join("ode");
    let o = vortexlab(&out, &["ode", "--kind", "llg", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("tracks.csv").is_file());
    let o = vortexlab(&out, &["compare", "--pde", out.to_str().unwrap(), "--ode", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["sup"].as_f64(), Some(0.0));
}

fn gl_config(extra: &str) -> String {
    format!(
        r#"{{
            "epsilon": 0.0625, "alpha0": 1.0, "t_end": 0.004, "snapshot_stride": 40,
            "domain": {{"kind": "unit-disk"}},
            "bc": {{"kind": "dirichlet", "g": {{"reference": [{{"position": [0.0, 0.0], "degree": 1}}]}}}},
            "grid_size": 129,
            "vortices": [{{"position": [0.24, 0.0], "degree": 1}}]
            {extra}
        }}"#
    )
}

#[test]
fn simulate_gl_writes_tracks_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gl.json", &gl_config(""));
    let out = dir.path().join("run");
    let o = vortexlab(&out, &["simulate-gl", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["tracks.csv", "series.csv", "events.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let n = fs::read_dir(out.join("fields"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "fld"))
        .count();
    assert!(n >= 2);
}

#[test]
fn stopped_runs_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    // A collision radius larger than the distance to the boundary stops the run at once.
    let cfg = write(dir.path(), "llg.json", &gl_config(r#", "r_min": 0.9, "save_fields": false"#));
    let o = vortexlab(&dir.path().join("run"), &["simulate-llg", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
