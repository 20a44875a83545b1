use std::path::Path;
use std::process::{Command, Output};

fn rotgas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotgas")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn channel_harmonic_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"grid": {"r_max": 7, "z_max": 7, "nr": 56, "nz": 112}, "g_list": [0], "n_max": 3}"#,
    );
    let out = dir.path().join("out");
    let o = rotgas(&["channel", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("channel.csv"));
    assert_eq!(rows[0][..3], ["g", "n", "energy"]);
    assert_eq!(rows.len(), 5);
    for (n, row) in rows[1..].iter().enumerate() {
        let e: f64 = row[2].parse().unwrap();
        let exact = 2.0 * n as f64 + 3.0;
        assert!((e - exact).abs() < 0.01 * exact, "E_{n} = {e}");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("channel.json")).unwrap()).unwrap();
    assert_eq!(meta["subcommand"], "channel");
    assert_eq!(meta["config"]["n_max"], 3);
    assert_eq!(meta["config"]["trap"]["s"], 2.0);
}

#[test]
fn phase_scan_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"omega_list": [0.0, 0.5], "g_list": [0.1, 1.0], "grids": {"nr": 24, "nz": 24}, "seed": 7}"#,
    );
    let mut bytes = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(run);
        let o = rotgas(&["phase", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = csv_rows(&out.join("phase.csv"));
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0][0], "omega");
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("phase.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 7);
        assert_eq!(meta["result"]["rows"], 4);
        bytes.push((std::fs::read(out.join("phase.csv")).unwrap(), std::fs::read(out.join("phase.json")).unwrap()));
    }
    assert!(bytes[0] == bytes[1]);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases = [
        r#"{"omega": 2.5, "g": 1.0}"#,
        r#"{"omega": 0.5, "g": 1.0, "bogus": 1}"#,
        r#"{"omega": 0.5, "g": -1.0}"#,
        r#"{"omega": 0.5, "g": "#,
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let o = rotgas(&["dm", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        let e = error_json(&o);
        assert_eq!(e["kind"], "config");
        assert_eq!(e["exit_code"], 2);
    }
    let o = rotgas(&["dm", "--out", out, "--set", "omega=2.5", "--set", "g=1"]);
    let msg = error_json(&o)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("omega"), "{msg}");
}

#[test]
fn convergence_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotgas(&[
        "gp3d",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        r#"grid={"r_max": 6, "z_max": 5, "nr": 24, "nz": 20}"#,
        "--set",
        "omega=0.5",
        "--set",
        "g=10",
        "--set",
        "tol=1e-14",
        "--set",
        "max_iter=2",
        "--set",
        "screen_iter=0",
        "--set",
        "with_dm=false",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let e = error_json(&o);
    assert_eq!(e["kind"], "convergence");
    assert!(e["iterations"].as_u64().unwrap() <= 2);
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = rotgas(&["toy", "--out", blocker.to_str().unwrap(), "--set", "particles=2", "--set", "omega_list=[1.0]"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["kind"], "io");
}

#[test]
fn toy_gap_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotgas(&[
        "toy",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "particles=2",
        "--set",
        "modes=3",
        "--set",
        "omega_list=[1.8]",
        "--set",
        "coupling_list=[10]",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("toy.csv"));
    let gap_col = rows[0].iter().position(|h| h == "gap").unwrap();
    let gap: f64 = rows[1][gap_col].parse().unwrap();
    assert!(gap >= 1e-6, "gap {gap}");
}

#[test]
fn gp3d_and_stability_write_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let grid = r#"grid={"r_max": 6, "z_max": 5, "nr": 24, "nz": 20}"#;
    let o = rotgas(&["gp3d", "--out", out, "--set", grid, "--set", "omega=0.5", "--set", "g=1", "--set", "m_max=4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let slice = csv_rows(&dir.path().join("gp3d_slice.csv"));
    assert_eq!(slice[0], ["x", "y", "density", "phase"]);
    assert_eq!(slice.len(), 1 + 24 * 32);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("gp3d.json")).unwrap()).unwrap();
    assert_eq!(meta["result"]["converged"], true);
    assert_eq!(meta["result"]["m_max"], 4);

    let o = rotgas(&["stability", "--out", out, "--set", grid, "--set", "omega=0.5", "--set", "g=10", "--set", "n_list=[1,2]"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("stability.csv")).len(), 3);
}
