use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diqkd"));
    cmd.env_remove("DIQKD_THREADS").env("RUST_LOG", "error");
    cmd
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = exec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn analytic_curve_matches_closed_form() {
    let text = stdout(&["curve", "--ineq", "chsh", "--analytic", "--points", "11"]);
    assert_eq!(text, golden("curve_chsh_analytic.csv"));
    assert!(text.starts_with("g,g_normalized,f,mu,nu\n"));
    let rows = rows(&text);
    assert_eq!(rows.len(), 11);
    for r in rows {
        let f = 0.5 + 0.5 * (2.0 - r[0] * r[0] / 4.0).max(0.0).sqrt();
        assert!((r[2] - f).abs() < 1e-11, "{r:?}");
        assert!(r[3] + r[4] * r[0] >= f - 1e-9);
    }
}

#[test]
fn relaxation_curve_brackets_the_closed_form() {
    let text = stdout(&["curve", "--ineq", "chsh", "--level", "2", "--points", "9"]);
    for r in rows(&text) {
        let f = 0.5 + 0.5 * (2.0 - r[0] * r[0] / 4.0).max(0.0).sqrt();
        assert!(r[2] >= f - 1e-9 && r[2] <= f + 1e-3, "{r:?}");
    }
}

#[test]
fn keyrate_sweep() {
    let text = stdout(&["keyrate", "--analytic", "--steps", "16"]);
    assert_eq!(text, golden("keyrate_chsh_analytic.csv"));
    let rows = rows(&text);
    let last = rows.last().unwrap();
    assert_eq!((last[0], last[1], last[3]), (1.0, 0.0, 1.0));
    let critical = text.lines().last().unwrap();
    let qber: f64 = critical.rsplit("qber=").next().unwrap().parse().unwrap();
    assert!((qber - 0.05).abs() <= 0.003, "{critical}");
}

#[test]
fn simulation_report_is_stable() {
    let args = ["simulate", "--preset", "chsh", "--v", "1", "--N", "1000", "--seed", "1"];
    let text = stdout(&args);
    assert_eq!(text, golden("simulate_chsh_v1_n1000_seed1.json"));
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["g_est", "std_error", "qber_emp", "h_min_bound", "n_pub", "key_len", "key_prefix_hex"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["qber_emp"], 0.0);
}

#[test]
fn simulation_produces_key_at_full_visibility() {
    let text = stdout(&["simulate", "--preset", "chsh", "--v", "1", "--N", "200000", "--seed", "3", "--Nest", "20000"]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    let key_len = report["key_len"].as_u64().unwrap();
    assert!(key_len > 0);
    assert_eq!(report["key_prefix_hex"].as_str().unwrap().len(), 16);
}

#[test]
fn outputs_are_reproducible_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str], threads: Option<&str>| {
        let path = dir.path().join(name);
        let mut cmd = bin();
        if let Some(t) = threads {
            cmd.env("DIQKD_THREADS", t);
        }
        let status = cmd
            .args(["curve", "--ineq", "chsh", "--level", "2", "--points", "7", "-o"])
            .arg(&path)
            .args(extra)
            .status()
            .unwrap();
        assert!(status.success());
        let csv = std::fs::read(&path).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{name}.manifest.json"))).unwrap())
                .unwrap();
        (csv, manifest)
    };
    let (a, ma) = run("a.csv", &[], None);
    let (b, mb) = run("b.csv", &["--sequential"], Some("1"));
    assert_eq!(a, b);
    assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
    assert_eq!(ma["command"], "curve");
    assert_eq!(ma["parameters"]["source"]["level"], "2");
    assert_eq!(ma["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn sum_of_squares_grid_passes() {
    let out = exec(&["verify-sos", "--grid", "50"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max residual"));
    assert_eq!(rows(&String::from_utf8(out.stdout).unwrap()).len(), 50);
}

#[test]
fn local_bounds_of_preset_files() {
    let path = |n: &str| repo_file(&format!("presets/{n}.json")).to_string_lossy().into_owned();
    assert_eq!(stdout(&["local-bound", &path("chsh")]).trim(), "2");
    assert_eq!(stdout(&["local-bound", &path("chained3")]).trim(), "4");
    assert_eq!(stdout(&["local-bound", &path("cglmp3")]).trim(), "2");
}

#[test]
fn exit_codes() {
    assert_eq!(exec(&["curve", "--ineq", "nope"]).status.code(), Some(2));
    assert_eq!(exec(&["local-bound", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(exec(&["keyrate", "--v-min", "2"]).status.code(), Some(2));
    assert_eq!(exec(&["verify-sos", "--g0", "3"]).status.code(), Some(2));
    assert_eq!(exec(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        exec(&["curve", "--ineq", "chsh", "--level", "2", "--g-max", "3", "--points", "3"]).status.code(),
        Some(3)
    );
}
