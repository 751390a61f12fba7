use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bdtrace(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdtrace"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BDTRACE_SEED")
        .output()
        .expect("run bdtrace")
}

fn csv_rows(out: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(out.join("report.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const MINIMAL: &str = r#"
[[scenario]]
name = "tiny"
dim = 2

[scenario.domain]
kind = "unit-box"

[scenario.field]
kind = "constant"
value = [1.0, 2.0]

[[scenario.checks]]
kind = "restriction"
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_rigid_scenario_passes_to_rounding() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("unit-square-rigid.toml");
    let out = bdtrace(&["--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(dir.path());
    assert!(rows.len() >= 8);
    for r in &rows {
        assert_eq!(r[0], "unit-square-rigid");
        assert!(r[2].parse::<f64>().unwrap() < 1e-8, "{r:?}");
        assert_eq!(r[4], "true");
    }
    assert!(fs::read_to_string(dir.path().join("summary.toml")).unwrap().contains("failed = 0"));
}

#[test]
fn non_unit_frame_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{MINIMAL}\n{}",
        r#"[[scenario.charts]]
name = "top"
origin = [0.0, 0.0]
axes = [[1.0, 0.0], [0.0, 1.1]]
graph = "1"
lipschitz = 0.0
inner = [[0.0, 1.0], [0.5, 1.5]]
outer = [[-0.5, 1.5], [0.0, 2.0]]
tile = [[0.0, 1.0]]
"#
    );
    let out = bdtrace(&["--config", write_config(dir.path(), &text).to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("orthonormal") && err.contains("tiny"), "{err}");
}

#[test]
fn parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[scenario]]\nname = \"x\"\ndim = = 2\n");
    let out = bdtrace(&["--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
}

#[test]
fn unknown_check_kind_points_at_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("\"restriction\"", "\"restrict\""));
    let out = bdtrace(&["--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:1:") && err.contains("restrict"), "{err}");
}

#[test]
fn tolerances_below_rounding_fail_without_crashing() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenarios().join("sine-trig.toml"))
        .unwrap()
        .replace("seed = 5", "seed = 5\nlimit_tol = 1e-15")
        .replace("kind = \"restriction\"", "kind = \"restriction\"\ntol = 1e-15");
    let cfg = write_config(dir.path(), &text);
    let out = bdtrace(&["--config", cfg.to_str().unwrap(), "--filter", "sine-*"], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did not converge"), "{err}");
    let rows = csv_rows(&dir.path().join("o"));
    assert!(rows.iter().any(|r| r[2] == "inf" && r[4] == "false"), "{rows:?}");
    assert!(rows.iter().any(|r| r[1] == "restriction" && r[4] == "false"), "{rows:?}");
}

#[test]
fn empty_selection_gives_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bdtrace(&["--config", scenarios().to_str().unwrap(), "--filter", "no-such-*"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("report.csv")).unwrap(),
        "scenario,check,residual,tolerance,pass,wall_time_ms\n"
    );
}

#[test]
fn tables_have_decreasing_h() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("unit-square-rigid.toml");
    let out = bdtrace(&["--config", cfg.to_str().unwrap(), "--tables"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let tables: Vec<_> = fs::read_dir(dir.path().join("tables/unit-square-rigid")).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!tables.is_empty());
    for t in tables {
        let text = fs::read_to_string(&t).unwrap();
        let hs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(hs.len() >= 2 && hs.windows(2).all(|w| w[1] < w[0]), "{t:?}: {hs:?}");
    }
}

#[test]
fn tol_scale_tightens_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = bdtrace(&["--config", cfg.to_str().unwrap(), "--tol-scale", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_rows(dir.path())[0][3], "5e-5");
    let bad = bdtrace(&["--config", cfg.to_str().unwrap(), "--tol-scale", "-1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn malformed_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("unit-square-rigid.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_bdtrace"))
        .args(["--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("BDTRACE_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BDTRACE_SEED"));
}

#[test]
fn runs_are_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("unit-square-jump.toml");
    let mut csvs = Vec::new();
    for (k, jobs) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let status = bdtrace(&["--config", cfg.to_str().unwrap(), "--jobs", jobs, "--no-timing"], &out);
        assert_eq!(status.status.code(), Some(0));
        csvs.push(fs::read(out.join("report.csv")).unwrap());
    }
    assert!(csvs.windows(2).all(|w| w[0] == w[1]));
}
