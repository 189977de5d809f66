use std::fs;
use std::path::Path;
use std::process::Command;

const SCALAR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scalar.toml");

fn deepo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_deepo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_into(cmd: &str, dir: &Path) -> String {
    let out = deepo(&[cmd, "--config", SCALAR, "--out", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{cmd}: {stdout}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn offline_and_online_are_deterministic() {
    for cmd in ["offline", "online"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let summary = run_into(cmd, a.path());
        run_into(cmd, b.path());
        assert!(summary.contains("[PASS]"), "{summary}");
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd} artifacts differ between identical runs");
        assert!(a.path().join("summary.txt").exists());
    }
}

#[test]
fn offline_scalar_summary_reports_rate() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into("offline", dir.path());
    assert!(summary.contains("linear rate rho"), "{summary}");
    let header =
        fs::read_to_string(dir.path().join("fig1_offline_convergence_inline.csv")).unwrap();
    let first = header.lines().next().unwrap();
    assert!(first.starts_with("k,cost,gap,"));
    assert!(first.contains("sigma_min_M") && first.contains("K_1_1") && first.contains("L_1_1"));
}

#[test]
fn oracle_prints_closed_form_gains() {
    let out = deepo(&["oracle", "--config", SCALAR]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("C* = 1.500000000000"), "{text}");
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "runs = 0\n").unwrap();
    let out = deepo(&["offline", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&path, "unknown_key = 3\n").unwrap();
    let out = deepo(&["oracle", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_assertion_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(SCALAR).unwrap().replacen(
        "eta_h_sweep = [1.0, 1.5]",
        "eta_h_sweep = [1.0, 5.0]",
        1,
    );
    let path = dir.path().join("overshoot.toml");
    fs::write(&path, text).unwrap();
    let out = deepo(&[
        "offline",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{stdout}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("[FAIL]"));
}
