use std::fs;
use std::process::Command;

fn irgnm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_irgnm"))
}

#[test]
fn small_grid_writes_outputs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = irgnm()
        .args(["--n-grid", "8", "--kappa", "1", "--kappa", "100", "--noise", "5", "--noise", "10", "--dump-fields", "--jobs", "1"])
        .arg("--out")
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(stdout, summary);
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",discrepancy_met")));
    for cell in ["1_5", "1_10", "100_5", "100_10"] {
        assert!(dir.path().join(cell).join("report.json").is_file());
        assert!(dir.path().join(cell).join("u_rec.csv").is_file());
    }
}

#[test]
fn identical_invocations_give_identical_summaries() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let status = irgnm()
            .args(["--n-grid", "8", "--kappa", "1", "--noise", "1", "--seed", "7", "--sequential"])
            .arg("--out")
            .arg(dir.path())
            .env("RUST_LOG", "off")
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(dir.path().join("summary.csv")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn failing_run_sets_nonzero_exit() {
    let out = irgnm()
        .args(["--n-grid", "8", "--kappa", "1", "--noise", "1", "--max-gn", "1"])
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(",max_gn"));
}

#[test]
fn invalid_arguments_are_rejected() {
    for args in [&["--bounds", "box"][..], &["--noise", "150"], &["--theta-low", "0.99"]] {
        let out = irgnm().args(args).env("RUST_LOG", "off").output().unwrap();
        assert!(!out.status.success(), "{args:?}");
    }
}
