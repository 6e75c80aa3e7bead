//! Exit codes and output of the command line tool.

use std::path::Path;
use std::process::Command;

fn vnsim(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vnsim")).args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: &str = "R = 1\nf_radius = 0.5\nf_amplitude = 0.05\nh = 1\ndt = 0.5\nt_end = 2\n\
                     n_x = 3\nn_p = 6\nfit_window = 0.5, 2\nk_fit_window = 0.5, 2\noutput_dir = out\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn validate_reports_hash_and_membership() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.conf", SMALL);
    let (code, out, _) = vnsim(&["validate", &f], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("config ok, hash "), "{out}");
    assert!(out.contains("admissible class"), "{out}");
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.conf", &format!("{SMALL}colour = blue\n"));
    let (code, _, err) = vnsim(&["validate", &bad], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("line 12"), "{err}");
    let cfl = write(dir.path(), "cfl.conf", &SMALL.replace("dt = 0.5", "dt = 0.9"));
    let (code, _, err) = vnsim(&["run", &cfl], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("h/sqrt(3)"), "{err}");
    let (code, _, _) = vnsim(&["run", "missing.conf"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn blow_up_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "boom.conf", &format!("{SMALL}phi1_amplitude = 1e3\ncheckpoint_every = 1\n"));
    let (code, _, err) = vnsim(&["run", &f], dir.path());
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("checkpoint"), "{err}");
}

#[test]
fn run_resume_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.conf", &format!("{SMALL}checkpoint_every = 2\n"));
    let (code, out, err) = vnsim(&["run", &f], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("fit sup_mu"), "{out}");
    let series = std::fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    assert!(dir.path().join("out/summary.json").exists());

    let (code, _, err) = vnsim(&["resume", "out/checkpoint.vnck"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(series, std::fs::read_to_string(dir.path().join("out/series.csv")).unwrap());

    let (code, out, err) = vnsim(&["sweep", &f, "--delta", "0.5,1,2"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 4, "{out}");
    assert!(dir.path().join("out/sweep.csv").exists());
}
