//! End-to-end checks of the `nlc2` binary: subcommands, files and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn nlc2(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlc2"))
        .args(args)
        .current_dir(dir)
        .env_remove("NLC2_THREADS")
        .output()
        .expect("spawn nlc2")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL_RUN: &str = "\
[grid]
nx = 16
[scheme]
dt = 0.01
t_end = 0.1
[ic]
kind = taylor_green
amplitude = 0.5
[diagnostics]
checkpoint_stride = 5
[output]
dir = out
";

const DEFECTS: &str = "\
[grid]
nx = 64
[params]
mode = constrained
[scheme]
dt = 0.004
t_end = 0.2
[ic]
kind = defect_pair
separation = 1.2
core_radius = 0.3
";

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn run_writes_diagnostics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.ini", SMALL_RUN);
    let o = nlc2(dir.path(), &["run", "run.ini"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,"));
    assert_eq!(csv.lines().count(), 1 + 11);
    for step in [5, 10] {
        assert!(dir.path().join(format!("out/checkpoint_{step:08}.nlc2")).exists());
    }
    assert!(stdout(&o).contains("10 steps"));
}

#[test]
fn resume_continues_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.ini", SMALL_RUN);
    assert_eq!(code(&nlc2(dir.path(), &["run", "run.ini"])), 0);
    let o = nlc2(
        dir.path(),
        &[
            "resume",
            "out/checkpoint_00000005.nlc2",
            "run.ini",
            "--diagnostics",
            "tail.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("step 5"));
    let rows = std::fs::read_to_string(dir.path().join("tail.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6);

    // A final checkpoint is already at t_end.
    let o = nlc2(dir.path(), &["resume", "out/checkpoint_00000010.nlc2", "run.ini"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diagnose_reads_both_file_kinds() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.ini", SMALL_RUN);
    assert_eq!(code(&nlc2(dir.path(), &["run", "run.ini"])), 0);
    let table = nlc2(dir.path(), &["diagnose", "out/diagnostics.csv"]);
    assert_eq!(code(&table), 0);
    assert!(stdout(&table).contains("11 rows"));
    let ck = nlc2(
        dir.path(),
        &["diagnose", "out/checkpoint_00000010.nlc2", "--config", "run.ini"],
    );
    assert_eq!(code(&ck), 0);
    assert!(stdout(&ck).contains("16x16 grid"));

    write(dir.path(), "junk.csv", "not,a\ntable\n");
    assert_eq!(code(&nlc2(dir.path(), &["diagnose", "junk.csv"])), 1);
}

#[test]
fn ic_preview_reports_windings() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.ini", DEFECTS);
    let o = nlc2(dir.path(), &["ic-preview", "d.ini", "--checkpoint", "ic.nlc2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("winding"));
    assert!(dir.path().join("ic.nlc2").exists());
}

#[test]
fn config_reference_lists_every_section() {
    let o = nlc2(Path::new("."), &["config-reference"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for section in [
        "[grid]",
        "[params]",
        "[scheme]",
        "[ic]",
        "[diagnostics]",
        "[output]",
        "[study]",
    ] {
        assert!(text.contains(section), "missing {section}");
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nlc2(dir.path(), &["run", "missing.ini"])), 1);

    write(
        dir.path(),
        "bad.ini",
        "[grid]\nnx = 15\n[scheme]\ndt = 0.1\nt_end = 1\n",
    );
    assert_eq!(code(&nlc2(dir.path(), &["run", "bad.ini"])), 2);
    write(
        dir.path(),
        "typo.ini",
        "[grid]\nnx = 16\nnz = 3\n[scheme]\ndt = 0.1\nt_end = 1\n",
    );
    assert_eq!(code(&nlc2(dir.path(), &["run", "typo.ini"])), 2);

    write(
        dir.path(),
        "blow.ini",
        "[grid]\nnx = 16\n[scheme]\ndt = 0.5\nt_end = 50\n[ic]\nkind = random_bandlimited\namplitude = 50\n",
    );
    let o = nlc2(dir.path(), &["run", "blow.ini"]);
    assert_eq!(code(&o), 3);
    // The rows up to the failure are still written.
    assert!(dir.path().join("diagnostics.csv").exists());

    write(dir.path(), "tight.ini", &format!("{DEFECTS}[diagnostics]\neps0 = 2\n"));
    let o = nlc2(dir.path(), &["run", "tight.ini", "--continuation"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn continuation_books_one_event() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.ini", &format!("{DEFECTS}[diagnostics]\neps0 = 4\n"));
    let o = nlc2(dir.path(), &["run", "c.ini", "--continuation"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 segment(s), 1 flag(s)"));
    assert!(!stdout(&o).contains("warning"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.ini", SMALL_RUN);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_nlc2"))
            .args(["run", "run.ini", "--diagnostics", &format!("t{threads}.csv")])
            .current_dir(dir.path())
            .env("NLC2_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("0")), 2);
    assert_eq!(code(&run("many")), 2);
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("3")), 0);
    let a = std::fs::read(dir.path().join("t1.csv")).unwrap();
    let b = std::fs::read(dir.path().join("t3.csv")).unwrap();
    assert_eq!(a, b, "diagnostics depend on the thread count");
}

#[test]
fn study_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.ini",
        "[grid]\nnx = 16\n[scheme]\ndt = 0.01\nt_end = 0.05\n[ic]\nkind = taylor_green\n\
         [study]\nparameter = N\nladder = 10, 100, 1000\n",
    );
    let o = nlc2(dir.path(), &["study", "s.ini", "--csv", "levels.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(dir.path().join("levels.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3);
}
