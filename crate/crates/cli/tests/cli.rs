//! Drives the `hsa` binary on the two-relay example.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EX1: &str = "U = 2\nV = 2\nU0 = 2\nV0 = 1\nT = 0\n";

fn hsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsa")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex1.txt"), EX1).unwrap();
    dir
}

#[test]
fn rates_for_feasible_and_infeasible() {
    let d = setup();
    let o = hsa(d.path(), &["rates", "--config", "ex1.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("feasible=true"));
    assert!(out.contains("rx2_min=1/2"));
    assert!(out.contains("measured=(1,1,1/2,1/2)"));

    let o = hsa(d.path(), &["rates", "--config", "ex1.txt", "--set", "T=2"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("feasible=false"));
    assert!(out.contains("U0*V0 = 2 <= T = 2"));
}

#[test]
fn mds_keys_simulate_pipeline() {
    let d = setup();
    let o = hsa(d.path(), &["find-mds", "--config", "ex1.txt", "--out", "mds.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mds = fs::read_to_string(d.path().join("mds.txt")).unwrap();
    assert!(mds.contains("q=5"));

    let o = hsa(d.path(), &["deal", "--config", "ex1.txt", "--mds", "mds.txt", "--seed", "3", "--out", "keys.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = hsa(
        d.path(),
        &[
            "simulate", "--config", "ex1.txt", "--mds", "mds.txt", "--keys", "keys.txt",
            "--pattern", "U1=3 U2=3 V1=2,3 V2=2,1", "--input-seed", "4", "--out", "tr.txt",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("decode correct"));
    let tr = fs::read_to_string(d.path().join("tr.txt")).unwrap();
    assert!(tr.starts_with("# hsa transcript"));
    assert!(tr.contains("S1: (1,2) (2,1) (2,2)"));

    // same seeds, dealt inline, give the same transcript
    let o = hsa(
        d.path(),
        &["simulate", "--config", "ex1.txt", "--seed", "3", "--pattern", "U1=3 U2=3 V1=2,3 V2=2,1", "--input-seed", "4"],
    );
    assert_eq!(stdout(&o), tr);
}

#[test]
fn simulate_rejects_inadmissible_pattern() {
    let d = setup();
    let o = hsa(d.path(), &["simulate", "--config", "ex1.txt", "--pattern", "U1=1 U2=1 V1=3,0 V2=3,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid dropout pattern"));
}

#[test]
fn mismatched_matrix_is_refused() {
    let d = setup();
    hsa(d.path(), &["find-mds", "--config", "ex1.txt", "--out", "mds.txt"]);
    let o = hsa(d.path(), &["deal", "--config", "ex1.txt", "--set", "V0=2", "--mds", "mds.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("was built for"));
}

#[test]
fn verify_security_and_negative_control() {
    let d = setup();
    let o = hsa(d.path(), &["verify-security", "--config", "ex1.txt", "--out", "sec.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sec = fs::read_to_string(d.path().join("sec.txt")).unwrap();
    assert_eq!(sec.lines().filter(|l| l.starts_with("kind=relay")).count(), 50);
    assert_eq!(sec.lines().filter(|l| l.starts_with("kind=server")).count(), 25);
    assert!(sec.lines().all(|l| l.ends_with("pass=true")));

    let o = hsa(d.path(), &["verify-security", "--config", "ex1.txt", "--unmasked", "--out", "bad.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("result=FAIL"));
}

#[test]
fn verify_security_on_pattern_file() {
    let d = setup();
    fs::write(d.path().join("pats.txt"), "U1=3 U2=3 V1=3,3 V2=3,3\nU1=3 U2=3 V1=2,1 V2=2,1\n").unwrap();
    let o = hsa(d.path(), &["verify-security", "--config", "ex1.txt", "--patterns", "pats.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("patterns=2"));
}

#[test]
fn campaign_writes_reports() {
    let d = setup();
    let o = hsa(d.path(), &["campaign", "--config", "ex1.txt", "--out", "rep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).ends_with("result=PASS\n"));
    for f in ["summary.txt", "mds.txt", "keys.txt", "sessions.txt", "security.txt"] {
        assert!(d.path().join("rep").join(f).is_file(), "missing {f}");
    }
    let sessions = fs::read_to_string(d.path().join("rep/sessions.txt")).unwrap();
    assert_eq!(sessions.lines().count(), 25);
}

#[test]
fn campaign_refuses_infeasible_and_unknown_keys() {
    let d = setup();
    let o = hsa(d.path(), &["campaign", "--config", "ex1.txt", "--set", "T=2", "--out", "rep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"));

    let o = hsa(d.path(), &["campaign", "--config", "ex1.txt", "--set", "bogus=1", "--out", "rep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));
}
