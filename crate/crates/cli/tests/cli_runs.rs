use std::path::Path;
use std::process::{Command, Output};

fn ckt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckt-lab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn note<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(&format!("# {key}: ")))
}

fn body(text: &str) -> Vec<Vec<String>> {
    let rows = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(rows.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn dims_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = ckt(&["dims", "--n", "3", "--mmax", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("# ckt-lab dims\n# config-sha256: "));
    let rows = body(&text);
    assert_eq!(rows[0], ["n", "m", "p", "h"]);
    for (m, row) in rows[1..].iter().enumerate() {
        assert_eq!(row[2], ((m + 1) * (m + 2) / 2).to_string());
        assert_eq!(row[3], (2 * m + 1).to_string());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.ini"), "[run]\nseed = 7\n\n[check-divtype]\nsamples = 40\n").unwrap();
    let cfg = dir.path().join("run.ini");
    let cfg = cfg.to_str().unwrap();
    for cmd in ["check-divtype", "harmdecomp", "kato"] {
        let a = ckt(&["--config", cfg, "--out", "a", cmd], dir.path());
        let b = ckt(&["--config", cfg, "--out", "b", cmd], dir.path());
        assert!(a.status.success() && b.status.success(), "{cmd}: {}", stderr(&a));
        let fa = std::fs::read(dir.path().join("a").join(format!("{cmd}.csv"))).unwrap();
        let fb = std::fs::read(dir.path().join("b").join(format!("{cmd}.csv"))).unwrap();
        assert_eq!(fa, fb, "{cmd}");
        let c = ckt(&["--config", cfg, cmd], dir.path());
        assert_eq!(c.stdout, fa, "{cmd} stdout");
    }
}

#[test]
fn hash_tracks_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = stdout(&ckt(&["harmdecomp"], dir.path()));
    let b = stdout(&ckt(&["--seed", "2024", "harmdecomp"], dir.path()));
    let c = stdout(&ckt(&["--seed", "5", "harmdecomp"], dir.path()));
    assert_eq!(note(&a, "config-sha256"), note(&b, "config-sha256"));
    assert_ne!(note(&a, "config-sha256"), note(&c, "config-sha256"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ini"), "[torus]\ncutof = 2\n").unwrap();
    let o = ckt(&["--config", "bad.ini", "torus-ckt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[config]"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_connection_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conn"), "FOURIERCONN 2 2\nnot numbers\n").unwrap();
    std::fs::write(dir.path().join("h.ini"), "[holonomy]\nconnection = c.conn\n").unwrap();
    let o = ckt(&["--config", "h.ini", "holonomy"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[parse]"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.ini"), "[harmdecomp]\npoly = nowhere.hpoly\n").unwrap();
    let o = ckt(&["--config", "h.ini", "harmdecomp"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[io]"));
}

#[test]
fn failed_check_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = ckt(&["--tol", "1e-300", "commutator-factor"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("error[check-failed]"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ckt(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(ckt(&["--tol", "-1", "dims"], dir.path()).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ckt(&["selftest"], dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let rows = body(&stdout(&o));
    assert_eq!(rows[0], ["check", "value", "tolerance", "status"]);
    assert!(rows.len() > 10);
    assert!(rows[1..].iter().all(|r| r[3] == "pass"));
}

#[test]
fn ejection_scan_resolves_factor_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ckt(&["torus-eject"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(note(&text, "resolved_factor"), Some("1"));
    let rows = body(&text);
    assert_eq!(rows[0][..3], ["s", "lambda", "kernel_dim"]);
    assert_eq!(rows.len(), 10);
    let mid = &rows[5];
    assert_eq!(mid[0].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn holonomy_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.ini"), "[holonomy]\nconnection = pauli\n").unwrap();
    let p = stdout(&ckt(&["--config", "p.ini", "holonomy"], dir.path()));
    assert_eq!(note(&p, "commutant_dim"), Some("1"));
    assert!(note(&p, "verdict").unwrap().starts_with("no invariant subbundle detected at tolerance"));
    let d = stdout(&ckt(&["holonomy"], dir.path()));
    assert_eq!(note(&d, "commutant_dim"), Some("2"));
    assert!(note(&d, "verdict").unwrap().starts_with("not opaque"));
}
