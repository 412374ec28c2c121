use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plaquette_sim::report::ExperimentReport;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn plaquette(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plaquette"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report_in(dir: &Path, name: &str) -> ExperimentReport {
    let text = fs::read_to_string(dir.join(format!("{name}.report.txt"))).unwrap();
    ExperimentReport::from_text(&text).unwrap()
}

#[test]
fn prep_phi_minus_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&["--out", out, "prep", "phi_minus"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("pass"));
    let r = report_in(dir.path(), "phi_minus");
    assert!((r.fidelity - 1.0).abs() < 1e-9);
    let atoms = r.config.iter().find(|c| c.key == "atoms").unwrap();
    assert_eq!(atoms.value, "1000000");
}

#[test]
fn prep_soft_blockade_leaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&[
        "--out",
        out,
        "--blockade",
        "soft",
        "--v-over-omega",
        "100",
        "prep",
        "box_two_rydberg",
    ]);
    assert!(code(&o) <= 1, "{}", stderr(&o));
    let r = report_in(dir.path(), "box_two_rydberg");
    assert!(r.fidelity < 1.0 && r.fidelity > 0.99, "{}", r.fidelity);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&plaquette(&["prep", "bogus"])), 2);
    assert_eq!(
        code(&plaquette(&["--blockade", "medium", "prep", "phi_minus"])),
        2
    );
    let o = plaquette(&["--atoms", "3", "prep", "phi_minus"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kind config"));
    let o = plaquette(&["optimize", "composite", "--restarts", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn threshold_failure_exits_one() {
    let o = plaquette(&["--threshold", "1.5", "prep", "phi_minus"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn braid_with_and_without_flux() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&["--out", out, "braid"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report_in(dir.path(), "braid");
    let control = &r.distributions[0];
    let minus = control
        .outcomes
        .iter()
        .find(|o| o.label == "minus")
        .unwrap()
        .probability;
    assert!(minus >= 1.0 - 1e-4);
    assert!(
        r.metric("infidelity_atoms_100").unwrap() > r.metric("infidelity_atoms_10000").unwrap()
    );

    let o = plaquette(&["--out", out, "braid", "--no-flux"]);
    assert_eq!(code(&o), 0);
    let r = report_in(dir.path(), "braid_no_flux");
    let plus = r.distributions[0]
        .outcomes
        .iter()
        .find(|o| o.label == "plus")
        .unwrap()
        .probability;
    assert!(plus >= 1.0 - 1e-4);

    let o = plaquette(&["--out", out, "--atoms", "100", "braid"]);
    let small = report_in(dir.path(), "braid");
    assert!(code(&o) <= 1);
    assert!(small.fidelity < minus);
}

#[test]
fn takagi_reachability() {
    let o = plaquette(&[
        "takagi",
        data("pair_12.txt").to_str().unwrap(),
        data("phi_minus.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("note reachable: true"));
    assert!(text.contains("note U row 4:"));

    let o = plaquette(&[
        "takagi",
        data("pair_12.txt").to_str().unwrap(),
        data("phi_plus.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("note reachable: false"));
}

#[test]
fn takagi_parse_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "# header\n1 2\n2 x\n").unwrap();
    let o = plaquette(&[
        "--format",
        "json",
        "takagi",
        bad.to_str().unwrap(),
        data("box.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "parse");
    assert_eq!(err["error"]["line"], 3);
    assert_eq!(err["error"]["column"], 3);
}

#[test]
fn spinon_table() {
    let o = plaquette(&["spinon"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = ExperimentReport::from_text(&stdout(&o)).unwrap();
    assert_eq!(r.distributions.len(), 4);
    for d in &r.distributions {
        let want = if d.name == "symmetric" { "1" } else { "0" };
        let p = d
            .outcomes
            .iter()
            .find(|o| o.label == want)
            .unwrap()
            .probability;
        assert!((p - 1.0).abs() < 1e-10);
    }
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&plaquette(&[
            "--out",
            out,
            "cz",
            "--gate",
            "single_rydberg"
        ])),
        0
    );
    let path = dir.path().join("cz_single_rydberg.report.txt");
    let o = plaquette(&["replay", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("reproduced"));

    let text = fs::read_to_string(&path).unwrap();
    let mut r = ExperimentReport::from_text(&text).unwrap();
    r.runs[1].fidelity = Some(0.5);
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, r.to_json().unwrap()).unwrap();
    assert_eq!(code(&plaquette(&["replay", tampered.to_str().unwrap()])), 3);
}

#[test]
fn json_reports_parse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&[
        "--out",
        out,
        "--format",
        "json",
        "prep",
        "box_single_rydberg",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["passed"], true);
    let text = fs::read_to_string(dir.path().join("box_single_rydberg.report.json")).unwrap();
    let r = ExperimentReport::from_json(&text).unwrap();
    assert!(r.fidelity >= 1.0 - 1e-6);
    assert!(r.replay().unwrap() <= 1e-12);
}

#[test]
fn scan_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&["--out", out, "scan"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("phase_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(stdout(&o).contains("max_deviation_quoted"));
}

#[test]
fn composite_parameters_feed_preparation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plaquette(&[
        "--out",
        out,
        "--seed",
        "3",
        "optimize",
        "composite",
        "--restarts",
        "200",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let params = dir.path().join("optimize_composite.best.json");
    assert!(dir.path().join("optimize_composite.csv").exists());
    let o = plaquette(&[
        "--out",
        out,
        "prep",
        "phi_plus",
        "--params",
        params.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(report_in(dir.path(), "phi_plus").fidelity >= 1.0 - 1e-6);
}
