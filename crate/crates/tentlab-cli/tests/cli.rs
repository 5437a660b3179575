use std::path::Path;
use std::process::Output;

use assert_cmd::Command;

const SMALL: &str = "\
[grid]
radial = 48
angular = 64

[projection]
truncation = 40

[weights]
weight = identity
weight = scalar_power 0.5
weight = rotated_diagonal 0.2667 2

[domination]
directions = 16
samples = 40
polynomials = 4

[diagnostics]
square_fields = 5
embedding_degree = 8

[output]
timing = false
";

fn tentlab(dir: &Path, args: &[&str]) -> Output {
    Command::cargo_bin("tentlab").unwrap().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn b2_and_norm_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = tentlab(dir.path(), &["b2", "--weight", "scalar_power", "--alpha", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let b2: f64 = line.trim().strip_prefix("B2 = ").unwrap().parse().unwrap();
    assert!((1.25..=1.45).contains(&b2), "{line}");

    let o = tentlab(dir.path(), &["norm", "--weight", "identity", "--out", "n.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let (value, spread) = line.trim().strip_prefix("norm = ").unwrap().split_once(" ± ").unwrap();
    assert!((value.parse::<f64>().unwrap() - 1.0).abs() <= 0.02, "{line}");
    assert!(spread.parse::<f64>().unwrap() <= 0.02, "{line}");
    assert!(std::fs::read_to_string(dir.path().join("n.csv")).unwrap().starts_with("family,param1,param2,d,normW"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tentlab(dir.path(), &["b2"]).status.code(), Some(1));
    assert_eq!(tentlab(dir.path(), &["nonsense"]).status.code(), Some(1));
    assert_eq!(tentlab(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(tentlab(dir.path(), &["--help"]).status.code(), Some(0));
    let o = tentlab(dir.path(), &["b2", "--weight", "scalar_power", "--alpha", "0.95"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the declared range"));
    std::fs::write(dir.path().join("bad.cfg"), "[grid]\nradius = 3\n").unwrap();
    assert_eq!(tentlab(dir.path(), &["--config", "bad.cfg", "sweep"]).status.code(), Some(1));
    std::fs::write(dir.path().join("coarse.cfg"), "[projection]\ntruncation = 200\n").unwrap();
    assert_eq!(tentlab(dir.path(), &["--config", "coarse.cfg", "sweep"]).status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for geom in ["disc", "ball2"] {
        let o = tentlab(dir.path(), &["--geom", geom, "--print-config"]);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.contains(&format!("geometry = {geom}")));
        std::fs::write(dir.path().join("p.cfg"), &text).unwrap();
        let again = tentlab(dir.path(), &["--config", "p.cfg", "--print-config"]);
        assert_eq!(stdout(&again), text);
    }
}

#[test]
fn sweep_csv_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = tentlab(dir.path(), &["--config", "small.cfg", "sweep", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("rows = 3 failures = 0"));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, tentlab::harness::CSV_COLUMNS.join(","));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    for key in ["fitted_exponent", "max_ratio_B2sq", "max_ratio_B2_32", "failures"] {
        assert!(json.get(key).is_some(), "{key}");
    }

    let o = tentlab(dir.path(), &["--config", "small.cfg", "dominate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("violations = 0"));
}

#[test]
fn dyadic_cache_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let o = tentlab(dir.path(), &["dyadic", "build", "--geom", "disc", "--levels", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tentlab(dir.path(), &["dyadic", "check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 violations"));

    let o = tentlab(dir.path(), &["dyadic", "check", "--levels", "12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale cache"));

    let file = dir.path().join("dyadic-cache/disc-1.tdc");
    let bytes = std::fs::read(&file).unwrap();
    std::fs::write(&file, &bytes[..bytes.len() / 2]).unwrap();
    let o = tentlab(dir.path(), &["dyadic", "check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corrupt"));
}

#[test]
fn analysis_commands_use_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), format!("{SMALL}\n[dyadic]\ncache = sys\n")).unwrap();
    let o = tentlab(dir.path(), &["--config", "small.cfg", "b2", "--weight", "identity"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tentlab dyadic build --geom disc"), "{}", stderr(&o));

    let o = tentlab(dir.path(), &["--config", "small.cfg", "dyadic", "build", "--levels", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tentlab(dir.path(), &["--config", "small.cfg", "b2", "--weight", "identity"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "B2 = 1.000000");
}

#[test]
fn verify_subset() {
    let dir = tempfile::tempdir().unwrap();
    let o = tentlab(dir.path(), &["verify", "--only", "1,2"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("criterion  1 [PASS]") && out.contains("criterion  2 [PASS]"), "{out}");
    assert!(out.trim_end().ends_with("verify passed = 2/2"));
}
