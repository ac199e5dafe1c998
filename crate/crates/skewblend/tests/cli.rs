//! End-to-end runs of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const REFERENCE: &str = r#"nu = 0.5
alpha = 1.0
gamma = 0.6
gamma_hat = 0.9
mode = "cs"
symbols = [1, 2]
B = { kind = "box", lo = [-0.9], hi = [0.9] }
D = { kind = "box", lo = [-1.0], hi = [1.0] }
grid = 0.001

[[map]]
a = [[0.6666666666666666]]
b = [-0.3333333333333333]

[[map]]
a = [[0.6666666666666666]]
b = [0.3333333333333333]
"#;

fn workdir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewblend")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn without_timestamp(p: &Path) -> String {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"created_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reference_blender_verifies() {
    let d = workdir("reference");
    let cfg = d.join("ref.toml");
    std::fs::write(&cfg, REFERENCE).unwrap();
    let out = d.join("cov.json");
    let o = run(&["verify-blender", "--config", s(&cfg), "--out", s(&out), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["kind"], "covering");
    assert_eq!(v["valid"], true);
    let l = v["payload"]["lebesgue_lower"].as_f64().unwrap();
    assert!((0.52..=0.534).contains(&l), "{l}");
}

#[test]
fn malformed_config_is_an_input_error() {
    let d = workdir("malformed");
    let bad = d.join("bad.toml");
    std::fs::write(&bad, "nu = 0.5\nalpha = [1\n").unwrap();
    let o = run(&["verify-blender", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let at = err.find("bad.toml:").expect("diagnostic names the file") + "bad.toml:".len();
    assert!(err[at..].starts_with(|c: char| c.is_ascii_digit()), "{err}");

    std::fs::write(&bad, "nu = 0.5\nfoo = 1\n").unwrap();
    let o = run(&["verify-blender", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));

    let o = run(&["verify-blender", "--config", s(&d.join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certificates_are_deterministic_and_replayable() {
    let d = workdir("determinism");
    let cfg = d.join("ref.toml");
    std::fs::write(&cfg, REFERENCE).unwrap();
    let (a, b) = (d.join("a.json"), d.join("b.json"));
    for p in [&a, &b] {
        let o = run(&["verify-blender", "--config", s(&cfg), "--seed", "3", "--out", s(p), "-q"]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(without_timestamp(&a), without_timestamp(&b));

    // replay needs nothing but the certificate itself
    std::fs::remove_file(&cfg).unwrap();
    let r = d.join("replay.json");
    let o = run(&["verify-blender", "--certificate", s(&a), "--out", s(&r), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (va, vr) = (read_json(&a), read_json(&r));
    let drift = (va["slack"].as_f64().unwrap() - vr["slack"].as_f64().unwrap()).abs();
    assert!(drift <= 1e-12, "{drift}");
}

#[test]
fn cycle_scenario_replays_and_breaks_under_large_perturbations() {
    let d = workdir("cycle");
    let cyc = d.join("cycle.json");
    let o = run(&[
        "build-scenario",
        "--kind",
        "cycle",
        "--c",
        "2",
        "--i1",
        "1",
        "--i2",
        "1",
        "--out",
        s(&cyc),
        "-q",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&cyc)["payload"]["co_index"], 0);

    let o = run(&["verify-cycle", "--certificate", s(&cyc), "--out", s(&d.join("replay.json")), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let probe = d.join("probe.json");
    let o = run(&[
        "probe",
        "--certificate",
        s(&cyc),
        "--eta",
        "10",
        "--trials",
        "3",
        "--out",
        s(&probe),
        "-q",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("FAILED stage"), "{err}");
    let v = read_json(&probe);
    assert!(v["stages"]
        .as_array()
        .unwrap()
        .iter()
        .any(|st| st["valid"] == false && !st["name"].as_str().unwrap().is_empty()));
}

#[test]
fn decay_csv_has_one_row_per_vector_and_step() {
    let d = workdir("decay");
    let tang = d.join("tangency.json");
    let o = run(&[
        "build-scenario",
        "--c",
        "2",
        "--i1",
        "1",
        "--i2",
        "1",
        "--ell",
        "1",
        "--out",
        s(&tang),
        "-q",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let rows = |horizon: &str, name: &str| {
        let csv = d.join(name);
        let o = run(&[
            "detect-tangency",
            "--certificate",
            s(&tang),
            "--horizon",
            horizon,
            "--csv",
            s(&csv),
            "--out",
            s(&d.join("dt.json")),
            "-q",
        ]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(csv).unwrap()
    };
    let vectors = read_json(&tang)["payload"]["tangent"]["vectors"].as_array().unwrap().len();

    let text = rows("20", "n20.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,vector,norm,bound");
    assert_eq!(lines.len() - 1, 41 * vectors);
    let keys: Vec<(i64, usize)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    assert_eq!(rows("0", "n0.csv").lines().count() - 1, vectors);
    assert_eq!(rows("20", "again.csv"), text);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["verify-blender"]).status.code(), Some(2));
    assert_eq!(
        run(&["build-scenario", "--c", "2", "--i1", "1", "--i2", "1", "--ell", "1", "--eps", "0"])
            .status
            .code(),
        Some(2)
    );
}
