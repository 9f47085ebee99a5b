use std::path::Path;
use std::process::{Command, Output};

fn qmemory(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmemory"))
        .args(args)
        .output()
        .unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    rdr.records()
        .map(|r| r.unwrap()[idx].parse().unwrap())
        .collect()
}

#[test]
fn schedule_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    assert!(qmemory(&[
        "schedule",
        "--profile",
        "gauss:r=0.1533,n=4",
        "--out",
        &d("s")
    ])
    .status
    .success());
    let file = format!("file:{}", d("s/schedule.csv"));
    let common = [
        "simulate",
        "--profile",
        "gauss:r=0.1533,n=4",
        "--tau-end",
        "60",
    ];
    let a = qmemory(&[&common[..], &["--out", &d("inline")]].concat());
    let b = qmemory(&[&common[..], &["--kappa", &file, "--out", &d("loaded")]].concat());
    assert!(a.status.success() && b.status.success());
    let (ta, tb) = (
        dir.path().join("inline/trajectory.csv"),
        dir.path().join("loaded/trajectory.csv"),
    );
    assert_eq!(column(&ta, "tau"), column(&tb, "tau"));
    for name in [
        "beta_sq",
        "beta1_sq",
        "r_out",
        "cum_reflection",
        "cum_intrinsic",
    ] {
        let gap = column(&ta, name)
            .iter()
            .zip(column(&tb, name))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-9, "{name}: {gap:e}");
    }
}

#[test]
fn simulate_prints_zero_reflection_and_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = |tol: &str| {
        let o = qmemory(&["simulate", "--tol", tol, "--tau-end", "400", "--out", out]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        let get = |key: &str| -> f64 {
            text.lines()
                .find_map(|l| l.strip_prefix(key))
                .unwrap()
                .trim()
                .parse()
                .unwrap()
        };
        (get("energy_balance_residual"), get("max_stage2_r_out"))
    };
    let (loose, _) = run("1e-8");
    let (tight, r_out) = run("1e-11");
    assert!(tight < loose, "{tight:e} vs {loose:e}");
    assert!(r_out <= 1e-7);
}

#[test]
fn constant_zero_coupling_reflects_everything() {
    let dir = tempfile::tempdir().unwrap();
    let o = qmemory(&[
        "simulate",
        "--kappa",
        "const:0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let refl = column(&dir.path().join("trajectory.csv"), "cum_reflection");
    assert!((refl.last().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn sweep_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    for sub in ["a", "b"] {
        assert!(qmemory(&["sweep", "--family", "gauss", "--out", &d(sub)])
            .status
            .success());
    }
    let a = std::fs::read(d("a/surface.csv")).unwrap();
    assert_eq!(a, std::fs::read(d("b/surface.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("1.0000000000000000e-4,1.5329999999999999e-1,"))
        .unwrap();
    let f: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((f - 0.9987).abs() < 5e-4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = out.to_str().unwrap();
    assert_eq!(
        qmemory(&["schedule", "--profile", "exp:r=", "--out", o])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        qmemory(&["sweep", "--grid-ki", "x:y", "--out", o])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(qmemory(&["bogus"]).status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(qmemory(&["verify", "semiclassical"]).status.code(), Some(0));
    assert_eq!(
        qmemory(&["verify", "appendix-a", "--profile", "gauss:r=0.1533,n=4"])
            .status
            .code(),
        Some(0)
    );
    let faulty = qmemory(&["verify", "all", "--fault-kappa-scale", "1.01"]);
    assert_eq!(faulty.status.code(), Some(4));
    let summary: serde_json::Value = serde_json::from_slice(&faulty.stdout).unwrap();
    assert_eq!(summary["pass"], serde_json::json!(false));
}
