use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_barrier-synth"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("BARRIER_SYNTH_THREADS", "2").output().unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn spring1_without_verification_gives_one_branch() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&scenarios().join("spring1.json")), "--out", s(out.path()), "--no-verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ep: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("endpoints.json")).unwrap()).unwrap();
    let pts = ep["endpoints"].as_array().unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0]["z"], serde_json::json!([-0.5, 1.0]));
    assert_eq!(ep["branches"][0]["status"], "unverified");

    let (header, rows) = read_csv(&out.path().join("barrier_0.csv"));
    // 1 + n + n + m + p + r + 1
    assert_eq!(header.len(), 1 + 2 + 2 + 1 + 1 + 2 + 1);
    assert_eq!(header.first().unwrap(), "t");
    assert_eq!(header.last().unwrap(), "H_residual");
    assert!(rows.iter().all(|r| r.len() == header.len()));
    let last = rows.last().unwrap();
    assert_eq!(&last[1..3], &[-0.5, 1.0]);
    assert!((last[0] - 4.0).abs() <= 1e-12);
    assert!(rows.iter().all(|r| r[9].abs() <= 1e-6));
    assert!(out.path().join("barrier.svg").exists());
    assert!(!out.path().join("verify_0.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = run(&["run", s(&scenarios().join("spring2.json")), "--out", s(dir.path()), "--no-verify"]);
        assert!(o.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn spring2_screens_out_axis_candidates() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&scenarios().join("spring2.json")), "--out", s(out.path()), "--tol-override", "dt=0.02"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ep: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("endpoints.json")).unwrap()).unwrap();
    let branches = ep["branches"].as_array().unwrap();
    let kept: Vec<_> = branches.iter().filter(|b| b["status"] == "barrier").collect();
    assert_eq!(kept.len(), 2);
    for b in &kept {
        let z = &ep["endpoints"][b["endpoint"].as_u64().unwrap() as usize]["z"];
        assert!(z == &serde_json::json!([-0.5, 1.0]) || z == &serde_json::json!([0.5, -1.0]), "{z}");
    }
    let screened: Vec<_> = branches.iter().filter(|b| b["status"] == "screened_out").collect();
    assert!(!screened.is_empty());
    for b in &screened {
        let z = &ep["endpoints"][b["endpoint"].as_u64().unwrap() as usize]["z"];
        assert_eq!(z[1].as_f64().unwrap(), 0.0);
        assert!(!b["reasons"].as_array().unwrap().is_empty());
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("screened out"));
    let k = kept[0]["branch"].as_u64().unwrap();
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join(format!("verify_{k}.json"))).unwrap()).unwrap();
    assert_eq!(v["probe"]["summary"]["is_barrier"], true);
}

#[test]
fn zero_horizon_writes_endpoints_only() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#"{"system": "spring1", "seed_box": {"lower": [-1, 0], "upper": [1, 1], "counts": [3, 3]}, "horizon": 0}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["run", s(&sc), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("endpoints.json")]);
}

#[test]
fn inline_system_matches_builtin() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&scenarios().join("inline_spring1.json")), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out.path().join("barrier_0.csv"));
    assert_eq!(&rows.last().unwrap()[1..3], &[-0.5, 1.0]);
    assert!(out.path().join("barrier.svg").exists());
}

#[test]
fn gtilde_map_matches_closed_forms() {
    for (name, closed) in [("spring1.json", (|x2: f64| x2 - 1.0) as fn(f64) -> f64), ("spring2.json", |x2: f64| x2 * x2 - x2.abs())] {
        let out = tempfile::tempdir().unwrap();
        let o = run(&["gtilde-map", s(&scenarios().join(name)), "--grid", "41x41", "--out", s(out.path())]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = read_csv(&out.path().join("gtilde_map.csv"));
        assert_eq!(header, ["x1", "x2", "gtilde", "differentiable_flag"]);
        assert_eq!(rows.len(), 41 * 41);
        for r in &rows {
            assert!((r[2] - closed(r[1])).abs() <= 1e-6, "{name} at {r:?}");
        }
    }
    let out = tempfile::tempdir().unwrap();
    let o = run(&["gtilde-map", s(&scenarios().join("spring1.json")), "--grid", "1x1", "--out", s(out.path())]);
    assert!(o.status.success());
    assert_eq!(read_csv(&out.path().join("gtilde_map.csv")).1.len(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = |args: &[&str]| run(args).status.code().unwrap();

    let bad_json = write_scenario(dir.path(), "{ not json");
    assert_eq!(code(&["run", s(&bad_json), "--out", s(&out)]), 1);
    assert_eq!(code(&["run", s(&dir.path().join("missing.json")), "--out", s(&out)]), 1);
    assert_eq!(code(&["gtilde-map", s(&scenarios().join("spring1.json")), "--grid", "0x3", "--out", s(&out)]), 1);
    assert_eq!(code(&["run", s(&scenarios().join("spring1.json")), "--tol-override", "bogus=1", "--out", s(&out)]), 1);
    assert_eq!(code(&["frobnicate"]), 1);

    let bad_expr = write_scenario(
        dir.path(),
        r#"{"system": {"name": "bad", "n": 2, "m": 1, "f": ["x2", "x3 +"], "g": ["x2 - u"]},
            "seed_box": {"lower": [-1, 0], "upper": [1, 1], "counts": [2, 2]}, "horizon": 1}"#,
    );
    assert_eq!(code(&["run", s(&bad_expr), "--out", s(&out)]), 1);

    // G_0 is empty: g~ = -3 everywhere
    let no_endpoint = write_scenario(
        dir.path(),
        r#"{"system": {"name": "slack", "n": 2, "m": 1, "f": ["x2", "u"], "g": ["u - 2"], "control_box": [[-1, 1]]},
            "seed_box": {"lower": [-1, -1], "upper": [1, 1], "counts": [2, 2]}, "horizon": 1}"#,
    );
    assert_eq!(code(&["run", s(&no_endpoint), "--out", s(&out), "--no-verify"]), 2);

    // a growth constant far too small for the spring's outer arc
    let tight = write_scenario(
        dir.path(),
        r#"{"system": "spring1", "seed_box": {"lower": [-1, 0], "upper": [1, 1], "counts": [2, 2]},
            "horizon": 4, "growth_constant": 0.01}"#,
    );
    let o = run(&["run", s(&tight), "--out", s(&out), "--no-verify"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invariant violation"));
}
