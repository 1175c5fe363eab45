use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skyloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyloop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "scene_extent = 40\nscene_buildings = 3\niterations = 2\n";

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn run_writes_artifacts_that_replay_eval_and_plan_consume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("run");
    let r = skyloop(&[
        "run",
        "--config",
        s(&cfg),
        "--scene-seed",
        "5",
        "--out",
        s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "config.txt",
        "scene.ply",
        "truth.ply",
        "report.json",
        "timing.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = json(&fs::read(out.join("report.json")).unwrap());
    let iterations = report["iterations"].as_array().unwrap().len();
    assert!((1..=2).contains(&iterations));
    for i in 1..=iterations {
        for f in [
            "mesh.ply",
            "quality.csv",
            "trajectory.json",
            "quality_debug.ply",
            "clusters.ply",
        ] {
            assert!(out.join(format!("iter_{i}")).join(f).is_file());
        }
    }

    // Replaying the recorded batches reproduces the last planned iteration.
    let again = dir.path().join("replay");
    let r = skyloop(&[
        "replay",
        "--batches",
        s(&out.join("batches")),
        "--config",
        s(&out.join("config.txt")),
        "--out",
        s(&again),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let mut ends: Vec<_> = fs::read_dir(&again)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("trajectory.json").is_file())
        .collect();
    ends.sort();
    assert_eq!(ends.len(), iterations);
    let last = out.join(format!("iter_{iterations}"));
    for f in ["mesh.ply", "quality.csv", "trajectory.json"] {
        assert_eq!(
            fs::read(ends.last().unwrap().join(f)).unwrap(),
            fs::read(last.join(f)).unwrap(),
            "{f}"
        );
    }

    // A mesh scored against itself is perfect at any threshold.
    let mesh = last.join("mesh.ply");
    let r = skyloop(&[
        "eval",
        "--mesh",
        s(&mesh),
        "--truth",
        s(&mesh),
        "--d",
        "0.5",
    ]);
    assert!(r.status.success());
    let e = json(&r.stdout);
    assert_eq!(e["f_score"].as_f64(), Some(100.0));
    let r = skyloop(&[
        "eval",
        "--mesh",
        s(&mesh),
        "--truth",
        s(&out.join("truth.ply")),
        "--d",
        "1.0",
    ]);
    assert!(r.status.success());
    let f = json(&r.stdout)["f_score"].as_f64().unwrap();
    assert!(f > 0.0 && f <= 100.0);

    let r = skyloop(&[
        "plan",
        "--mesh",
        s(&out.join("iter_1/mesh.ply")),
        "--quality",
        s(&out.join("iter_1/quality.csv")),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let t = json(&r.stdout);
    assert!(t["waypoints"].is_array());
    assert!(t["summary"]["viewpoint_count"].is_u64());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let r = skyloop(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no_such_key"));

    fs::write(&cfg, "batch_size = 0\n").unwrap();
    let r = skyloop(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let r = skyloop(&["eval", "--mesh", "a.ply", "--truth", "b.ply", "--d", "-1"]);
    assert_eq!(r.status.code(), Some(2));
    let r = skyloop(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn bad_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let batches = dir.path().join("b");
    fs::create_dir(&batches).unwrap();
    fs::write(
        batches.join("batch_0000.txt"),
        "SKYLOOP-BATCH 1\nBATCH 0 1\nTRACK x\n",
    )
    .unwrap();
    let r = skyloop(&["replay", "--batches", s(&batches)]);
    assert_eq!(r.status.code(), Some(3));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let r = skyloop(&["replay", "--batches", s(&empty)]);
    assert_eq!(r.status.code(), Some(3));

    let r = skyloop(&[
        "eval",
        "--mesh",
        "/nonexistent.ply",
        "--truth",
        "/nonexistent.ply",
        "--d",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn degenerate_geometry_exits_with_four() {
    // Two views over a flat patch: every track lies in z = 0, so no
    // tetrahedron can be formed.
    let dir = tempfile::tempdir().unwrap();
    let batches = dir.path().join("b");
    fs::create_dir(&batches).unwrap();
    let mut text = String::from("SKYLOOP-BATCH 1\nBATCH 0 1\n");
    for (id, x) in [(0, -5.0), (1, 5.0)] {
        // Looking straight down: world-to-camera rotation flips y and z.
        text.push_str(&format!(
            "VIEW {id} {x} 0 20 1 0 0 0 -1 0 0 0 -1 500 320 240 640 480\n"
        ));
    }
    for (k, (x, y)) in [
        (0.0, 0.0),
        (1.0, 0.0),
        (0.0, 1.0),
        (1.0, 1.0),
        (2.0, 0.5),
        (0.5, 2.0),
    ]
    .iter()
    .enumerate()
    {
        let proj = |cx: f64| (320.0 + 500.0 * (x - cx) / 20.0, 240.0 - 500.0 * y / 20.0);
        let (u0, v0) = proj(-5.0);
        let (u1, v1) = proj(5.0);
        text.push_str(&format!("TRACK {k} {x} {y} 0 0 {u0} {v0} 1 {u1} {v1}\n"));
    }
    fs::write(batches.join("batch_0000.txt"), text).unwrap();
    let r = skyloop(&["replay", "--batches", s(&batches)]);
    assert_eq!(
        r.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
}
