use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sixdgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sixdgs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn sixdgs")
}

fn ok(args: &[&str]) -> String {
    let out = sixdgs(args);
    assert!(
        out.status.success(),
        "sixdgs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene(dir: &TempDir, views: usize, holdout: usize) -> PathBuf {
    let out = dir.path().join("scene");
    ok(&[
        "synth",
        "--out",
        s(&out),
        "--ellipsoids",
        "60",
        "--views",
        &views.to_string(),
        "--holdout",
        &holdout.to_string(),
        "--image-size",
        "48",
        "--seed",
        "5",
    ]);
    out
}

fn frames(p: &Path) -> usize {
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
    v["frames"].as_array().unwrap().len()
}

#[test]
fn synth_writes_splits() {
    let dir = TempDir::new().unwrap();
    let out = scene(&dir, 5, 2);
    assert_eq!(frames(&out.join("transforms.json")), 5);
    assert_eq!(frames(&out.join("transforms_train.json")), 3);
    assert_eq!(frames(&out.join("transforms_test.json")), 2);
    for i in 0..5 {
        assert!(out.join(format!("images/view_{i:03}.png")).is_file());
        assert!(out.join(format!("features/view_{i:03}.6dfeat")).is_file());
    }
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["command"], "synth");
    assert_eq!(cfg["args"]["ellipsoids"], 60);
}

#[test]
fn synth_rejects_holdout_of_every_view() {
    let dir = TempDir::new().unwrap();
    let out = sixdgs(&["synth", "--out", s(&dir.path().join("x")), "--views", "3", "--holdout", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_estimate_writes_pose() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let est = dir.path().join("est");
    let stdout = ok(&[
        "estimate",
        "--model",
        s(&sc.join("model.ply")),
        "--oracle",
        "--features",
        s(&sc.join("features/view_001.6dfeat")),
        "--transforms",
        s(&sc.join("transforms.json")),
        "--view",
        "1",
        "--out",
        s(&est),
    ]);
    assert!(stdout.contains("\"mte\""));
    let pose: serde_json::Value = serde_json::from_slice(&std::fs::read(est.join("pose.json")).unwrap()).unwrap();
    assert_eq!(pose["rotation"].as_array().unwrap().len(), 9);
    assert_eq!(pose["center"].as_array().unwrap().len(), 3);
    assert!(pose["mte"].as_f64().unwrap() < 0.2);
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(est.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["inputs_sha256"].as_object().unwrap().len(), 3);
}

#[test]
fn missing_model_is_bad_input() {
    let dir = TempDir::new().unwrap();
    let out = sixdgs(&["rays", "--model", s(&dir.path().join("none.ply")), "--out", s(&dir.path().join("r.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn corrupt_model_is_bad_input() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let bytes = std::fs::read(sc.join("model.ply")).unwrap();
    let bad = dir.path().join("bad.ply");
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let out = sixdgs(&["rays", "--model", s(&bad), "--out", s(&dir.path().join("r.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&bad, b"not a ply file").unwrap();
    let out = sixdgs(&["render", "--model", s(&bad), "--transforms", s(&sc.join("transforms.json")), "--out", s(&dir.path().join("r.png"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_test_split_is_bad_input() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let out = sixdgs(&[
        "eval",
        "--model",
        s(&sc.join("model.ply")),
        "--oracle",
        "--transforms",
        s(&sc.join("transforms_test.json")),
        "--out",
        s(&dir.path().join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no views"));
}

#[test]
fn bundle_size_below_two_is_bad_input() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let out = sixdgs(&[
        "estimate",
        "--model",
        s(&sc.join("model.ply")),
        "--oracle",
        "--n-top",
        "1",
        "--features",
        s(&sc.join("features/view_000.6dfeat")),
        "--transforms",
        s(&sc.join("transforms.json")),
        "--view",
        "0",
        "--out",
        s(&dir.path().join("est")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_ellipsoid_scene_is_geometric_failure() {
    let dir = TempDir::new().unwrap();
    let sc = dir.path().join("one");
    ok(&["synth", "--out", s(&sc), "--ellipsoids", "2", "--views", "1", "--image-size", "32"]);
    let ply = std::fs::read(sc.join("model.ply")).unwrap();
    let end = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    let header = String::from_utf8(ply[..end].to_vec()).unwrap();
    assert!(header.contains("element vertex 2\n"));
    let row = (ply.len() - end) / 2;
    let mut one = header.replace("element vertex 2\n", "element vertex 1\n").into_bytes();
    one.extend_from_slice(&ply[end..end + row]);
    std::fs::write(sc.join("model.ply"), one).unwrap();
    let out = sixdgs(&[
        "estimate",
        "--model",
        s(&sc.join("model.ply")),
        "--oracle",
        "--features",
        s(&sc.join("features/view_000.6dfeat")),
        "--transforms",
        s(&sc.join("transforms.json")),
        "--view",
        "0",
        "--out",
        s(&dir.path().join("est")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runaway_learning_rate_diverges() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let out = sixdgs(&[
        "train",
        "--model",
        s(&sc.join("model.ply")),
        "--g-cells",
        "30",
        "--transforms",
        s(&sc.join("transforms_train.json")),
        "--out",
        s(&dir.path().join("w")),
        "--iters",
        "50",
        "--subsample",
        "50",
        "--mlp-width",
        "16",
        "--lr",
        "1e30",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn render_and_rays_outputs() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let png = dir.path().join("out/r.png");
    ok(&["render", "--model", s(&sc.join("model.ply")), "--transforms", s(&sc.join("transforms.json")), "--view", "1", "--out", s(&png)]);
    let img = std::fs::read(&png).unwrap();
    assert_eq!(&img[..8], b"\x89PNG\r\n\x1a\n");

    let rays = dir.path().join("out/rays.bin");
    let stdout = ok(&["rays", "--model", s(&sc.join("model.ply")), "--g-cells", "40", "--out", s(&rays), "--csv"]);
    let n: usize = stdout.split_whitespace().next().unwrap().parse().unwrap();
    assert!(n > 0);
    let bytes = std::fs::metadata(&rays).unwrap().len() as usize;
    assert!(bytes >= n * 6 * 4, "{bytes} bytes for {n} rays");
    let csv = std::fs::read_to_string(rays.with_extension("csv")).unwrap();
    let rows = csv.lines().filter(|l| !l.trim().is_empty()).count();
    assert!(rows == n || rows == n + 1, "{rows} csv rows for {n} rays");
}

#[test]
fn view_out_of_range_is_bad_input() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 2, 0);
    let out = sixdgs(&["render", "--model", s(&sc.join("model.ply")), "--transforms", s(&sc.join("transforms.json")), "--view", "7", "--out", s(&dir.path().join("r.png"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cached_and_fresh_estimates_agree() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 3, 1);
    let w = dir.path().join("w");
    ok(&[
        "train",
        "--model",
        s(&sc.join("model.ply")),
        "--g-cells",
        "30",
        "--transforms",
        s(&sc.join("transforms_train.json")),
        "--out",
        s(&w),
        "--iters",
        "20",
        "--subsample",
        "50",
        "--mlp-width",
        "16",
    ]);
    assert!(w.join("loss.csv").is_file());
    assert!(w.join("loss.svg").is_file());
    let run = |name: &str| {
        let est = dir.path().join(name);
        ok(&[
            "estimate",
            "--model",
            s(&sc.join("model.ply")),
            "--g-cells",
            "30",
            "--weights",
            s(&w.join("weights.bin")),
            "--features",
            s(&sc.join("features/view_002.6dfeat")),
            "--transforms",
            s(&sc.join("transforms.json")),
            "--view",
            "2",
            "--out",
            s(&est),
        ]);
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(est.join("pose.json")).unwrap()).unwrap();
        v
    };
    let cached = run("a");
    for e in std::fs::read_dir(&w).unwrap() {
        let p = e.unwrap().path();
        if p.file_name().unwrap().to_str().unwrap().contains(".cache") || p.extension().is_some_and(|x| x == "rays" || x == "queries") {
            std::fs::remove_file(p).unwrap();
        }
    }
    let fresh = run("b");
    assert_eq!(cached["rotation"], fresh["rotation"]);
    assert_eq!(cached["center"], fresh["center"]);
}

#[test]
fn eval_reports_every_view() {
    let dir = TempDir::new().unwrap();
    let sc = scene(&dir, 4, 2);
    let ev = dir.path().join("ev");
    ok(&[
        "eval",
        "--model",
        s(&sc.join("model.ply")),
        "--oracle",
        "--transforms",
        s(&sc.join("transforms_test.json")),
        "--out",
        s(&ev),
    ]);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["views"].as_array().unwrap().len(), 2);
    for f in ["errors.svg", "mae_hist.svg", "mte_hist.svg"] {
        assert!(std::fs::read_to_string(ev.join(f)).unwrap().starts_with("<svg"));
    }
}
