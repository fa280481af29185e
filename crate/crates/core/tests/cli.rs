use std::path::Path;
use std::process::{Command, Output};

use fidray::bench::read_poses_csv;

fn fidray(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fidray")).args(args).output().expect("spawn fidray")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn render_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let pose = "10,-5,700,5,-20,40";
    let mut files = Vec::new();
    for (name, workers) in [("a.png", "1"), ("b.png", "1"), ("c.png", "3")] {
        let out = dir.path().join(name);
        let o = fidray(&["render", "--pose", pose, "--out", p(&out), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    assert!(sidecar.get("camera_hash").is_some());
}

#[test]
fn cloud_writes_one_image_per_pose() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cloud");
    let o = fidray(&["cloud", "--cloud-size", "10", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let poses = read_poses_csv(out.join("poses.csv")).unwrap();
    assert_eq!(poses.len(), 10);
    let pngs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 10);
    assert!(out.join("camera.json").exists());
}

#[test]
fn missing_camera_file_exits_with_io_code() {
    let o = fidray(&["render", "--camera", "/nonexistent/cam.json", "--pose", "0,0,600,0,0,0", "--out", "/tmp/x.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bad_pose_is_a_usage_error() {
    let o = fidray(&["render", "--pose", "1,2,3", "--out", "/tmp/x.png"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn diff_swaps_channels_with_argument_order() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    assert!(fidray(&["render", "--pose", "0,0,600,0,0,0", "--out", p(&a)]).status.success());
    assert!(fidray(&["render", "--pose", "20,0,600,0,0,15", "--out", p(&b)]).status.success());
    let (ab, ba) = (dir.path().join("ab.png"), dir.path().join("ba.png"));
    assert!(fidray(&["diff", p(&a), p(&b), "--out", p(&ab)]).status.success());
    assert!(fidray(&["diff", p(&b), p(&a), "--out", p(&ba)]).status.success());
    let ab = image::open(&ab).unwrap().to_rgb8();
    let ba = image::open(&ba).unwrap().to_rgb8();
    let mut differing = 0;
    for (x, y) in ab.pixels().zip(ba.pixels()) {
        assert_eq!(x[0], y[1]);
        assert_eq!(x[1], x[2]);
        assert_eq!(y[1], y[2]);
        differing += usize::from(x[0] != x[1]);
    }
    assert!(differing > 100);
}

#[test]
fn bench_scores_external_detection_files() {
    let dir = tempfile::tempdir().unwrap();
    let poses_csv = dir.path().join("poses.csv");
    std::fs::write(
        &poses_csv,
        "pose_id,X,Y,Z,roll,pitch,yaw\n0,0,0,600,0,0,0\n1,10,5,800,10,0,30\n2,-20,0,1000,0,20,-45\n",
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(
        &a,
        "pose_id,detected,estX,estY,estZ,estRoll,estPitch,estYaw\n\
         0,1,0.5,0,601,0,0,0\n1,1,10,5,798,10,0,30\n2,1,-20,0,1003,0,20,-45\n",
    )
    .unwrap();
    let b = dir.path().join("b.csv");
    std::fs::write(
        &b,
        "pose_id,detected,estX,estY,estZ,estRoll,estPitch,estYaw\n\
         0,1,0,0,600,0,0,1\n1,0,,,,,,\n2,1,-20,1,1000,0,20,-45\n",
    )
    .unwrap();

    let single = dir.path().join("single");
    let o = fidray(&["bench", "--poses", p(&poses_csv), "--detections", p(&a), "--out", p(&single)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "summary.txt", "scatter.svg", "correlation.csv"] {
        assert!(single.join(f).exists(), "{f}");
    }

    let both = dir.path().join("both");
    let o = fidray(&[
        "bench", "--poses", p(&poses_csv), "--detections", p(&a), "--detections", p(&b), "--out", p(&both),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("common subset: 2 of 3"), "{stdout}");
    let table = std::fs::read_to_string(both.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(both.join("set1").join("report.csv").exists());
}

#[test]
fn malformed_detection_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let poses_csv = dir.path().join("poses.csv");
    std::fs::write(&poses_csv, "pose_id,X,Y,Z,roll,pitch,yaw\n0,0,0,600,0,0,0\n").unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "pose_id,detected,estX,estY,estZ,estRoll,estPitch,estYaw\n0,1,x,0,600,0,0,0\n").unwrap();
    let o = fidray(&["bench", "--poses", p(&poses_csv), "--detections", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dump_seq_prints_requested_rows() {
    let o = fidray(&["dump-seq", "--sequence", "halton", "--count", "4", "--dims", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).collect();
    assert_eq!(rows.len(), 4);
}
