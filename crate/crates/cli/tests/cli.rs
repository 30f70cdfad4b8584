use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use eos::harness::{read_records, stream_rng, Report, Stream};
use eos::scene::io::write_scene;
use eos::scene::{generate_scene, render, SceneGenConfig};
use eos::segmenter::bridge::spawn_bridge;
use eos::segmenter::{OracleConfig, OracleSegmenter, Segmenter, SegmenterError};
use eos::uncos::{uncos, UncosParams};

const BIN: &str = env!("CARGO_BIN_EXE_eos");

fn eos(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "scenes = 2\nsteps = 1\nplanner.k = 4\n\n[uncos]\nn_hypotheses = 8\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_records_reports_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = eos(&[
        "run",
        "--config",
        &small_config(dir.path()),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let records = read_records(File::open(out.join("records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 2 * 3 * 2);
    let recomputed = Report::from_records(&records, 1);
    assert_eq!(
        fs::read_to_string(out.join("report.csv")).unwrap(),
        recomputed.to_csv()
    );
    assert_eq!(
        fs::read_to_string(out.join("report.txt")).unwrap(),
        recomputed.to_text()
    );

    let frames = fs::read_dir(out.join("frames")).unwrap().count();
    assert_eq!(frames, records.len());
    assert!(out.join("frames/scene001_finalFrame_step1.pgm").exists());
}

#[test]
fn run_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert!(eos(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .success());
        let records = read_records(File::open(out.join("records.csv")).unwrap()).unwrap();
        tables.push(records.iter().map(|r| r.timeless()).collect::<Vec<_>>());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "planner.kk = 3\n").unwrap();
    let res = eos(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("kk"));
}

#[test]
fn eval_prints_one_csv_line() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.pgm");
    let pred = dir.path().join("pred.pgm");
    fs::write(&gt, "P2\n4 1\n2\n1 1 2 2\n").unwrap();
    fs::write(&pred, "P2\n4 1\n1\n1 1 1 1\n").unwrap();

    let same = eos(&[
        "eval",
        "--pred",
        gt.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
    ]);
    assert_eq!(String::from_utf8(same.stdout).unwrap(), "2,2,1,1,1,1,1,1\n");

    let merged = eos(&[
        "eval",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
    ]);
    let line = String::from_utf8(merged.stdout).unwrap();
    let fields: Vec<f64> = line.trim().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(fields[..2], [1.0, 2.0]);
    assert!((fields[4] - 1.0 / 3.0).abs() < 1e-12);

    fs::write(&pred, "P2\n2 1\n1\n1 1\n").unwrap();
    assert!(!eos(&[
        "eval",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap()
    ])
    .status
    .success());
}

#[test]
fn demo_dumps_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(
        &SceneGenConfig::default(),
        &mut stream_rng(1, Stream::SceneGen, 0),
    )
    .unwrap();
    let scene_path = dir.path().join("scene.json");
    write_scene(&scene, File::create(&scene_path).unwrap()).unwrap();
    let out = dir.path().join("demo");
    let res = eos(&[
        "demo",
        "--scene",
        scene_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "depth.pgm",
        "ground_truth.pgm",
        "confident.pgm",
        "most_likely.pgm",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let listed = String::from_utf8(res.stdout).unwrap();
    let hyp_files = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("region")
        })
        .count();
    assert_eq!(listed.matches(".pgm:").count(), hyp_files);
}

#[test]
fn bridged_oracle_matches_in_process() {
    let frames = tempfile::tempdir().unwrap();
    let (bridge, mut child) = spawn_bridge(
        Command::new(BIN).arg("serve-oracle"),
        Some(frames.path().to_path_buf()),
    )
    .unwrap();
    let local = OracleSegmenter::new(OracleConfig::default());
    let params = UncosParams::default();
    for i in 0..3 {
        let scene = generate_scene(
            &SceneGenConfig::default(),
            &mut stream_rng(2, Stream::SceneGen, i),
        )
        .unwrap();
        let obs = render(&scene, 0.004);
        let a = uncos(&obs, &local, &params, i as u64).unwrap();
        let b = uncos(&obs, &bridge, &params, i as u64).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "scene {i}");
    }
    bridge.shutdown().unwrap();
    assert!(child.wait().unwrap().success());
}

#[test]
fn dropped_bridge_is_a_transport_error() {
    let frames = tempfile::tempdir().unwrap();
    let (bridge, mut child) = spawn_bridge(
        Command::new(BIN).arg("serve-oracle"),
        Some(frames.path().to_path_buf()),
    )
    .unwrap();
    let scene = generate_scene(
        &SceneGenConfig::default(),
        &mut stream_rng(3, Stream::SceneGen, 0),
    )
    .unwrap();
    let obs = render(&scene, 0.004);
    bridge.load_frame(&obs).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let err = bridge.seed_all(obs.handle, 0).unwrap_err();
    assert!(matches!(err, SegmenterError::Transport(_)), "{err:?}");
    assert!(err.is_retriable());
}
