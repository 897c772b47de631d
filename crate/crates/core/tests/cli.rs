use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use camworld::body_model::{read_obj, toy_body_spec, BodyParams};
use camworld::datagen::read_records_strict;
use camworld::rasterizer::read_pfm;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camworld")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_dataset(dir: &Path, count: &str) -> String {
    let out = ok(&["gen-dataset", "--out", p(dir), "--count", count, "--width", "160", "--height", "120"]);
    json(&out)["manifest"].as_str().unwrap().to_string()
}

#[test]
fn gen_dataset_is_reproducible_and_reports_json() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = small_dataset(a.path(), "10");
    let mb = small_dataset(b.path(), "10");
    assert_eq!(fs::read(&ma).unwrap(), fs::read(&mb).unwrap());
    let s = json(&ok(&["gen-dataset", "--out", p(a.path()), "--count", "10", "--width", "160", "--height", "120"]));
    assert_eq!(s["schema"], 1);
    assert_eq!(s["n_records"], 10);
}

#[test]
fn gen_dataset_edge_cases() {
    let d = tempfile::tempdir().unwrap();
    let m = small_dataset(d.path(), "0");
    assert_eq!(fs::read(&m).unwrap(), b"");

    let cfg = d.path().join("ranges.json");
    fs::write(&cfg, r#"{"pitch": [0.5, -0.5]}"#).unwrap();
    let out = run(&["gen-dataset", "--out", p(d.path()), "--count", "2", "--config", p(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pitch range"));

    let out = run(&["gen-dataset", "--out", p(d.path()), "--count", "2", "--mask-ratio", "1.5"]);
    assert!(!out.status.success());
}

#[test]
fn gen_dataset_fixed_pitch_and_pose_file() {
    let d = tempfile::tempdir().unwrap();
    let poses = d.path().join("poses.json");
    let mut bp = BodyParams::zeros(8);
    bp.pose[4].z = 0.5;
    fs::write(&poses, serde_json::to_string(&vec![bp.clone()]).unwrap()).unwrap();
    let out = d.path().join("ds");
    let s = json(&ok(&[
        "gen-dataset", "--out", p(&out), "--count", "3", "--pitch-deg", "12.5", "--pose-file", p(&poses), "--width", "160",
        "--height", "120",
    ]));
    let recs = read_records_strict(Path::new(s["manifest"].as_str().unwrap())).unwrap();
    for r in recs {
        assert!((r.extrinsics.pitch.to_degrees() - 12.5).abs() < 1e-12);
        assert_eq!(r.params_world.pose, bp.pose);
    }
}

#[test]
fn estimate_pitch_reports_small_errors_and_depth_failures() {
    let d = tempfile::tempdir().unwrap();
    let m = small_dataset(d.path(), "6");
    let rows: Vec<Value> = ok(&["estimate-pitch", "--manifest", &m]).lines().map(json).collect();
    assert_eq!(rows.len(), 6);
    let mean: f64 = rows
        .iter()
        .map(|r| (r["pitch_deg"].as_f64().unwrap() - r["true_pitch_deg"].as_f64().unwrap()).abs())
        .sum::<f64>()
        / 6.0;
    assert!(mean < 0.5);

    let out = d.path().join("p.jsonl");
    let s = json(&ok(&["estimate-pitch", "--manifest", &m, "--out", p(&out)]));
    assert_eq!(s["n_records"], 6);
    assert!(s["mean_abs_error_deg"].as_f64().unwrap() < 0.5);

    let first = read_records_strict(Path::new(&m)).unwrap().remove(0);
    fs::remove_file(d.path().join(&first.depth_path)).unwrap();
    let rows: Vec<Value> = ok(&["estimate-pitch", "--manifest", &m, "--method", "depth"]).lines().map(json).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0]["error"].as_str().unwrap().contains("depth"));
    assert!(rows[0]["pitch_deg"].is_null());
    assert!(rows[1]["error"].is_null());
    assert!((rows[1]["depth"]["pitch_deg"].as_f64().unwrap() - rows[1]["true_pitch_deg"].as_f64().unwrap()).abs() <= 0.5);
}

#[test]
fn estimate_pitch_on_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    let m = small_dataset(d.path(), "0");
    assert_eq!(ok(&["estimate-pitch", "--manifest", &m]), "");
    assert!(!run(&["estimate-pitch", "--manifest", p(&d.path().join("missing.jsonl"))]).status.success());
}

#[test]
fn transform_round_trip_and_errors() {
    let d = tempfile::tempdir().unwrap();
    let mut bp = BodyParams::zeros(8);
    bp.pose[0] = nalgebra::Vector3::new(0.1, 0.7, -0.2);
    bp.translation = nalgebra::Vector3::new(0.3, -0.1, 4.0);
    let f = d.path().join("cam.json");
    fs::write(&f, serde_json::to_string(&bp).unwrap()).unwrap();

    let same: BodyParams = serde_json::from_str(&ok(&["transform", "--params", p(&f), "--pitch-deg", "0"])).unwrap();
    assert_eq!(same, bp);

    let w = ok(&["transform", "--params", p(&f), "--pitch-deg", "-23"]);
    let wf = d.path().join("world.json");
    fs::write(&wf, &w).unwrap();
    let back: BodyParams = serde_json::from_str(&ok(&["transform", "--params", p(&wf), "--pitch-deg", "-23", "--inverse"])).unwrap();
    for (a, b) in back.to_vector().iter().zip(bp.to_vector()) {
        assert!((a - b).abs() < 1e-9);
    }

    let bad = d.path().join("bad.json");
    fs::write(&bad, r#"{"pose": "nope"}"#).unwrap();
    let out = run(&["transform", "--params", p(&bad), "--pitch-deg", "10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn fit_and_metrics_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let m = small_dataset(d.path(), "5");
    let pitches = d.path().join("p.jsonl");
    ok(&["estimate-pitch", "--manifest", &m, "--out", p(&pitches)]);
    let fits = d.path().join("f.jsonl");
    let s = json(&ok(&["fit", "--manifest", &m, "--pitches", p(&pitches), "--out", p(&fits)]));
    assert_eq!(s["n_records"], 5);
    assert_eq!(s["n_failed"], 0);
    let again = d.path().join("f2.jsonl");
    ok(&["fit", "--manifest", &m, "--pitches", p(&pitches), "--out", p(&again)]);
    assert_eq!(fs::read(&fits).unwrap(), fs::read(&again).unwrap());

    let metrics = json(&ok(&["metrics", "--manifest", &m, "--fits", p(&fits)]));
    assert_eq!(metrics["schema"], 1);
    assert_eq!(metrics["n_records"], 5);
    assert!(metrics["wmpjpe_mm"].as_f64().unwrap() < 5.0);
    assert!(metrics["naive"]["wmpjpe_mm"].as_f64().unwrap() > metrics["wmpjpe_mm"].as_f64().unwrap());

    let lroot = d.path().join("f3.jsonl");
    ok(&["fit", "--manifest", &m, "--lroot", "5", "--out", p(&lroot)]);
    assert_ne!(fs::read(&fits).unwrap(), fs::read(&lroot).unwrap());
}

#[test]
fn metrics_perfect_and_mismatched() {
    let d = tempfile::tempdir().unwrap();
    let m = small_dataset(d.path(), "3");
    let spec = toy_body_spec();
    let recs = read_records_strict(Path::new(&m)).unwrap();
    let rows: Vec<String> = recs
        .iter()
        .map(|r| {
            let truth = r.reference_params(&spec);
            serde_json::json!({"schema": 1, "id": r.id, "params_world": truth, "params_naive": truth}).to_string()
        })
        .collect();
    let fits = d.path().join("perfect.jsonl");
    fs::write(&fits, rows.join("\n") + "\n").unwrap();
    let s = json(&ok(&["metrics", "--manifest", &m, "--fits", p(&fits)]));
    assert_eq!(s["wmpjpe_mm"].as_f64().unwrap(), 0.0);
    assert!(s["pampjpe_mm"].as_f64().unwrap() < 1e-9);
    assert_eq!(s["wpve_mm"].as_f64().unwrap(), 0.0);

    fs::write(&fits, rows[..2].join("\n") + "\n").unwrap();
    let out = run(&["metrics", "--manifest", &m, "--fits", p(&fits)]);
    assert!(!out.status.success());
}

#[test]
fn render_outputs_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, obj) = (d.path().join("a.pfm"), d.path().join("b.pfm"), d.path().join("m.obj"));
    let s = json(&ok(&["render", "--pitch-deg", "20", "--width", "64", "--height", "48", "--depth", p(&a), "--obj", p(&obj)]));
    assert!(s["covered_pixels"].as_u64().unwrap() > 0);
    ok(&["render", "--pitch-deg", "20", "--width", "64", "--height", "48", "--depth", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let depth = read_pfm(&a).unwrap();
    assert_eq!((depth.width, depth.height), (64, 48));
    let (verts, faces) = read_obj(&obj).unwrap();
    let spec = toy_body_spec();
    assert_eq!(verts.len(), spec.vertex_count());
    assert_eq!(faces.len(), spec.faces.len());

    assert!(!run(&["render", "--width", "0", "--depth", p(&a)]).status.success());
    assert!(!run(&["render"]).status.success());
}
