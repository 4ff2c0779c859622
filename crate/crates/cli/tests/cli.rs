use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cpw_stitch::imaging::{save_image, RasterImage};
use cpw_stitch::synthetic::{homography_pair, parallax_pair};
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpw-stitch")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pair(dir: &Path, parallax: bool) -> (PathBuf, PathBuf) {
    let pair = if parallax { parallax_pair(240, 180, 4.0, 3) } else { homography_pair(240, 180, 5) };
    let (a, b) = (dir.join("src.png"), dir.join("dst.png"));
    save_image(&pair.source, &a).unwrap();
    save_image(&pair.target, &b).unwrap();
    (a, b)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stitch_args<'a>(a: &'a Path, b: &'a Path, out: &'a Path, report: &'a Path) -> Vec<&'a str> {
    vec!["stitch", s(a), s(b), "-o", s(out), "--report", s(report), "--mesh", "8", "--levels", "2"]
}

#[test]
fn stitch_writes_panorama_and_report() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), true);
    let (out, report, mask) = (dir.path().join("pano.png"), dir.path().join("r.json"), dir.path().join("m.png"));
    let mut args = stitch_args(&a, &b, &out, &report);
    args.extend(["--mask", s(&mask)]);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists() && mask.exists());
    let r = json(&report);
    assert_eq!(r["mesh"]["rows"], 8);
    assert_eq!(r["config"]["levels"], 2);
    assert_eq!(r["outputs"]["panorama"], s(&out));
    assert!(r["final_metric"]["rmse_ncc"].as_f64().unwrap() >= 0.0);
    assert!(r["point_inliers"].as_u64().unwrap() >= 4);
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), true);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let (out, report) = (dir.path().join("pano.png"), dir.path().join(format!("r{k}.json")));
        let o = run(&stitch_args(&a, &b, &out, &report));
        assert!(o.status.success());
        outputs.push((fs::read(&report).unwrap(), fs::read(&out).unwrap()));
    }
    // Report paths differ only in the report file itself, which is not listed.
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_input_fails_without_outputs() {
    let dir = TempDir::new().unwrap();
    let (_, b) = write_pair(dir.path(), false);
    let (out, report) = (dir.path().join("pano.png"), dir.path().join("r.json"));
    let missing = dir.path().join("nope.png");
    let o = run(&stitch_args(&missing, &b, &out, &report));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[INPUT]"));
    assert!(!out.exists() && !report.exists());
}

#[test]
fn featureless_pair_fails_at_features_stage() {
    let dir = TempDir::new().unwrap();
    let flat = RasterImage::constant(120, 90, 1, 0.5).unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    save_image(&flat, &a).unwrap();
    save_image(&flat, &b).unwrap();
    let (out, report) = (dir.path().join("pano.png"), dir.path().join("r.json"));
    let o = run(&stitch_args(&a, &b, &out, &report));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[FEATURES]"));
    assert!(!out.exists() && !report.exists());
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), false);
    let (out, report) = (dir.path().join("pano.png"), dir.path().join("r.json"));
    assert_eq!(run(&["stitch", s(&a)]).status.code(), Some(2));
    let mut args = stitch_args(&a, &b, &out, &report);
    args.extend(["--weights", "1,2,3"]);
    assert_eq!(run(&args).status.code(), Some(2));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mesh_rowz": 4}"#).unwrap();
    let mut args = stitch_args(&a, &b, &out, &report);
    args.extend(["--config", s(&cfg)]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh_rowz"));
    assert!(!out.exists());
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), false);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mesh_rows": 6, "mesh_cols": 6, "seed": 9, "levels": 1}"#).unwrap();
    let (out, report) = (dir.path().join("pano.png"), dir.path().join("r.json"));
    let o = run(&["stitch", s(&a), s(&b), "-o", s(&out), "--report", s(&report), "--config", s(&cfg), "--seed", "17"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = &json(&report)["config"];
    assert_eq!(c["seed"], 17);
    assert_eq!(c["mesh_rows"], 6);
    assert_eq!(c["levels"], 1);
    assert_eq!(c["max_iterations"], 10);
}

#[test]
fn features_round_trip_through_stitch() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), false);
    let (corr, viz) = (dir.path().join("corr.json"), dir.path().join("viz.png"));
    let o = run(&["features", s(&a), s(&b), "-o", s(&corr), "--viz", s(&viz)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(viz.exists());
    let c = json(&corr);
    assert!(!c["points"].as_array().unwrap().is_empty());

    let (out, r1, r2) = (dir.path().join("pano.png"), dir.path().join("r1.json"), dir.path().join("r2.json"));
    assert!(run(&stitch_args(&a, &b, &out, &r1)).status.success());
    let mut args = stitch_args(&a, &b, &out, &r2);
    args.extend(["--correspondences", s(&corr)]);
    assert!(run(&args).status.success());
    let (j1, j2) = (json(&r1), json(&r2));
    for key in ["homography", "point_inliers", "line_inliers", "ransac_iterations", "points_total", "lines_total"] {
        assert_eq!(j1[key], j2[key], "{key}");
    }
}

#[test]
fn features_on_constant_pair_are_empty() {
    let dir = TempDir::new().unwrap();
    let flat = RasterImage::constant(64, 48, 3, 0.3).unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    save_image(&flat, &a).unwrap();
    save_image(&flat, &b).unwrap();
    let corr = dir.path().join("corr.json");
    let o = run(&["features", s(&a), s(&b), "-o", s(&corr)]);
    assert!(o.status.success());
    let c = json(&corr);
    for key in ["points", "lines_matched", "lines_unmatched"] {
        assert_eq!(c[key].as_array().unwrap().len(), 0, "{key}");
    }
}

#[test]
fn eval_scores_images() {
    let dir = TempDir::new().unwrap();
    let (a, b) = write_pair(dir.path(), false);
    let o = run(&["eval", s(&a), s(&a)]);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["rmse_ncc"], 0.0);
    assert_eq!(r["window"], 3);
    assert_eq!(r["overlap_pixels"], 238 * 178);

    let out = dir.path().join("m.json");
    let o = run(&["eval", s(&a), s(&b), "--window", "5", "-o", s(&out)]);
    assert!(o.status.success());
    let r = json(&out);
    assert_eq!(r["window"], 5);
    assert!(r["rmse_ncc"].as_f64().unwrap() > 0.0);

    let small = dir.path().join("small.png");
    save_image(&RasterImage::constant(10, 10, 1, 0.5).unwrap(), &small).unwrap();
    assert_ne!(run(&["eval", s(&a), s(&small)]).status.code(), Some(0));
}
