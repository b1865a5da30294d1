use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use playa::raster::RasterGrid;

fn playa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_playa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn small_synth(root: &Path) -> String {
    let data = root.join("data");
    let out = playa(&["synth", "--playas", "12", "--years", "5", "--seed", "3", "--out", &s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Shrink training so the suite stays quick.
    let cfg_path = data.join("config.json");
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["model"]["hidden_size"] = 4.into();
    cfg["train"]["max_epochs"] = 3.into();
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    s(&cfg_path)
}

#[test]
fn usage_errors_exit_2() {
    let out = playa(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(playa(&["train", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn data_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let monthly = dir.path().join("data/monthly.csv");
    let text = std::fs::read_to_string(&monthly).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = lines[3].replacen(",", ",not-a-year-", 1);
    std::fs::write(&monthly, lines.join("\n") + "\n").unwrap();

    let out = playa(&["prepare", "--config", &cfg, "--out", &s(&dir.path().join("prep"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("monthly.csv") && err.contains("line 4"), "{err}");
}

#[test]
fn pipeline_records_cutoff_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let inputs: Vec<Vec<u8>> = ["playas.csv", "monthly.csv", "lulc.csv", "config.json"]
        .iter()
        .map(|f| std::fs::read(dir.path().join("data").join(f)).unwrap())
        .collect();

    let model = dir.path().join("model");
    assert!(playa(&["prepare", "--config", &cfg, "--out", &s(&dir.path().join("prep"))]).status.success());
    assert!(playa(&["train", "--config", &cfg, "--out", &s(&model)]).status.success());
    for f in ["checkpoint.json", "history.csv", "config.json", "version.txt"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let model_cfg = s(&model.join("config.json"));

    let eval = dir.path().join("eval");
    let out = playa(&["evaluate", "--config", &model_cfg, "--cutoff", "0.3", "--out", &s(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["cutoff"], 0.3);
    assert_eq!(metrics["splits"]["test"]["cutoff"], 0.3);
    let per_playa = std::fs::read_to_string(eval.join("per_playa_test.csv")).unwrap();
    assert!(per_playa.starts_with("playa_id,loss,f1\n"));
    assert_eq!(per_playa.lines().count(), 13);
    let fraction = std::fs::read_to_string(eval.join("fraction_test.csv")).unwrap();
    assert!(fraction.starts_with("year,month,truth_fraction,predicted_fraction\n"));

    let pred = dir.path().join("pred");
    assert!(playa(&["predict", "--config", &model_cfg, "--out", &s(&pred)]).status.success());
    let rows = std::fs::read_to_string(pred.join("predictions.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 12 * 60);

    let report = dir.path().join("report");
    assert!(playa(&["report", "--config", &model_cfg, "--out", &s(&report)]).status.success());
    for f in ["roc.svg", "fraction_test.svg", "timeline_best.svg", "timeline_worst.svg"] {
        let svg = std::fs::read_to_string(report.join(f)).unwrap();
        assert!(svg.starts_with("<svg"), "{f}");
    }

    // The resolved config reproduces the training run byte for byte.
    let again = dir.path().join("again");
    assert!(playa(&["train", "--config", &model_cfg, "--out", &s(&again)]).status.success());
    assert_eq!(
        std::fs::read(model.join("checkpoint.json")).unwrap(),
        std::fs::read(again.join("checkpoint.json")).unwrap()
    );

    let after: Vec<Vec<u8>> = ["playas.csv", "monthly.csv", "lulc.csv", "config.json"]
        .iter()
        .map(|f| std::fs::read(dir.path().join("data").join(f)).unwrap())
        .collect();
    assert_eq!(inputs, after);
}

#[test]
fn evaluate_rejects_mismatched_playa_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let model = dir.path().join("model");
    assert!(playa(&["train", "--config", &cfg, "--out", &s(&model)]).status.success());
    let out = playa(&[
        "evaluate",
        "--config",
        &s(&model.join("config.json")),
        "--max-playas",
        "5",
        "--out",
        &s(&dir.path().join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint vocabulary"));
}

#[test]
fn extract_lulc_from_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_synth(dir.path());
    let playas = std::fs::read_to_string(dir.path().join("data/playas.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(playas.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let (xi, yi) = (
        headers.iter().position(|h| h == "centroid_x").unwrap(),
        headers.iter().position(|h| h == "centroid_y").unwrap(),
    );
    let pts: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[xi].parse().unwrap(), r[yi].parse().unwrap())
        })
        .collect();
    let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 1000.0;
    let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 1000.0;
    let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 1000.0;
    let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 1000.0;
    let cell = 100.0;
    let w = ((max_x - min_x) / cell).ceil() as usize;
    let h = ((max_y - min_y) / cell).ceil() as usize;

    // Everything grassland (code 71) except nodata-free cropland (82) in 2001.
    let classes = BTreeMap::from([(71, "grassland".to_string()), (82, "cropland".to_string())]);
    let g1 = RasterGrid::new(w, h, min_x, max_y, cell, -1, vec![71; w * h]).unwrap().with_classes(classes.clone());
    let g2 = RasterGrid::new(w, h, min_x, max_y, cell, -1, vec![82; w * h]).unwrap().with_classes(classes);
    g1.write(&dir.path().join("nlcd2000.json")).unwrap();
    g2.write(&dir.path().join("nlcd2001.json")).unwrap();

    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["rasters"] = serde_json::json!([
        {"year": 2000, "header": "../nlcd2000.json"},
        {"year": 2001, "header": "../nlcd2001.json"}
    ]);
    cfg["buffer"]["n_points"] = 500.into();
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();

    let out_dir = dir.path().join("lulc");
    let out = playa(&["extract-lulc", "--config", &cfg_path, "--out", &s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("lulc.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let grass = headers.iter().position(|h| h == "frac_grassland").unwrap();
    let crop = headers.iter().position(|h| h == "frac_cropland").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        let (g, c): (f64, f64) = (r[grass].parse().unwrap(), r[crop].parse().unwrap());
        match &r[1] {
            "2000" => assert_eq!((g, c), (1.0, 0.0)),
            _ => assert_eq!((g, c), (0.0, 1.0)),
        }
    }
}
