mod common;

use std::collections::BTreeMap;
use std::path::Path;

use appearance_core::synthesis::ExpansionManifest;
use appearance_core::{Attribute, Brdf, ModelSet};
use common::{appearance, appearance_ok, pipeline, s, shared_pipeline};

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn expand_writes_tables_manifest_and_coefficients() {
    let p = shared_pipeline("pipeline");
    let manifest: ExpansionManifest =
        serde_json::from_slice(&std::fs::read(p.materials.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.rng_seed, 5);
    assert_eq!(manifest.seeds.len(), 24);
    assert_eq!(manifest.synthesized.len(), 56);
    for e in &manifest.synthesized {
        assert!(p.materials.join(format!("{}.binary", e.id)).exists());
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.parent_ids.iter().all(|id| id.starts_with("seed-")));
    }
    for i in 0..24 {
        let name = format!("seed-{i:02}.binary");
        assert_eq!(std::fs::read(p.seeds.join(&name)).unwrap(), std::fs::read(p.materials.join(&name)).unwrap());
    }
    let alphas = std::fs::read_to_string(p.materials.join("alphas.csv")).unwrap();
    assert_eq!(alphas.lines().count(), 81);
    assert_eq!(alphas.lines().filter(|l| l.contains(",seed,")).count(), 24);

    let models = ModelSet::load(&p.models).unwrap();
    assert_eq!(models.models().len(), Attribute::ALL.len());
    assert_eq!(models.basis().hash(), &manifest.basis_hash);
}

#[test]
fn same_seed_reproduces_every_artifact() {
    let p = shared_pipeline("pipeline");
    let dir = tempfile::tempdir().unwrap();
    let q = pipeline(dir.path(), 5);
    assert_eq!(dir_bytes(&p.materials), dir_bytes(&q.materials));
    assert_eq!(dir_bytes(&p.models), dir_bytes(&q.models));

    let other = dir.path().join("other");
    appearance_ok(&["expand", "--seeds", s(&p.seeds), "--target", "80", "--seed", "6", "--out", s(&other)]);
    let a = std::fs::read(p.materials.join("synth-0000.binary")).unwrap();
    let b = std::fs::read(other.join("synth-0000.binary")).unwrap();
    assert_ne!(a, b);
}

fn predict_json(models: &Path, files: &[&Path]) -> serde_json::Value {
    let mut args = vec!["predict", "--json", "--models", s(models)];
    args.extend(files.iter().map(|f| s(f)));
    serde_json::from_str(&appearance_ok(&args)).unwrap()
}

#[test]
fn predict_reports_every_attribute() {
    let p = shared_pipeline("pipeline");
    let a = p.materials.join("seed-03.binary");
    let b = p.materials.join("synth-0010.binary");
    let v = predict_json(&p.models, &[&a, &b]);
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), 2);
    for entry in obj.values() {
        let attrs = entry["attributes"].as_object().unwrap();
        assert_eq!(attrs.len(), 14);
        for p in attrs.values() {
            let (raw, clamped) = (p["raw"].as_f64().unwrap(), p["clamped"].as_f64().unwrap());
            assert_eq!(clamped, raw.clamp(0.0, 1.0));
        }
    }
    let text = appearance_ok(&["predict", "--models", s(&p.models), s(&a)]);
    assert!(text.contains("sharpness of reflections"));
}

#[test]
fn edit_moves_the_prediction_and_records_the_path() {
    let p = shared_pipeline("pipeline");
    let dir = tempfile::tempdir().unwrap();
    let src = p.materials.join("synth-0007.binary");
    let before = predict_json(&p.models, &[&src]);
    let y0 = before[s(&src)]["attributes"]["glossy"]["raw"].as_f64().unwrap();
    let target = if y0 < 0.5 { y0 + 0.15 } else { y0 - 0.15 };
    let out = dir.path().join("edited.binary");
    let path_csv = dir.path().join("path.csv");
    let report: serde_json::Value = serde_json::from_str(&appearance_ok(&[
        "edit",
        "--models",
        s(&p.models),
        "--brdf",
        s(&src),
        "--attribute",
        "glossy",
        "--target",
        &target.to_string(),
        "--out",
        s(&out),
        "--path-csv",
        s(&path_csv),
    ]))
    .unwrap();
    let achieved = report["achieved_y"].as_f64().unwrap();
    assert!((achieved - target).abs() < (y0 - target).abs(), "{report}");

    let edited = Brdf::read_merl(&out).unwrap();
    assert_eq!(edited.dims(), Brdf::read_merl(&src).unwrap().dims());
    let after = predict_json(&p.models, &[&out]);
    let y1 = after[s(&out)]["attributes"]["glossy"]["raw"].as_f64().unwrap();
    assert!((y1 - achieved).abs() < 1e-3, "re-projected {y1} vs achieved {achieved}");

    let mut rdr = csv::Reader::from_path(&path_csv).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report["iterations"].as_u64().unwrap() as usize + 1);
    let first: Vec<f64> = (1..6).map(|k| rows[0][k].parse().unwrap()).collect();
    let initial: Vec<f64> = report["alpha_initial"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(first, initial);
    let last: f64 = rows.last().unwrap()[6].parse().unwrap();
    assert_eq!(last, achieved);
}

#[test]
fn similarity_commands() {
    let p = shared_pipeline("pipeline");
    let a = p.materials.join("seed-01.binary");
    let b = p.materials.join("seed-02.binary");
    let d = |args: &[&str]| appearance_ok(args).trim().parse::<f64>().unwrap();
    assert_eq!(d(&["similar", s(&a), s(&a), "--rmse", "plain"]), 0.0);
    let ab = d(&["similar", s(&a), s(&b), "--rmse", "cosine-weighted"]);
    let ba = d(&["similar", s(&b), s(&a), "--rmse", "cosine-weighted"]);
    assert!(ab > 0.0 && ab == ba);
    let attr_ab = d(&["similar", s(&a), s(&b), "--attribute", "matte", "--models", s(&p.models)]);
    let attr_ba = d(&["similar", s(&b), s(&a), "--attribute", "matte", "--models", s(&p.models)]);
    assert!(attr_ab >= 0.0 && attr_ab == attr_ba);
    assert!(!appearance(&["similar", s(&a), s(&b)]).status.success());
    assert!(!appearance(&["similar", s(&a), s(&b), "--attribute", "matte"]).status.success());
}

#[test]
fn slice_writes_csv_and_png() {
    let p = shared_pipeline("pipeline");
    let dir = tempfile::tempdir().unwrap();
    let csv_out = dir.path().join("s.csv");
    appearance_ok(&["slice", "--models", s(&p.models), "--attribute", "rough", "--dims", "1,3", "--resolution", "9", "--out", s(&csv_out)]);
    let mut rdr = csv::Reader::from_path(&csv_out).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["a1", "a3", "value"]);
    let rows: Vec<[f64; 3]> =
        rdr.records().map(|r| std::array::from_fn(|k| r.as_ref().unwrap()[k].parse().unwrap())).collect();
    assert_eq!(rows.len(), 81);

    let models = ModelSet::load(&p.models).unwrap();
    let model = models.model(Attribute::Rough).unwrap();
    let fixed = models.hull().centroid();
    for r in rows.iter().step_by(7) {
        let mut a = fixed;
        a[0] = r[0];
        a[2] = r[1];
        assert!((model.eval_raw(&a) - r[2]).abs() < 1e-12);
    }

    let png = dir.path().join("s.png");
    appearance_ok(&["slice", "--models", s(&p.models), "--attribute", "rough", "--dims", "2,5", "--resolution", "20", "--out", s(&png)]);
    let img = image::open(&png).unwrap();
    assert_eq!((img.width(), img.height()), (20, 20));

    for bad in ["1,1", "0,2", "1,6", "1"] {
        let out = appearance(&["slice", "--models", s(&p.models), "--attribute", "rough", "--dims", bad, "--out", s(&png)]);
        assert!(!out.status.success(), "dims {bad} accepted");
    }
}

#[test]
fn stats_writes_tables() {
    let p = shared_pipeline("pipeline");
    let dir = tempfile::tempdir().unwrap();
    let clusters = dir.path().join("clusters.csv");
    let mut text = String::from("brdf_id,cluster\n");
    for i in 0..24 {
        text.push_str(&format!("seed-{i:02},{}\n", ["fabric", "metallic", "plastic"][i % 3]));
    }
    std::fs::write(&clusters, text).unwrap();
    let out = dir.path().join("stats");
    appearance_ok(&["stats", "--ratings", s(&p.ratings), "--clusters", s(&clusters), "--out", s(&out)]);
    for f in ["correlation.csv", "significance.csv", "cluster_stats.csv"] {
        assert!(std::fs::metadata(out.join(f)).unwrap().len() > 0, "{f}");
    }
    let corr = std::fs::read_to_string(out.join("correlation.csv")).unwrap();
    assert_eq!(corr.lines().count(), 15);
}

#[test]
fn render_with_directional_light() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("a.binary");
    common::seed_brdf(3).write_merl(&src).unwrap();
    let out = dir.path().join("a.png");
    appearance_ok(&["render", s(&src), "--out", s(&out), "--light", "0,1,1", "--resolution", "48"]);
    let img = image::open(&out).unwrap().into_rgb8();
    assert_eq!(img.dimensions(), (48, 48));
    assert_eq!(img.get_pixel(0, 0).0, [0, 0, 0]);
    assert!(img.get_pixel(24, 24).0.iter().any(|&c| c > 0));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.binary");
    let out = appearance(&["render", s(&missing), "--out", s(&dir.path().join("x.png"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let bad = dir.path().join("bad.binary");
    std::fs::write(&bad, [1u8, 2, 3]).unwrap();
    let out = appearance(&["render", s(&bad), "--out", s(&dir.path().join("x.png"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = appearance(&["edit", "--models", "m", "--brdf", "b", "--attribute", "shiny", "--target", "0.5", "--out", "o"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shiny"));
}
