#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use appearance_core::model_store::read_alphas;
use appearance_core::ratings::{write_ratings, RatingRecord};
use appearance_core::{Attribute, Brdf, ChannelLayout, Dims, RatingsTable};

pub fn small_dims() -> Dims {
    Dims::new(16, 16, 32).unwrap()
}

/// Deterministic value in [0, 1) from two integers.
fn hash01(i: usize, k: usize) -> f64 {
    let x = ((i * 7919 + k * 104_729 + 13) as f64 * 12.9898).sin() * 43_758.545_3;
    x - x.floor()
}

/// Diffuse plus a Gaussian-ish highlight, varied by `i`.
pub fn seed_brdf(i: usize) -> Brdf {
    let base = 0.05 + 0.7 * hash01(i, 0);
    let tint: [f64; 3] = std::array::from_fn(|c| 0.5 + 0.5 * hash01(i, 1 + c));
    let ks = 2.0 * hash01(i, 4);
    let m = 0.04 + 0.4 * hash01(i, 5);
    let fresnel = 3.0 * hash01(i, 6);
    let dims = small_dims();
    Brdf::from_fn(dims, ChannelLayout::Rgb, |ch, bin| {
        let c = dims.bin_center(bin);
        let lobe = (-(c.theta_h.tan().powi(2)) / (m * m)).exp() / (PI * m * m * c.theta_h.cos().powi(4).max(1e-6));
        let f = 1.0 + fresnel * (1.0 - c.theta_d.cos()).powi(5);
        Some(base * tint[ch] / PI + 0.05 * ks * f * lobe.min(1e4))
    })
}

pub fn write_seeds(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        seed_brdf(i).write_merl(dir.join(format!("seed-{i:02}.binary"))).unwrap();
    }
}

/// Simulated ratings: each attribute is a sigmoid of a fixed linear
/// combination of the standardised coefficients, rated by four people.
pub fn simulated_ratings(alphas_csv: &Path) -> RatingsTable {
    let rows = read_alphas(std::fs::File::open(alphas_csv).unwrap()).unwrap();
    let n = rows.len() as f64;
    let mean: [f64; 5] = std::array::from_fn(|j| rows.values().map(|r| r.alpha[j]).sum::<f64>() / n);
    let sd: [f64; 5] =
        std::array::from_fn(|j| (rows.values().map(|r| (r.alpha[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(1e-12));
    let mut records = Vec::new();
    for (m, (id, row)) in rows.iter().enumerate() {
        for attr in Attribute::ALL {
            let z: f64 = (0..5).map(|j| (2.0 * hash01(attr.index(), 10 + j) - 1.0) * (row.alpha[j] - mean[j]) / sd[j]).sum();
            let y = 1.0 / (1.0 + (-z).exp());
            for p in 0..4 {
                let jitter = 0.2 * (hash01(m * 31 + p, attr.index()) - 0.5);
                let rating = (1.0 + 4.0 * (y + jitter)).round().clamp(1.0, 5.0) as u8;
                records.push(RatingRecord { brdf_id: id.clone(), participant_id: format!("p{p}"), attribute: attr, rating });
            }
        }
    }
    RatingsTable::new(records).unwrap()
}

pub fn appearance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_appearance")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

pub fn appearance_ok(args: &[&str]) -> String {
    let out = appearance(args);
    assert!(out.status.success(), "appearance {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Paths produced by [`pipeline`].
pub struct Pipeline {
    pub seeds: PathBuf,
    pub materials: PathBuf,
    pub ratings: PathBuf,
    pub models: PathBuf,
}

/// Seeds → expand → simulated ratings → train, all through the binary.
pub fn pipeline(root: &Path, seed: u64) -> Pipeline {
    let p = Pipeline {
        seeds: root.join("seeds"),
        materials: root.join("materials"),
        ratings: root.join("ratings.csv"),
        models: root.join("models"),
    };
    write_seeds(&p.seeds, 24);
    let seed = seed.to_string();
    appearance_ok(&["expand", "--seeds", s(&p.seeds), "--target", "80", "--seed", &seed, "--out", s(&p.materials)]);
    let table = simulated_ratings(&p.materials.join("alphas.csv"));
    write_ratings(&table, std::fs::File::create(&p.ratings).unwrap()).unwrap();
    appearance_ok(&[
        "train",
        "--ratings",
        s(&p.ratings),
        "--alphas",
        s(&p.materials.join("alphas.csv")),
        "--basis",
        s(&p.materials.join("basis.bin")),
        "--out",
        s(&p.models),
        "--centers",
        "8",
    ]);
    p
}

/// One pipeline run per test binary, kept under the cargo target tmp dir.
pub fn shared_pipeline(name: &str) -> &'static Pipeline {
    static CELL: std::sync::OnceLock<Pipeline> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
        let _ = std::fs::remove_dir_all(&root);
        pipeline(&root, 5)
    })
}
