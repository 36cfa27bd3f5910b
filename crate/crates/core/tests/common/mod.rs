#![allow(dead_code)]

use appearance_core::{Brdf, ChannelLayout, Dims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Analytic stand-in for a measured material.
#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
    pub roughness: f64,
    pub fresnel: f64,
    pub sheen: f64,
}

impl Params {
    pub fn random(rng: &mut impl Rng) -> Self {
        let base: f64 = rng.random_range(0.02..0.8);
        let diffuse = std::array::from_fn(|_| base * rng.random_range(0.4..1.0));
        let metal = rng.random_bool(0.3);
        let ks: f64 = if metal { rng.random_range(0.5..3.0) } else { rng.random_range(0.0..1.0) };
        let tint: [f64; 3] = if metal { diffuse.map(|d| d / base) } else { [1.0; 3] };
        Params {
            diffuse: if metal { diffuse.map(|d| 0.2 * d) } else { diffuse },
            specular: tint.map(|t| ks * t),
            roughness: rng.random_range(0.03..0.5),
            fresnel: rng.random_range(0.0..4.0),
            sheen: rng.random_range(0.0..0.3),
        }
    }

    pub fn value(&self, ch: usize, theta_h: f64, theta_d: f64) -> f64 {
        let m2 = self.roughness * self.roughness;
        let lobe = (-(theta_h.tan().powi(2)) / m2).exp() / (PI * m2 * theta_h.cos().powi(4).max(1e-6));
        let f = 1.0 + self.fresnel * (1.0 - theta_d.cos()).powi(5);
        let grazing = self.sheen * theta_d.sin().powi(4);
        self.diffuse[ch] / PI + 0.05 * self.specular[ch] * f * lobe.min(1e4) + grazing * self.diffuse[ch]
    }

    pub fn brdf(&self, dims: Dims) -> Brdf {
        Brdf::from_fn(dims, ChannelLayout::Rgb, |ch, bin| {
            let c = dims.bin_center(bin);
            Some(self.value(ch, c.theta_h, c.theta_d))
        })
    }
}

pub fn small_dims() -> Dims {
    Dims::new(16, 16, 32).unwrap()
}

pub fn random_brdfs(n: usize, dims: Dims, seed: u64) -> Vec<Brdf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Params::random(&mut rng).brdf(dims)).collect()
}

pub fn lambertian(dims: Dims, albedo: f64) -> Brdf {
    Brdf::from_fn(dims, ChannelLayout::Rgb, |_, _| Some(albedo / PI))
}

/// Hidden per-attribute truth `sigmoid(w·α + b)` used to simulate raters.
pub struct RatedDataset {
    pub alphas: Vec<appearance_core::Alpha>,
    pub origins: Vec<u32>,
    pub ids: Vec<String>,
    pub truth: Vec<[f64; appearance_core::ATTRIBUTE_COUNT]>,
    pub table: appearance_core::RatingsTable,
}

/// 400 materials in [-1, 1]^5 (the first 94 tagged as seeds), 10 raters per
/// material and attribute, rater noise `sigma` on the [0, 1] scale.
pub fn rated_dataset(seed: u64, sigma: f64) -> RatedDataset {
    use appearance_core::ratings::RatingRecord;
    use appearance_core::{Attribute, ATTRIBUTE_COUNT};
    use rand_distr::{Distribution, Normal};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let planes: Vec<([f64; 5], f64)> = (0..ATTRIBUTE_COUNT)
        .map(|_| (std::array::from_fn(|_| rng.random_range(-1.2..1.2)), rng.random_range(-0.5..0.5)))
        .collect();
    let n = 400;
    let alphas: Vec<[f64; 5]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("m{i:03}")).collect();
    let origins = (0..n).map(|i| u32::from(i >= 94)).collect();
    let truth: Vec<[f64; ATTRIBUTE_COUNT]> = alphas
        .iter()
        .map(|a| {
            std::array::from_fn(|k| {
                let (w, b) = &planes[k];
                let z: f64 = w.iter().zip(a).map(|(w, a)| w * a).sum::<f64>() + b;
                1.0 / (1.0 + (-z).exp())
            })
        })
        .collect();
    let mut records = Vec::with_capacity(n * ATTRIBUTE_COUNT * 10);
    for (i, id) in ids.iter().enumerate() {
        for attr in Attribute::ALL {
            for p in 0..10 {
                let y = truth[i][attr.index()] + noise.sample(&mut rng);
                let rating = (1.0 + 4.0 * y).round().clamp(1.0, 5.0) as u8;
                records.push(RatingRecord { brdf_id: id.clone(), participant_id: format!("p{p:02}"), attribute: attr, rating });
            }
        }
    }
    RatedDataset { alphas, origins, ids, truth, table: appearance_core::RatingsTable::new(records).unwrap() }
}

/// Rows for every material of an expansion, seeds first.
pub fn expansion_rows(ex: &appearance_core::synthesis::Expansion) -> std::collections::BTreeMap<String, appearance_core::model_store::AlphaRow> {
    use appearance_core::model_store::{AlphaRow, Origin};
    ex.seeds
        .iter()
        .map(|s| (s.id.clone(), AlphaRow { origin: Origin::Seed, alpha: s.alpha5 }))
        .chain(ex.synthesized.iter().map(|(e, _)| (e.id.clone(), AlphaRow { origin: Origin::Synthesized, alpha: e.alpha5 })))
        .collect()
}

/// A small expansion (30 seeds to 120 materials) with simulated ratings and
/// trained functionals for every attribute.
pub fn trained_fixture() -> (appearance_core::synthesis::Expansion, appearance_core::ModelSet) {
    use appearance_core::model_store::{hull_from_alphas, train_all};
    use appearance_core::ratings::RatingRecord;
    use appearance_core::synthesis::{expand, ExpandConfig, NamedBrdf};
    use appearance_core::{Attribute, ModelSet, RatingsTable, TrainConfig};

    let seeds: Vec<NamedBrdf> = random_brdfs(30, small_dims(), 21)
        .into_iter()
        .enumerate()
        .map(|(i, brdf)| NamedBrdf { id: format!("seed-{i:02}"), brdf })
        .collect();
    let ex = expand(&seeds, 120, 2, ExpandConfig::default()).unwrap();
    let rows = expansion_rows(&ex);
    let n = rows.len() as f64;
    let mean: [f64; 5] = std::array::from_fn(|j| rows.values().map(|r| r.alpha[j]).sum::<f64>() / n);
    let sd: [f64; 5] =
        std::array::from_fn(|j| (rows.values().map(|r| (r.alpha[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(1e-12));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut records = Vec::new();
    let planes: Vec<[f64; 5]> = Attribute::ALL.iter().map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    for (id, row) in &rows {
        for attr in Attribute::ALL {
            let w = &planes[attr.index()];
            let z: f64 = (0..5).map(|j| w[j] * (row.alpha[j] - mean[j]) / sd[j]).sum();
            let y = 1.0 / (1.0 + (-z).exp());
            for p in 0..5 {
                let rating = (1.0 + 4.0 * (y + rng.random_range(-0.1..0.1))).round().clamp(1.0, 5.0) as u8;
                records.push(RatingRecord { brdf_id: id.clone(), participant_id: format!("p{p}"), attribute: attr, rating });
            }
        }
    }
    let table = RatingsTable::new(records).unwrap();
    let models = train_all(ex.basis.hash(), &rows, &table, &TrainConfig::default()).unwrap();
    let set = ModelSet::new(ex.basis.clone(), hull_from_alphas(&rows).unwrap(), models).unwrap();
    (ex, set)
}
