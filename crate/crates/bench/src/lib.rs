//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use appearance_core::kmeans::kmeans;
use appearance_core::pca::BasisHash;
use appearance_core::{Alpha, Attribute, Brdf, ChannelLayout, Dims, HullModel, RbfModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in [-1, 1]^5.
pub fn cloud(n: usize, seed: u64) -> Vec<Alpha> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
}

/// Hull of 100 random points, about the size of a measured database.
pub fn hull() -> HullModel {
    HullModel::new(cloud(100, 1), appearance_core::hull::DEFAULT_TOLERANCE).unwrap()
}

/// A 10-center functional with centers from k-means over the hull points.
pub fn model(hull: &HullModel) -> RbfModel {
    let centers = kmeans(hull.points(), 10, 2).unwrap().centers;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights = (0..centers.len()).map(|_| rng.random_range(0.0..0.9)).collect();
    RbfModel::new(Attribute::Glossy, centers, weights, 0.8, BasisHash("bench".into())).unwrap()
}

/// Full-resolution table with a diffuse term and a glossy lobe.
pub fn glossy_table() -> Brdf {
    let dims = Dims::new(90, 90, 180).unwrap();
    Brdf::from_fn(dims, ChannelLayout::Rgb, |ch, bin| {
        let c = dims.bin_center(bin);
        let m2: f64 = 0.04;
        let lobe = (-(c.theta_h.tan().powi(2)) / m2).exp() / (PI * m2 * c.theta_h.cos().powi(4).max(1e-6));
        Some([0.3, 0.2, 0.1][ch] / PI + 0.02 * lobe.min(1e4))
    })
}
