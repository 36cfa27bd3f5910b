//! Dataset expansion: uniform Gibbs sampling inside the seed hull and
//! synthesis of new tables from the three nearest seeds.
//!
//! Sampling and neighbour distances live in the 5D achromatic space; the
//! convex combination itself is taken over the 15 per-channel coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chroma::split_achromatic;
use crate::error::{argument, Result};
use crate::hull::{HullModel, DEFAULT_TOLERANCE};
use crate::logmap::{compute_reference, map_brdf, unmap_brdf};
use crate::merl::{Brdf, ChannelLayout};
use crate::pca::{fit_basis, Alpha, BasisHash, PcaBasis, COMPONENTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GibbsOptions {
    /// Full sweeps discarded before the first retained sample.
    pub burn_in: usize,
    /// Full sweeps between retained samples.
    pub thinning: usize,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { burn_in: 100, thinning: 5 }
    }
}

/// Draws `n` approximately uniform points from the hull, starting at its
/// centroid and resampling one coordinate at a time from its feasible interval.
pub fn gibbs_sample(hull: &HullModel, n: usize, seed: u64) -> Result<Vec<Alpha>> {
    gibbs_sample_with(hull, n, seed, GibbsOptions::default())
}

pub fn gibbs_sample_with(hull: &HullModel, n: usize, seed: u64, opts: GibbsOptions) -> Result<Vec<Alpha>> {
    hull.ensure_full_dimensional()?;
    if n > 1 && opts.thinning == 0 {
        return Err(argument("thinning must be at least one sweep"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = hull.centroid();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    for _ in 0..opts.burn_in {
        sweep(hull, &mut state, &mut rng);
    }
    out.push(state);
    while out.len() < n {
        for _ in 0..opts.thinning {
            sweep(hull, &mut state, &mut rng);
        }
        out.push(state);
    }
    Ok(out)
}

fn sweep(hull: &HullModel, state: &mut Alpha, rng: &mut ChaCha8Rng) {
    for axis in 0..COMPONENTS {
        let current = state[axis];
        let Some((lo, hi)) = hull.coordinate_range(state, axis) else {
            continue;
        };
        // LP optima sit on the boundary; keep draws a hair inside it.
        let margin = 1e-9 * (hi - lo);
        let (lo, hi) = (lo + margin, hi - margin);
        let mut proposal = if hi > lo { rng.random_range(lo..hi) } else { current };
        let mut candidate = *state;
        candidate[axis] = proposal;
        // The current state is feasible and the hull convex, so pulling the
        // proposal toward it restores feasibility if LP round-off overshot.
        let mut tries = 0;
        while !hull.contains(&candidate) && tries < 40 {
            proposal = current + 0.5 * (proposal - current);
            candidate[axis] = proposal;
            tries += 1;
        }
        if tries < 40 {
            state[axis] = proposal;
        }
    }
}

/// One synthesized point: the 15D coefficients plus the convex combination
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub parents: [usize; 3],
    pub weights: [f64; 3],
    /// Achromatic coordinates of the result: the same combination of the
    /// parents' 5D coefficients.
    pub alpha5: Alpha,
    pub alpha15: Vec<f64>,
}

/// Convex combination of the three seeds nearest to `alpha` (Euclidean, in
/// 5D), weighted by inverse distance. A query that coincides with a seed
/// returns that seed exactly; distance ties go to the lower index.
pub fn synthesize(alpha: &Alpha, dataset: &[(Alpha, Vec<f64>)]) -> Result<Synthesis> {
    if dataset.len() < 3 {
        return Err(argument("synthesis needs at least three seeds"));
    }
    let width = dataset[0].1.len();
    if dataset.iter().any(|(_, c)| c.len() != width) {
        return Err(argument("seed coefficient vectors differ in length"));
    }
    let mut dist: Vec<(f64, usize)> =
        dataset.iter().enumerate().map(|(i, (p, _))| (distance(alpha, p), i)).collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = [dist[0], dist[1], dist[2]];
    let parents = nearest.map(|(_, i)| i);

    let weights = if nearest[0].0 == 0.0 {
        [1.0, 0.0, 0.0]
    } else {
        let inv = nearest.map(|(d, _)| 1.0 / d);
        let total: f64 = inv.iter().sum();
        inv.map(|w| w / total)
    };

    if weights[0] == 1.0 {
        let (a5, a15) = &dataset[parents[0]];
        return Ok(Synthesis { parents, weights, alpha5: *a5, alpha15: a15.clone() });
    }
    let mut alpha5 = [0.0; COMPONENTS];
    let mut alpha15 = vec![0.0; width];
    for (&p, &w) in parents.iter().zip(&weights) {
        let (a5, a15) = &dataset[p];
        alpha5.iter_mut().zip(a5).for_each(|(o, v)| *o += w * v);
        alpha15.iter_mut().zip(a15).for_each(|(o, v)| *o += w * v);
    }
    Ok(Synthesis { parents, weights, alpha5, alpha15 })
}

fn distance(a: &Alpha, b: &Alpha) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A table with an identifier.
#[derive(Clone, Debug)]
pub struct NamedBrdf {
    pub id: String,
    pub brdf: Brdf,
}

/// Manifest record of a synthesized table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub parent_ids: [String; 3],
    pub weights: [f64; 3],
    pub alpha5: Alpha,
    pub alpha15: Vec<f64>,
    pub rng_seed: u64,
}

/// Coefficients of an input seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: String,
    pub alpha5: Alpha,
    pub alpha15: Vec<f64>,
}

/// On-disk record of an expansion, written next to the tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionManifest {
    pub rng_seed: u64,
    pub basis_hash: BasisHash,
    pub seeds: Vec<SeedRecord>,
    pub synthesized: Vec<ManifestEntry>,
}

/// Everything produced by [`expand`].
#[derive(Clone, Debug)]
pub struct Expansion {
    pub basis: PcaBasis,
    pub hull: HullModel,
    pub seeds: Vec<SeedRecord>,
    /// Raw Gibbs samples, one per synthesized table.
    pub samples: Vec<Alpha>,
    pub synthesized: Vec<(ManifestEntry, Brdf)>,
}

impl Expansion {
    pub fn manifest(&self, rng_seed: u64) -> ExpansionManifest {
        ExpansionManifest {
            rng_seed,
            basis_hash: self.basis.hash().clone(),
            seeds: self.seeds.clone(),
            synthesized: self.synthesized.iter().map(|(e, _)| e.clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExpandConfig {
    pub components: usize,
    pub gibbs: GibbsOptions,
    pub hull_tolerance: f64,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig { components: COMPONENTS, gibbs: GibbsOptions::default(), hull_tolerance: DEFAULT_TOLERANCE }
    }
}

/// Full expansion pipeline: split, map, fit the basis on the luminance
/// channel, project every colour channel, sample the hull, synthesize and
/// unmap.
pub fn expand(seeds: &[NamedBrdf], target_total: usize, seed: u64, config: ExpandConfig) -> Result<Expansion> {
    if config.components != COMPONENTS {
        return Err(argument(format!("hull synthesis works in {COMPONENTS} dimensions")));
    }
    if target_total < seeds.len() {
        return Err(argument(format!("target {target_total} is below the seed count {}", seeds.len())));
    }
    if seeds.iter().any(|s| s.brdf.layout() != ChannelLayout::Rgb) {
        return Err(argument("seeds must be RGB tables"));
    }
    let achromatic: Vec<Brdf> =
        seeds.par_iter().map(|s| split_achromatic(&s.brdf).map(|(y, _)| y)).collect::<Result<_>>()?;
    let reference = compute_reference(&achromatic)?;
    let mapped: Vec<_> = achromatic.par_iter().map(|y| map_brdf(y, &reference)).collect::<Result<_>>()?;
    let basis = fit_basis(&mapped, reference, config.components)?;

    let records: Vec<SeedRecord> = seeds
        .par_iter()
        .zip(&mapped)
        .map(|(s, m)| {
            let alpha5 = basis.project(m)?.alpha5()?;
            let colour = map_brdf(&s.brdf, basis.reference())?;
            let alpha15 = basis.project(&colour)?.values;
            Ok(SeedRecord { id: s.id.clone(), alpha5, alpha15 })
        })
        .collect::<Result<_>>()?;

    let hull = HullModel::new(records.iter().map(|r| r.alpha5).collect(), config.hull_tolerance)?;
    let count = target_total - seeds.len();
    let samples = if count == 0 { Vec::new() } else { gibbs_sample_with(&hull, count, seed, config.gibbs)? };
    let dataset: Vec<(Alpha, Vec<f64>)> = records.iter().map(|r| (r.alpha5, r.alpha15.clone())).collect();

    let synthesized = samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let s = synthesize(sample, &dataset)?;
            let brdf = unmap_brdf(&basis.reconstruct(&s.alpha15)?, basis.reference())?;
            let entry = ManifestEntry {
                id: format!("synth-{i:04}"),
                parent_ids: s.parents.map(|p| records[p].id.clone()),
                weights: s.weights,
                alpha5: s.alpha5,
                alpha15: s.alpha15,
                rng_seed: seed,
            };
            Ok((entry, brdf))
        })
        .collect::<Result<_>>()?;

    Ok(Expansion { basis, hull, seeds: records, samples, synthesized })
}

/// Returns the seeds followed by `target_total - seeds.len()` synthesized
/// tables.
pub fn expand_dataset(seeds: &[Brdf], target_total: usize, seed: u64) -> Result<Vec<Brdf>> {
    if target_total == seeds.len() {
        return Ok(seeds.to_vec());
    }
    let named: Vec<NamedBrdf> = seeds
        .iter()
        .enumerate()
        .map(|(i, b)| NamedBrdf { id: format!("seed-{i:03}"), brdf: b.clone() })
        .collect();
    let expansion = expand(&named, target_total, seed, ExpandConfig::default())?;
    let mut out = seeds.to_vec();
    out.extend(expansion.synthesized.into_iter().map(|(_, b)| b));
    Ok(out)
}
