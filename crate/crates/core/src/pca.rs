//! Principal-component representation `b = Q alpha + mu` of mapped tables.
//!
//! `Q` holds the leading principal directions scaled by their eigenvalues
//! (covariance variances), so it is orthogonal but not orthonormal;
//! projection is the exact least-squares inverse `alpha_k = q_k . (b - mu) / lambda_k^2`.
//! The basis is fitted through the Gram matrix of the samples, which keeps the
//! eigenproblem at `n x n` for tables with millions of bins.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{argument, Error, Result};
use crate::logmap::{MappedBrdf, ReferenceBrdf};
use crate::merl::{Brdf, ChannelLayout, Dims};

/// Number of components of the standard configuration.
pub const COMPONENTS: usize = 5;

/// A point of the 5D achromatic coefficient space.
pub type Alpha = [f64; COMPONENTS];

/// Content digest identifying a basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasisHash(pub String);

impl std::fmt::Display for BasisHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Coefficients of a mapped table in a particular basis: `M` values for a
/// single channel, or `3M` laid out as consecutive per-channel blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffVector {
    pub values: Vec<f64>,
    pub basis_hash: BasisHash,
}

impl CoeffVector {
    /// The 5D achromatic coordinates; fails for other lengths.
    pub fn alpha5(&self) -> Result<Alpha> {
        self.values
            .as_slice()
            .try_into()
            .map_err(|_| argument(format!("expected {COMPONENTS} coefficients, got {}", self.values.len())))
    }
}

#[derive(Clone, Debug)]
pub struct PcaBasis {
    dims: Dims,
    mean: Vec<f64>,
    /// Scaled columns `q_k = lambda_k u_k`.
    columns: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    reference: ReferenceBrdf,
    hash: BasisHash,
}

impl PcaBasis {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn components(&self) -> usize {
        self.columns.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    /// Explained variance per component, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn reference(&self) -> &ReferenceBrdf {
        &self.reference
    }

    pub fn hash(&self) -> &BasisHash {
        &self.hash
    }

    /// Unit eigenvectors; `None` for components with zero variance.
    pub fn unit_direction(&self, k: usize) -> Option<Vec<f64>> {
        let lambda = self.eigenvalues[k];
        (lambda > 0.0).then(|| self.columns[k].iter().map(|q| q / lambda).collect())
    }

    fn project_channel(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .zip(&self.eigenvalues)
            .map(|(q, &lambda)| {
                if lambda > 0.0 {
                    let dot: f64 = q.iter().zip(x).zip(&self.mean).map(|((q, x), m)| q * (x - m)).sum();
                    dot / (lambda * lambda)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Least-squares coefficients of every channel of `m`.
    pub fn project(&self, m: &MappedBrdf) -> Result<CoeffVector> {
        if m.dims() != self.dims {
            return Err(argument(format!("mapped dims {:?} do not match basis {:?}", m.dims(), self.dims)));
        }
        let values = (0..m.channels()).flat_map(|ch| self.project_channel(m.channel(ch))).collect();
        Ok(CoeffVector { values, basis_hash: self.hash.clone() })
    }

    /// Affine synthesis `mu + Q alpha`, blockwise for `3M` coefficients.
    pub fn reconstruct(&self, alpha: &[f64]) -> Result<MappedBrdf> {
        let m = self.components();
        if alpha.is_empty() || !alpha.len().is_multiple_of(m) || alpha.len() / m > 3 || alpha.len() / m == 2 {
            return Err(argument(format!("expected {m} or {} coefficients, got {}", 3 * m, alpha.len())));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(argument("coefficients must be finite"));
        }
        let n = self.dims.bins();
        let channels = alpha.len() / m;
        let mut values = vec![0.0; n * channels];
        for (ch, block) in alpha.chunks(m).enumerate() {
            let out = &mut values[ch * n..(ch + 1) * n];
            out.par_iter_mut().enumerate().for_each(|(i, v)| {
                let mut acc = self.mean[i];
                for (a, q) in block.iter().zip(&self.columns) {
                    acc += a * q[i];
                }
                *v = acc;
            });
        }
        MappedBrdf::new(self.dims, channels, values)
    }

    /// Reconstructs from a tagged coefficient vector, checking its basis.
    pub fn reconstruct_coeffs(&self, coeffs: &CoeffVector) -> Result<MappedBrdf> {
        self.ensure_same(&coeffs.basis_hash)?;
        self.reconstruct(&coeffs.values)
    }

    pub fn ensure_same(&self, hash: &BasisHash) -> Result<()> {
        if hash != &self.hash {
            return Err(Error::Compatibility { expected: self.hash.0.clone(), found: hash.0.clone() });
        }
        Ok(())
    }
}

/// Fits the mean and the leading `components` principal directions of a set
/// of single-channel mapped tables.
pub fn fit_basis(mapped: &[MappedBrdf], reference: ReferenceBrdf, components: usize) -> Result<PcaBasis> {
    let n = mapped.len();
    if components == 0 {
        return Err(argument("component count must be positive"));
    }
    if n < components + 1 {
        return Err(argument(format!("{components} components need at least {} tables, got {n}", components + 1)));
    }
    let dims = reference.dims();
    if reference.channels() != 1 {
        return Err(argument("the basis is fitted on single-channel (achromatic) tables"));
    }
    if mapped.iter().any(|m| m.dims() != dims || m.channels() != 1) {
        return Err(argument("mapped tables must be single-channel and match the reference dims"));
    }
    let len = dims.bins();
    let mut mean = vec![0.0; len];
    mean.par_iter_mut().enumerate().for_each(|(i, m)| {
        *m = mapped.iter().map(|x| x.values()[i]).sum::<f64>() / n as f64;
    });
    let centered: Vec<Vec<f64>> = mapped
        .par_iter()
        .map(|x| x.values().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let denom = (n - 1) as f64;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let dots: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (&(i, j), &d) in pairs.iter().zip(&dots) {
        gram[(i, j)] = d;
        gram[(j, i)] = d;
    }

    // Variance below this is numerical noise from averaging identical samples.
    let raw_scale: f64 = mapped.iter().map(|x| x.values().iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / denom;
    let cutoff = 1e-14 * raw_scale.max(f64::MIN_POSITIVE);

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut columns = Vec::with_capacity(components);
    let mut eigenvalues = Vec::with_capacity(components);
    for &k in order.iter().take(components) {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff {
            columns.push(vec![0.0; len]);
            eigenvalues.push(0.0);
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let norm = (denom * lambda).sqrt();
        let mut u = vec![0.0; len];
        u.par_iter_mut().enumerate().for_each(|(i, u)| {
            *u = centered.iter().zip(v.iter()).map(|(x, c)| x[i] * c).sum::<f64>() / norm;
        });
        let unit = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        columns.push(u.iter().map(|x| x / unit * lambda).collect());
        eigenvalues.push(lambda);
    }
    let hash = digest(dims, &mean, &columns, &eigenvalues, &reference);
    Ok(PcaBasis { dims, mean, columns, eigenvalues, reference, hash })
}

fn digest(dims: Dims, mean: &[f64], columns: &[Vec<f64>], eigenvalues: &[f64], reference: &ReferenceBrdf) -> BasisHash {
    let mut h = Sha256::new();
    h.update(b"appearance-basis-v1");
    for d in [dims.theta_h, dims.theta_d, dims.phi_d, columns.len()] {
        h.update((d as u64).to_le_bytes());
    }
    let mut feed = |xs: &[f64]| {
        for x in xs {
            h.update(x.to_le_bytes());
        }
    };
    feed(mean);
    for c in columns {
        feed(c);
    }
    feed(eigenvalues);
    feed(reference.median().stored());
    feed(&[reference.epsilon(), reference.weight_floor()]);
    BasisHash(hex::encode(h.finalize()))
}

const BASIS_MAGIC: &[u8; 8] = b"APBASIS1";

#[derive(Serialize, Deserialize)]
struct BasisHeader {
    #[serde(rename = "M")]
    m: usize,
    dims: Dims,
    basis_hash: BasisHash,
    epsilon: f64,
    cosine_weight_floor: f64,
    eigenvalues: Vec<f64>,
    reference_layout: ChannelLayout,
    blocks: Vec<String>,
}

impl PcaBasis {
    /// Serialises as `magic, u64 header length, JSON header`, followed by
    /// little-endian `f64` blocks for `mu`, the `M` columns of `Q`, and the
    /// reference median (stored units).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = BasisHeader {
            m: self.components(),
            dims: self.dims,
            basis_hash: self.hash.clone(),
            epsilon: self.reference.epsilon(),
            cosine_weight_floor: self.reference.weight_floor(),
            eigenvalues: self.eigenvalues.clone(),
            reference_layout: self.reference.median().layout(),
            blocks: vec!["mu".into(), "Q".into(), "reference_median".into()],
        };
        let json = serde_json::to_vec(&header)?;
        let n = self.dims.bins();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * n * (self.components() + 2));
        out.extend_from_slice(BASIS_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        put(&self.mean);
        self.columns.iter().for_each(|c| put(c));
        put(self.reference.median().stored());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PcaBasis> {
        let bad = |m: &str| Error::Format(format!("basis file: {m}"));
        if bytes.len() < 16 || &bytes[..8] != BASIS_MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: BasisHeader = serde_json::from_slice(body)?;
        let n = header.dims.bins();
        let channels = header.reference_layout.channels();
        let payload = &bytes[16 + hlen..];
        let expected = 8 * n * (1 + header.m + channels);
        if payload.len() != expected || header.eigenvalues.len() != header.m {
            return Err(bad("payload size does not match header"));
        }
        let mut floats = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |k: usize| floats.by_ref().take(k).collect::<Vec<f64>>();
        let mean = take(n);
        let columns: Vec<Vec<f64>> = (0..header.m).map(|_| take(n)).collect();
        let median = Brdf::from_stored(header.dims, header.reference_layout, take(n * channels))?;
        let reference = ReferenceBrdf::new(median, header.epsilon, header.cosine_weight_floor)?;
        let hash = digest(header.dims, &mean, &columns, &header.eigenvalues, &reference);
        if hash != header.basis_hash {
            return Err(bad("content digest does not match basis_hash"));
        }
        Ok(PcaBasis { dims: header.dims, mean, columns, eigenvalues: header.eigenvalues, reference, hash })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PcaBasis> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        PcaBasis::from_bytes(&bytes)
    }
}
