//! Gaussian RBF networks mapping 5D coefficients to one attribute, trained
//! by k-means centres plus ridge least squares over a grid of widths.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::Attribute;
use crate::error::{argument, Error, Result};
use crate::kmeans::{dist2, kmeans};
use crate::pca::{Alpha, BasisHash, CoeffVector, COMPONENTS};

pub const DEFAULT_CENTERS: usize = 10;
pub const DEFAULT_RIDGE: f64 = 1e-8;
/// 325 of 400 materials train, the rest validate.
pub const DEFAULT_TRAIN_FRACTION: f64 = 325.0 / 400.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mse_train: f64,
    pub mse_validation: f64,
    pub beta_grid: Vec<f64>,
    /// Validation MSE for each entry of `beta_grid`.
    pub validation_grid: Vec<f64>,
    pub chosen_beta: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub kmeans_sse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub attribute: Attribute,
    pub n_centers: usize,
    pub beta: f64,
    pub centers: Vec<Alpha>,
    pub weights: Vec<f64>,
    pub basis_hash: BasisHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_report: Option<TrainReport>,
}

/// Raw network output and the value clamped to [0, 1] for display.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw: f64,
    pub clamped: f64,
}

impl Prediction {
    pub fn new(raw: f64) -> Self {
        Prediction { raw, clamped: raw.clamp(0.0, 1.0) }
    }
}

impl RbfModel {
    pub fn new(attribute: Attribute, centers: Vec<Alpha>, weights: Vec<f64>, beta: f64, basis_hash: BasisHash) -> Result<Self> {
        let m = RbfModel { attribute, n_centers: centers.len(), beta, centers, weights, basis_hash, train_report: None };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.n_centers != self.centers.len() || self.n_centers != self.weights.len() {
            return Err(Error::Format("n_centers, centers and weights disagree".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Format(format!("beta must be positive, got {}", self.beta)));
        }
        if self.centers.iter().flatten().chain(&self.weights).any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite center or weight".into()));
        }
        Ok(())
    }

    /// Unclamped output at `alpha`.
    pub fn eval_raw(&self, alpha: &Alpha) -> f64 {
        self.centers.iter().zip(&self.weights).map(|(c, w)| w * (-self.beta * dist2(alpha, c)).exp()).sum()
    }

    pub fn grad_raw(&self, alpha: &Alpha) -> Alpha {
        let mut g = [0.0; COMPONENTS];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let s = -2.0 * self.beta * w * (-self.beta * dist2(alpha, c)).exp();
            g.iter_mut().zip(alpha.iter().zip(c)).for_each(|(g, (a, c))| *g += s * (a - c));
        }
        g
    }

    /// Value and gradient in one pass.
    pub fn eval_grad_raw(&self, alpha: &Alpha) -> (f64, Alpha) {
        let mut g = [0.0; COMPONENTS];
        let mut y = 0.0;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let e = w * (-self.beta * dist2(alpha, c)).exp();
            y += e;
            let s = -2.0 * self.beta * e;
            g.iter_mut().zip(alpha.iter().zip(c)).for_each(|(g, (a, c))| *g += s * (a - c));
        }
        (y, g)
    }

    pub fn ensure_compatible(&self, hash: &BasisHash) -> Result<()> {
        if hash != &self.basis_hash {
            return Err(Error::Compatibility { expected: self.basis_hash.0.clone(), found: hash.0.clone() });
        }
        Ok(())
    }

    pub fn eval(&self, alpha: &CoeffVector) -> Result<Prediction> {
        self.ensure_compatible(&alpha.basis_hash)?;
        Ok(Prediction::new(self.eval_raw(&alpha.alpha5()?)))
    }

    pub fn grad(&self, alpha: &CoeffVector) -> Result<Alpha> {
        self.ensure_compatible(&alpha.basis_hash)?;
        Ok(self.grad_raw(&alpha.alpha5()?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RbfModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Mean squared error of raw predictions.
pub fn fit_mse(model: &RbfModel, alphas: &[Alpha], targets: &[f64]) -> f64 {
    assert_eq!(alphas.len(), targets.len());
    if alphas.is_empty() {
        return 0.0;
    }
    alphas.iter().zip(targets).map(|(a, y)| (model.eval_raw(a) - y).powi(2)).sum::<f64>() / alphas.len() as f64
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub n_centers: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// β = 2^e / (2 σ̄²) for each exponent e, σ̄ the mean pairwise center
    /// distance.
    pub beta_exponents: Vec<i32>,
    pub ridge: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_centers: DEFAULT_CENTERS,
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            beta_exponents: (-6..=6).collect(),
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// Deterministic split into (train, validation) index lists, applied within
/// each stratum so every stratum keeps the same train fraction.
pub fn split_indices(n: usize, strata: Option<&[u32]>, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for i in 0..n {
        groups.entry(strata.map_or(0, |s| s[i])).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64) * fraction).round() as usize;
        train.extend_from_slice(&idx[..k]);
        valid.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

fn design(alphas: &[Alpha], centers: &[Alpha], beta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(alphas.len(), centers.len(), |j, i| (-beta * dist2(&alphas[j], &centers[i])).exp())
}

fn solve_weights(phi: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    // Ridge least squares as an augmented system [Φ; √λ I] θ = [y; 0], solved
    // by SVD rather than normal equations to avoid squaring the condition
    // number.
    let (n, k) = phi.shape();
    let mut a = DMatrix::zeros(n + k, k);
    a.view_mut((0, 0), (n, k)).copy_from(phi);
    for i in 0..k {
        a[(n + i, i)] = ridge.sqrt();
    }
    let mut b = DVector::zeros(n + k);
    b.rows_mut(0, n).copy_from(y);
    let w = a
        .svd(true, true)
        .solve(&b, 0.0)
        .map_err(|e| Error::Numeric(format!("RBF least squares failed: {e}")))?;
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::Numeric("singular RBF design matrix".into()))
    }
}

/// Trains one attribute functional. Centres come from k-means over the
/// training split; for each β on the grid the weights solve a ridge least
/// squares problem, and the β with the lowest validation MSE is kept.
pub fn train(
    attribute: Attribute,
    basis_hash: &BasisHash,
    alphas: &[Alpha],
    targets: &[f64],
    strata: Option<&[u32]>,
    config: &TrainConfig,
) -> Result<RbfModel> {
    if alphas.len() != targets.len() {
        return Err(argument("alphas and targets differ in length"));
    }
    if strata.is_some_and(|s| s.len() != alphas.len()) {
        return Err(argument("strata and alphas differ in length"));
    }
    if alphas.len() < config.n_centers {
        return Err(argument(format!("{} samples for {} centers", alphas.len(), config.n_centers)));
    }
    if config.beta_exponents.is_empty() {
        return Err(argument("empty beta grid"));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(argument("train fraction must lie in [0, 1]"));
    }
    let (train_idx, mut valid_idx) = split_indices(alphas.len(), strata, config.train_fraction, config.seed);
    let pick = |idx: &[usize]| -> (Vec<Alpha>, Vec<f64>) { idx.iter().map(|&i| (alphas[i], targets[i])).unzip() };
    let (ta, ty) = pick(&train_idx);
    if valid_idx.is_empty() {
        valid_idx = train_idx.clone();
    }
    let (va, vy) = pick(&valid_idx);

    let km = kmeans(&ta, config.n_centers, config.seed)?;
    let centers = km.centers;
    let k = centers.len();
    let mut spread = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            spread += dist2(&centers[i], &centers[j]).sqrt();
        }
    }
    let pairs = (k * (k - 1) / 2).max(1);
    let sigma = if spread > 0.0 { spread / pairs as f64 } else { 1.0 };
    let beta_grid: Vec<f64> =
        config.beta_exponents.iter().map(|&e| 2f64.powi(e) / (2.0 * sigma * sigma)).collect();

    let y = DVector::from_vec(ty.clone());
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut validation_grid = Vec::with_capacity(beta_grid.len());
    for &beta in &beta_grid {
        let w = solve_weights(&design(&ta, &centers, beta), &y, config.ridge)?;
        let model = RbfModel::new(attribute, centers.clone(), w.as_slice().to_vec(), beta, basis_hash.clone())?;
        let mse = fit_mse(&model, &va, &vy);
        validation_grid.push(mse);
        if best.as_ref().is_none_or(|b| mse < b.0) {
            best = Some((mse, beta, model.weights));
        }
    }
    let (mse_validation, beta, weights) = best.expect("non-empty grid");
    let mut model = RbfModel::new(attribute, centers, weights, beta, basis_hash.clone())?;
    model.train_report = Some(TrainReport {
        mse_train: fit_mse(&model, &ta, &ty),
        mse_validation,
        beta_grid,
        validation_grid,
        chosen_beta: beta,
        n_train: ta.len(),
        n_validation: if train_idx.len() == alphas.len() { 0 } else { va.len() },
        kmeans_sse: km.sse,
    });
    Ok(model)
}
