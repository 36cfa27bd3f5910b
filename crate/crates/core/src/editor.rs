//! Attribute-driven editing: drive one functional to a target value by
//! gradient descent inside the hull, then rebuild the table. Also the
//! attribute and RMSE similarity measures.

use serde::{Deserialize, Serialize};

use crate::chroma::{merge_achromatic, split_achromatic, ChromaEdit, ChromaRecord};
use crate::error::{argument, Error, Result};
use crate::hull::HullModel;
use crate::logmap::{unmap_brdf, DEFAULT_WEIGHT_FLOOR};
use crate::merl::Brdf;
use crate::pca::{Alpha, BasisHash, CoeffVector, PcaBasis};
use crate::rbf::RbfModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditOptions {
    pub armijo: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_iters: usize,
    /// Converged once |φ(α) − y| is at most this.
    pub tolerance: f64,
    /// Converged once an accepted step is shorter than this.
    pub min_step: f64,
    pub bisections: usize,
    pub max_backtracks: usize,
}

impl Default for EditOptions {
    fn default() -> Self {
        EditOptions {
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_iters: 200,
            tolerance: 1e-3,
            min_step: 1e-8,
            bisections: 8,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditStatus {
    Converged,
    HullBoundary,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResult {
    pub alpha_final: Alpha,
    /// Accepted iterates, starting with the initial point.
    pub path: Vec<Alpha>,
    /// Raw functional value at `alpha_final`.
    pub achieved_y: f64,
    pub status: EditStatus,
    pub iterations: usize,
    pub basis_hash: BasisHash,
}

impl EditResult {
    pub fn final_coeffs(&self) -> CoeffVector {
        CoeffVector { values: self.alpha_final.to_vec(), basis_hash: self.basis_hash.clone() }
    }
}

/// Minimizes (φ(α) − y)² from `alpha_ini`.
pub fn edit(model: &RbfModel, hull: &HullModel, alpha_ini: &CoeffVector, y_obj: f64, opts: &EditOptions) -> Result<EditResult> {
    model.ensure_compatible(&alpha_ini.basis_hash)?;
    edit_alpha(model, hull, &alpha_ini.alpha5()?, y_obj, opts)
}

/// [`edit`] on bare coordinates (no basis check).
///
/// Each step moves along the negative gradient, scaled so that it would hit
/// the target exactly if φ were linear, and is backtracked until the Armijo
/// condition holds. A step that leaves the hull is cut back to the boundary
/// by bisection and ends the run.
pub fn edit_alpha(model: &RbfModel, hull: &HullModel, alpha_ini: &Alpha, y_obj: f64, opts: &EditOptions) -> Result<EditResult> {
    if !(0.0..=1.0).contains(&y_obj) {
        return Err(argument(format!("target {y_obj} outside [0, 1]")));
    }
    if !hull.contains(alpha_ini) {
        return Err(argument("initial coefficients lie outside the hull"));
    }
    let mut x = *alpha_ini;
    let mut path = vec![x];
    let (mut y, mut g) = model.eval_grad_raw(&x);
    let mut status = EditStatus::MaxIters;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let r = y - y_obj;
        if r.abs() <= opts.tolerance {
            status = EditStatus::Converged;
            break;
        }
        let gn: f64 = g.iter().map(|v| v * v).sum();
        if gn == 0.0 {
            status = EditStatus::Converged;
            break;
        }
        iterations += 1;
        let d: Alpha = g.map(|v| -r * v / gn);
        let dn = gn.sqrt() * (r.abs() / gn);
        let f0 = r * r;
        let slope = -2.0 * r * r;

        let mut t = opts.initial_step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = step(&x, &d, t);
            let yc = model.eval_raw(&cand);
            if (yc - y_obj).powi(2) <= f0 + opts.armijo * t * slope {
                accepted = Some((cand, yc));
                break;
            }
            t *= opts.shrink;
        }
        let Some((cand, yc)) = accepted else {
            status = EditStatus::Converged;
            break;
        };

        if !hull.contains(&cand) {
            let (mut lo, mut hi) = (0.0, t);
            for _ in 0..opts.bisections {
                let mid = 0.5 * (lo + hi);
                if hull.contains(&step(&x, &d, mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo > 0.0 {
                let b = step(&x, &d, lo);
                let yb = model.eval_raw(&b);
                if (yb - y_obj).powi(2) <= f0 {
                    x = b;
                    y = yb;
                    path.push(x);
                }
            }
            status = EditStatus::HullBoundary;
            break;
        }

        x = cand;
        (y, g) = (yc, model.grad_raw(&x));
        path.push(x);
        if t * dn <= opts.min_step {
            status = EditStatus::Converged;
            break;
        }
    }
    if status == EditStatus::MaxIters && (y - y_obj).abs() <= opts.tolerance {
        status = EditStatus::Converged;
    }
    Ok(EditResult { alpha_final: x, path, achieved_y: y, status, iterations, basis_hash: model.basis_hash.clone() })
}

fn step(x: &Alpha, d: &Alpha, t: f64) -> Alpha {
    std::array::from_fn(|i| x[i] + t * d[i])
}

/// Achromatic table for 5D coefficients, in physical units.
pub fn reconstruct_achromatic(basis: &PcaBasis, alpha: &Alpha) -> Result<Brdf> {
    unmap_brdf(&basis.reconstruct(alpha)?, basis.reference())
}

/// Rebuilds an edited colour table: the new luminance from `alpha`, the
/// chroma of the original (adjusted by `chroma_edit`). Bins invalid in the
/// original stay invalid.
pub fn apply_alpha(basis: &PcaBasis, original: &Brdf, alpha: &Alpha, chroma_edit: ChromaEdit) -> Result<Brdf> {
    let (_, chroma) = split_achromatic(original)?;
    let mut lum = reconstruct_achromatic(basis, alpha)?;
    for bin in 0..lum.dims().bins() {
        if (0..original.channels()).any(|ch| !original.is_valid(ch, bin)) {
            lum.set(0, bin, None);
        }
    }
    merge_achromatic(&lum, &chroma, chroma_edit)
}

pub fn apply_edit(basis: &PcaBasis, original: &Brdf, result: &EditResult) -> Result<Brdf> {
    basis.ensure_same(&result.basis_hash)?;
    apply_alpha(basis, original, &result.alpha_final, ChromaEdit::IDENTITY)
}

/// Same as [`apply_alpha`] with the chroma taken from a stored record.
pub fn apply_with_chroma(basis: &PcaBasis, chroma: &ChromaRecord, alpha: &Alpha, chroma_edit: ChromaEdit) -> Result<Brdf> {
    merge_achromatic(&reconstruct_achromatic(basis, alpha)?, chroma, chroma_edit)
}

/// Distance between two materials as seen by one attribute: the absolute
/// difference of raw predictions.
pub fn attr_distance(model: &RbfModel, a: &CoeffVector, b: &CoeffVector) -> Result<f64> {
    Ok((model.eval(a)?.raw - model.eval(b)?.raw).abs())
}

pub fn attr_distance_alpha(model: &RbfModel, a: &Alpha, b: &Alpha) -> f64 {
    (model.eval_raw(a) - model.eval_raw(b)).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseVariant {
    Plain,
    CosineWeighted,
    /// Cube root of the reflectance, then cosine weighting.
    CosineWeightedCuberoot,
}

impl std::str::FromStr for RmseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" | "rmse" => Ok(RmseVariant::Plain),
            "cosine" | "cosine-weighted" => Ok(RmseVariant::CosineWeighted),
            "cuberoot" | "cosine-weighted-cuberoot" => Ok(RmseVariant::CosineWeightedCuberoot),
            other => Err(argument(format!("unknown RMSE variant {other:?}"))),
        }
    }
}

/// RMSE over the bins and channels valid in both tables (physical units).
/// The weighted variants multiply each difference by the bin's cosine
/// weight `max(cos θh cos θd, 1e-3)`.
pub fn rmse_distance(a: &Brdf, b: &Brdf, variant: RmseVariant) -> Result<f64> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(argument("tables differ in shape"));
    }
    let weights = match variant {
        RmseVariant::Plain => None,
        _ => Some(a.dims().cosine_weights(DEFAULT_WEIGHT_FLOOR)),
    };
    let transform = |v: f64| if variant == RmseVariant::CosineWeightedCuberoot { v.cbrt() } else { v };
    let (mut sum, mut n) = (0.0, 0usize);
    for ch in 0..a.channels() {
        for bin in 0..a.dims().bins() {
            if let (Some(x), Some(y)) = (a.value(ch, bin), b.value(ch, bin)) {
                let w = weights.as_ref().map_or(1.0, |w| w[bin]);
                let e = w * (transform(x) - transform(y));
                sum += e * e;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::MissingData("no bins valid in both tables".into()));
    }
    Ok((sum / n as f64).sqrt())
}
