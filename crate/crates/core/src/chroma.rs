//! Achromatic/chromatic decoupling through CIELab.
//!
//! The achromatic part of a table is its linear luminance `Y` (sRGB primaries,
//! D65). The chromatic part is the Lab `(a, b)` pair of every bin, evaluated on
//! the colour rescaled so that `Y <= Y_white`; recombination scales back by the
//! same factor, so HDR reflectance round-trips.

use std::sync::LazyLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::merl::{Brdf, ChannelLayout, Dims};

static RGB_TO_XYZ: LazyLock<Matrix3<f64>> = LazyLock::new(|| {
    Matrix3::new(
        0.4124564, 0.3575761, 0.1804375, //
        0.2126729, 0.7151522, 0.0721750, //
        0.0193339, 0.1191920, 0.9503041,
    )
});

static XYZ_TO_RGB: LazyLock<Matrix3<f64>> =
    LazyLock::new(|| RGB_TO_XYZ.try_inverse().expect("sRGB matrix is invertible"));

/// White point: the image of RGB (1, 1, 1), so neutral colours have a = b = 0.
static WHITE: LazyLock<Vector3<f64>> = LazyLock::new(|| *RGB_TO_XYZ * Vector3::repeat(1.0));

const DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

/// Linear luminance of a linear sRGB triple.
#[inline]
pub fn luminance(rgb: [f64; 3]) -> f64 {
    let m = &*RGB_TO_XYZ;
    m[(1, 0)] * rgb[0] + m[(1, 1)] * rgb[1] + m[(1, 2)] * rgb[2]
}

/// Lab chromaticity `(a, b)` of a linear sRGB triple, evaluated at the
/// luminance-clamped colour.
pub fn chromaticity(rgb: [f64; 3]) -> [f64; 2] {
    let xyz = *RGB_TO_XYZ * Vector3::from(rgb);
    let white = &*WHITE;
    if xyz.y <= 0.0 {
        return [0.0, 0.0];
    }
    let s = (xyz.y / white.y).max(1.0);
    let fx = lab_f(xyz.x / s / white.x);
    let fy = lab_f(xyz.y / s / white.y);
    let fz = lab_f(xyz.z / s / white.z);
    [500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of the (luminance, chromaticity) split, negatives clamped to 0.
pub fn recombine(y: f64, ab: [f64; 2]) -> [f64; 3] {
    if y <= 0.0 {
        return [0.0; 3];
    }
    let white = &*WHITE;
    let s = (y / white.y).max(1.0);
    let fy = lab_f(y / s / white.y);
    let x = white.x * lab_f_inv(fy + ab[0] / 500.0) * s;
    let z = white.z * lab_f_inv(fy - ab[1] / 200.0) * s;
    let rgb = *XYZ_TO_RGB * Vector3::new(x, y, z);
    [rgb.x.max(0.0), rgb.y.max(0.0), rgb.z.max(0.0)]
}

/// Per-bin Lab `(a, b)` of a colour table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChromaRecord {
    dims: Dims,
    ab: Vec<[f64; 2]>,
}

impl ChromaRecord {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ab(&self) -> &[[f64; 2]] {
        &self.ab
    }

    /// A neutral record (a = b = 0 everywhere).
    pub fn neutral(dims: Dims) -> Self {
        ChromaRecord { dims, ab: vec![[0.0; 2]; dims.bins()] }
    }
}

/// Chroma adjustment `(a, b) <- scale * (a, b) + (delta_a, delta_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChromaEdit {
    #[serde(default)]
    pub delta_a: f64,
    #[serde(default)]
    pub delta_b: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ChromaEdit {
    fn default() -> Self {
        ChromaEdit::IDENTITY
    }
}

impl ChromaEdit {
    pub const IDENTITY: ChromaEdit = ChromaEdit { delta_a: 0.0, delta_b: 0.0, scale: 1.0 };

    #[inline]
    pub fn apply(&self, ab: [f64; 2]) -> [f64; 2] {
        [self.scale * ab[0] + self.delta_a, self.scale * ab[1] + self.delta_b]
    }
}

/// Splits an RGB table into luminance and chromaticity. A bin is invalid in
/// the luminance table if any of its colour channels is invalid.
pub fn split_achromatic(b: &Brdf) -> Result<(Brdf, ChromaRecord)> {
    if b.layout() != ChannelLayout::Rgb {
        return Err(argument("split needs an RGB table"));
    }
    let dims = b.dims();
    let mut ab = vec![[0.0; 2]; dims.bins()];
    let mut lum = Brdf::zeros(dims, ChannelLayout::Luminance);
    for (bin, slot) in ab.iter_mut().enumerate() {
        match (b.value(0, bin), b.value(1, bin), b.value(2, bin)) {
            (Some(r), Some(g), Some(bl)) => {
                let rgb = [r, g, bl];
                lum.set(0, bin, Some(luminance(rgb).max(0.0)));
                *slot = chromaticity(rgb);
            }
            _ => lum.set(0, bin, None),
        }
    }
    Ok((lum, ChromaRecord { dims, ab }))
}

/// Reassembles an RGB table from luminance and an (edited) chroma record.
pub fn merge_achromatic(achromatic: &Brdf, chroma: &ChromaRecord, edit: ChromaEdit) -> Result<Brdf> {
    if achromatic.layout() != ChannelLayout::Luminance {
        return Err(argument("merge needs a luminance table"));
    }
    if achromatic.dims() != chroma.dims {
        return Err(argument("luminance and chroma dims differ"));
    }
    let dims = achromatic.dims();
    let mut out = Brdf::zeros(dims, ChannelLayout::Rgb);
    for bin in 0..dims.bins() {
        match achromatic.value(0, bin) {
            Some(y) => {
                let rgb = recombine(y, edit.apply(chroma.ab[bin]));
                for (ch, v) in rgb.into_iter().enumerate() {
                    out.set(ch, bin, Some(v));
                }
            }
            None => {
                for ch in 0..3 {
                    out.set(ch, bin, None);
                }
            }
        }
    }
    Ok(out)
}
