//! Tabulated isotropic BRDFs in the MERL half/difference-angle layout.
//!
//! A [`Brdf`] keeps its samples in the units of the MERL container (the raw
//! doubles found in the file) together with the per-channel scale that turns
//! them into linear reflectance. Keeping file units makes both directions of
//! the file round trip exact to the last bit.
//!
//! File layout: three little-endian `i32` dimensions `(90, 90, 180)` followed
//! by `3 * 90 * 90 * 180` little-endian `f64`, channel-major, then
//! `[theta_h][theta_d][phi_d]`. Negative stored values mark unmeasured bins.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

/// Per-channel factors turning stored MERL values into linear reflectance.
pub const MERL_SCALES: [f64; 3] = [1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0];

/// Stored value written for bins without a measurement.
pub const INVALID_SENTINEL: f64 = -1.0;

const HEADER_BYTES: usize = 12;

/// Angular resolution of a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub theta_h: usize,
    pub theta_d: usize,
    pub phi_d: usize,
}

impl Dims {
    /// The resolution of the public MERL database.
    pub const MERL: Dims = Dims { theta_h: 90, theta_d: 90, phi_d: 180 };

    pub fn new(theta_h: usize, theta_d: usize, phi_d: usize) -> Result<Self> {
        if theta_h == 0 || theta_d == 0 || phi_d == 0 {
            return Err(argument("table dimensions must be positive"));
        }
        Ok(Dims { theta_h, theta_d, phi_d })
    }

    /// Number of angular bins per channel.
    pub fn bins(&self) -> usize {
        self.theta_h * self.theta_d * self.phi_d
    }

    #[inline]
    pub fn bin(&self, theta_h_idx: usize, theta_d_idx: usize, phi_d_idx: usize) -> usize {
        (theta_h_idx * self.theta_d + theta_d_idx) * self.phi_d + phi_d_idx
    }

    #[inline]
    pub fn unbin(&self, bin: usize) -> (usize, usize, usize) {
        let phi = bin % self.phi_d;
        let rest = bin / self.phi_d;
        (rest / self.theta_d, rest % self.theta_d, phi)
    }

    /// theta_h index with the MERL square-root spacing.
    #[inline]
    pub fn theta_h_index(&self, theta_h: f64) -> usize {
        if theta_h <= 0.0 {
            return 0;
        }
        let idx = ((theta_h / FRAC_PI_2).sqrt() * self.theta_h as f64) as usize;
        idx.min(self.theta_h - 1)
    }

    #[inline]
    pub fn theta_d_index(&self, theta_d: f64) -> usize {
        if theta_d <= 0.0 {
            return 0;
        }
        let idx = (theta_d / FRAC_PI_2 * self.theta_d as f64) as usize;
        idx.min(self.theta_d - 1)
    }

    /// phi_d index; `phi_d` and `phi_d + pi` share a bin.
    #[inline]
    pub fn phi_d_index(&self, phi_d: f64) -> usize {
        let phi = phi_d.rem_euclid(PI);
        let idx = (phi / PI * self.phi_d as f64) as usize;
        idx.min(self.phi_d - 1)
    }

    pub fn index_of(&self, c: HalfDiffCoords) -> usize {
        self.bin(
            self.theta_h_index(c.theta_h),
            self.theta_d_index(c.theta_d),
            self.phi_d_index(c.phi_d),
        )
    }

    /// Angle at the centre of a theta_h bin (square-root spacing).
    pub fn theta_h_center(&self, idx: usize) -> f64 {
        let u = (idx as f64 + 0.5) / self.theta_h as f64;
        u * u * FRAC_PI_2
    }

    pub fn theta_d_center(&self, idx: usize) -> f64 {
        (idx as f64 + 0.5) / self.theta_d as f64 * FRAC_PI_2
    }

    pub fn phi_d_center(&self, idx: usize) -> f64 {
        (idx as f64 + 0.5) / self.phi_d as f64 * PI
    }

    /// Coordinates at the centre of a bin.
    pub fn bin_center(&self, bin: usize) -> HalfDiffCoords {
        let (h, d, p) = self.unbin(bin);
        HalfDiffCoords {
            theta_h: self.theta_h_center(h),
            theta_d: self.theta_d_center(d),
            phi_d: self.phi_d_center(p),
        }
    }

    /// `max(cos(theta_h) * cos(theta_d), floor)` at every bin centre.
    pub fn cosine_weights(&self, floor: f64) -> Vec<f64> {
        let mut weights = Vec::with_capacity(self.bins());
        for h in 0..self.theta_h {
            let ch = self.theta_h_center(h).cos();
            for d in 0..self.theta_d {
                let w = (ch * self.theta_d_center(d).cos()).max(floor);
                weights.extend(std::iter::repeat_n(w, self.phi_d));
            }
        }
        weights
    }
}

/// Channel interpretation of a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLayout {
    /// Three colour channels stored in MERL units.
    Rgb,
    /// Single linear-luminance channel stored as reflectance.
    Luminance,
}

impl ChannelLayout {
    pub fn channels(self) -> usize {
        match self {
            ChannelLayout::Rgb => 3,
            ChannelLayout::Luminance => 1,
        }
    }

    #[inline]
    pub fn scale(self, channel: usize) -> f64 {
        match self {
            ChannelLayout::Rgb => MERL_SCALES[channel],
            ChannelLayout::Luminance => 1.0,
        }
    }

    pub fn for_channels(channels: usize) -> Result<Self> {
        match channels {
            3 => Ok(ChannelLayout::Rgb),
            1 => Ok(ChannelLayout::Luminance),
            n => Err(argument(format!("unsupported channel count {n}"))),
        }
    }
}

/// Rusinkiewicz half/difference angles of an isotropic configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfDiffCoords {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

/// Dense tabulated BRDF.
#[derive(Clone, Debug, PartialEq)]
pub struct Brdf {
    dims: Dims,
    layout: ChannelLayout,
    stored: Vec<f64>,
    invalid: Vec<bool>,
}

impl Brdf {
    pub fn zeros(dims: Dims, layout: ChannelLayout) -> Self {
        let n = dims.bins() * layout.channels();
        Brdf { dims, layout, stored: vec![0.0; n], invalid: vec![false; n] }
    }

    /// Builds a table from linear reflectance; `None` marks an invalid sample.
    pub fn from_fn(
        dims: Dims,
        layout: ChannelLayout,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut brdf = Brdf::zeros(dims, layout);
        let bins = dims.bins();
        for ch in 0..layout.channels() {
            for bin in 0..bins {
                brdf.set(ch, bin, f(ch, bin));
            }
        }
        brdf
    }

    /// Wraps values already in stored units. Negative values become invalid.
    pub fn from_stored(dims: Dims, layout: ChannelLayout, mut stored: Vec<f64>) -> Result<Self> {
        let n = dims.bins() * layout.channels();
        if stored.len() != n {
            return Err(argument(format!("expected {n} samples, got {}", stored.len())));
        }
        if let Some(v) = stored.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite sample {v}")));
        }
        let invalid: Vec<bool> = stored.iter().map(|&v| v < 0.0).collect();
        for (v, &bad) in stored.iter_mut().zip(&invalid) {
            if bad {
                *v = INVALID_SENTINEL;
            }
        }
        Ok(Brdf { dims, layout, stored, invalid })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    /// Raw samples in stored units, channel-major.
    pub fn stored(&self) -> &[f64] {
        &self.stored
    }

    #[inline]
    fn slot(&self, channel: usize, bin: usize) -> usize {
        channel * self.dims.bins() + bin
    }

    #[inline]
    pub fn is_valid(&self, channel: usize, bin: usize) -> bool {
        !self.invalid[self.slot(channel, bin)]
    }

    /// Linear reflectance of a bin, `None` when the bin is invalid.
    #[inline]
    pub fn value(&self, channel: usize, bin: usize) -> Option<f64> {
        let i = self.slot(channel, bin);
        if self.invalid[i] {
            None
        } else {
            Some(self.stored[i] * self.layout.scale(channel))
        }
    }

    /// Stores linear reflectance. Non-finite or negative values are rejected
    /// by marking the slot invalid.
    pub fn set(&mut self, channel: usize, bin: usize, value: Option<f64>) {
        let i = self.slot(channel, bin);
        match value {
            Some(v) if v.is_finite() && v >= 0.0 => {
                self.stored[i] = v / self.layout.scale(channel);
                self.invalid[i] = false;
            }
            _ => {
                self.stored[i] = INVALID_SENTINEL;
                self.invalid[i] = true;
            }
        }
    }

    pub fn invalid_count(&self) -> usize {
        self.invalid.iter().filter(|&&b| b).count()
    }

    /// Multiplies every valid sample by `k`.
    pub fn scaled(&self, k: f64) -> Brdf {
        let mut out = self.clone();
        for (v, &bad) in out.stored.iter_mut().zip(&self.invalid) {
            if !bad {
                *v *= k;
            }
        }
        out
    }

    /// Nearest-bin lookup; `None` signals an invalid sample.
    pub fn lookup(&self, c: HalfDiffCoords, channel: usize) -> Option<f64> {
        self.value(channel, self.dims.index_of(c))
    }

    /// Lookup with linear interpolation between neighbouring theta_h bins,
    /// nearest bin along the other axes. Invalid neighbours fall back to the
    /// nearest bin alone.
    pub fn lookup_theta_h_lerp(&self, c: HalfDiffCoords, channel: usize) -> Option<f64> {
        let (lo, hi, t) = self.theta_h_neighbours(c);
        match (self.value(channel, lo), self.value(channel, hi)) {
            (Some(a), Some(b)) => Some(a + (b - a) * t),
            _ => self.lookup(c, channel),
        }
    }

    /// [`Self::lookup_theta_h_lerp`] for the first `out.len()` channels,
    /// sharing the index computation; invalid samples read as zero.
    pub fn lookup_theta_h_lerp_into(&self, c: HalfDiffCoords, out: &mut [f64]) {
        let (lo, hi, t) = self.theta_h_neighbours(c);
        for (ch, o) in out.iter_mut().enumerate() {
            let ch = ch.min(self.channels() - 1);
            *o = match (self.value(ch, lo), self.value(ch, hi)) {
                (Some(a), Some(b)) => a + (b - a) * t,
                _ => self.lookup(c, ch).unwrap_or(0.0),
            };
        }
    }

    fn theta_h_neighbours(&self, c: HalfDiffCoords) -> (usize, usize, f64) {
        let dims = self.dims;
        let d = dims.theta_d_index(c.theta_d);
        let p = dims.phi_d_index(c.phi_d);
        let pos = if c.theta_h <= 0.0 {
            0.0
        } else {
            (c.theta_h / FRAC_PI_2).sqrt() * dims.theta_h as f64 - 0.5
        };
        let pos = pos.clamp(0.0, (dims.theta_h - 1) as f64);
        let h0 = pos.floor() as usize;
        let h1 = (h0 + 1).min(dims.theta_h - 1);
        (dims.bin(h0, d, p), dims.bin(h1, d, p), pos - h0 as f64)
    }

    pub fn read_merl(path: impl AsRef<Path>) -> Result<Brdf> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Brdf::from_merl_bytes(&bytes)
            .map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
                other => other,
            })
    }

    pub fn read_merl_from(mut reader: impl Read) -> Result<Brdf> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Brdf::from_merl_bytes(&bytes)
    }

    pub fn from_merl_bytes(bytes: &[u8]) -> Result<Brdf> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Format("file shorter than the 12-byte header".into()));
        }
        let dim = |i: usize| i32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (h, d, p) = (dim(0), dim(1), dim(2));
        if h <= 0 || d <= 0 || p <= 0 {
            return Err(Error::Format(format!("header dimensions ({h}, {d}, {p}) must be positive")));
        }
        let dims = Dims { theta_h: h as usize, theta_d: d as usize, phi_d: p as usize };
        let n = dims.bins() * 3;
        let payload = &bytes[HEADER_BYTES..];
        if payload.len() != n * 8 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header requires {}",
                payload.len(),
                n * 8
            )));
        }
        let stored: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Brdf::from_stored(dims, ChannelLayout::Rgb, stored)
    }

    /// Serialises to the MERL container. Only RGB tables can be written; the
    /// header records the table's own dims.
    pub fn to_merl_bytes(&self) -> Result<Vec<u8>> {
        self.check_merl()?;
        let mut out = Vec::with_capacity(HEADER_BYTES + self.stored.len() * 8);
        for d in [self.dims.theta_h, self.dims.theta_d, self.dims.phi_d] {
            out.extend_from_slice(&(d as i32).to_le_bytes());
        }
        for &v in &self.stored {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn write_merl(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_merl_bytes()?;
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    fn check_merl(&self) -> Result<()> {
        if self.layout != ChannelLayout::Rgb {
            return Err(argument(format!("MERL files hold RGB tables, got {:?}", self.layout)));
        }
        if [self.dims.theta_h, self.dims.theta_d, self.dims.phi_d].iter().any(|&d| d > i32::MAX as usize) {
            return Err(argument("table dimensions exceed the header range"));
        }
        Ok(())
    }
}

/// Converts an incident/outgoing pair in the local shading frame (normal
/// along +z) to half/difference angles. `phi_d` is reported in `[0, pi)`.
pub fn dirs_to_halfdiff(wi: Vector3<f64>, wo: Vector3<f64>) -> Result<HalfDiffCoords> {
    const HORIZON: f64 = -1e-12;
    if wi.z < HORIZON || wo.z < HORIZON {
        return Err(Error::Domain("direction below the horizon".into()));
    }
    let sum = wi + wo;
    let norm = sum.norm();
    if norm < 1e-12 {
        return Err(Error::Domain("opposite directions have no half vector".into()));
    }
    let h = sum / norm;
    let ct = h.z.clamp(-1.0, 1.0);
    let theta_h = ct.acos();

    // Rotate wi so that h aligns with +z: by -phi_h about z, then -theta_h
    // about y, with the sines and cosines taken from h directly.
    let rho = h.x.hypot(h.y);
    let (sp, cp) = if rho > 0.0 { (h.y / rho, h.x / rho) } else { (0.0, 1.0) };
    let x = wi.x * cp + wi.y * sp;
    let y = -wi.x * sp + wi.y * cp;
    let z = wi.z;
    let st = rho;
    let dx = x * ct - z * st;
    let dz = x * st + z * ct;
    let dy = y;

    let theta_d = dz.clamp(-1.0, 1.0).acos();
    let mut phi_d = dy.atan2(dx);
    if phi_d < 0.0 {
        phi_d += PI;
    }
    if phi_d >= PI {
        phi_d -= PI;
    }
    Ok(HalfDiffCoords { theta_h, theta_d, phi_d })
}
