//! Sphere previews of tabulated BRDFs under a directional light or a small
//! lat-long environment.

use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use nalgebra::{Rotation3, Vector3};
use rayon::prelude::*;

use crate::error::{argument, Error, Result};
use crate::merl::{dirs_to_halfdiff, Brdf};

pub const GAMMA: f64 = 2.2;
pub const MAX_ENV_WIDTH: usize = 32;
pub const MAX_ENV_HEIGHT: usize = 16;

/// Lat-long radiance map. Texel `(u, v)` covers azimuth
/// `φ = 2π (u + ½) / W` and polar angle `θ = π (v + ½) / H` from +y, with
/// direction `(sin θ sin φ, cos θ, sin θ cos φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvMap {
    width: usize,
    height: usize,
    texels: Vec<[f64; 3]>,
}

impl EnvMap {
    pub fn new(width: usize, height: usize, texels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || texels.len() != width * height {
            return Err(argument("environment size does not match its texels"));
        }
        if texels.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(argument("environment radiance must be finite and non-negative"));
        }
        Ok(EnvMap { width, height, texels })
    }

    pub fn uniform(width: usize, height: usize, radiance: [f64; 3]) -> Self {
        EnvMap { width, height, texels: vec![radiance; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texel(&self, u: usize, v: usize) -> [f64; 3] {
        self.texels[v * self.width + u]
    }

    pub fn direction(&self, u: usize, v: usize) -> Vector3<f64> {
        let phi = 2.0 * std::f64::consts::PI * (u as f64 + 0.5) / self.width as f64;
        let theta = std::f64::consts::PI * (v as f64 + 0.5) / self.height as f64;
        Vector3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos())
    }

    pub fn solid_angle(&self, v: usize) -> f64 {
        let theta = std::f64::consts::PI * (v as f64 + 0.5) / self.height as f64;
        (2.0 * std::f64::consts::PI / self.width as f64) * (std::f64::consts::PI / self.height as f64) * theta.sin()
    }

    /// Box-filters down to at most `max_w × max_h`.
    pub fn downsample(&self, max_w: usize, max_h: usize) -> EnvMap {
        let (w, h) = (self.width.min(max_w), self.height.min(max_h));
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        let mut texels = Vec::with_capacity(w * h);
        for v in 0..h {
            let (v0, v1) = (v * self.height / h, (v + 1) * self.height / h);
            for u in 0..w {
                let (u0, u1) = (u * self.width / w, (u + 1) * self.width / w);
                let mut acc = [0.0; 3];
                for sv in v0..v1 {
                    for su in u0..u1 {
                        let t = self.texel(su, sv);
                        acc.iter_mut().zip(t).for_each(|(a, x)| *a += x);
                    }
                }
                let n = ((v1 - v0) * (u1 - u0)) as f64;
                texels.push(acc.map(|a| a / n));
            }
        }
        EnvMap { width: w, height: h, texels }
    }

    /// Rotates about +y by `columns` texels (positive increases azimuth).
    pub fn rotated(&self, columns: isize) -> EnvMap {
        let w = self.width as isize;
        let texels = (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .map(|(u, v)| self.texel((u as isize - columns).rem_euclid(w) as usize, v))
            .collect();
        EnvMap { width: self.width, height: self.height, texels }
    }

    /// Loads Radiance `.hdr` or `.pfm`, chosen by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<EnvMap> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pfm") => read_pfm(BufReader::new(std::fs::File::open(path)?)),
            Some("hdr") => {
                let img = image::ImageReader::open(path)?.with_guessed_format()?.decode()?.into_rgb32f();
                let (w, h) = img.dimensions();
                let texels = img.pixels().map(|p| p.0.map(f64::from)).collect();
                EnvMap::new(w as usize, h as usize, texels)
            }
            _ => Err(argument(format!("unsupported environment format: {}", path.display()))),
        }
    }
}

/// Reads a colour PFM (`PF`), stored bottom row first.
pub fn read_pfm(mut r: impl BufRead) -> Result<EnvMap> {
    let bad = |m: &str| Error::Format(format!("pfm: {m}"));
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    if tokens[0] != "PF" {
        return Err(bad("only 3-channel PF files are supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size"));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let mut data = vec![0u8; w * h * 12];
    r.read_exact(&mut data).map_err(|_| bad("truncated pixel data"))?;
    let value = |c: &[u8]| {
        let b = [c[0], c[1], c[2], c[3]];
        f64::from(if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) })
    };
    let mut texels = vec![[0.0; 3]; w * h];
    for (i, px) in data.chunks_exact(12).enumerate() {
        let (row, col) = (h - 1 - i / w, i % w);
        texels[row * w + col] = [value(&px[0..4]), value(&px[4..8]), value(&px[8..12])];
    }
    EnvMap::new(w, h, texels)
}

/// Writes a little-endian colour PFM.
pub fn write_pfm(env: &EnvMap, mut w: impl Write) -> Result<()> {
    write!(w, "PF\n{} {}\n-1.0\n", env.width, env.height)?;
    for v in (0..env.height).rev() {
        for u in 0..env.width {
            for c in env.texel(u, v) {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Lighting {
    /// `direction` points toward the light.
    Directional { direction: [f64; 3], radiance: [f64; 3] },
    Environment(EnvMap),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreviewScene {
    pub lighting: Lighting,
    /// Camera rotation about +y; 0 looks down −z from +z.
    pub camera_azimuth: f64,
    pub resolution: usize,
    pub exposure: f64,
}

impl PreviewScene {
    pub fn directional(direction: [f64; 3], radiance: [f64; 3], resolution: usize) -> Self {
        PreviewScene { lighting: Lighting::Directional { direction, radiance }, camera_azimuth: 0.0, resolution, exposure: 1.0 }
    }

    pub fn environment(env: EnvMap, resolution: usize) -> Self {
        PreviewScene { lighting: Lighting::Environment(env), camera_azimuth: 0.0, resolution, exposure: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(argument("preview resolution must be at least 16"));
        }
        if !(self.exposure > 0.0) || !self.exposure.is_finite() {
            return Err(argument("exposure must be positive"));
        }
        if let Lighting::Directional { direction, .. } = &self.lighting {
            if Vector3::from(*direction).norm() == 0.0 {
                return Err(argument("light direction must be non-zero"));
            }
        }
        Ok(())
    }
}

/// Linear radiance image, row-major from the top.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl LinearImage {
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

struct Light {
    dir: Vector3<f64>,
    radiance: [f64; 3],
}

fn lights(scene: &PreviewScene) -> Vec<Light> {
    match &scene.lighting {
        Lighting::Directional { direction, radiance } => {
            vec![Light { dir: Vector3::from(*direction).normalize(), radiance: *radiance }]
        }
        Lighting::Environment(env) => {
            let env = env.downsample(MAX_ENV_WIDTH, MAX_ENV_HEIGHT);
            let mut out = Vec::with_capacity(env.width * env.height);
            for v in 0..env.height {
                let sa = env.solid_angle(v);
                for u in 0..env.width {
                    let radiance = env.texel(u, v).map(|c| c * sa);
                    if radiance.iter().any(|&c| c > 0.0) {
                        out.push(Light { dir: env.direction(u, v), radiance });
                    }
                }
            }
            out
        }
    }
}

/// Outgoing radiance per pixel before tone mapping; background is zero.
pub fn render_linear(brdf: &Brdf, scene: &PreviewScene) -> Result<LinearImage> {
    scene.validate()?;
    let n = scene.resolution;
    let lights = lights(scene);
    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), scene.camera_azimuth);
    let wo_world = rot * Vector3::z();
    let up = Vector3::y();

    let rows: Vec<Vec<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|py| {
            (0..n)
                .map(|px| {
                    let x = 2.0 * (px as f64 + 0.5) / n as f64 - 1.0;
                    let y = 1.0 - 2.0 * (py as f64 + 0.5) / n as f64;
                    let r2 = x * x + y * y;
                    if r2 >= 1.0 {
                        return [0.0; 3];
                    }
                    let normal = rot * Vector3::new(x, y, (1.0 - r2).sqrt());
                    let t = up.cross(&normal);
                    let t = if t.norm() < 1e-9 { Vector3::x() } else { t.normalize() };
                    let b = normal.cross(&t);
                    let local = |v: &Vector3<f64>| Vector3::new(v.dot(&t), v.dot(&b), v.dot(&normal));
                    let wo = local(&wo_world);
                    let mut out = [0.0; 3];
                    let mut f = [0.0; 3];
                    for l in &lights {
                        let cos = l.dir.dot(&normal);
                        if cos <= 0.0 {
                            continue;
                        }
                        let Ok(c) = dirs_to_halfdiff(local(&l.dir), wo) else { continue };
                        brdf.lookup_theta_h_lerp_into(c, &mut f);
                        for ch in 0..3 {
                            out[ch] += f[ch] * l.radiance[ch] * cos;
                        }
                    }
                    out
                })
                .collect()
        })
        .collect();
    Ok(LinearImage { width: n, height: n, pixels: rows.into_iter().flatten().collect() })
}

/// `clamp((exposure · L)^(1/2.2))` to 8 bits.
pub fn tonemap(img: &LinearImage, exposure: f64) -> RgbImage {
    let encode = |v: f64| ((exposure * v).max(0.0).powf(1.0 / GAMMA).min(1.0) * 255.0).round() as u8;
    RgbImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        Rgb(img.pixel(x as usize, y as usize).map(encode))
    })
}

pub fn render_sphere(brdf: &Brdf, scene: &PreviewScene) -> Result<RgbImage> {
    Ok(tonemap(&render_linear(brdf, scene)?, scene.exposure))
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merl::{ChannelLayout, Dims};
    use std::f64::consts::PI;

    fn dims() -> Dims {
        Dims::new(16, 16, 32).unwrap()
    }

    fn lambert(albedo: f64) -> Brdf {
        Brdf::from_fn(dims(), ChannelLayout::Rgb, |_, _| Some(albedo / PI))
    }

    #[test]
    fn lambert_center_pixel() {
        let scene = PreviewScene::directional([0.0, 0.0, 1.0], [1.0; 3], 65);
        let img = render_linear(&lambert(1.0), &scene).unwrap();
        for c in img.pixel(32, 32) {
            assert!((c - 1.0 / PI).abs() < 1e-3, "{c}");
        }
    }

    #[test]
    fn zero_brdf_is_black() {
        let zero = Brdf::from_fn(dims(), ChannelLayout::Rgb, |_, _| Some(0.0));
        let img = render_sphere(&zero, &PreviewScene::directional([0.3, 0.5, 1.0], [2.0; 3], 32)).unwrap();
        assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn uniform_environment_on_lambert_is_albedo_times_radiance() {
        // Irradiance from a uniform sky of radiance 1 is π, so L = albedo.
        let scene = PreviewScene::environment(EnvMap::uniform(32, 16, [1.0; 3]), 33);
        let img = render_linear(&lambert(0.5), &scene).unwrap();
        let c = img.pixel(16, 16)[0];
        assert!((c - 0.5).abs() < 0.02, "{c}");
    }

    #[test]
    fn rotating_camera_and_environment_together() {
        let texels = (0..32 * 16).map(|i| [(i % 7) as f64 * 0.3, (i % 5) as f64 * 0.2, (i % 3) as f64]).collect();
        let env = EnvMap::new(32, 16, texels).unwrap();
        let b = lambert(0.8);
        let a = render_sphere(&b, &PreviewScene::environment(env.clone(), 48)).unwrap();
        let mut rotated = PreviewScene::environment(env.rotated(4), 48);
        rotated.camera_azimuth = 2.0 * PI * 4.0 / 32.0;
        let r = render_sphere(&b, &rotated).unwrap();
        for (p, q) in a.pixels().zip(r.pixels()) {
            for (x, y) in p.0.iter().zip(q.0) {
                assert!((*x as i32 - y as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn brighter_brdf_never_darkens() {
        let scene = PreviewScene::directional([0.2, 0.7, 0.6], [1.0, 0.5, 0.2], 24);
        let a = render_linear(&lambert(0.3), &scene).unwrap();
        let b = render_linear(&lambert(0.3).scaled(1.7), &scene).unwrap();
        for (p, q) in a.pixels.iter().zip(&b.pixels) {
            assert!(p.iter().zip(q).all(|(x, y)| y >= x));
        }
    }

    #[test]
    fn pfm_round_trip_and_downsample() {
        let texels = (0..8 * 4).map(|i| [i as f64, 0.5, 2.0]).collect();
        let env = EnvMap::new(8, 4, texels).unwrap();
        let mut buf = Vec::new();
        write_pfm(&env, &mut buf).unwrap();
        assert_eq!(read_pfm(buf.as_slice()).unwrap(), env);
        let small = env.downsample(4, 2);
        assert_eq!((small.width(), small.height()), (4, 2));
        assert_eq!(small.texel(0, 0), [4.5, 0.5, 2.0]);
    }

    #[test]
    fn scene_validation() {
        assert!(render_linear(&lambert(1.0), &PreviewScene::directional([0.0, 0.0, 1.0], [1.0; 3], 8)).is_err());
        let mut s = PreviewScene::directional([0.0, 0.0, 1.0], [1.0; 3], 16);
        s.exposure = 0.0;
        assert!(render_linear(&lambert(1.0), &s).is_err());
    }
}
