//! Log-relative mapping of reflectance against a dataset reference.
//!
//! Each bin is mapped to `ln((rho * w + eps) / (rho_ref * w + eps))` with the
//! cosine weight `w = max(cos(theta_h) * cos(theta_d), floor)` taken at the
//! bin centre. Invalid samples map to 0, i.e. "equal to the reference".

use rayon::prelude::*;

use crate::error::{argument, Result};
use crate::merl::{Brdf, ChannelLayout, Dims};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-3;

/// Per-bin median reflectance of a dataset plus the mapping regularisers.
#[derive(Clone, Debug)]
pub struct ReferenceBrdf {
    median: Brdf,
    epsilon: f64,
    weight_floor: f64,
    weights: Vec<f64>,
}

impl PartialEq for ReferenceBrdf {
    fn eq(&self, other: &Self) -> bool {
        self.median == other.median
            && self.epsilon == other.epsilon
            && self.weight_floor == other.weight_floor
    }
}

impl ReferenceBrdf {
    /// Wraps an existing median table. Every sample must be valid.
    pub fn new(median: Brdf, epsilon: f64, weight_floor: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(argument("epsilon must be positive"));
        }
        if !(weight_floor > 0.0 && weight_floor <= 1.0) {
            return Err(argument("cosine weight floor must lie in (0, 1]"));
        }
        if median.invalid_count() > 0 {
            return Err(argument("reference table must not contain invalid samples"));
        }
        let weights = median.dims().cosine_weights(weight_floor);
        Ok(ReferenceBrdf { median, epsilon, weight_floor, weights })
    }

    pub fn median(&self) -> &Brdf {
        &self.median
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    pub fn dims(&self) -> Dims {
        self.median.dims()
    }

    pub fn channels(&self) -> usize {
        self.median.channels()
    }

    /// Cosine weight of every bin.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    fn reference_channel(&self, channel: usize) -> usize {
        if self.median.channels() == 1 {
            0
        } else {
            channel
        }
    }

    fn check(&self, dims: Dims, channels: usize) -> Result<()> {
        if dims != self.dims() {
            return Err(argument(format!(
                "table dims {dims:?} do not match reference {:?}",
                self.dims()
            )));
        }
        if self.channels() != 1 && self.channels() != channels {
            return Err(argument(format!(
                "{channels}-channel table cannot use a {}-channel reference",
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Mapped table: unitless log ratios, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedBrdf {
    dims: Dims,
    channels: usize,
    values: Vec<f64>,
}

impl MappedBrdf {
    pub fn new(dims: Dims, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.bins() * channels {
            return Err(argument(format!(
                "expected {} mapped values, got {}",
                dims.bins() * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("mapped values must be finite"));
        }
        Ok(MappedBrdf { dims, channels, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let n = self.dims.bins();
        &self.values[channel * n..(channel + 1) * n]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Per-bin median over a dataset, ignoring invalid samples. Bins that are
/// invalid everywhere get a median of 0.
pub fn compute_reference(dataset: &[Brdf]) -> Result<ReferenceBrdf> {
    compute_reference_with(dataset, DEFAULT_EPSILON, DEFAULT_WEIGHT_FLOOR)
}

pub fn compute_reference_with(
    dataset: &[Brdf],
    epsilon: f64,
    weight_floor: f64,
) -> Result<ReferenceBrdf> {
    let first = dataset.first().ok_or_else(|| argument("reference needs a non-empty dataset"))?;
    let (dims, layout) = (first.dims(), first.layout());
    if dataset.iter().any(|b| b.dims() != dims || b.layout() != layout) {
        return Err(argument("dataset tables differ in dims or channel layout"));
    }
    let bins = dims.bins();
    // Medians are taken over stored units; the channel scale is a positive
    // constant so this is the median of the linear values too.
    let stored: Vec<f64> = (0..layout.channels() * bins)
        .into_par_iter()
        .map_init(Vec::new, |scratch: &mut Vec<f64>, slot| {
            let (ch, bin) = (slot / bins, slot % bins);
            scratch.clear();
            scratch.extend(
                dataset.iter().filter(|b| b.is_valid(ch, bin)).map(|b| b.stored()[slot]),
            );
            median_in_place(scratch).unwrap_or(0.0)
        })
        .collect();
    let median = Brdf::from_stored(dims, layout, stored)?;
    ReferenceBrdf::new(median, epsilon, weight_floor)
}

fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Maps a table. A single-channel reference is shared by every channel.
pub fn map_brdf(b: &Brdf, reference: &ReferenceBrdf) -> Result<MappedBrdf> {
    reference.check(b.dims(), b.channels())?;
    let bins = b.dims().bins();
    let eps = reference.epsilon;
    let mut values = vec![0.0; bins * b.channels()];
    values.par_chunks_mut(bins).enumerate().for_each(|(ch, out)| {
        let rch = reference.reference_channel(ch);
        for (bin, slot) in out.iter_mut().enumerate() {
            *slot = match b.value(ch, bin) {
                Some(rho) => {
                    let w = reference.weights[bin];
                    let r = reference.median.value(rch, bin).unwrap_or(0.0);
                    ((rho * w + eps) / (r * w + eps)).ln()
                }
                None => 0.0,
            };
        }
    });
    Ok(MappedBrdf { dims: b.dims(), channels: b.channels(), values })
}

/// Inverse of [`map_brdf`]; negative reflectance is clamped to 0.
pub fn unmap_brdf(m: &MappedBrdf, reference: &ReferenceBrdf) -> Result<Brdf> {
    reference.check(m.dims, m.channels)?;
    let layout = ChannelLayout::for_channels(m.channels)?;
    let bins = m.dims.bins();
    let eps = reference.epsilon;
    let mut stored = vec![0.0; bins * m.channels];
    stored.par_chunks_mut(bins).enumerate().for_each(|(ch, out)| {
        let rch = reference.reference_channel(ch);
        let scale = layout.scale(ch);
        let mapped = m.channel(ch);
        for (bin, slot) in out.iter_mut().enumerate() {
            let w = reference.weights[bin];
            let r = reference.median.value(rch, bin).unwrap_or(0.0);
            let rho = (((r * w + eps) * mapped[bin].exp() - eps) / w).max(0.0);
            *slot = rho / scale;
        }
    });
    Brdf::from_stored(m.dims, layout, stored)
}
