//! The fixed registry of perceptual attributes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    PlasticLike,
    RubberLike,
    MetallicLike,
    FabricLike,
    CeramicLike,
    Soft,
    Hard,
    Matte,
    Glossy,
    Bright,
    Rough,
    TintOfReflections,
    StrengthOfReflections,
    SharpnessOfReflections,
}

pub const ATTRIBUTE_COUNT: usize = 14;

impl Attribute {
    pub const ALL: [Attribute; ATTRIBUTE_COUNT] = [
        Attribute::PlasticLike,
        Attribute::RubberLike,
        Attribute::MetallicLike,
        Attribute::FabricLike,
        Attribute::CeramicLike,
        Attribute::Soft,
        Attribute::Hard,
        Attribute::Matte,
        Attribute::Glossy,
        Attribute::Bright,
        Attribute::Rough,
        Attribute::TintOfReflections,
        Attribute::StrengthOfReflections,
        Attribute::SharpnessOfReflections,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::PlasticLike => "plastic-like",
            Attribute::RubberLike => "rubber-like",
            Attribute::MetallicLike => "metallic-like",
            Attribute::FabricLike => "fabric-like",
            Attribute::CeramicLike => "ceramic-like",
            Attribute::Soft => "soft",
            Attribute::Hard => "hard",
            Attribute::Matte => "matte",
            Attribute::Glossy => "glossy",
            Attribute::Bright => "bright",
            Attribute::Rough => "rough",
            Attribute::TintOfReflections => "tint of reflections",
            Attribute::StrengthOfReflections => "strength of reflections",
            Attribute::SharpnessOfReflections => "sharpness of reflections",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Attribute> {
        Attribute::ALL.get(i).copied()
    }

    /// File- and URL-safe form of the name (spaces become dashes).
    pub fn slug(self) -> String {
        self.name().replace(' ', "-")
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    /// Accepts the name or the slug, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], " ");
        Attribute::ALL
            .into_iter()
            .find(|a| a.name().replace('-', " ") == key)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {s:?}")))
    }
}

impl Serialize for Attribute {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
