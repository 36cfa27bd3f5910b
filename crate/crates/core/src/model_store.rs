//! A trained model directory: basis, hull and one functional per attribute,
//! tied together by a manifest. Also the coefficient table used for
//! training.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::Attribute;
use crate::error::{argument, Error, Result};
use crate::hull::{HullModel, DEFAULT_TOLERANCE};
use crate::pca::{Alpha, BasisHash, PcaBasis, COMPONENTS};
use crate::ratings::RatingsTable;
use crate::rbf::{train, Prediction, RbfModel, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BASIS_FILE: &str = "basis.bin";
pub const HULL_FILE: &str = "hull.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelEntry {
    attribute: Attribute,
    file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    basis_hash: BasisHash,
    basis: String,
    hull: String,
    attributes: Vec<ModelEntry>,
}

/// Predictions for every attribute with a model, in registry order.
pub type AttributeVector = BTreeMap<Attribute, Prediction>;

#[derive(Clone, Debug)]
pub struct ModelSet {
    basis: PcaBasis,
    hull: HullModel,
    models: BTreeMap<Attribute, RbfModel>,
}

impl ModelSet {
    pub fn new(basis: PcaBasis, hull: HullModel, models: impl IntoIterator<Item = RbfModel>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            basis.ensure_same(&m.basis_hash)?;
            if map.insert(m.attribute, m).is_some() {
                return Err(argument("duplicate attribute model"));
            }
        }
        Ok(ModelSet { basis, hull, models: map })
    }

    pub fn basis(&self) -> &PcaBasis {
        &self.basis
    }

    pub fn hull(&self) -> &HullModel {
        &self.hull
    }

    pub fn models(&self) -> &BTreeMap<Attribute, RbfModel> {
        &self.models
    }

    pub fn model(&self, attr: Attribute) -> Result<&RbfModel> {
        self.models.get(&attr).ok_or_else(|| Error::NotFound(format!("no model for {attr}")))
    }

    pub fn predict(&self, alpha: &Alpha) -> AttributeVector {
        self.models.iter().map(|(&a, m)| (a, Prediction::new(m.eval_raw(alpha)))).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.basis.save(dir.join(BASIS_FILE))?;
        std::fs::write(dir.join(HULL_FILE), serde_json::to_vec_pretty(&self.hull)?)?;
        let mut entries = Vec::new();
        for (a, m) in &self.models {
            let file = format!("{}.json", a.slug());
            m.save(dir.join(&file))?;
            entries.push(ModelEntry { attribute: *a, file });
        }
        let manifest = Manifest {
            basis_hash: self.basis.hash().clone(),
            basis: BASIS_FILE.into(),
            hull: HULL_FILE.into(),
            attributes: entries,
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        let basis = PcaBasis::load(dir.join(&manifest.basis))?;
        basis.ensure_same(&manifest.basis_hash)?;
        let hull: HullModel = serde_json::from_slice(&std::fs::read(dir.join(&manifest.hull))?)?;
        let models = manifest
            .attributes
            .iter()
            .map(|e| {
                let m = RbfModel::load(dir.join(&e.file))?;
                if m.attribute != e.attribute {
                    return Err(Error::Format(format!("{} holds a model for {}", e.file, m.attribute)));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSet::new(basis, hull, models)
    }
}

/// Where a material came from; training splits are stratified by it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Synthesized,
}

impl std::str::FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seed" => Ok(Origin::Seed),
            "synthesized" | "synth" => Ok(Origin::Synthesized),
            other => Err(Error::Schema(format!("unknown origin {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRow {
    pub origin: Origin,
    pub alpha: Alpha,
}

pub const ALPHAS_HEADER: [&str; 7] = ["brdf_id", "origin", "a1", "a2", "a3", "a4", "a5"];

/// Coefficient table keyed by material id.
pub fn read_alphas(reader: impl Read) -> Result<BTreeMap<String, AlphaRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().ne(ALPHAS_HEADER) {
        return Err(Error::Schema(format!("expected header {}", ALPHAS_HEADER.join(","))));
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut alpha = [0.0; COMPONENTS];
        for (k, a) in alpha.iter_mut().enumerate() {
            *a = row[2 + k]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Row { line, message: format!("bad coefficient {:?}", &row[2 + k]) })?;
        }
        out.insert(row[0].to_string(), AlphaRow { origin: row[1].parse()?, alpha });
    }
    Ok(out)
}

pub fn write_alphas(rows: &BTreeMap<String, AlphaRow>, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ALPHAS_HEADER)?;
    for (id, r) in rows {
        let origin = if r.origin == Origin::Seed { "seed" } else { "synthesized" };
        let mut rec = vec![id.clone(), origin.to_string()];
        rec.extend(r.alpha.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Hull used for editing: the seed materials when there are enough of them
/// to span five dimensions, otherwise every row.
pub fn hull_from_alphas(rows: &BTreeMap<String, AlphaRow>) -> Result<HullModel> {
    let seeds: Vec<Alpha> = rows.values().filter(|r| r.origin == Origin::Seed).map(|r| r.alpha).collect();
    if seeds.len() > COMPONENTS {
        let hull = HullModel::new(seeds, DEFAULT_TOLERANCE)?;
        if hull.ensure_full_dimensional().is_ok() {
            return Ok(hull);
        }
    }
    HullModel::new(rows.values().map(|r| r.alpha).collect(), DEFAULT_TOLERANCE)
}

/// Trains every attribute that has ratings for at least `n_centers` of the
/// materials in `alphas`, in parallel.
pub fn train_all(
    basis_hash: &BasisHash,
    alphas: &BTreeMap<String, AlphaRow>,
    ratings: &RatingsTable,
    config: &TrainConfig,
) -> Result<Vec<RbfModel>> {
    Attribute::ALL
        .par_iter()
        .filter_map(|&attr| {
            let mos = ratings.mos_by_brdf(attr);
            let rows: Vec<(&AlphaRow, f64)> =
                alphas.iter().filter_map(|(id, row)| mos.get(id).map(|&y| (row, y))).collect();
            if rows.is_empty() {
                log::warn!("no rated materials for {attr}; skipped");
                return None;
            }
            let a: Vec<Alpha> = rows.iter().map(|(r, _)| r.alpha).collect();
            let y: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
            let strata: Vec<u32> = rows.iter().map(|(r, _)| r.origin as u32).collect();
            Some(train(attr, basis_hash, &a, &y, Some(&strata), config))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphas_csv_round_trip() {
        let mut rows = BTreeMap::new();
        rows.insert("a".to_string(), AlphaRow { origin: Origin::Seed, alpha: [0.1, -2.5, 3.0, 1e-9, 7.25] });
        rows.insert("b".to_string(), AlphaRow { origin: Origin::Synthesized, alpha: [1.0 / 3.0; 5] });
        let mut buf = Vec::new();
        write_alphas(&rows, &mut buf).unwrap();
        assert_eq!(read_alphas(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn bad_alpha_rows_are_reported() {
        let csv = "brdf_id,origin,a1,a2,a3,a4,a5\nm,seed,1,2,x,4,5\n";
        assert!(matches!(read_alphas(csv.as_bytes()), Err(Error::Row { line: 2, .. })));
        let csv = "brdf_id,origin,a1,a2,a3,a4,a5\nm,imported,1,2,3,4,5\n";
        assert!(matches!(read_alphas(csv.as_bytes()), Err(Error::Schema(_))));
    }
}
