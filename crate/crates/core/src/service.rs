//! Material registry behind the editing service. Materials are immutable;
//! every edit registers a new one, so earlier ids stay valid for undo.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::Attribute;
use crate::chroma::{split_achromatic, ChromaEdit, ChromaRecord};
use crate::editor::{apply_with_chroma, edit_alpha, EditOptions, EditStatus};
use crate::error::{argument, Error, Result};
use crate::logmap::map_brdf;
use crate::merl::Brdf;
use crate::model_store::{AttributeVector, ModelSet};
use crate::pca::{Alpha, PcaBasis};
use crate::preview::{encode_png, render_sphere, EnvMap, PreviewScene};
use crate::slice::{slice, SliceGrid, SliceSpec};
use crate::synthesis::ExpansionManifest;

/// Achromatic and per-channel coefficients of a colour table, plus its
/// chroma record.
pub fn project_material(basis: &PcaBasis, brdf: &Brdf) -> Result<(Alpha, Vec<f64>, ChromaRecord)> {
    let (lum, chroma) = split_achromatic(brdf)?;
    let alpha5 = basis.project(&map_brdf(&lum, basis.reference())?)?.alpha5()?;
    let alpha15 = basis.project(&map_brdf(brdf, basis.reference())?)?.values;
    Ok((alpha5, alpha15, chroma))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditProvenance {
    pub attribute: Attribute,
    pub target_y: f64,
    pub status: EditStatus,
}

#[derive(Clone, Debug)]
pub struct Material {
    pub id: String,
    pub parent: Option<String>,
    pub brdf: Brdf,
    pub alpha5: Alpha,
    pub alpha15: Vec<f64>,
    pub chroma: ChromaRecord,
    pub attributes: AttributeVector,
    pub edit: Option<EditProvenance>,
}

/// JSON view of a material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialInfo {
    pub id: String,
    pub parent: Option<String>,
    pub alpha5: Alpha,
    /// Clamped predictions, for display.
    pub attribute_vector: BTreeMap<Attribute, f64>,
    pub attribute_raw: BTreeMap<Attribute, f64>,
    pub preview_url: String,
    pub edit: Option<EditProvenance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub material_id: String,
    pub attribute: Attribute,
    pub target_y: f64,
    #[serde(default)]
    pub chroma: Option<ChromaEdit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub new_material_id: String,
    pub attribute_vector: BTreeMap<Attribute, f64>,
    pub path: Vec<Alpha>,
    pub preview_url: String,
    pub status: EditStatus,
    pub achieved_y: f64,
    pub iterations: usize,
}

pub fn preview_url(id: &str) -> String {
    format!("/materials/{id}/preview.png")
}

fn clamped(v: &AttributeVector) -> BTreeMap<Attribute, f64> {
    v.iter().map(|(&a, p)| (a, p.clamped)).collect()
}

/// A small procedural sky: soft gradient plus one bright texel up and to
/// the front-left.
pub fn default_environment() -> EnvMap {
    let (w, h) = (32, 16);
    let mut texels = Vec::with_capacity(w * h);
    for v in 0..h {
        let up = 1.0 - (v as f64 + 0.5) / h as f64;
        for _ in 0..w {
            let sky = 0.15 + 0.6 * up * up;
            texels.push([sky * 0.9, sky * 0.95, sky]);
        }
    }
    texels[4 * w + 28] = [60.0, 57.0, 52.0];
    EnvMap::new(w, h, texels).expect("valid procedural environment")
}

pub struct MaterialRegistry {
    models: Arc<ModelSet>,
    scene: PreviewScene,
    edit_options: EditOptions,
    materials: RwLock<BTreeMap<String, Arc<Material>>>,
    previews: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

impl MaterialRegistry {
    pub fn new(models: Arc<ModelSet>, scene: PreviewScene) -> Self {
        MaterialRegistry {
            models,
            scene,
            edit_options: EditOptions::default(),
            materials: RwLock::new(BTreeMap::new()),
            previews: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_default_scene(models: Arc<ModelSet>) -> Self {
        Self::new(models, PreviewScene::environment(default_environment(), 256))
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    /// Adds a table under `id`. Its coefficients are projected unless given.
    pub fn register(&self, id: &str, brdf: Brdf, alpha5: Option<Alpha>) -> Result<Arc<Material>> {
        let (projected, alpha15, chroma) = project_material(self.models.basis(), &brdf)?;
        let alpha5 = alpha5.unwrap_or(projected);
        let material = Arc::new(Material {
            id: id.to_string(),
            parent: None,
            brdf,
            alpha5,
            alpha15,
            chroma,
            attributes: self.models.predict(&alpha5),
            edit: None,
        });
        self.materials.write().expect("registry lock").insert(id.to_string(), material.clone());
        Ok(material)
    }

    /// Registers every `*.binary` table in `dir` under its file stem. When
    /// the directory holds an expansion `manifest.json` for the loaded basis,
    /// its coefficients replace the projected ones.
    pub fn load_dir(&self, dir: impl AsRef<Path>) -> Result<usize> {
        let dir = dir.as_ref();
        let overrides = read_manifest_alphas(dir, self.models.basis())?;
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "binary"))
            .collect();
        paths.sort();
        for p in &paths {
            let id = p.file_stem().and_then(|s| s.to_str()).ok_or_else(|| argument("bad file name"))?;
            let brdf = Brdf::read_merl(p)?;
            self.register(id, brdf, overrides.get(id).copied())?;
        }
        Ok(paths.len())
    }

    pub fn get(&self, id: &str) -> Result<Arc<Material>> {
        self.materials
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("material {id}")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.materials.read().expect("registry lock").keys().cloned().collect()
    }

    pub fn info(&self, id: &str) -> Result<MaterialInfo> {
        let m = self.get(id)?;
        Ok(MaterialInfo {
            id: m.id.clone(),
            parent: m.parent.clone(),
            alpha5: m.alpha5,
            attribute_vector: clamped(&m.attributes),
            attribute_raw: m.attributes.iter().map(|(&a, p)| (a, p.raw)).collect(),
            preview_url: preview_url(&m.id),
            edit: m.edit.clone(),
        })
    }

    pub fn list(&self) -> Vec<MaterialInfo> {
        self.ids().iter().filter_map(|id| self.info(id).ok()).collect()
    }

    /// PNG preview, rendered on first request and cached.
    pub fn preview_png(&self, id: &str) -> Result<Arc<Vec<u8>>> {
        if let Some(p) = self.previews.lock().expect("preview lock").get(id) {
            return Ok(p.clone());
        }
        let m = self.get(id)?;
        let png = Arc::new(encode_png(&render_sphere(&m.brdf, &self.scene)?)?);
        self.previews.lock().expect("preview lock").insert(id.to_string(), png.clone());
        Ok(png)
    }

    /// Runs one attribute edit and registers the result. Identical requests
    /// map to the same new id and the same response.
    pub fn handle_edit_request(&self, req: &EditRequest) -> Result<EditResponse> {
        if !(0.0..=1.0).contains(&req.target_y) {
            return Err(argument(format!("target_y {} outside [0, 1]", req.target_y)));
        }
        let parent = self.get(&req.material_id)?;
        let model = self.models.model(req.attribute)?;
        let result = edit_alpha(model, self.models.hull(), &parent.alpha5, req.target_y, &self.edit_options)?;
        let new_id = edit_id(req);
        let existing = self.materials.read().expect("registry lock").get(&new_id).cloned();
        let material = match existing {
            Some(m) => m,
            None => {
                let chroma_edit = req.chroma.unwrap_or_default();
                let brdf = apply_with_chroma(self.models.basis(), &parent.chroma, &result.alpha_final, chroma_edit)?;
                let (_, alpha15, chroma) = project_material(self.models.basis(), &brdf)?;
                let m = Arc::new(Material {
                    id: new_id.clone(),
                    parent: Some(parent.id.clone()),
                    brdf,
                    alpha5: result.alpha_final,
                    alpha15,
                    chroma,
                    attributes: self.models.predict(&result.alpha_final),
                    edit: Some(EditProvenance { attribute: req.attribute, target_y: req.target_y, status: result.status }),
                });
                self.materials.write().expect("registry lock").entry(new_id.clone()).or_insert(m).clone()
            }
        };
        Ok(EditResponse {
            new_material_id: new_id.clone(),
            attribute_vector: clamped(&material.attributes),
            path: result.path,
            preview_url: preview_url(&new_id),
            status: result.status,
            achieved_y: result.achieved_y,
            iterations: result.iterations,
        })
    }

    pub fn slice_grid(&self, attr: Attribute, i: usize, j: usize, fixed: Option<Alpha>, resolution: usize) -> Result<SliceGrid> {
        slice_over_hull(&self.models, attr, i, j, fixed, resolution)
    }
}

/// Slice of one functional over free dims `i`, `j` (0-based), spanning the
/// hull's extent; the other coordinates come from `fixed`, or the hull
/// centroid.
pub fn slice_over_hull(models: &ModelSet, attr: Attribute, i: usize, j: usize, fixed: Option<Alpha>, resolution: usize) -> Result<SliceGrid> {
    let model = models.model(attr)?;
    let extent = models.hull().extent();
    let dim = |d: usize| extent.get(d).copied().ok_or_else(|| argument(format!("dim {d} out of range")));
    let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let spec = SliceSpec {
        dims: (i, j),
        fixed: fixed.unwrap_or_else(|| models.hull().centroid()),
        bounds: [pad(dim(i)?), pad(dim(j)?)],
        resolution,
    };
    slice(model, &spec)
}

fn edit_id(req: &EditRequest) -> String {
    let mut h = Sha256::new();
    h.update(req.material_id.as_bytes());
    h.update([0]);
    h.update(req.attribute.name().as_bytes());
    h.update(req.target_y.to_le_bytes());
    if let Some(c) = req.chroma {
        for v in [c.delta_a, c.delta_b, c.scale] {
            h.update(v.to_le_bytes());
        }
    }
    format!("edit-{}", &hex::encode(h.finalize())[..12])
}

fn read_manifest_alphas(dir: &Path, basis: &PcaBasis) -> Result<HashMap<String, Alpha>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let Ok(m) = serde_json::from_slice::<ExpansionManifest>(&std::fs::read(&path)?) else {
        log::warn!("{} is not an expansion manifest; coefficients will be projected", path.display());
        return Ok(HashMap::new());
    };
    if basis.ensure_same(&m.basis_hash).is_err() {
        log::warn!("{} was written for another basis; coefficients will be projected", path.display());
        return Ok(HashMap::new());
    }
    Ok(m.seeds.into_iter().map(|s| (s.id, s.alpha5)).chain(m.synthesized.into_iter().map(|e| (e.id, e.alpha5))).collect())
}

/// Colour-mapped slice image, values clamped to [0, 1]; row 0 of the image
/// is the top (largest second-dim coordinate).
pub fn slice_image(grid: &SliceGrid) -> RgbImage {
    let n = grid.values.len();
    RgbImage::from_fn(n as u32, n as u32, |x, y| {
        let v = grid.values[n - 1 - y as usize][x as usize].clamp(0.0, 1.0);
        // Dark blue through white to dark red.
        let (r, g, b) = if v < 0.5 {
            let t = v / 0.5;
            (t, t, 0.4 + 0.6 * t)
        } else {
            let t = (v - 0.5) / 0.5;
            (1.0 - 0.4 * t, 1.0 - t, 1.0 - t)
        };
        Rgb([r, g, b].map(|c| (c * 255.0).round() as u8))
    })
}
