//! Perceptual appearance control for measured isotropic BRDFs.
//!
//! Tables are mapped to a log-relative space and reduced to five principal
//! coefficients. Per-attribute RBF functionals predict how people rate a
//! material from those coefficients, and inverting a functional inside the
//! convex hull of the data gives attribute-driven edits.

pub mod attributes;
pub mod chroma;
pub mod editor;
pub mod error;
pub mod hull;
pub mod kmeans;
pub mod logmap;
pub mod merl;
pub mod model_store;
pub mod pca;
pub mod preview;
pub mod ratings;
pub mod rbf;
pub mod service;
pub mod slice;
pub mod synthesis;

pub use attributes::{Attribute, ATTRIBUTE_COUNT};
pub use chroma::{merge_achromatic, split_achromatic, ChromaEdit, ChromaRecord};
pub use editor::{apply_edit, attr_distance, edit, rmse_distance, EditOptions, EditResult, EditStatus, RmseVariant};
pub use error::{Error, Result};
pub use hull::HullModel;
pub use logmap::{compute_reference, map_brdf, unmap_brdf, MappedBrdf, ReferenceBrdf};
pub use merl::{dirs_to_halfdiff, Brdf, ChannelLayout, Dims, HalfDiffCoords};
pub use model_store::{AttributeVector, ModelSet, Origin};
pub use pca::{fit_basis, Alpha, BasisHash, CoeffVector, PcaBasis, COMPONENTS};
pub use preview::{render_sphere, EnvMap, Lighting, PreviewScene};
pub use ratings::{correlation_matrix, cluster_stats, load_ratings, Cluster, CorrelationReport, RatingsTable};
pub use rbf::{fit_mse, train, Prediction, RbfModel, TrainConfig, TrainReport};
pub use service::{slice_over_hull, EditRequest, EditResponse, MaterialInfo, MaterialRegistry};
pub use slice::{isocontour, slice, Polyline, SliceGrid, SliceSpec};
pub use synthesis::{expand, expand_dataset, gibbs_sample, synthesize, ExpansionManifest, ManifestEntry};
