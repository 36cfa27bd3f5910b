use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use appearance_core::editor::{apply_alpha, attr_distance_alpha, edit_alpha};
use appearance_core::model_store::{hull_from_alphas, read_alphas, train_all, AlphaRow, Origin};
use appearance_core::preview::encode_png;
use appearance_core::ratings::{load_clusters, write_cluster_stats_csv, write_correlation_csv, write_significance_csv};
use appearance_core::service::{default_environment, project_material, slice_image};
use appearance_core::synthesis::{ExpandConfig, Expansion, NamedBrdf};
use appearance_core::{
    cluster_stats, correlation_matrix, expand, load_ratings, render_sphere, slice_over_hull, Attribute, Brdf, ChromaEdit,
    EditOptions, EnvMap, MaterialRegistry, ModelSet, PcaBasis, PreviewScene, RmseVariant, SliceGrid, TrainConfig,
};
use clap::{Args, Parser, Subcommand};

use crate::server;

#[derive(Debug, Parser)]
#[command(name = "appearance", version, about = "Attribute-driven editing of measured BRDFs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow a set of seed tables by sampling inside their coefficient hull.
    Expand(ExpandArgs),
    /// Fit one functional per rated attribute.
    Train(TrainArgs),
    /// Predict attribute scores for tables.
    Predict(PredictArgs),
    /// Move a table toward a target attribute value.
    Edit(EditArgs),
    /// Distance between two tables.
    Similar(SimilarArgs),
    /// Evaluate a functional over a 2-D slice of coefficient space.
    Slice(SliceArgs),
    /// Correlation and cluster statistics of a ratings table.
    Stats(StatsArgs),
    /// Render a sphere preview.
    Render(RenderArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Directory of seed `*.binary` tables.
    #[arg(long)]
    pub seeds: PathBuf,
    /// Total number of tables, seeds included.
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub alphas: PathBuf,
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = appearance_core::rbf::DEFAULT_CENTERS)]
    pub centers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(required = true)]
    pub brdfs: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub brdf: PathBuf,
    #[arg(long, value_parser = parse_attribute)]
    pub attribute: Attribute,
    #[arg(long)]
    pub target: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the accepted iterates as CSV.
    #[arg(long)]
    pub path_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delta_a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delta_b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub chroma_scale: f64,
}

#[derive(Debug, Args)]
pub struct SimilarArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Compare predicted scores of this attribute (needs --models).
    #[arg(long, value_parser = parse_attribute, requires = "models", conflicts_with = "rmse")]
    pub attribute: Option<Attribute>,
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// plain, cosine-weighted or cosine-weighted-cuberoot.
    #[arg(long, value_parser = parse_rmse)]
    pub rmse: Option<RmseVariant>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, value_parser = parse_attribute)]
    pub attribute: Attribute,
    /// Two 1-based coefficient indices, e.g. `1,3`.
    #[arg(long)]
    pub dims: String,
    /// Values for all five coefficients; the free ones are ignored.
    #[arg(long, allow_hyphen_values = true)]
    pub fixed: Option<String>,
    #[arg(long, default_value_t = server::DEFAULT_SLICE_RESOLUTION)]
    pub resolution: usize,
    /// `.png` or `.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// `brdf_id,cluster` table.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub brdf: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `.hdr` or `.pfm` environment; the built-in sky when neither this nor
    /// --light is given.
    #[arg(long, conflicts_with = "light")]
    pub env: Option<PathBuf>,
    /// Direction toward a single light, `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub light: Option<String>,
    #[arg(long, default_value = "3,3,3")]
    pub radiance: String,
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    /// Camera rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub azimuth: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub materials: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[arg(long)]
    pub env: Option<PathBuf>,
}

fn parse_attribute(s: &str) -> std::result::Result<Attribute, String> {
    s.parse().map_err(|e: appearance_core::Error| e.to_string())
}

fn parse_rmse(s: &str) -> std::result::Result<RmseVariant, String> {
    s.parse().map_err(|e: appearance_core::Error| e.to_string())
}

pub fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?}")))
        .collect::<Result<_>>()?;
    match <[f64; N]>::try_from(v) {
        Ok(a) if a.iter().all(|x| x.is_finite()) => Ok(a),
        Ok(_) => bail!("values must be finite"),
        Err(v) => bail!("expected {N} comma-separated values, got {}", v.len()),
    }
}

/// Parses `i,j` (1-based) into 0-based indices.
pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [i, j] = parts.as_slice() else { bail!("--dims takes two indices, e.g. 1,3") };
    let i: usize = i.parse().with_context(|| format!("bad index {i:?}"))?;
    let j: usize = j.parse().with_context(|| format!("bad index {j:?}"))?;
    if !(1..=5).contains(&i) || !(1..=5).contains(&j) || i == j {
        bail!("--dims needs two distinct indices in 1..=5");
    }
    Ok((i - 1, j - 1))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Expand(a) => run_expand(&a),
        Command::Train(a) => run_train(&a),
        Command::Predict(a) => run_predict(&a),
        Command::Edit(a) => run_edit(&a),
        Command::Similar(a) => run_similar(&a),
        Command::Slice(a) => run_slice(&a),
        Command::Stats(a) => run_stats(&a),
        Command::Render(a) => run_render(&a),
        Command::Serve(a) => run_serve(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_brdf(path: &Path) -> Result<Brdf> {
    Brdf::read_merl(path).with_context(|| format!("reading {}", path.display()))
}

fn load_models(dir: &Path) -> Result<ModelSet> {
    ModelSet::load(dir).with_context(|| format!("loading models from {}", dir.display()))
}

/// Sorted `*.binary` files of a directory.
fn table_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "binary"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn expansion_rows(ex: &Expansion) -> BTreeMap<String, AlphaRow> {
    ex.seeds
        .iter()
        .map(|s| (s.id.clone(), AlphaRow { origin: Origin::Seed, alpha: s.alpha5 }))
        .chain(ex.synthesized.iter().map(|(e, _)| (e.id.clone(), AlphaRow { origin: Origin::Synthesized, alpha: e.alpha5 })))
        .collect()
}

fn run_expand(a: &ExpandArgs) -> Result<()> {
    let paths = table_paths(&a.seeds)?;
    if paths.is_empty() {
        bail!("no *.binary tables in {}", a.seeds.display());
    }
    let seeds: Vec<NamedBrdf> = paths
        .iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).context("bad file name")?.to_string();
            Ok(NamedBrdf { id, brdf: read_brdf(p)? })
        })
        .collect::<Result<_>>()?;
    let ex = expand(&seeds, a.target, a.seed, ExpandConfig::default())?;

    std::fs::create_dir_all(&a.out)?;
    for p in &paths {
        std::fs::copy(p, a.out.join(p.file_name().expect("listed file")))?;
    }
    for (entry, brdf) in &ex.synthesized {
        brdf.write_merl(a.out.join(format!("{}.binary", entry.id)))?;
    }
    serde_json::to_writer_pretty(create(&a.out.join("manifest.json"))?, &ex.manifest(a.seed))?;
    ex.basis.save(a.out.join("basis.bin"))?;
    let mut w = create(&a.out.join("alphas.csv"))?;
    appearance_core::model_store::write_alphas(&expansion_rows(&ex), &mut w)?;
    w.flush()?;
    println!(
        "{} seeds + {} synthesized tables written to {} (basis {})",
        ex.seeds.len(),
        ex.synthesized.len(),
        a.out.display(),
        ex.basis.hash().0
    );
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let rows = read_alphas(File::open(&a.alphas).with_context(|| format!("opening {}", a.alphas.display()))?)?;
    let ratings = load_ratings(&a.ratings)?;
    let basis = PcaBasis::load(&a.basis).with_context(|| format!("loading {}", a.basis.display()))?;
    let hull = hull_from_alphas(&rows)?;
    let config = TrainConfig { n_centers: a.centers, seed: a.seed, ..TrainConfig::default() };
    let models = train_all(basis.hash(), &rows, &ratings, &config)?;
    if models.is_empty() {
        bail!("no attribute has ratings for the materials in {}", a.alphas.display());
    }
    println!("{:<24} {:>12} {:>12} {:>12}", "attribute", "beta", "mse_train", "mse_valid");
    for m in &models {
        let r = m.train_report.as_ref();
        println!(
            "{:<24} {:>12.5} {:>12.6} {:>12.6}",
            m.attribute.name(),
            m.beta,
            r.map_or(f64::NAN, |r| r.mse_train),
            r.map_or(f64::NAN, |r| r.mse_validation)
        );
    }
    ModelSet::new(basis, hull, models)?.save(&a.out)?;
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let mut report = BTreeMap::new();
    for path in &a.brdfs {
        let (alpha5, _, _) = project_material(models.basis(), &read_brdf(path)?)?;
        let scores = models.predict(&alpha5);
        if a.json {
            report.insert(path.display().to_string(), serde_json::json!({ "alpha5": alpha5, "attributes": scores }));
        } else {
            println!("{}", path.display());
            for (attr, p) in &scores {
                println!("  {:<24} {:.4}  (raw {:.4})", attr.name(), p.clamped, p.raw);
            }
        }
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn run_edit(a: &EditArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let brdf = read_brdf(&a.brdf)?;
    let (alpha5, _, _) = project_material(models.basis(), &brdf)?;
    let result = edit_alpha(models.model(a.attribute)?, models.hull(), &alpha5, a.target, &EditOptions::default())?;
    let chroma = ChromaEdit { delta_a: a.delta_a, delta_b: a.delta_b, scale: a.chroma_scale };
    apply_alpha(models.basis(), &brdf, &result.alpha_final, chroma)?.write_merl(&a.out)?;

    if let Some(p) = &a.path_csv {
        let model = models.model(a.attribute)?;
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["step", "a1", "a2", "a3", "a4", "a5", "value"])?;
        for (k, alpha) in result.path.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(alpha.iter().map(f64::to_string));
            rec.push(model.eval_raw(alpha).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "status": result.status,
            "achieved_y": result.achieved_y,
            "iterations": result.iterations,
            "alpha_initial": alpha5,
            "alpha_final": result.alpha_final,
        }))?
    );
    Ok(())
}

fn run_similar(a: &SimilarArgs) -> Result<()> {
    let (ta, tb) = (read_brdf(&a.a)?, read_brdf(&a.b)?);
    let d = match (a.attribute, a.rmse) {
        (Some(attr), None) => {
            let models = load_models(a.models.as_deref().context("--attribute needs --models")?)?;
            let (pa, _, _) = project_material(models.basis(), &ta)?;
            let (pb, _, _) = project_material(models.basis(), &tb)?;
            attr_distance_alpha(models.model(attr)?, &pa, &pb)
        }
        (None, Some(variant)) => appearance_core::rmse_distance(&ta, &tb, variant)?,
        _ => bail!("give exactly one of --attribute or --rmse"),
    };
    println!("{d}");
    Ok(())
}

fn write_slice_csv(grid: &SliceGrid, path: &Path) -> Result<()> {
    let (i, j) = grid.spec.dims;
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([format!("a{}", i + 1), format!("a{}", j + 1), "value".to_string()])?;
    for (row, values) in grid.values.iter().enumerate() {
        for (col, v) in values.iter().enumerate() {
            w.write_record([grid.spec.coordinate(0, col).to_string(), grid.spec.coordinate(1, row).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_slice(a: &SliceArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let (i, j) = parse_dims(&a.dims)?;
    let fixed = a.fixed.as_deref().map(parse_floats::<5>).transpose()?;
    let grid = slice_over_hull(&models, a.attribute, i, j, fixed, a.resolution)?;
    match a.out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => std::fs::write(&a.out, encode_png(&slice_image(&grid))?)?,
        Some("csv") => write_slice_csv(&grid, &a.out)?,
        _ => bail!("--out must end in .png or .csv"),
    }
    let (lo, hi) = grid.min_max();
    println!("{}: values in [{lo:.4}, {hi:.4}]", a.attribute.name());
    Ok(())
}

fn run_stats(a: &StatsArgs) -> Result<()> {
    let table = load_ratings(&a.ratings)?;
    let report = correlation_matrix(&table)?;
    std::fs::create_dir_all(&a.out)?;
    let mut w = create(&a.out.join("correlation.csv"))?;
    write_correlation_csv(&report, &mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("significance.csv"))?;
    write_significance_csv(&report, &mut w)?;
    w.flush()?;
    if let Some(path) = &a.clusters {
        let clusters = load_clusters(path)?;
        let mut w = create(&a.out.join("cluster_stats.csv"))?;
        write_cluster_stats_csv(&cluster_stats(&table, &clusters), &mut w)?;
        w.flush()?;
    }
    println!("{} ratings over {} materials", table.len(), table.brdf_ids().len());
    Ok(())
}

fn load_env(path: Option<&Path>) -> Result<EnvMap> {
    match path {
        Some(p) => EnvMap::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(default_environment()),
    }
}

fn run_render(a: &RenderArgs) -> Result<()> {
    let brdf = read_brdf(&a.brdf)?;
    let mut scene = match &a.light {
        Some(dir) => PreviewScene::directional(parse_floats::<3>(dir)?, parse_floats::<3>(&a.radiance)?, a.resolution),
        None => PreviewScene::environment(load_env(a.env.as_deref())?, a.resolution),
    };
    scene.exposure = a.exposure;
    scene.camera_azimuth = a.azimuth.to_radians();
    let img = render_sphere(&brdf, &scene)?;
    std::fs::write(&a.out, encode_png(&img)?)?;
    Ok(())
}

fn run_serve(a: &ServeArgs) -> Result<()> {
    let models = Arc::new(load_models(&a.models)?);
    let scene = PreviewScene::environment(load_env(a.env.as_deref())?, a.resolution);
    scene.validate()?;
    let registry = MaterialRegistry::new(models, scene);
    let n = registry.load_dir(&a.materials)?;
    log::info!("registered {n} materials from {}", a.materials.display());
    let app = server::router(Arc::new(registry));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
