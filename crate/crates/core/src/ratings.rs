//! Rating records, mean opinion scores, and the statistics computed over
//! them: attribute correlations and per-cluster score/agreement summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attributes::{Attribute, ATTRIBUTE_COUNT};
use crate::error::{Error, Result};

pub const RATINGS_HEADER: [&str; 4] = ["brdf_id", "participant_id", "attribute", "rating"];
pub const CLUSTERS_HEADER: [&str; 2] = ["brdf_id", "cluster"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingRecord {
    pub brdf_id: String,
    pub participant_id: String,
    pub attribute: Attribute,
    /// 1 (none, or very little) to 5 (a lot).
    pub rating: u8,
}

/// Ratings on a 1..5 scale to [0, 1].
#[inline]
pub fn normalize_rating(r: f64) -> f64 {
    (r - 1.0) / 4.0
}

#[derive(Clone, Debug, Default)]
pub struct RatingsTable {
    records: Vec<RatingRecord>,
    index: BTreeMap<(String, Attribute), Vec<u8>>,
}

impl RatingsTable {
    pub fn new(records: Vec<RatingRecord>) -> Result<Self> {
        let mut index: BTreeMap<(String, Attribute), Vec<u8>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if !(1..=5).contains(&r.rating) {
                return Err(Error::Argument(format!("record {i}: rating {} outside 1..5", r.rating)));
            }
            index.entry((r.brdf_id.clone(), r.attribute)).or_default().push(r.rating);
        }
        Ok(RatingsTable { records, index })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct material ids in sorted order.
    pub fn brdf_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.index.keys().map(|(b, _)| b.clone()).collect();
        ids.dedup();
        ids
    }

    pub fn ratings(&self, brdf_id: &str, attr: Attribute) -> &[u8] {
        self.index.get(&(brdf_id.to_string(), attr)).map_or(&[], Vec::as_slice)
    }

    /// Mean opinion score on [0, 1].
    pub fn mos(&self, brdf_id: &str, attr: Attribute) -> Result<f64> {
        let rs = self.ratings(brdf_id, attr);
        if rs.is_empty() {
            return Err(Error::MissingData(format!("no ratings of {attr} for {brdf_id}")));
        }
        let mean = rs.iter().map(|&r| r as f64).sum::<f64>() / rs.len() as f64;
        Ok(normalize_rating(mean))
    }

    /// MOS of every material rated on `attr`.
    pub fn mos_by_brdf(&self, attr: Attribute) -> BTreeMap<String, f64> {
        self.index
            .iter()
            .filter(|((_, a), _)| *a == attr)
            .map(|((b, _), rs)| {
                let mean = rs.iter().map(|&r| r as f64).sum::<f64>() / rs.len() as f64;
                (b.clone(), normalize_rating(mean))
            })
            .collect()
    }

    /// Population variance of the normalized ratings of one material.
    pub fn rating_variance(&self, brdf_id: &str, attr: Attribute) -> Result<f64> {
        let rs: Vec<f64> = self.ratings(brdf_id, attr).iter().map(|&r| normalize_rating(r as f64)).collect();
        if rs.is_empty() {
            return Err(Error::MissingData(format!("no ratings of {attr} for {brdf_id}")));
        }
        Ok(population_variance(&rs))
    }
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsTable> {
    read_ratings(std::fs::File::open(path)?)
}

/// Parses the ratings CSV. Ratings outside 1..5 are row errors carrying the
/// line number; an unexpected header or unknown attribute is a schema error.
pub fn read_ratings(reader: impl Read) -> Result<RatingsTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &RATINGS_HEADER)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let attribute: Attribute = row[2].parse()?;
        let rating = match row[3].parse::<i64>() {
            Ok(r) if (1..=5).contains(&r) => r as u8,
            _ => return Err(Error::Row { line, message: format!("rating {:?} is not an integer in 1..5", &row[3]) }),
        };
        records.push(RatingRecord { brdf_id: row[0].to_string(), participant_id: row[1].to_string(), attribute, rating });
    }
    RatingsTable::new(records)
}

pub fn write_ratings(table: &RatingsTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RATINGS_HEADER)?;
    for r in table.records() {
        w.write_record([r.brdf_id.as_str(), r.participant_id.as_str(), r.attribute.name(), &r.rating.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "expected header {}, found {}",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Pearson correlation. Zero variance in either input gives 0.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson over average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Two-sided p-value of the t-test on a correlation from `n` pairs.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return f64::NAN;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// How a correlation is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationBand {
    /// p > 0.05.
    NotSignificant,
    Weak,
    /// |r| > 0.7.
    Strong,
    /// |r| > 0.8.
    VeryStrong,
}

impl CorrelationBand {
    pub fn classify(r: f64, p: f64) -> Self {
        if !(p <= 0.05) {
            CorrelationBand::NotSignificant
        } else if r.abs() > 0.8 {
            CorrelationBand::VeryStrong
        } else if r.abs() > 0.7 {
            CorrelationBand::Strong
        } else {
            CorrelationBand::Weak
        }
    }
}

type Square = [[f64; ATTRIBUTE_COUNT]; ATTRIBUTE_COUNT];

/// Attribute-by-attribute correlations of per-material MOS, indexed by
/// [`Attribute::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson: Square,
    pub pearson_p: Square,
    pub spearman: Square,
    pub spearman_p: Square,
    /// Number of materials with a MOS for both attributes.
    pub pairs: [[usize; ATTRIBUTE_COUNT]; ATTRIBUTE_COUNT],
}

impl CorrelationReport {
    pub fn band(&self, a: Attribute, b: Attribute) -> CorrelationBand {
        let (i, j) = (a.index(), b.index());
        CorrelationBand::classify(self.pearson[i][j], self.pearson_p[i][j])
    }
}

/// Pearson (with two-sided p-values) and Spearman correlations over every
/// attribute pair. Each pair needs at least three commonly rated materials.
pub fn correlation_matrix(table: &RatingsTable) -> Result<CorrelationReport> {
    let mos: Vec<BTreeMap<String, f64>> = Attribute::ALL.par_iter().map(|&a| table.mos_by_brdf(a)).collect();
    let pairs: Vec<(usize, usize)> =
        (0..ATTRIBUTE_COUNT).flat_map(|i| (i..ATTRIBUTE_COUNT).map(move |j| (i, j))).collect();
    let cells: Vec<(usize, usize, [f64; 4], usize)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y): (Vec<f64>, Vec<f64>) =
                mos[i].iter().filter_map(|(b, &v)| mos[j].get(b).map(|&w| (v, w))).unzip();
            let n = x.len();
            if n < 3 {
                return Err(Error::MissingData(format!(
                    "{} and {} share {n} rated materials, need 3",
                    Attribute::ALL[i],
                    Attribute::ALL[j]
                )));
            }
            if i == j {
                return Ok((i, j, [1.0, 0.0, 1.0, 0.0], n));
            }
            let (r, s) = (pearson(&x, &y), spearman(&x, &y));
            Ok((i, j, [r, correlation_p_value(r, n), s, correlation_p_value(s, n)], n))
        })
        .collect::<Result<_>>()?;

    let zero = [[0.0; ATTRIBUTE_COUNT]; ATTRIBUTE_COUNT];
    let mut report = CorrelationReport {
        pearson: zero,
        pearson_p: zero,
        spearman: zero,
        spearman_p: zero,
        pairs: [[0; ATTRIBUTE_COUNT]; ATTRIBUTE_COUNT],
    };
    for (i, j, [r, rp, s, sp], n) in cells {
        for (a, b) in [(i, j), (j, i)] {
            report.pearson[a][b] = r;
            report.pearson_p[a][b] = rp;
            report.spearman[a][b] = s;
            report.spearman_p[a][b] = sp;
            report.pairs[a][b] = n;
        }
    }
    Ok(report)
}

fn write_square(m: &Square, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["attribute".to_string()];
    header.extend(Attribute::ALL.iter().map(|a| a.name().to_string()));
    w.write_record(&header)?;
    for a in Attribute::ALL {
        let mut row = vec![a.name().to_string()];
        row.extend(m[a.index()].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// 14x14 Pearson matrix with a leading attribute column.
pub fn write_correlation_csv(report: &CorrelationReport, writer: impl Write) -> Result<()> {
    write_square(&report.pearson, writer)
}

/// One row per unordered attribute pair with both coefficients, p-values and
/// the band.
pub fn write_significance_csv(report: &CorrelationReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["attribute_a", "attribute_b", "n", "pearson_r", "p_value", "spearman_rho", "spearman_p", "band"])?;
    for (i, a) in Attribute::ALL.into_iter().enumerate() {
        for b in Attribute::ALL.into_iter().skip(i + 1) {
            let (x, y) = (a.index(), b.index());
            let band = serde_json::to_value(report.band(a, b))?;
            w.write_record([
                a.name().to_string(),
                b.name().to_string(),
                report.pairs[x][y].to_string(),
                report.pearson[x][y].to_string(),
                report.pearson_p[x][y].to_string(),
                report.spearman[x][y].to_string(),
                report.spearman_p[x][y].to_string(),
                band.as_str().unwrap_or_default().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Material families used to group statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cluster {
    Fabric,
    Metallic,
    Acrylic,
    Plastic,
    Phenolic,
    MetallicPaint,
}

impl Cluster {
    pub const ALL: [Cluster; 6] =
        [Cluster::Fabric, Cluster::Metallic, Cluster::Acrylic, Cluster::Plastic, Cluster::Phenolic, Cluster::MetallicPaint];

    pub fn name(self) -> &'static str {
        match self {
            Cluster::Fabric => "fabric",
            Cluster::Metallic => "metallic",
            Cluster::Acrylic => "acrylic",
            Cluster::Plastic => "plastic",
            Cluster::Phenolic => "phenolic",
            Cluster::MetallicPaint => "metallic-paint",
        }
    }
}

impl fmt::Display for Cluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cluster {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '_'], "-");
        Cluster::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::Schema(format!("unknown cluster {s:?}")))
    }
}

pub fn load_clusters(path: impl AsRef<Path>) -> Result<BTreeMap<String, Cluster>> {
    read_clusters(std::fs::File::open(path)?)
}

pub fn read_clusters(reader: impl Read) -> Result<BTreeMap<String, Cluster>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &CLUSTERS_HEADER)?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        out.insert(row[0].to_string(), row[1].parse()?);
    }
    Ok(out)
}

/// Quantile by linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn from_sample(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
        Some(BoxStats {
            mean: mean(&s),
            min: s[0],
            q1,
            median: quantile(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            iqr: q3 - q1,
        })
    }
}

/// Score and agreement summary of one attribute within one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAttributeStats {
    pub cluster: Cluster,
    pub attribute: Attribute,
    pub materials: usize,
    /// Over per-material MOS.
    pub score: BoxStats,
    /// Over per-material population variances of normalized ratings.
    pub agreement: BoxStats,
}

/// Per (cluster, attribute) statistics. Clusters with no rated materials are
/// skipped with a warning.
pub fn cluster_stats(table: &RatingsTable, clusters: &BTreeMap<String, Cluster>) -> Vec<ClusterAttributeStats> {
    let mut out = Vec::new();
    for cluster in Cluster::ALL {
        let members: Vec<&String> = clusters.iter().filter(|(_, &c)| c == cluster).map(|(b, _)| b).collect();
        let mut any = false;
        for attribute in Attribute::ALL {
            let (means, vars): (Vec<f64>, Vec<f64>) = members
                .iter()
                .filter_map(|b| Some((table.mos(b, attribute).ok()?, table.rating_variance(b, attribute).ok()?)))
                .unzip();
            if let (Some(score), Some(agreement)) = (BoxStats::from_sample(&means), BoxStats::from_sample(&vars)) {
                any = true;
                out.push(ClusterAttributeStats { cluster, attribute, materials: means.len(), score, agreement });
            }
        }
        if !any && !members.is_empty() {
            log::warn!("cluster {cluster} has no rated materials; skipped");
        } else if members.is_empty() {
            log::warn!("cluster {cluster} is empty; skipped");
        }
    }
    out
}

pub fn write_cluster_stats_csv(stats: &[ClusterAttributeStats], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster", "attribute", "materials"];
    header.extend([
        "score_mean", "score_min", "score_q1", "score_median", "score_q3", "score_max", "score_iqr",
        "variance_mean", "variance_min", "variance_q1", "variance_median", "variance_q3", "variance_max",
        "variance_iqr",
    ]);
    w.write_record(&header)?;
    for s in stats {
        let mut row = vec![s.cluster.name().to_string(), s.attribute.name().to_string(), s.materials.to_string()];
        for b in [s.score, s.agreement] {
            row.extend([b.mean, b.min, b.q1, b.median, b.q3, b.max, b.iqr].map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
