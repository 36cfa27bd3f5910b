//! Seeded k-means (k-means++ initialisation, Lloyd iterations, best of
//! several restarts) over 5D coefficient vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};
use crate::pca::{Alpha, COMPONENTS};

pub const MAX_ITERATIONS: usize = 200;
pub const RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Alpha>,
    pub assignment: Vec<usize>,
    pub sse: f64,
    /// Within-cluster SSE after each Lloyd iteration of the winning restart.
    pub sse_history: Vec<f64>,
}

#[inline]
pub(crate) fn dist2(a: &Alpha, b: &Alpha) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct(points: &[Alpha]) -> usize {
    let mut keys: Vec<[u64; COMPONENTS]> = points.iter().map(|p| p.map(|v| (v + 0.0).to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

pub fn kmeans(points: &[Alpha], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(argument("k-means needs at least one center"));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(argument(format!("{k} centers requested but only {distinct} distinct points")));
    }
    let mut best: Option<KMeans> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(points, plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(points: &[Alpha], k: usize, rng: &mut ChaCha8Rng) -> Vec<Alpha> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = d2.iter().rposition(|&d| d > 0.0).expect("a point off the current centers");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && pick < d {
                chosen = i;
                break;
            }
            pick -= d;
        }
        let c = points[chosen];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &[Alpha], centers: &[Alpha]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assignment = points
        .iter()
        .map(|p| {
            let (j, d) = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, dist2(p, c)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            sse += d;
            j
        })
        .collect();
    (assignment, sse)
}

fn lloyd(points: &[Alpha], mut centers: Vec<Alpha>) -> KMeans {
    let k = centers.len();
    let (mut assignment, mut sse) = assign(points, &centers);
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![[0.0; COMPONENTS]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            sums[j].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            // An emptied cluster keeps its previous center.
            if counts[j] > 0 {
                centers[j] = sums[j].map(|s| s / counts[j] as f64);
            }
        }
        let (next, next_sse) = assign(points, &centers);
        history.push(next_sse);
        sse = next_sse;
        if next == assignment {
            break;
        }
        assignment = next;
    }
    KMeans { centers, assignment, sse, sse_history: history }
}
