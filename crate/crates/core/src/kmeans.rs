//! Lloyd's k-means with k-means++ seeding and restart selection by
//! within-cluster sum of squares.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub assignment: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub wcss: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass at zero distance; pick uniformly
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, centers.last().expect("just pushed"));
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    centers
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut assignment = Vec::with_capacity(points.len());
    let mut wcss = 0.0;
    for p in points {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, squared_distance(p, c)))
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite distances"))
            .expect("at least one center");
        assignment.push(best);
        wcss += d;
    }
    (assignment, wcss)
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KmeansFit {
    let dim = points[0].len();
    let mut centers = plus_plus_seed(points, k, rng);
    let (mut assignment, mut wcss) = assign(points, &centers);

    for _ in 0..MAX_ITERATIONS {
        // recompute centers
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster: move its center to the point farthest from
                // the center of the largest cluster
                let largest = (0..k).max_by_key(|&i| counts[i]).expect("k >= 1");
                let farthest = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| assignment[*i] == largest)
                    .max_by(|(_, a), (_, b)| {
                        squared_distance(a, &centers[largest])
                            .partial_cmp(&squared_distance(b, &centers[largest]))
                            .expect("finite distances")
                    })
                    .map(|(i, _)| i)
                    .expect("largest cluster is non-empty");
                centers[c] = points[farthest].clone();
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        let (new_assignment, new_wcss) = assign(points, &centers);
        debug_assert!(
            new_wcss <= wcss + 1e-9 * wcss.abs().max(1.0),
            "objective increased: {wcss} -> {new_wcss}"
        );
        let converged = new_assignment == assignment;
        assignment = new_assignment;
        wcss = new_wcss;
        if converged {
            break;
        }
    }
    KmeansFit {
        assignment,
        centers,
        wcss,
    }
}

/// Best of `n_init` seeded restarts.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, n_init: usize) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    if points.is_empty() || k > points.len() {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} exceeds point count {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Inconsistent("points have mixed dimensions".into()));
    }
    if points
        .iter()
        .any(|p| p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidInput("points must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansFit> = None;
    for _ in 0..n_init.max(1) {
        let fit = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
