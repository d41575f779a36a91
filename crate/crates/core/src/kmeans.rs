//! Lloyd's k-means with k-means++ seeding and restarts.
//!
//! Points are the columns of a `dim × n` matrix. Every restart draws from
//! its own ChaCha stream derived from the configured seed, so results are
//! reproducible and independent of the order restarts are evaluated in.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub c: usize,
    pub restarts: usize,
    pub max_lloyd_iter: usize,
    /// Stop once the relative inertia decrease falls to this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            c: 2,
            restarts: 10,
            max_lloyd_iter: 300,
            tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub centroids: DMatrix<f64>,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

pub fn kmeans(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.ncols();
    if cfg.c == 0 || cfg.restarts == 0 {
        return Err(Error::InvalidInput(format!(
            "k-means needs c >= 1 and restarts >= 1, got c = {}, restarts = {}",
            cfg.c, cfg.restarts
        )));
    }
    if n < cfg.c {
        return Err(Error::InvalidInput(format!(
            "k-means with c = {} needs at least as many points, got {n}",
            cfg.c
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("k-means input is not finite".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let init = kmeans_plus_plus(points, cfg.c, &mut rng);
        let run = lloyd(points, init, cfg, restart);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(points: &DMatrix<f64>, j: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    points
        .column(j)
        .iter()
        .zip(centroids.column(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn kmeans_plus_plus(points: &DMatrix<f64>, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (dim, n) = points.shape();
    let mut centroids = DMatrix::zeros(dim, c);
    let first = rng.random_range(0..n);
    centroids.set_column(0, &points.column(first));
    let mut d2: Vec<f64> = (0..n).map(|j| sq_dist(points, j, &centroids, 0)).collect();
    let mut chosen = vec![false; n];
    chosen[first] = true;
    for ci in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (j, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                pick = Some(j);
                if target < *w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total weight")
        } else {
            // Every remaining point coincides with a centroid.
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.set_column(ci, &points.column(pick));
        for (j, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(points, j, &centroids, ci));
        }
    }
    centroids
}

/// Nearest centroid for every point; ties go to the lower index.
fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize], dist: &mut [f64]) -> f64 {
    let c = centroids.ncols();
    let mut inertia = 0.0;
    for j in 0..points.ncols() {
        let mut best = (0, f64::INFINITY);
        for k in 0..c {
            let d = sq_dist(points, j, centroids, k);
            if d < best.1 {
                best = (k, d);
            }
        }
        labels[j] = best.0;
        dist[j] = best.1;
        inertia += best.1;
    }
    inertia
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>, cfg: &KMeansConfig, restart: usize) -> KMeansResult {
    let (dim, n) = points.shape();
    let c = cfg.c;
    let mut labels = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut inertia = assign(points, &centroids, &mut labels, &mut dist);
    let mut history = vec![inertia];
    for _ in 0..cfg.max_lloyd_iter {
        let mut sums = DMatrix::<f64>::zeros(dim, c);
        let mut counts = vec![0usize; c];
        for (j, &l) in labels.iter().enumerate() {
            let mut col = sums.column_mut(l);
            col += points.column(j);
            counts[l] += 1;
        }
        for (k, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids.set_column(k, &(sums.column(k) / count as f64));
            }
        }
        // Empty clusters take over the point farthest from its centroid.
        for k in 0..c {
            if counts[k] == 0 {
                let far = dist
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| counts[labels[*j]] > 1)
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(j, _)| j);
                if let Some(j) = far {
                    counts[labels[j]] -= 1;
                    labels[j] = k;
                    counts[k] = 1;
                    dist[j] = 0.0;
                    centroids.set_column(k, &points.column(j));
                }
            }
        }
        let next = assign(points, &centroids, &mut labels, &mut dist);
        history.push(next);
        let done = inertia - next <= cfg.tol * inertia.max(f64::MIN_POSITIVE);
        inertia = next;
        if done {
            break;
        }
    }
    KMeansResult {
        labels,
        inertia,
        centroids,
        restart,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut pts = DMatrix::zeros(2, 3 * per);
        let mut labels = Vec::new();
        for (c, (x, y)) in centers.iter().enumerate() {
            for i in 0..per {
                let j = c * per + i;
                pts[(0, j)] = x + noise.sample(&mut rng);
                pts[(1, j)] = y + noise.sample(&mut rng);
                labels.push(c);
            }
        }
        (pts, labels)
    }

    #[test]
    fn each_point_its_own_cluster() {
        let pts = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 5.0, 9.0, 3.0, 2.0, 7.0, 1.0]);
        let res = kmeans(&pts, &KMeansConfig { c: 4, ..KMeansConfig::default() }).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut l = res.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_cluster_inertia_is_total_scatter() {
        let (pts, _) = blobs(1, 10);
        let res = kmeans(&pts, &KMeansConfig { c: 1, ..KMeansConfig::default() }).unwrap();
        assert!(res.labels.iter().all(|l| *l == 0));
        let mean = pts.column_mean();
        let scatter: f64 = pts.column_iter().map(|c| (c - &mean).norm_squared()).sum();
        assert!((res.inertia - scatter).abs() < 1e-9 * scatter);
    }

    #[test]
    fn recovers_separated_blobs() {
        let (pts, truth) = blobs(2, 30);
        let res = kmeans(&pts, &KMeansConfig { c: 3, seed: 5, ..KMeansConfig::default() }).unwrap();
        assert_eq!(accuracy(&res.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn too_few_points() {
        let pts = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            kmeans(&pts, &KMeansConfig { c: 3, ..KMeansConfig::default() }),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = DMatrix::from_row_slice(1, 5, &[1.0, 1.0, 1.0, 1.0, 2.0]);
        let res = kmeans(&pts, &KMeansConfig { c: 3, ..KMeansConfig::default() }).unwrap();
        assert!(res.labels.iter().all(|l| *l < 3));
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let (pts, _) = blobs(3, 40);
        let cfg = KMeansConfig { c: 5, seed: 11, ..KMeansConfig::default() };
        let a = kmeans(&pts, &cfg).unwrap();
        let b = kmeans(&pts, &cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia, b.inertia);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0]);
        }
    }

    #[test]
    fn point_order_does_not_change_partition() {
        let (pts, truth) = blobs(4, 25);
        let n = pts.ncols();
        let perm: Vec<usize> = (0..n).rev().collect();
        let shuffled = DMatrix::from_fn(2, n, |i, j| pts[(i, perm[j])]);
        let cfg = KMeansConfig { c: 3, seed: 3, ..KMeansConfig::default() };
        let a = kmeans(&pts, &cfg).unwrap();
        let b = kmeans(&shuffled, &cfg).unwrap();
        let b_orig: Vec<usize> = {
            let mut out = vec![0; n];
            for (j, &p) in perm.iter().enumerate() {
                out[p] = b.labels[j];
            }
            out
        };
        assert_eq!(accuracy(&a.labels, &b_orig).unwrap(), 1.0);
        assert_eq!(accuracy(&a.labels, &truth).unwrap(), 1.0);
    }
}
