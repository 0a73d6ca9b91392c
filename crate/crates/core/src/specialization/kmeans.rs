//! Seeded k-means over the token vectors of the unembedding.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::container;

/// Hard assignment of every token to one of `k` clusters (0-based ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Clusters that ended with no members.
    pub empty_clusters: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ClusterMapFile {
    k: usize,
    seed: u64,
    assignment: Vec<usize>,
    inertia: f64,
    iterations: usize,
    converged: bool,
    empty_clusters: Vec<usize>,
    /// File name of the container holding the `centroids` tensor.
    centroids: String,
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

/// Nearest centroid, ties to the lower index.
fn nearest(point: &[f32], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// The `|V|` token vectors (columns of `W_U`) as rows.
pub fn token_vectors(unembed: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(unembed.cols, unembed.rows);
    for r in 0..unembed.rows {
        for c in 0..unembed.cols {
            out.set(c, r, unembed.get(r, c));
        }
    }
    out
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or `max_iter` is reached.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<ClusterMap> {
    use rayon::prelude::*;
    let n = points.rows;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must be in 1..={n} (one point per token)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 {
                    pick = Some(i);
                    if u < *d {
                        break;
                    }
                    u -= d;
                }
            }
            pick.expect("positive mass")
        } else {
            // all remaining points coincide with a centre
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Matrix::zeros(k, points.cols);
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let next: Vec<usize> = (0..n).into_par_iter().map(|i| nearest(points.row(i), &centroids).0).collect();
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0f64; points.cols]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(points.row(i)) {
                *s += *v as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c]) {
                    *dst = (s / counts[c] as f64) as f32;
                }
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points.row(i), centroids.row(assignment[i]))).sum();
    let mut counts = vec![0usize; k];
    assignment.iter().for_each(|&c| counts[c] += 1);
    let empty_clusters = (0..k).filter(|&c| counts[c] == 0).collect();
    Ok(ClusterMap {
        k,
        seed,
        assignment,
        centroids,
        inertia,
        iterations,
        converged,
        empty_clusters,
    })
}

/// Clusters the token vectors of `W_U`.
pub fn cluster_unembedding(unembed: &Matrix, k: usize, seed: u64) -> Result<ClusterMap> {
    kmeans(&token_vectors(unembed), k, seed, crate::protocol::KMEANS_MAX_ITER)
}

impl ClusterMap {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.assignment.iter().for_each(|&c| sizes[c] += 1);
        sizes
    }

    /// Writes `<stem>.json` and the centroid container `<stem>.centroids.bin`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let bin = format!("{stem}.centroids.bin");
        container::write_file(
            &dir.join(&bin),
            [("centroids".to_string(), vec![self.k, self.centroids.cols], self.centroids.data.as_slice())],
        )?;
        let file = ClusterMapFile {
            k: self.k,
            seed: self.seed,
            assignment: self.assignment.clone(),
            inertia: self.inertia,
            iterations: self.iterations,
            converged: self.converged,
            empty_clusters: self.empty_clusters.clone(),
            centroids: bin,
        };
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, serde_json::to_string(&file)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: ClusterMapFile = serde_json::from_str(&text)?;
        let mut tensors = container::read_file(&dir.join(&file.centroids))?;
        let (shape, data) = tensors
            .remove("centroids")
            .ok_or_else(|| Error::Container("missing `centroids` tensor".into()))?;
        if shape.len() != 2 || shape[0] != file.k {
            return Err(Error::Container(format!("centroids have shape {shape:?} for k = {}", file.k)));
        }
        Ok(Self {
            k: file.k,
            seed: file.seed,
            assignment: file.assignment,
            centroids: Matrix::from_vec(shape[0], shape[1], data),
            inertia: file.inertia,
            iterations: file.iterations,
            converged: file.converged,
            empty_clusters: file.empty_clusters,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn k_equal_to_n_gives_singletons() {
        let pts = Matrix::from_vec(5, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0, -3.0, 2.0]);
        let map = kmeans(&pts, 5, 7, 100).unwrap();
        let mut a = map.assignment.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        assert_eq!(map.inertia, 0.0);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let centre = if i % 2 == 0 { -5.0 } else { 5.0 };
            truth.push(i % 2);
            for _ in 0..3 {
                data.push((centre + noise.sample(&mut rng)) as f32);
            }
        }
        let map = kmeans(&Matrix::from_vec(200, 3, data), 2, 3, 100).unwrap();
        let flip = map.assignment[0] != truth[0];
        for (a, t) in map.assignment.iter().zip(&truth) {
            assert_eq!(*a, if flip { 1 - t } else { *t });
        }
        assert!(map.converged);
    }

    #[test]
    fn k_larger_than_vocab_is_rejected() {
        let pts = Matrix::zeros(3, 2);
        assert!(matches!(kmeans(&pts, 4, 0, 10), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_map_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f32> = (0..300).map(|_| rng.random::<f32>()).collect();
        let pts = Matrix::from_vec(100, 3, data);
        let a = kmeans(&pts, 6, 4, 100).unwrap();
        assert_eq!(a, kmeans(&pts, 6, 4, 100).unwrap());
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path(), "k6").unwrap();
        assert_eq!(ClusterMap::load(dir.path(), "k6").unwrap(), a);
    }
}
