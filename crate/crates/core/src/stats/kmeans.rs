use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};
use crate::seed::Rng as SeedRng;
use crate::stats::pca::CoeffVector;

pub const DEFAULT_CLUSTERS: usize = 25;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<Vec<f64>>,
    seed: u64,
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub labels: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

#[derive(Serialize, Deserialize)]
struct ClusterManifest {
    format: String,
    version: u32,
    k: usize,
    dim: usize,
    seed: u64,
    blob: String,
}

impl ClusterModel {
    pub fn new(centroids: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let dim = centroids.first().map_or(0, Vec::len);
        if centroids.is_empty() || centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::Shape("centroids must be non-empty with equal dimension".into()));
        }
        for i in 0..centroids.len() {
            for j in 0..i {
                if centroids[i] == centroids[j] {
                    return Err(Error::DegenerateClusters(format!(
                        "centroids {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self { centroids, seed })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest index.
    pub fn assign_class(&self, c: &CoeffVector) -> usize {
        nearest(&self.centroids, c.as_slice()).0
    }

    pub fn save(&self, manifest: &Path) -> Result<()> {
        let m = ClusterManifest {
            format: "cluster-model".into(),
            version: 1,
            k: self.k(),
            dim: self.dim(),
            seed: self.seed,
            blob: blob::blob_file_name(manifest),
        };
        let data: Vec<f64> = self.centroids.iter().flatten().copied().collect();
        blob::write_json(manifest, &m)?;
        blob::write_f64s(&blob::blob_path(manifest), &data)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let m: ClusterManifest = blob::read_json(manifest)?;
        if m.format != "cluster-model" {
            return Err(Error::Format(format!(
                "{}: not a cluster-model manifest",
                manifest.display()
            )));
        }
        let data = blob::read_f64s(&blob::resolve_sibling(manifest, &m.blob), m.k * m.dim)?;
        Self::new(data.chunks(m.dim.max(1)).map(<[f64]>::to_vec).collect(), m.seed)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding with an explicit seed followed by Lloyd iterations until
/// the assignment stops changing or `MAX_LLOYD_ITERATIONS` is reached.
pub fn fit_kmeans(coeffs: &[CoeffVector], k: usize, seed: u64) -> Result<KMeansFit> {
    let n = coeffs.len();
    if k == 0 || n < k {
        return Err(Error::TooFewSamples { need: k.max(1), got: n });
    }
    let dim = coeffs[0].len();
    if coeffs.iter().any(|c| c.len() != dim) {
        return Err(Error::Shape("coefficient vectors differ in length".into()));
    }
    let points: Vec<&[f64]> = coeffs.iter().map(CoeffVector::as_slice).collect();
    let mut rng = SeedRng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&points, k, &mut rng)?;

    let mut labels = vec![usize::MAX; n];
    let mut inertia_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (label, x) in labels.iter_mut().zip(&points) {
            let (best, d) = nearest(&centroids, x);
            inertia += d;
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        // Empty clusters keep their previous centroid so inertia never rises.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&label, x) in labels.iter().zip(&points) {
            counts[label] += 1;
            for (s, v) in sums[label].iter_mut().zip(x.iter()) {
                *s += v;
            }
        }
        for ((c, s), &cnt) in centroids.iter_mut().zip(sums).zip(&counts) {
            if cnt > 0 {
                *c = s.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
    }
    Ok(KMeansFit {
        model: ClusterModel::new(centroids, seed)?,
        labels,
        inertia_history,
        iterations,
        converged,
    })
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut SeedRng) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::DegenerateClusters(format!(
                "only {} distinct points available for {k} clusters",
                centroids.len()
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in dist.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc >= target {
                chosen = Some(i);
                break;
            }
        }
        // Rounding can leave `acc` marginally below `target`; take the last candidate.
        let idx = chosen.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).expect("total > 0"));
        let c = points[idx].to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand_distr::{Distribution, Normal};

    fn cv(v: &[f64]) -> CoeffVector {
        CoeffVector(v.to_vec())
    }

    #[test]
    fn too_few_samples() {
        let data = vec![cv(&[0.0]), cv(&[1.0])];
        assert!(matches!(
            fit_kmeans(&data, 3, 0).unwrap_err(),
            Error::TooFewSamples { need: 3, got: 2 }
        ));
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let data: Vec<CoeffVector> = (0..6).map(|i| cv(&[i as f64, (i * i) as f64])).collect();
        let fit = fit_kmeans(&data, 6, 11).unwrap();
        assert_eq!(fit.inertia(), 0.0);
        let mut labels = fit.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_for_same_seed() {
        let mut rng = rng_for(9, "km");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<CoeffVector> = (0..200)
            .map(|_| cv(&(0..4).map(|_| normal.sample(&mut rng)).collect::<Vec<_>>()))
            .collect();
        let a = fit_kmeans(&data, 5, 42).unwrap();
        let b = fit_kmeans(&data, 5, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.model, b.model);
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn assign_ties_to_lowest_index() {
        let model = ClusterModel::new(
            vec![vec![10.0, 0.0], vec![5.0, 5.0], vec![-1.0, 0.0], vec![9.0, 9.0], vec![1.0, 0.0]],
            0,
        )
        .unwrap();
        assert_eq!(model.assign_class(&cv(&[0.0, 0.0])), 2);
        assert_eq!(model.assign_class(&cv(&[9.0, 9.0])), 3);
    }

    #[test]
    fn duplicate_points_cannot_fill_k() {
        let data = vec![cv(&[1.0]); 5];
        assert!(matches!(
            fit_kmeans(&data, 2, 0).unwrap_err(),
            Error::DegenerateClusters(_)
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let model = ClusterModel::new(vec![vec![1.0, 2.0], vec![3.0, -4.5]], 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.json");
        model.save(&path).unwrap();
        assert_eq!(ClusterModel::load(&path).unwrap(), model);
    }
}
