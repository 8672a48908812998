use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};
use crate::landmarks::{LandmarkSet, LANDMARK_DIM};

/// Number of principal components kept for the landmark representation.
pub const PCA_COMPONENTS: usize = 32;

/// PCA coefficients of one landmark set.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector(pub Vec<f64>);

impl CoeffVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {i}")));
        }
        Ok(Self(coeffs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// Row-major `components x LANDMARK_DIM`.
    basis: Vec<f64>,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct PcaManifest {
    format: String,
    version: u32,
    dim: usize,
    components: usize,
    total_variance: f64,
    blob: String,
    layout: Vec<String>,
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis_row(&self, k: usize) -> &[f64] {
        &self.basis[k * LANDMARK_DIM..(k + 1) * LANDMARK_DIM]
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Share of the total sample variance captured by the kept components.
    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    pub fn project(&self, ls: &LandmarkSet) -> CoeffVector {
        self.project_flat(&ls.flatten())
    }

    pub fn project_flat(&self, flat: &[f64]) -> CoeffVector {
        let centered: Vec<f64> = flat.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        CoeffVector(
            (0..self.components())
                .map(|k| dot(self.basis_row(k), &centered))
                .collect(),
        )
    }

    pub fn reconstruct_flat(&self, c: &CoeffVector) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, &ck) in c.0.iter().enumerate().take(self.components()) {
            for (o, b) in out.iter_mut().zip(self.basis_row(k)) {
                *o += ck * b;
            }
        }
        out
    }

    pub fn reconstruct(&self, c: &CoeffVector) -> Result<LandmarkSet> {
        if c.len() != self.components() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                self.components(),
                c.len()
            )));
        }
        LandmarkSet::from_flat(&self.reconstruct_flat(c))
    }

    pub fn save(&self, manifest: &Path) -> Result<()> {
        let m = PcaManifest {
            format: "pca-model".into(),
            version: 1,
            dim: LANDMARK_DIM,
            components: self.components(),
            total_variance: self.total_variance,
            blob: blob::blob_file_name(manifest),
            layout: vec!["mean".into(), "basis".into(), "explained_variance".into()],
        };
        let mut data = self.mean.clone();
        data.extend_from_slice(&self.basis);
        data.extend_from_slice(&self.explained_variance);
        blob::write_json(manifest, &m)?;
        blob::write_f64s(&blob::blob_path(manifest), &data)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let m: PcaManifest = blob::read_json(manifest)?;
        if m.format != "pca-model" || m.dim != LANDMARK_DIM {
            return Err(Error::Format(format!(
                "{}: not a {LANDMARK_DIM}-dim pca-model manifest",
                manifest.display()
            )));
        }
        let n = m.dim + m.components * m.dim + m.components;
        let data = blob::read_f64s(&blob::resolve_sibling(manifest, &m.blob), n)?;
        let (mean, rest) = data.split_at(m.dim);
        let (basis, var) = rest.split_at(m.components * m.dim);
        Ok(Self {
            mean: mean.to_vec(),
            basis: basis.to_vec(),
            explained_variance: var.to_vec(),
            total_variance: m.total_variance,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fit_pca(samples: &[LandmarkSet]) -> Result<PcaModel> {
    fit_pca_with(samples, PCA_COMPONENTS)
}

/// Principal components of the flattened landmark vectors, ordered by
/// decreasing variance. Each basis row is signed so that its largest-magnitude
/// entry is positive.
pub fn fit_pca_with(samples: &[LandmarkSet], components: usize) -> Result<PcaModel> {
    let n = samples.len();
    if n < components + 1 {
        return Err(Error::TooFewSamples {
            need: components + 1,
            got: n,
        });
    }
    let d = LANDMARK_DIM;
    let flat: Vec<Vec<f64>> = samples.iter().map(LandmarkSet::flatten).collect();
    let mut mean = vec![0.0; d];
    for x in &flat {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let cov = covariance(&flat, &mean);
    let total_variance = (0..d).map(|i| cov[(i, i)]).sum::<f64>();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Vec::with_capacity(components * d);
    let mut explained = Vec::with_capacity(components);
    for &k in order.iter().take(components) {
        let mut row: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = dot(&row, &row).sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        basis.extend_from_slice(&row);
        explained.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        basis,
        explained_variance: explained,
        total_variance,
    })
}

/// Unbiased sample covariance with a fixed summation order.
pub(crate) fn covariance(rows: &[Vec<f64>], mean: &[f64]) -> DMatrix<f64> {
    let d = mean.len();
    let n = rows.len();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for x in rows {
        for (c, (v, m)) in centered.iter_mut().zip(x.iter().zip(mean)) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}
