use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::stats::pca::{covariance, CoeffVector};

/// Fréchet distance between Gaussians fitted to two coefficient sets:
/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the matrix square root is taken from the eigenvalues of the
/// symmetric matrix `S_a^(1/2) S_b S_a^(1/2)`, clamped at zero. The result is
/// clamped at zero as well.
pub fn compute_fid(a: &[CoeffVector], b: &[CoeffVector]) -> Result<f64> {
    let dim = a.first().or(b.first()).map_or(0, CoeffVector::len);
    for set in [a, b] {
        if set.len() < dim + 1 || set.is_empty() {
            return Err(Error::TooFewSamples {
                need: dim + 1,
                got: set.len(),
            });
        }
        if set.iter().any(|c| c.len() != dim) {
            return Err(Error::Shape("coefficient vectors differ in length".into()));
        }
    }
    let (mu_a, cov_a) = moments(a);
    let (mu_b, cov_b) = moments(b);

    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    let sqrt_a = sym_sqrt(&cov_a);
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let trace_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let fid = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    Ok(fid.max(0.0))
}

fn moments(set: &[CoeffVector]) -> (Vec<f64>, DMatrix<f64>) {
    let dim = set[0].len();
    let mut mu = vec![0.0; dim];
    for c in set {
        for (m, v) in mu.iter_mut().zip(c.as_slice()) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= set.len() as f64);
    let rows: Vec<Vec<f64>> = set.iter().map(|c| c.0.clone()).collect();
    let cov = covariance(&rows, &mu);
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand_distr::{Distribution, Normal};

    fn gaussian_set(n: usize, mean: &[f64], seed: u64) -> Vec<CoeffVector> {
        let mut rng = rng_for(seed, "fid");
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| CoeffVector(mean.iter().map(|m| m + normal.sample(&mut rng)).collect()))
            .collect()
    }

    #[test]
    fn identical_sets_score_zero() {
        let s = gaussian_set(100, &[0.0; 32], 1);
        assert!(compute_fid(&s, &s).unwrap() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        let s = gaussian_set(32, &[0.0; 32], 2);
        assert!(matches!(
            compute_fid(&s, &s).unwrap_err(),
            Error::TooFewSamples { need: 33, got: 32 }
        ));
    }

    #[test]
    fn unit_gaussians_approach_mean_distance() {
        let mu1 = [0.0; 4];
        let mu2 = [3.0, 0.0, -1.0, 2.0];
        let a = gaussian_set(20_000, &mu1, 3);
        let b = gaussian_set(20_000, &mu2, 4);
        let fid = compute_fid(&a, &b).unwrap();
        // Closed form is 14; sampling error of means and covariances at n = 2e4.
        assert!((fid - 14.0).abs() < 0.25, "{fid}");
    }

    #[test]
    fn symmetric_and_non_negative() {
        let a = gaussian_set(60, &[0.5; 5], 5);
        let b = gaussian_set(70, &[0.0; 5], 6);
        let ab = compute_fid(&a, &b).unwrap();
        let ba = compute_fid(&b, &a).unwrap();
        assert!(ab >= 0.0);
        assert!((ab - ba).abs() < 1e-8);
    }
}
