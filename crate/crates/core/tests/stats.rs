mod common;

use common::{fid as fid_oracle, jacobi_eigen, moments, rng, uniform};
use face_sculpt::assets::{face_template, normal_corpus};
use face_sculpt::landmarks::{align_to_average, AlignmentTransform, LandmarkSet, LANDMARK_DIM};
use face_sculpt::stats::{compute_fid, fit_kmeans, fit_pca_with, ClusterModel, CoeffVector};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn random_affine(r: &mut impl rand::Rng) -> AlignmentTransform {
    loop {
        let m = [
            [r.random_range(0.5..1.5), r.random_range(-0.4..0.4), r.random_range(-20.0..20.0)],
            [r.random_range(-0.4..0.4), r.random_range(0.5..1.5), r.random_range(-20.0..20.0)],
        ];
        if let Ok(t) = AlignmentTransform::new(m) {
            return t;
        }
    }
}

fn anchor_residual(a: &LandmarkSet, b: &LandmarkSet) -> f64 {
    a.anchors()
        .iter()
        .zip(b.anchors())
        .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn alignment_fixed_point_and_translation() {
    let avg = face_template();
    let (out, t) = align_to_average(&avg, &avg).unwrap();
    assert!(common::max_abs_diff(&out.flatten(), &avg.flatten()) < 1e-9);
    for (r, row) in t.matrix.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let expect = if r == c { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-9);
        }
    }
    let shifted = avg.map(|p| [p[0] + 5.0, p[1] + 3.0]).unwrap();
    let (out, t) = align_to_average(&shifted, &avg).unwrap();
    let tr = t.translation();
    assert!((tr[0] + 5.0).abs() < 1e-9 && (tr[1] + 3.0).abs() < 1e-9);
    assert!(common::max_abs_diff(&out.flatten(), &avg.flatten()) < 1e-9);
}

#[test]
fn recovered_transform_undoes_a_random_affine() {
    let avg = face_template();
    let mut r = rng(1);
    for _ in 0..20 {
        let a = random_affine(&mut r);
        let ls = a.apply_set(&avg).unwrap();
        let (_, t) = align_to_average(&ls, &avg).unwrap();
        let both = t.compose(&a);
        for p in avg.anchors() {
            let q = both.apply(p);
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alignment_is_idempotent(seed in any::<u64>()) {
        let avg = face_template();
        let ls = normal_corpus(1, seed).remove(0);
        let (once, _) = align_to_average(&ls, &avg).unwrap();
        let (twice, _) = align_to_average(&once, &avg).unwrap();
        prop_assert!(anchor_residual(&twice, &avg) < 1e-9);
        prop_assert!(anchor_residual(&once, &twice) < 1e-9);
    }
}

/// Samples `mean + sum_k z_k u_k` for `dims` random directions.
fn subspace_samples(n: usize, dims: usize, seed: u64) -> Vec<LandmarkSet> {
    let mut r = rng(seed);
    let mean = face_template().flatten();
    let dirs: Vec<Vec<f64>> = (0..dims).map(|_| uniform(&mut r, LANDMARK_DIM, -1.0, 1.0)).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..dims).map(|_| r.random_range(-3.0..3.0)).collect();
            let flat: Vec<f64> = (0..LANDMARK_DIM)
                .map(|i| mean[i] + dirs.iter().zip(&z).map(|(d, zk)| d[i] * zk).sum::<f64>())
                .collect();
            LandmarkSet::from_flat(&flat).unwrap()
        })
        .collect()
}

fn basis_gram_error(pca: &face_sculpt::stats::PcaModel) -> f64 {
    let k = pca.components();
    let mut worst = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = pca.basis_row(i).iter().zip(pca.basis_row(j)).map(|(a, b)| a * b).sum();
            worst = worst.max((dot - f64::from(u8::from(i == j))).abs());
        }
    }
    worst
}

#[test]
fn rank_two_data_has_vanishing_trailing_variance() {
    let pca = fit_pca_with(&subspace_samples(100, 2, 2), 32).unwrap();
    let ev = pca.explained_variance();
    assert!(ev[1] > 1.0);
    for v in &ev[2..32] {
        assert!(v.abs() < 1e-10, "{v:e}");
    }
}

#[test]
fn low_dimensional_samples_round_trip_losslessly() {
    let samples = subspace_samples(80, 10, 3);
    let pca = fit_pca_with(&samples, 32).unwrap();
    assert!(basis_gram_error(&pca) < 1e-8);
    for s in &samples {
        let back = pca.reconstruct(&pca.project(s)).unwrap();
        assert!(common::max_abs_diff(&back.flatten(), &s.flatten()) < 1e-8);
    }
}

#[test]
fn explained_variance_matches_jacobi_oracle() {
    let samples = normal_corpus(200, 4);
    let pca = fit_pca_with(&samples, 32).unwrap();
    let rows: Vec<Vec<f64>> = samples.iter().map(LandmarkSet::flatten).collect();
    let (_, cov) = moments(&rows);
    let (vals, _) = jacobi_eigen(&cov);
    for (k, v) in pca.explained_variance().iter().enumerate() {
        let rel = (v - vals[k]).abs() / vals[0];
        assert!(rel < 1e-8, "component {k}: {v} vs {}", vals[k]);
    }
    assert!(basis_gram_error(&pca) < 1e-8);
}

#[test]
fn projection_examples_and_direct_multiply_oracle() {
    let samples = normal_corpus(120, 5);
    let pca = fit_pca_with(&samples, 32).unwrap();
    let mean = LandmarkSet::from_flat(pca.mean()).unwrap();
    assert!(pca.project(&mean).0.iter().all(|c| c.abs() < 1e-12));
    let shifted: Vec<f64> = pca.mean().iter().zip(pca.basis_row(0)).map(|(m, b)| m + b).collect();
    let c = pca.project(&LandmarkSet::from_flat(&shifted).unwrap());
    assert!((c.0[0] - 1.0).abs() < 1e-12);
    assert!(c.0[1..].iter().all(|v| v.abs() < 1e-12));

    let zero = CoeffVector(vec![0.0; 32]);
    assert!(common::max_abs_diff(&pca.reconstruct(&zero).unwrap().flatten(), pca.mean()) < 1e-12);

    let probe = normal_corpus(1, 99).remove(0).flatten();
    let direct: Vec<f64> = (0..32)
        .map(|k| (0..LANDMARK_DIM).map(|i| pca.basis_row(k)[i] * (probe[i] - pca.mean()[i])).sum())
        .collect();
    let got = pca.project(&LandmarkSet::from_flat(&probe).unwrap());
    assert!(common::max_abs_diff(&got.0, &direct) < 1e-12);
}

#[test]
fn projection_is_the_best_reconstruction_in_the_basis_family() {
    let samples = normal_corpus(150, 6);
    let pca = fit_pca_with(&samples, 32).unwrap();
    let held_out = normal_corpus(1, 1234).remove(0).flatten();
    let residual = |coeffs: &[f64]| -> f64 {
        let rec = pca.reconstruct_flat(&CoeffVector(coeffs.to_vec()));
        rec.iter().zip(&held_out).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let best = pca.project_flat(&held_out).0;
    let base = residual(&best);
    let mut r = rng(7);
    for _ in 0..200 {
        let perturbed: Vec<f64> = best.iter().map(|c| c + r.random_range(-0.5..0.5)).collect();
        assert!(residual(&perturbed) >= base - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coefficients_round_trip(coeffs in prop::collection::vec(-50.0f64..50.0, 32)) {
        let samples = normal_corpus(60, 8);
        let pca = fit_pca_with(&samples, 32).unwrap();
        let c = CoeffVector(coeffs);
        let back = pca.project(&pca.reconstruct(&c).unwrap());
        prop_assert!(common::max_abs_diff(&back.0, &c.0) < 1e-10);
    }
}

/// `k` blobs with centers spaced 100x the spread.
fn blobs(k: usize, per: usize, seed: u64) -> (Vec<CoeffVector>, Vec<usize>) {
    let mut r = rng(seed);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for c in 0..k {
        let center: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0) * 1000.0 + c as f64 * 500.0).collect();
        for _ in 0..per {
            let noise: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut r)).collect();
            points.push(CoeffVector(center.iter().zip(noise).map(|(a, b)| a + b).collect()));
            truth.push(c);
        }
    }
    (points, truth)
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let (points, truth) = blobs(25, 20, 9);
    let fit = fit_kmeans(&points, 25, 3).unwrap();
    // Every true blob maps to exactly one label and vice versa.
    let mut map = vec![None; 25];
    for (&t, &l) in truth.iter().zip(&fit.labels) {
        match map[t] {
            None => map[t] = Some(l),
            Some(m) => assert_eq!(m, l, "blob {t} split"),
        }
    }
    let mut used: Vec<usize> = map.iter().map(|m| m.unwrap()).collect();
    used.sort_unstable();
    used.dedup();
    assert_eq!(used.len(), 25);
    for w in fit.inertia_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
    }
    let again = fit_kmeans(&points, 25, 3).unwrap();
    assert_eq!(fit.labels, again.labels);
}

#[test]
fn kmeans_with_one_cluster_per_point() {
    let (points, _) = blobs(3, 4, 10);
    let fit = fit_kmeans(&points, points.len(), 1).unwrap();
    assert_eq!(fit.inertia(), 0.0);
    for (p, &l) in points.iter().zip(&fit.labels) {
        assert_eq!(fit.model.centroids()[l], p.0);
    }
}

#[test]
fn assign_class_examples() {
    let mut centroids: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 * 10.0, 100.0]).collect();
    centroids[9] = vec![20.0, 10.0];
    centroids[2] = vec![20.0, -10.0];
    let cm = ClusterModel::new(centroids, 0).unwrap();
    assert_eq!(cm.assign_class(&CoeffVector(vec![70.0, 100.0])), 7);
    assert_eq!(cm.assign_class(&CoeffVector(vec![20.0, 0.0])), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn assign_class_matches_linear_scan(x in -100.0f64..100.0, y in -100.0f64..100.0, seed in 0u64..1000) {
        let mut r = rng(seed);
        let centroids: Vec<Vec<f64>> = (0..25).map(|_| uniform(&mut r, 2, -100.0, 100.0)).collect();
        let cm = ClusterModel::new(centroids.clone(), 0).unwrap();
        let mut best = (0, f64::INFINITY);
        for (i, c) in centroids.iter().enumerate() {
            let d = (c[0] - x).powi(2) + (c[1] - y).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        prop_assert_eq!(cm.assign_class(&CoeffVector(vec![x, y])), best.0);
    }
}

fn gaussian_set(n: usize, mean: &[f64], seed: u64) -> Vec<CoeffVector> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| CoeffVector(mean.iter().map(|m| { let z: f64 = StandardNormal.sample(&mut r); m + z }).collect()))
        .collect()
}

fn as_rows(s: &[CoeffVector]) -> Vec<Vec<f64>> {
    s.iter().map(|c| c.0.clone()).collect()
}

#[test]
fn fid_matches_independent_oracle() {
    let mut r = rng(11);
    for trial in 0..5 {
        let a: Vec<CoeffVector> = (0..50).map(|_| CoeffVector(uniform(&mut r, 4, -1.0, 1.0))).collect();
        let b: Vec<CoeffVector> = (0..50).map(|_| CoeffVector(uniform(&mut r, 4, -0.5, 2.0))).collect();
        let got = compute_fid(&a, &b).unwrap();
        let want = fid_oracle(&as_rows(&a), &as_rows(&b));
        assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn fid_of_shifted_unit_gaussians_approaches_mean_distance() {
    let a = gaussian_set(20000, &[0.0, 0.0, 0.0], 12);
    let b = gaussian_set(20000, &[1.0, 2.0, 0.0], 13);
    let f = compute_fid(&a, &b).unwrap();
    assert!((f - 5.0).abs() < 0.1, "{f}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fid_is_symmetric_non_negative_and_zero_on_itself(seed in any::<u64>()) {
        let a = gaussian_set(30, &[0.0; 5], seed);
        let b = gaussian_set(30, &[0.3; 5], seed ^ 0x55);
        let ab = compute_fid(&a, &b).unwrap();
        let ba = compute_fid(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-8);
        prop_assert!(compute_fid(&a, &a).unwrap() < 1e-8);
    }
}
