//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical kernels.

#![allow(dead_code)]

use face_sculpt::autodiff::{Mlp, ParamStore, Tensor};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(vec![rows, cols], uniform(rng, rows * cols, lo, hi)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// in decreasing order and the matching eigenvectors as rows.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

/// Symmetric square root via Jacobi, negative eigenvalues clamped at zero.
pub fn sym_sqrt(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| vals[k].max(0.0).sqrt() * vecs[k][i] * vecs[k][j]).sum()).collect())
        .collect()
}

/// Sample mean and unbiased covariance.
pub fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect();
    (mean, cov)
}

/// Frechet distance of fitted Gaussians, with the trace of the matrix square
/// root taken as `tr sqrt(S_a^(1/2) S_b S_a^(1/2))`.
pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = moments(a);
    let (mb, cb) = moments(b);
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let ra = sym_sqrt(&ca);
    let inner = mat_mul(&mat_mul(&ra, &cb), &ra);
    let inner: Vec<Vec<f64>> = (0..inner.len())
        .map(|i| (0..inner.len()).map(|j| 0.5 * (inner[i][j] + inner[j][i])).collect())
        .collect();
    let (vals, _) = jacobi_eigen(&inner);
    let tr_sqrt: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    let tr = |m: &[Vec<f64>]| (0..m.len()).map(|i| m[i][i]).sum::<f64>();
    mean_term + tr(&ca) + tr(&cb) - 2.0 * tr_sqrt
}

/// Minimum-cost perfect matching of a square cost matrix by dynamic
/// programming over subsets. Exact; intended for `n <= 12`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut best = vec![f64::INFINITY; 1 << n];
    best[0] = 0.0;
    for mask in 0..(1usize << n) {
        let row = mask.count_ones() as usize;
        if row >= n || !best[mask].is_finite() {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                best[next] = best[next].min(best[mask] + cost[row][col]);
            }
        }
    }
    best[(1 << n) - 1]
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Forward pass of an [`Mlp`] with plain loops over the stored weights.
pub fn mlp_forward(mlp: &Mlp, store: &ParamStore, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h: Vec<Vec<f64>> = x.to_vec();
    for l in 0..mlp.layers() {
        let w = store.get(&mlp.weight_name(l)).unwrap();
        let b = store.get(&mlp.bias_name(l)).unwrap();
        let (out, inp) = (w.shape()[0], w.shape()[1]);
        h = h
            .iter()
            .map(|row| {
                (0..out)
                    .map(|o| {
                        let mut s = b.data()[o];
                        for i in 0..inp {
                            s += w.data()[o * inp + i] * row[i];
                        }
                        if l + 1 < mlp.layers() {
                            s.max(0.0)
                        } else {
                            s
                        }
                    })
                    .collect()
            })
            .collect();
    }
    h
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Strict interior test of a pixel center against a triangle with a
/// barycentric sign test. Returns the barycentrics when inside.
pub fn point_in_triangle(t: [[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let det = (t[1][1] - t[2][1]) * (t[0][0] - t[2][0]) + (t[2][0] - t[1][0]) * (t[0][1] - t[2][1]);
    if det == 0.0 {
        return None;
    }
    let l0 = ((t[1][1] - t[2][1]) * (p[0] - t[2][0]) + (t[2][0] - t[1][0]) * (p[1] - t[2][1])) / det;
    let l1 = ((t[2][1] - t[0][1]) * (p[0] - t[2][0]) + (t[0][0] - t[2][0]) * (p[1] - t[2][1])) / det;
    let l2 = 1.0 - l0 - l1;
    (l0 > 0.0 && l1 > 0.0 && l2 > 0.0).then_some([l0, l1, l2])
}

/// Per-pixel nearest face by brute force over every triangle, for screen
/// positions and per-vertex depths. Ties keep the lower face index.
pub fn coverage_oracle(screen: &[([f64; 2], f64)], faces: &[[usize; 3]], width: usize, height: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; width * height];
    let mut depth = vec![f64::INFINITY; width * height];
    for row in 0..height {
        for col in 0..width {
            let p = [col as f64 + 0.5, row as f64 + 0.5];
            for (fi, f) in faces.iter().enumerate() {
                let t = [screen[f[0]].0, screen[f[1]].0, screen[f[2]].0];
                if let Some(l) = point_in_triangle(t, p) {
                    let z = l[0] * screen[f[0]].1 + l[1] * screen[f[1]].1 + l[2] * screen[f[2]].1;
                    if z < depth[row * width + col] {
                        depth[row * width + col] = z;
                        out[row * width + col] = Some(fi);
                    }
                }
            }
        }
    }
    out
}

/// Dense graph Laplacian `D - A` from an edge list built by scanning faces.
pub fn dense_laplacian(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<f64>> {
    let mut adj = vec![vec![false; n]; n];
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    (0..n)
        .map(|i| {
            let deg = adj[i].iter().filter(|&&x| x).count() as f64;
            (0..n)
                .map(|j| if i == j { deg } else if adj[i][j] { -1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Mean of consecutive non-overlapping windows; a short tail window is kept.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values.chunks(window).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}
