//! Relaxed earth mover's style loss and self-similarity content loss over
//! feature stacks, each with its gradient in the first argument.

use rayon::prelude::*;

use crate::autodiff::tensor::gemm_scaled as gemm;
use crate::error::{Error, Result};
use crate::style::features::FeatureStack;

/// Floor on feature norms before cosine normalization.
pub const NORM_EPS: f64 = 1e-8;
/// Floor on column sums of the content self-distance matrix.
pub const COLUMN_EPS: f64 = 1e-8;

/// Rows scaled to unit length; norms floored at [`NORM_EPS`].
pub fn normalize_rows(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut out = a.to_vec();
    let norms: Vec<f64> = out
        .chunks_mut(d)
        .map(|row| {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = n.max(NORM_EPS);
            row.iter_mut().for_each(|v| *v /= s);
            n
        })
        .collect();
    (out, norms)
}

/// Chain rule through [`normalize_rows`]: `grad_hat` is the gradient with
/// respect to the normalized rows.
fn normalize_rows_backward(hat: &[f64], norms: &[f64], grad_hat: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; hat.len()];
    for (i, &n) in norms.iter().enumerate() {
        let (h, g) = (&hat[i * d..(i + 1) * d], &grad_hat[i * d..(i + 1) * d]);
        let o = &mut out[i * d..(i + 1) * d];
        if n > NORM_EPS {
            let proj: f64 = h.iter().zip(g).map(|(a, b)| a * b).sum();
            for j in 0..d {
                o[j] = (g[j] - h[j] * proj) / n;
            }
        } else {
            for j in 0..d {
                o[j] = g[j] / NORM_EPS;
            }
        }
    }
    out
}

fn check_dims(a: &FeatureStack, b: &FeatureStack) -> Result<()> {
    if a.d() != b.d() {
        return Err(Error::Shape(format!("feature dimensions differ: {} vs {}", a.d(), b.d())));
    }
    Ok(())
}

/// Cosine cost `C_ij = 1 - cos(a_i, b_j)`, row-major `k_a x k_b`.
pub fn cosine_cost(a: &FeatureStack, b: &FeatureStack) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let (ah, _) = normalize_rows(a.vectors(), a.d());
    let (bh, _) = normalize_rows(b.vectors(), b.d());
    Ok(cost_from_normalized(&ah, &bh, a.k(), b.k(), a.d()))
}

fn cost_from_normalized(ah: &[f64], bh: &[f64], ka: usize, kb: usize, d: usize) -> Vec<f64> {
    let mut c = vec![1.0; ka * kb];
    gemm(ka, d, kb, ah, false, bh, true, 1.0, &mut c, -1.0);
    c
}

/// Lowest index attaining the minimum of each row.
fn row_argmin(c: &[f64], cols: usize) -> Vec<(usize, f64)> {
    c.par_chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (j, &v)| if v < best.1 { (j, v) } else { best })
        })
        .collect()
}

fn col_argmin(c: &[f64], rows: usize, cols: usize) -> Vec<(usize, f64)> {
    (0..cols)
        .into_par_iter()
        .map(|j| {
            (0..rows).fold((0, f64::INFINITY), |best, i| {
                let v = c[i * cols + j];
                if v < best.1 {
                    (i, v)
                } else {
                    best
                }
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    /// Gradient with respect to the first stack's vectors, `k x d`.
    pub grad: Vec<f64>,
}

/// `max(mean_i min_j C_ij, mean_j min_i C_ij)`. Ties between the two sides
/// take the gradient of the first.
pub fn remd(a: &FeatureStack, b: &FeatureStack) -> Result<LossGrad> {
    check_dims(a, b)?;
    let (d, ka, kb) = (a.d(), a.k(), b.k());
    let (ah, an) = normalize_rows(a.vectors(), d);
    let (bh, _) = normalize_rows(b.vectors(), d);
    let c = cost_from_normalized(&ah, &bh, ka, kb, d);
    let rows = row_argmin(&c, kb);
    let cols = col_argmin(&c, ka, kb);
    let r_a = rows.iter().map(|r| r.1).sum::<f64>() / ka as f64;
    let r_b = cols.iter().map(|r| r.1).sum::<f64>() / kb as f64;
    let mut grad_hat = vec![0.0; ka * d];
    if r_a >= r_b {
        for (i, &(j, _)) in rows.iter().enumerate() {
            for t in 0..d {
                grad_hat[i * d + t] -= bh[j * d + t] / ka as f64;
            }
        }
    } else {
        for (j, &(i, _)) in cols.iter().enumerate() {
            for t in 0..d {
                grad_hat[i * d + t] -= bh[j * d + t] / kb as f64;
            }
        }
    }
    Ok(LossGrad {
        value: r_a.max(r_b),
        grad: normalize_rows_backward(&ah, &an, &grad_hat, d),
    })
}

/// Column-normalized self cosine-distance matrix.
fn self_distance(hat: &[f64], k: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let dm = cost_from_normalized(hat, hat, k, k, d);
    let mut sums = vec![0.0; k];
    for row in dm.chunks(k) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    (dm, sums)
}

/// Mean absolute difference of the column-normalized self cosine-distance
/// matrices, `(1/k^2) sum |D~a - D~b|`. Both stacks must sample the same pixels.
pub fn content_loss(a: &FeatureStack, b: &FeatureStack) -> Result<LossGrad> {
    check_dims(a, b)?;
    if a.k() != b.k() {
        return Err(Error::Shape(format!("content stacks differ in size: {} vs {}", a.k(), b.k())));
    }
    let (k, d) = (a.k(), a.d());
    let (ah, an) = normalize_rows(a.vectors(), d);
    let (bh, _) = normalize_rows(b.vectors(), d);
    let (da, sa) = self_distance(&ah, k, d);
    let (db, sb) = self_distance(&bh, k, d);
    let inv_k2 = 1.0 / (k * k) as f64;
    let sa_f: Vec<f64> = sa.iter().map(|s| s.max(COLUMN_EPS)).collect();
    let sb_f: Vec<f64> = sb.iter().map(|s| s.max(COLUMN_EPS)).collect();
    // sign_ij / k^2 and its column-weighted sums for the quotient rule.
    let mut value = 0.0;
    let mut sgn = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let diff = da[i * k + j] / sa_f[j] - db[i * k + j] / sb_f[j];
            value += diff.abs();
            sgn[i * k + j] = diff.signum() * (diff != 0.0) as u8 as f64 * inv_k2;
        }
    }
    let mut col_dot = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            col_dot[j] += sgn[i * k + j] * da[i * k + j];
        }
    }
    // h_ij = dL/dDa_ij.
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut g = sgn[i * k + j] / sa_f[j];
            if sa[j] > COLUMN_EPS {
                g -= col_dot[j] / (sa[j] * sa[j]);
            }
            h[i * k + j] = g;
        }
    }
    // Da = 1 - Ah Ah^T, so dL/dAh = -(H + H^T) Ah.
    let mut grad_hat = vec![0.0; k * d];
    gemm(k, k, d, &h, false, &ah, false, 0.0, &mut grad_hat, -1.0);
    gemm(k, k, d, &h, true, &ah, false, 1.0, &mut grad_hat, -1.0);
    Ok(LossGrad {
        value: value * inv_k2,
        grad: normalize_rows_backward(&ah, &an, &grad_hat, d),
    })
}

#[derive(Clone, Debug)]
pub struct TextureLoss {
    pub style: f64,
    pub content: f64,
    pub total: f64,
    /// Gradient of `total` with respect to the rendered stack's vectors.
    pub grad: Vec<f64>,
}

/// `remd(z, y) + beta * content(z, c)`.
pub fn texture_loss(z: &FeatureStack, c: &FeatureStack, y: &FeatureStack, beta: f64) -> Result<TextureLoss> {
    if z.pixels() != c.pixels() {
        return Err(Error::Shape("rendered and content views must share sampled pixels".into()));
    }
    let s = remd(z, y)?;
    let mut grad = s.grad;
    let content = if beta != 0.0 {
        let cl = content_loss(z, c)?;
        for (g, h) in grad.iter_mut().zip(&cl.grad) {
            *g += beta * h;
        }
        cl.value
    } else {
        0.0
    };
    let total = s.value + beta * content;
    if !total.is_finite() {
        return Err(Error::NonFinite("texture loss".into()));
    }
    Ok(TextureLoss {
        style: s.value,
        content,
        total,
        grad,
    })
}
