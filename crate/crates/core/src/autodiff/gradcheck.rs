use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// `max|a - n| / max(|a|_inf, |n|_inf)`, with a tiny floor so that two zero
/// gradients compare as equal.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(1e-12)
    }
}

/// Central-difference derivative of `f` at `x` along each coordinate in `coords`.
pub fn numeric_gradient(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    coords: &[usize],
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let up = f(&probe)?;
            probe[i] = x[i] - h;
            let down = f(&probe)?;
            probe[i] = x[i];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Compares the reverse-mode gradient of the scalar produced by `build` with
/// central differences at every coordinate of `x`. Returns the relative error.
pub fn grad_check(build: impl Fn(&mut Graph, Var) -> Result<Var>, x: &Tensor) -> Result<f64> {
    let coords: Vec<usize> = (0..x.len()).collect();
    grad_check_coords(build, x, &coords)
}

/// As [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_coords(
    build: impl Fn(&mut Graph, Var) -> Result<Var>,
    x: &Tensor,
    coords: &[usize],
) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.variable(x.clone())?;
    let loss = build(&mut g, xv)?;
    let grads = g.backward(loss)?;
    let full = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    let analytic: Vec<f64> = coords.iter().map(|&i| full.data()[i]).collect();
    let eval = |p: &[f64]| -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.input(Tensor::new(x.shape().to_vec(), p.to_vec())?)?;
        let l = build(&mut g, xv)?;
        let v = g.value(l);
        if !v.is_scalar() {
            return Err(Error::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.item())
    };
    let numeric = numeric_gradient(eval, x.data(), coords, FD_STEP)?;
    Ok(relative_error(&analytic, &numeric))
}
