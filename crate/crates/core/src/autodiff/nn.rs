use rand_distr::{Distribution, Normal};

use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::params::ParamStore;
use crate::autodiff::tensor::Tensor;
use crate::error::Result;
use crate::seed::Rng;

/// Stack of affine layers with ReLU between them; the last layer is affine only.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
}

impl Mlp {
    /// `layers` affine maps `input -> hidden -> ... -> hidden -> output`.
    pub fn new(prefix: &str, input: usize, hidden: usize, output: usize, layers: usize) -> Self {
        assert!(layers >= 1, "an MLP needs at least one layer");
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, layers - 1));
        dims.push(output);
        Self {
            prefix: prefix.to_string(),
            dims,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty")
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.prefix)
    }

    /// He-normal weights, zero biases.
    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            store.insert(
                &self.weight_name(l),
                Tensor::new(vec![fan_out, fan_in], w).expect("sized"),
            );
            store.insert(&self.bias_name(l), Tensor::zeros(&[fan_out]));
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, trainable: bool) -> Result<Var> {
        let mut h = x;
        for l in 0..self.layers() {
            let w = g.param(store, &self.weight_name(l), trainable)?;
            let b = g.param(store, &self.bias_name(l), trainable)?;
            h = g.linear(h, w, b)?;
            if l + 1 < self.layers() {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Inference without gradient bookkeeping.
    pub fn forward_values(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.input(x.clone())?;
        let y = self.forward(&mut g, store, xv, false)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{numeric_gradient, relative_error, FD_STEP};
    use crate::seed::rng_for;

    #[test]
    fn layer_shapes_and_names() {
        let m = Mlp::new("enc", 32, 128, 16, 16);
        let mut s = ParamStore::new();
        m.init(&mut s, &mut rng_for(0, "mlp"));
        assert_eq!(s.len(), 32);
        assert_eq!(s.get("enc.0.weight").unwrap().shape(), &[128, 32]);
        assert_eq!(s.get("enc.15.weight").unwrap().shape(), &[16, 128]);
        let y = m.forward_values(&s, &Tensor::zeros(&[3, 32])).unwrap();
        assert_eq!(y.shape(), &[3, 16]);
    }

    #[test]
    fn three_layer_mlp_weight_gradient_matches_finite_differences() {
        let m = Mlp::new("f", 4, 6, 2, 3);
        let mut s = ParamStore::new();
        let mut rng = rng_for(1, "mlp-fd");
        m.init(&mut s, &mut rng);
        let x = Tensor::new(vec![5, 4], (0..20).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let target = Tensor::new(vec![5, 2], (0..10).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let loss_of = |s: &ParamStore, g: &mut Graph, trainable: bool| -> Result<Var> {
            let xv = g.input(x.clone())?;
            let tv = g.input(target.clone())?;
            let y = m.forward(g, s, xv, trainable)?;
            g.sq_l2_distance(y, tv)
        };
        let mut g = Graph::new();
        let l = loss_of(&s, &mut g, true).unwrap();
        let grads = g.backward(l).unwrap();
        s.load_grads(&g, &grads).unwrap();
        for name in ["f.0.weight", "f.1.bias", "f.2.weight"] {
            let analytic = s.grad(name).unwrap().data().to_vec();
            let base = s.get(name).unwrap().clone();
            let coords: Vec<usize> = (0..base.len()).collect();
            let numeric = numeric_gradient(
                |p| {
                    let mut s2 = s.clone();
                    *s2.get_mut(name).unwrap() = Tensor::new(base.shape().to_vec(), p.to_vec())?;
                    let mut g = Graph::new();
                    let l = loss_of(&s2, &mut g, false)?;
                    Ok(g.scalar_value(l))
                },
                base.data(),
                &coords,
                FD_STEP,
            )
            .unwrap();
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "{name}: {err}");
        }
    }
}
