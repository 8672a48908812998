mod common;

use common::{matrix, rng};
use face_sculpt::autodiff::{grad_check, numeric_gradient, relative_error, Graph, Mlp, ParamStore, Tensor, Var};
use face_sculpt::Result;
use proptest::prelude::*;
use rand::Rng as _;

const POINTS: usize = 20;
const PRIMITIVE_TOL: f64 = 1e-6;

/// Contracts a non-scalar node with fixed weights so the check sees every
/// output coordinate.
fn contract(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n: usize = shape.iter().product();
    let mut r = rng(seed);
    let w = g.input(Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())?)?;
    let p = g.mul(y, w)?;
    g.sum(p)
}

/// Moves every coordinate at least `gap` away from zero so kinked primitives
/// are probed only where they are differentiable.
fn away_from_zero(t: &Tensor, gap: f64) -> Tensor {
    t.map(|v| if v.abs() < gap { v.signum() * gap + v } else { v })
}

fn check_points(name: &str, shape: (usize, usize), gap: f64, build: impl Fn(&mut Graph, Var) -> Result<Var>) {
    let mut r = rng(name.len() as u64 * 7919);
    let mut worst = 0.0_f64;
    for _ in 0..POINTS {
        let x = away_from_zero(&matrix(&mut r, shape.0, shape.1, -2.0, 2.0), gap);
        worst = worst.max(grad_check(&build, &x).unwrap());
    }
    assert!(worst < PRIMITIVE_TOL, "{name}: relative error {worst:e}");
}

#[test]
fn linear_gradient_in_input_weight_and_bias() {
    let mut r = rng(1);
    let w = matrix(&mut r, 4, 3, -1.0, 1.0);
    let b = Tensor::new(vec![4], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
    check_points("linear-x", (5, 3), 0.0, |g, x| {
        let (wv, bv) = (g.input(w.clone())?, g.input(b.clone())?);
        let y = g.linear(x, wv, bv)?;
        contract(g, y, 11)
    });
    let xin = matrix(&mut r, 5, 3, -1.0, 1.0);
    check_points("linear-w", (4, 3), 0.0, |g, wv| {
        let (xv, bv) = (g.input(xin.clone())?, g.input(b.clone())?);
        let y = g.linear(xv, wv, bv)?;
        contract(g, y, 12)
    });
    let mut r2 = rng(2);
    let mut worst = 0.0_f64;
    for _ in 0..POINTS {
        let bias = Tensor::new(vec![4], common::uniform(&mut r2, 4, -1.0, 1.0)).unwrap();
        let err = grad_check(
            |g, bv| {
                let (xv, wv) = (g.input(xin.clone())?, g.input(w.clone())?);
                let y = g.linear(xv, wv, bv)?;
                contract(g, y, 13)
            },
            &bias,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < PRIMITIVE_TOL, "linear-b: {worst:e}");
}

#[test]
fn elementwise_primitives() {
    check_points("relu", (4, 5), 1e-2, |g, x| {
        let y = g.relu(x)?;
        contract(g, y, 21)
    });
    check_points("sigmoid", (4, 5), 0.0, |g, x| {
        let y = g.sigmoid(x)?;
        contract(g, y, 22)
    });
    check_points("exp", (4, 5), 0.0, |g, x| {
        let y = g.exp(x)?;
        contract(g, y, 23)
    });
    check_points("scale", (4, 5), 0.0, |g, x| {
        let y = g.scale(x, -1.7)?;
        contract(g, y, 24)
    });
    check_points("mul-self", (4, 5), 0.0, |g, x| {
        let y = g.mul(x, x)?;
        contract(g, y, 25)
    });
    let mut r = rng(3);
    let other = matrix(&mut r, 4, 5, -1.0, 1.0);
    check_points("add-sub", (4, 5), 0.0, |g, x| {
        let o = g.input(other.clone())?;
        let a = g.add(x, o)?;
        let s = g.sub(a, x)?;
        let t = g.sub(o, a)?;
        let y = g.mul(s, t)?;
        contract(g, y, 26)
    });
}

#[test]
fn structural_primitives() {
    let mut r = rng(4);
    let right = matrix(&mut r, 3, 2, -1.0, 1.0);
    check_points("concat", (3, 4), 0.0, |g, x| {
        let o = g.input(right.clone())?;
        let c = g.concat(x, o)?;
        let c2 = g.concat(o, x)?;
        let y = g.mul(c, c2)?;
        contract(g, y, 31)
    });
    check_points("slice_cols", (3, 6), 0.0, |g, x| {
        let s = g.slice_cols(x, 1, 4)?;
        let y = g.mul(s, s)?;
        contract(g, y, 32)
    });
    check_points("sum", (3, 4), 0.0, |g, x| {
        let q = g.mul(x, x)?;
        g.sum(q)
    });
    check_points("mean", (3, 4), 0.0, |g, x| {
        let q = g.exp(x)?;
        g.mean(q)
    });
}

#[test]
fn distance_and_loss_primitives() {
    let mut r = rng(5);
    let target = matrix(&mut r, 4, 6, -1.0, 1.0);
    // Offsetting by the target keeps |x - target| away from the kink.
    check_points("l1", (4, 6), 1e-2, |g, d| {
        let t = g.input(target.clone())?;
        let x = g.add(d, t)?;
        g.l1_distance(x, t)
    });
    check_points("sq_l2", (4, 6), 0.0, |g, x| {
        let t = g.input(target.clone())?;
        g.sq_l2_distance(x, t)
    });
    check_points("cosine", (4, 6), 0.0, |g, x| {
        let t = g.input(target.clone())?;
        let c = g.cosine_similarity(x, t)?;
        contract(g, c, 41)
    });
    let labels = [0, 3, 2, 1, 4];
    check_points("softmax_ce", (5, 5), 0.0, |g, x| g.softmax_cross_entropy(x, &labels));
    for target in [0.0, 1.0, 0.3] {
        check_points("bce", (6, 1), 0.0, move |g, x| g.bce_with_logits(x, target));
    }
}

#[test]
fn primitive_examples() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::new(vec![1, 2], vec![-1.0, 2.0]).unwrap()).unwrap();
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    let s = g.sum(y).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);

    let mut g = Graph::new();
    let v = g.input(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 3.0, -7.0]).unwrap()).unwrap();
    let c = g.cosine_similarity(v, v).unwrap();
    for value in g.value(c).data() {
        assert!((value - 1.0).abs() < 1e-15);
    }
}

/// Parameter gradients of a 3-layer MLP through a squared loss, against
/// central differences on the stored weights.
#[test]
fn mlp_parameter_gradients_match_finite_differences() {
    let mlp = Mlp::new("net", 4, 6, 3, 3);
    let mut store = ParamStore::new();
    let mut r = rng(6);
    mlp.init(&mut store, &mut r);
    // Non-zero biases keep hidden pre-activations away from the ReLU kink.
    for l in 0..3 {
        let name = mlp.bias_name(l);
        let b = store.get_mut(&name).unwrap();
        for v in b.data_mut() {
            *v = r.random_range(0.2..0.6);
        }
    }
    let x = matrix(&mut r, 5, 4, -1.0, 1.0);
    let target = matrix(&mut r, 5, 3, -1.0, 1.0);
    let loss_of = |store: &ParamStore| -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let xv = g.input(x.clone())?;
        let out = mlp.forward(&mut g, store, xv, true)?;
        let t = g.input(target.clone())?;
        let l = g.sq_l2_distance(out, t)?;
        Ok((g, l))
    };
    let (g, l) = loss_of(&store).unwrap();
    let grads = g.backward(l).unwrap();
    store.load_grads(&g, &grads).unwrap();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let analytic = store.grad(&name).unwrap().data().to_vec();
        let base = store.get(&name).unwrap().data().to_vec();
        let coords: Vec<usize> = (0..base.len()).collect();
        let mut probe = store.clone();
        let numeric = numeric_gradient(
            |p| {
                probe.get_mut(&name).unwrap().data_mut().copy_from_slice(p);
                let (g, l) = loss_of(&probe)?;
                Ok(g.scalar_value(l))
            },
            &base,
            &coords,
            1e-5,
        )
        .unwrap();
        let err = relative_error(&analytic, &numeric);
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn forward_and_backward_are_bitwise_deterministic() {
    let run = || {
        let mlp = Mlp::new("net", 5, 16, 2, 4);
        let mut store = ParamStore::new();
        mlp.init(&mut store, &mut rng(9));
        let mut g = Graph::new();
        let xv = g.input(matrix(&mut rng(10), 7, 5, -1.0, 1.0)).unwrap();
        let y = mlp.forward(&mut g, &store, xv, true).unwrap();
        let l = g.softmax_cross_entropy(y, &[0, 1, 1, 0, 1, 0, 0]).unwrap();
        let grads = g.backward(l).unwrap();
        store.load_grads(&g, &grads).unwrap();
        let mut bits: Vec<u64> = vec![g.scalar_value(l).to_bits()];
        for name in store.names() {
            bits.extend(store.grad(name).unwrap().data().iter().map(|v| v.to_bits()));
        }
        bits
    };
    assert_eq!(run(), run());
}

fn gradient_of(x: &Tensor, build: impl Fn(&mut Graph, Var) -> Result<Var>) -> Vec<f64> {
    let mut g = Graph::new();
    let xv = g.variable(x.clone()).unwrap();
    let l = build(&mut g, xv).unwrap();
    g.backward(l).unwrap().get(xv).unwrap().data().to_vec()
}

fn f_build(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.sigmoid(x)?;
    let q = g.mul(s, x)?;
    g.sum(q)
}

fn h_build(g: &mut Graph, x: Var) -> Result<Var> {
    let e = g.exp(x)?;
    g.mean(e)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_linear_in_the_loss(
        data in prop::collection::vec(-2.0f64..2.0, 12),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = Tensor::new(vec![3, 4], data).unwrap();
        let gf = gradient_of(&x, f_build);
        let gh = gradient_of(&x, h_build);
        let combined = gradient_of(&x, |g, xv| {
            let f = f_build(g, xv)?;
            let h = h_build(g, xv)?;
            let fa = g.scale(f, a)?;
            let hb = g.scale(h, b)?;
            g.add(fa, hb)
        });
        for i in 0..combined.len() {
            prop_assert!((combined[i] - (a * gf[i] + b * gh[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn values_and_adjoints_stay_finite(data in prop::collection::vec(-30.0f64..30.0, 10)) {
        let x = Tensor::new(vec![5, 2], data).unwrap();
        let mut g = Graph::new();
        let xv = g.variable(x).unwrap();
        let l1 = g.softmax_cross_entropy(xv, &[0, 1, 0, 1, 1]).unwrap();
        let l2 = g.bce_with_logits(xv, 1.0).unwrap();
        let l = g.add(l1, l2).unwrap();
        prop_assert!(g.scalar_value(l).is_finite());
        let grads = g.backward(l).unwrap();
        prop_assert!(grads.get(xv).unwrap().is_finite());
    }
}
