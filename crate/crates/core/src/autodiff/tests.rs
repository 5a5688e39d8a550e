use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::{Error, Tensor};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn all_points(params: &[Tensor]) -> Vec<ProbePoint> {
    params
        .iter()
        .enumerate()
        .flat_map(|(tensor, t)| (0..t.len()).map(move |index| ProbePoint { tensor, index }))
        .collect()
}

/// Contracts a node's output with fixed random weights so that every output
/// element reaches the loss with a distinct coefficient.
fn contract(g: &mut Graph<'_>, out: NodeId, seed: u64) -> NodeId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = random(g.value(out).shape(), &mut rng);
    let w = g.constant(weights);
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// Runs a full finite-difference check of `build` over all its parameters.
fn check_op<F>(mut params: Vec<Tensor>, tolerance: f64, build: F) -> FdReport
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> NodeId,
{
    let analytic = {
        let mut g = Graph::new();
        let ids: Vec<_> = params.iter().map(|p| g.param(p)).collect();
        let out = build(&mut g, &ids);
        let loss = contract(&mut g, out, 99);
        g.backprop(loss).unwrap().into_param_grads()
    };
    let points = all_points(&params);
    finite_diff_check(&mut params, &analytic, &points, 1e-6, tolerance, |ps| {
        let mut g = Graph::new();
        let ids: Vec<_> = ps.iter().map(|p| g.param(p)).collect();
        let out = build(&mut g, &ids);
        let loss = contract(&mut g, out, 99);
        Evaluation::from_graph(&g, loss)
    })
    .unwrap()
}

fn assert_passes(name: &str, report: &FdReport) {
    assert!(
        report.passed(),
        "{name}: max rel error {} (worst {:?})",
        report.max_rel_error,
        report.worst()
    );
    assert!(report.excluded < report.entries.len(), "{name}: every point excluded");
}

#[test]
fn sum_gradient_is_all_ones() {
    let p = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
    let mut g = Graph::new();
    let id = g.param(&p);
    let loss = g.sum(id);
    let grads = g.backprop(loss).unwrap().into_param_grads();
    assert_eq!(grads[0], Tensor::filled(&[2, 3], 1.0));
}

#[test]
fn self_product_gradient_is_twice_the_parameter() {
    let p = Tensor::new(&[4], vec![1.5, -2.0, 0.25, 3.0]).unwrap();
    let mut g = Graph::new();
    let id = g.param(&p);
    let sq = g.mul(id, id).unwrap();
    let loss = g.sum(sq);
    let grads = g.backprop(loss).unwrap().into_param_grads();
    assert_eq!(grads[0].data(), &[3.0, -4.0, 0.5, 6.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let p = Tensor::zeros(&[3]);
    let mut g = Graph::new();
    let id = g.param(&p);
    let r = g.relu(id);
    assert!(matches!(g.backprop(r), Err(Error::NonScalarLoss(_))));
}

#[test]
fn conv_output_shapes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[32, 25, 1]));
    let k1 = g.constant(Tensor::zeros(&[9, 9, 1, 4]));
    let h = g.conv2d(x, k1, 1).unwrap();
    assert_eq!(g.value(h).shape(), &[24, 17, 4]);
    let k2 = g.constant(Tensor::zeros(&[9, 9, 4, 3]));
    let p = g.conv2d(h, k2, 2).unwrap();
    assert_eq!(g.value(p).shape(), &[8, 5, 3]);

    let big = g.constant(Tensor::zeros(&[24, 17, 128]));
    let k3 = g.constant(Tensor::zeros(&[9, 9, 128, 2]));
    let p = g.conv2d(big, k3, 2).unwrap();
    assert_eq!(g.value(p).shape(), &[8, 5, 2]);
}

#[test]
fn unit_kernel_of_two_doubles_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = random(&[5, 4, 1], &mut rng);
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let k = g.constant(Tensor::filled(&[1, 1, 1, 1], 2.0));
    let y = g.conv2d(x, k, 1).unwrap();
    for (a, b) in g.value(y).data().iter().zip(input.data()) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn one_hot_kernel_reproduces_shifted_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = random(&[8, 7, 2], &mut rng);
    // Picks channel 1 at offset (ky, kx) = (2, 1) of a 3x3 window.
    let mut kernel = Tensor::zeros(&[3, 3, 2, 1]);
    kernel.data_mut()[(2 * 3 + 1) * 2 + 1] = 1.0;
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let k = g.constant(kernel);
    let y = g.conv2d(x, k, 1).unwrap();
    let out = g.value(y);
    assert_eq!(out.shape(), &[6, 5, 1]);
    for oy in 0..6 {
        for ox in 0..5 {
            let want = input.data()[((oy + 2) * 7 + ox + 1) * 2 + 1];
            assert_eq!(out.data()[oy * 5 + ox], want);
        }
    }
}

#[test]
fn linear_model_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[6], &mut rng);
    let params = vec![random(&[6, 4], &mut rng), random(&[4], &mut rng)];
    let report = check_op(params, 1e-6, |g, ids| {
        let xi = g.constant(x.clone());
        g.linear(xi, ids[0], ids[1]).unwrap()
    });
    assert_passes("linear", &report);
    assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
}

#[test]
fn every_primitive_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-4;

    let r = check_op(vec![random(&[3, 5], &mut rng)], tol, |g, ids| g.relu(ids[0]));
    assert_passes("relu", &r);
    let r = check_op(vec![random(&[7], &mut rng)], tol, |g, ids| g.sigmoid(ids[0]));
    assert_passes("sigmoid", &r);
    let r = check_op(vec![random(&[4], &mut rng), random(&[4], &mut rng)], tol, |g, ids| {
        let s = g.add(ids[0], ids[1]).unwrap();
        let d = g.sub(s, ids[1]).unwrap();
        let m = g.mul(d, ids[1]).unwrap();
        let sc = g.scale(m, -1.5);
        g.offset(sc, 0.3)
    });
    assert_passes("add/sub/mul/scale/offset", &r);
    let r = check_op(vec![random(&[4, 6], &mut rng)], tol, |g, ids| g.norm(ids[0]));
    assert_passes("norm", &r);
    let r = check_op(vec![random(&[3, 4, 2], &mut rng)], tol, |g, ids| g.softmax(ids[0], 1).unwrap());
    assert_passes("softmax axis 1", &r);
    let r = check_op(vec![random(&[3, 4], &mut rng)], tol, |g, ids| g.softmax(ids[0], 0).unwrap());
    assert_passes("softmax axis 0", &r);
    let r = check_op(vec![random(&[5, 3], &mut rng)], tol, |g, ids| g.squash(ids[0]));
    assert_passes("squash", &r);
    let r = check_op(vec![random(&[4, 3], &mut rng), random(&[4, 2, 5, 3], &mut rng)], tol, |g, ids| {
        g.caps_transform(ids[0], ids[1]).unwrap()
    });
    assert_passes("caps_transform", &r);
    let r = check_op(vec![random(&[4, 3], &mut rng), random(&[4, 3, 2], &mut rng)], tol, |g, ids| {
        g.weighted_sum(ids[0], ids[1]).unwrap()
    });
    assert_passes("weighted_sum", &r);
    let r = check_op(vec![random(&[4, 3, 2], &mut rng), random(&[3, 2], &mut rng)], tol, |g, ids| {
        g.agreement(ids[0], ids[1]).unwrap()
    });
    assert_passes("agreement", &r);
    let r = check_op(vec![random(&[6, 5, 2], &mut rng), random(&[3, 2, 2, 3], &mut rng)], tol, |g, ids| {
        g.conv2d(ids[0], ids[1], 2).unwrap()
    });
    assert_passes("conv2d", &r);
    let r = check_op(vec![random(&[2, 3, 4], &mut rng), random(&[4], &mut rng)], tol, |g, ids| {
        g.bias_add(ids[0], ids[1]).unwrap()
    });
    assert_passes("bias_add", &r);
    let r = check_op(vec![random(&[3, 4], &mut rng)], tol, |g, ids| {
        let row = g.select_row(ids[0], 2).unwrap();
        g.reshape(row, &[2, 2]).unwrap()
    });
    assert_passes("select_row/reshape", &r);
}

#[test]
fn relu_kink_is_reported_as_excluded() {
    let mut params = vec![Tensor::new(&[3], vec![0.0, 0.5, -0.5]).unwrap()];
    let analytic = {
        let mut g = Graph::new();
        let id = g.param(&params[0]);
        let r = g.relu(id);
        assert!(g.touches_relu_kink());
        let loss = g.sum(r);
        g.backprop(loss).unwrap().into_param_grads()
    };
    assert_eq!(analytic[0].data(), &[0.0, 1.0, 0.0]);
    let points = all_points(&params);
    let report = finite_diff_check(&mut params, &analytic, &points, 1e-6, 1e-6, |ps| {
        let mut g = Graph::new();
        let id = g.param(&ps[0]);
        let r = g.relu(id);
        let loss = g.sum(r);
        Evaluation::from_graph(&g, loss)
    })
    .unwrap();
    assert_eq!(report.excluded, 1);
    assert!(report.entries[0].rel_error.is_none());
    assert!(report.passed());
}

#[test]
fn norm_and_squash_gradients_vanish_at_zero() {
    let p = Tensor::zeros(&[2, 3]);
    let mut g = Graph::new();
    let id = g.param(&p);
    let n = g.norm(id);
    let s = g.squash(id);
    let ns = g.sum(n);
    let ss = g.sum(s);
    let total = g.add(ns, ss).unwrap();
    let grads = g.backprop(total).unwrap().into_param_grads();
    assert!(grads[0].data().iter().all(|&v| v == 0.0));
}

#[test]
fn step_must_be_positive() {
    let mut params = vec![Tensor::zeros(&[1])];
    let grads = params.clone();
    let err = finite_diff_check(&mut params, &grads, &[], 0.0, 1e-4, |_| unreachable!());
    assert!(matches!(err, Err(Error::InvalidConfig(_))));
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[9, 8, 2], &mut rng);
    let k = random(&[3, 3, 2, 4], &mut rng);
    let run = || {
        let mut g = Graph::new();
        let xi = g.constant_ref(&x);
        let ki = g.param(&k);
        let y = g.conv2d(xi, ki, 1).unwrap();
        let s = g.squash(y);
        g.value(s).clone()
    };
    assert_eq!(run(), run());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// grad(a·L1 + b·L2) = a·grad(L1) + b·grad(L2)
        #[test]
        fn backprop_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random(&[4, 3], &mut rng);
            let build = |g: &mut Graph<'_>, id: NodeId| {
                let sq = g.squash(id);
                let l1 = g.sum(sq);
                let sm = g.softmax(id, 1).unwrap();
                let prod = g.mul(sm, id).unwrap();
                let l2 = g.sum(prod);
                (l1, l2)
            };
            let grads_of = |wa: f64, wb: f64| {
                let mut g = Graph::new();
                let id = g.param(&p);
                let (l1, l2) = build(&mut g, id);
                let s1 = g.scale(l1, wa);
                let s2 = g.scale(l2, wb);
                let total = g.add(s1, s2).unwrap();
                g.backprop(total).unwrap().into_param_grads().remove(0)
            };
            let combined = grads_of(a, b);
            let g1 = grads_of(1.0, 0.0);
            let g2 = grads_of(0.0, 1.0);
            for ((c, x), y) in combined.data().iter().zip(g1.data()).zip(g2.data()) {
                prop_assert!((c - (a * x + b * y)).abs() < 1e-10);
            }
        }
    }
}
