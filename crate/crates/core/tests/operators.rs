//! Operator forward passes against naive oracles, and every backward pass
//! against central differences of an f64 reference.

mod common;

use cmunext::tensor::*;
use common::*;
use proptest::prelude::*;

const GRAD_TOL: f64 = 1e-3;

/// Random upstream gradient `r`; the checked scalar is `Σ r·f(x)`.
fn upstream(shape: Shape, seed: u64) -> Tensor {
    random_tensor(shape, &mut rng(seed), 1.0)
}

#[test]
fn conv_matches_direct_oracle_on_grid() {
    let mut worst = 0.0f32;
    for &k in &[1, 3, 7, 9] {
        for &(cin, cout, groups) in &[(4, 6, 1), (4, 6, 2), (4, 4, 4)] {
            for &stride in &[1, 2] {
                let spec = ConvSpec {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    stride,
                    padding: k / 2,
                    groups,
                    has_bias: true,
                };
                let mut r = rng((k * 100 + groups * 10 + stride) as u64);
                let x = random_tensor([2, cin, 11, 9], &mut r, 1.0);
                let w = random_tensor(spec.weight_shape(), &mut r, 0.5);
                let b = random_vec(cout, &mut r, 0.5);
                let y = conv2d(&x, &w, Some(&b), &spec).unwrap();
                let (yr, shape) = conv_ref(
                    &to_f64(x.data()),
                    x.shape(),
                    &to_f64(w.data()),
                    Some(&to_f64(&b)),
                    &spec,
                );
                assert_eq!(y.shape(), shape);
                for (a, e) in y.data().iter().zip(&yr) {
                    worst = worst.max((*a as f64 - e).abs() as f32);
                }
            }
        }
    }
    assert!(worst <= 1e-5, "max deviation {worst}");
}

fn check_conv_grads(spec: ConvSpec, xs: Shape, seed: u64) {
    let mut r = rng(seed);
    let x = random_tensor(xs, &mut r, 1.0);
    let w = random_tensor(spec.weight_shape(), &mut r, 0.5);
    let b = random_vec(spec.out_channels, &mut r, 0.5);
    let ys = spec.output_shape(xs).unwrap();
    let g = upstream(ys, seed + 1);
    let grads = conv2d_backward(&g, &x, &w, &spec).unwrap();
    let (xd, wd, bd, gd) = (to_f64(x.data()), to_f64(w.data()), to_f64(&b), to_f64(g.data()));

    let nx = numeric_grad(&xd, 1e-6, |xp| dot(&conv_ref(xp, xs, &wd, Some(&bd), &spec).0, &gd));
    let nw = numeric_grad(&wd, 1e-6, |wp| dot(&conv_ref(&xd, xs, wp, Some(&bd), &spec).0, &gd));
    let nb = numeric_grad(&bd, 1e-6, |bp| dot(&conv_ref(&xd, xs, &wd, Some(bp), &spec).0, &gd));
    let ex = rel_error(&to_f64(grads.input.data()), &nx);
    let ew = rel_error(&to_f64(&grads.weight), &nw);
    let eb = rel_error(&to_f64(grads.bias.as_ref().unwrap()), &nb);
    assert!(
        ex < GRAD_TOL && ew < GRAD_TOL && eb < GRAD_TOL,
        "{spec:?}: input {ex}, weight {ew}, bias {eb}"
    );
}

#[test]
fn conv_gradients_dense_grouped_depthwise_pointwise() {
    check_conv_grads(ConvSpec::same(3, 4, 3), [2, 3, 6, 5], 1);
    check_conv_grads(ConvSpec::same(4, 4, 3).with_groups(2), [2, 4, 5, 5], 2);
    check_conv_grads(ConvSpec::depthwise(3, 7), [2, 3, 8, 6], 3);
    check_conv_grads(ConvSpec::pointwise(5, 3), [2, 5, 4, 3], 4);
    let strided = ConvSpec {
        stride: 2,
        ..ConvSpec::same(2, 3, 3)
    };
    check_conv_grads(strided, [1, 2, 7, 6], 5);
}

fn check_bn_grads(mode: BnMode, seed: u64) {
    let xs = [3, 2, 3, 4];
    let mut r = rng(seed);
    let x = random_tensor(xs, &mut r, 2.0);
    let mut st = BatchNormState::new(2);
    st.gamma = vec![1.3, -0.7];
    st.beta = vec![0.2, 0.5];
    st.running_mean = vec![0.1, -0.3];
    st.running_var = vec![0.8, 1.7];
    st.mode = mode;
    let snapshot = st.clone();
    let (_, stats) = batchnorm2d(&x, &mut st).unwrap();
    let g = upstream(xs, seed + 1);
    let grads = batchnorm2d_backward(&g, &x, &snapshot.gamma, &stats, mode).unwrap();

    let eps = snapshot.eps as f64;
    let (mean, var) = (to_f64(&snapshot.running_mean), to_f64(&snapshot.running_var));
    let f = |xv: &[f64], gm: &[f64], bt: &[f64]| match mode {
        BnMode::Train => bn_train_ref(xv, xs, gm, bt, eps),
        BnMode::Eval => bn_eval_ref(xv, xs, gm, bt, &mean, &var, eps),
    };
    let (xd, gmd, btd, gd) = (
        to_f64(x.data()),
        to_f64(&snapshot.gamma),
        to_f64(&snapshot.beta),
        to_f64(g.data()),
    );
    let nx = numeric_grad(&xd, 1e-6, |p| dot(&f(p, &gmd, &btd), &gd));
    let ng = numeric_grad(&gmd, 1e-6, |p| dot(&f(&xd, p, &btd), &gd));
    let nb = numeric_grad(&btd, 1e-6, |p| dot(&f(&xd, &gmd, p), &gd));
    let ex = rel_error(&to_f64(grads.input.data()), &nx);
    let eg = rel_error(&to_f64(&grads.gamma), &ng);
    let eb = rel_error(&to_f64(&grads.beta), &nb);
    assert!(
        ex < GRAD_TOL && eg < GRAD_TOL && eb < GRAD_TOL,
        "{mode:?}: input {ex}, gamma {eg}, beta {eb}"
    );
}

#[test]
fn batchnorm_gradients_train_and_eval() {
    check_bn_grads(BnMode::Train, 10);
    check_bn_grads(BnMode::Eval, 20);
}

#[test]
fn batchnorm_forward_matches_reference() {
    let xs = [2, 3, 4, 4];
    let x = random_tensor(xs, &mut rng(7), 3.0);
    let mut st = BatchNormState::new(3);
    st.gamma = vec![0.5, 1.0, 2.0];
    st.beta = vec![-1.0, 0.0, 1.0];
    let (y, _) = batchnorm2d(&x, &mut st).unwrap();
    let yr = bn_train_ref(&to_f64(x.data()), xs, &to_f64(&st.gamma), &to_f64(&st.beta), 1e-5);
    assert!(rel_error(&to_f64(y.data()), &yr) < 1e-6);
}

fn check_elementwise(name: &str, x: &Tensor, analytic: Tensor, g: &Tensor, f: impl Fn(f64) -> f64) {
    let gd = to_f64(g.data());
    let numeric = numeric_grad(&to_f64(x.data()), 1e-6, |p| {
        p.iter().map(|&v| f(v)).zip(&gd).map(|(a, b)| a * b).sum()
    });
    let e = rel_error(&to_f64(analytic.data()), &numeric);
    assert!(e < GRAD_TOL, "{name}: {e}");
}

#[test]
fn activation_gradients() {
    let xs = [2, 3, 4, 5];
    // keep relu inputs away from its kink
    let x = random_tensor(xs, &mut rng(30), 4.0).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let g = upstream(xs, 31);
    check_elementwise("gelu", &x, gelu_backward(&g, &x).unwrap(), &g, gelu_ref);
    check_elementwise("relu", &x, relu_backward(&g, &x).unwrap(), &g, |v| v.max(0.0));
    check_elementwise(
        "sigmoid",
        &x,
        sigmoid_backward(&g, &sigmoid(&x)).unwrap(),
        &g,
        sigmoid_ref,
    );
    let y = gelu(&x);
    for (a, &b) in y.data().iter().zip(x.data()) {
        assert!((*a as f64 - gelu_ref(b as f64)).abs() < 1e-6);
    }
}

#[test]
fn maxpool_gradient_and_forward() {
    let xs = [2, 2, 4, 6];
    let x = random_tensor(xs, &mut rng(40), 1.0);
    let (y, idx) = maxpool2x2(&x).unwrap();
    assert_eq!(to_f64(y.data()), maxpool_ref(&to_f64(x.data()), xs));
    let g = upstream(y.shape(), 41);
    let analytic = maxpool2x2_backward(&g, &idx, xs).unwrap();
    let gd = to_f64(g.data());
    let numeric = numeric_grad(&to_f64(x.data()), 1e-7, |p| dot(&maxpool_ref(p, xs), &gd));
    assert!(rel_error(&to_f64(analytic.data()), &numeric) < GRAD_TOL);
}

#[test]
fn upsample_gradient_and_forward() {
    let xs = [1, 2, 3, 5];
    let x = random_tensor(xs, &mut rng(50), 1.0);
    let y = bilinear_upsample2x(&x);
    let yr = upsample_ref(&to_f64(x.data()), xs);
    assert!(rel_error(&to_f64(y.data()), &yr) < 1e-6);
    let g = upstream(y.shape(), 51);
    let analytic = bilinear_upsample2x_backward(&g, xs).unwrap();
    let gd = to_f64(g.data());
    let numeric = numeric_grad(&to_f64(x.data()), 1e-6, |p| dot(&upsample_ref(p, xs), &gd));
    assert!(rel_error(&to_f64(analytic.data()), &numeric) < GRAD_TOL);
}

#[test]
fn loss_gradient_on_small_logit_map() {
    let logits = random_tensor([1, 1, 4, 4], &mut rng(60), 2.0);
    let target = Tensor::from_fn([1, 1, 4, 4], |_, _, h, w| ((h * 4 + w) % 3 == 0) as u8 as f32);
    let l = cmunext::train::bce_dice_loss(&logits, &target).unwrap();
    let td = to_f64(target.data());
    assert!((l.total - loss_ref(&to_f64(logits.data()), &td)).abs() < 1e-9);
    let numeric = numeric_grad(&to_f64(logits.data()), 1e-6, |p| loss_ref(p, &td));
    let e = rel_error(&to_f64(l.grad.data()), &numeric);
    assert!(e < GRAD_TOL, "{e}");
    for (a, n) in l.grad.data().iter().zip(&numeric) {
        assert!((*a as f64 - n).abs() <= 1e-3 * n.abs().max(1e-3), "{a} vs {n}");
    }
}

#[test]
fn combine_ops_are_adjoint_pairs() {
    let a = random_tensor([2, 3, 2, 2], &mut rng(70), 1.0);
    let b = random_tensor([2, 2, 2, 2], &mut rng(71), 1.0);
    let c = concat_channels(&a, &b).unwrap();
    assert_eq!(slice_channels(&c, 0, 3).unwrap(), a);
    assert_eq!(slice_channels(&c, 3, 2).unwrap(), b);
    let s = residual_add(&a, &a).unwrap();
    assert_eq!(s, a.map(|v| 2.0 * v));
    assert!(concat_channels(&a, &Tensor::zeros([2, 2, 3, 2])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear_in_input(seed in 0u64..1000, k in prop::sample::select(vec![1usize, 3, 5]), g in 1usize..=2) {
        let spec = ConvSpec { has_bias: false, ..ConvSpec::same(4, 4, k).with_groups(g) };
        let mut r = rng(seed);
        let x = random_tensor([1, 4, 6, 5], &mut r, 1.0);
        let y = random_tensor([1, 4, 6, 5], &mut r, 1.0);
        let w = random_tensor(spec.weight_shape(), &mut r, 0.5);
        let (alpha, beta) = (0.75f32, -1.5f32);
        let combo = Tensor::from_vec(x.shape(), x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
        let lhs = conv2d(&combo, &w, None, &spec).unwrap();
        let cx = conv2d(&x, &w, None, &spec).unwrap();
        let cy = conv2d(&y, &w, None, &spec).unwrap();
        for i in 0..lhs.len() {
            let rhs = alpha * cx.data()[i] + beta * cy.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-4);
        }
    }

    #[test]
    fn conv_output_shape_algebra(h in 1usize..20, w in 1usize..20, k in prop::sample::select(vec![1usize, 3, 5, 7]), stride in 1usize..3) {
        let spec = ConvSpec { stride, ..ConvSpec::same(2, 3, k) };
        let x = Tensor::zeros([1, 2, h, w]);
        match conv2d(&x, &Tensor::zeros(spec.weight_shape()), Some(&[0.0; 3]), &spec) {
            Ok(y) => {
                prop_assert_eq!(y.shape(), [1, 3, (h + 2 * (k / 2) - k) / stride + 1, (w + 2 * (k / 2) - k) / stride + 1]);
                if stride == 1 {
                    prop_assert_eq!(&y.shape()[2..], &[h, w]);
                }
            }
            Err(_) => prop_assert!(h + 2 * (k / 2) < k || w + 2 * (k / 2) < k),
        }
    }

    #[test]
    fn conv_is_deterministic(seed in 0u64..1000) {
        let spec = ConvSpec::same(3, 5, 3);
        let mut r = rng(seed);
        let x = random_tensor([2, 3, 7, 7], &mut r, 1.0);
        let w = random_tensor(spec.weight_shape(), &mut r, 1.0);
        let a = conv2d(&x, &w, Some(&[0.1; 5]), &spec).unwrap();
        let b = conv2d(&x, &w, Some(&[0.1; 5]), &spec).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn upsample_then_pool_shapes(h in 1usize..12, w in 1usize..12, c in 1usize..4) {
        let x = Tensor::full([1, c, h, w], 0.5);
        let up = bilinear_upsample2x(&x);
        prop_assert_eq!(up.shape(), [1, c, 2 * h, 2 * w]);
        prop_assert!(up.data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
        let (down, _) = maxpool2x2(&up).unwrap();
        prop_assert_eq!(down.shape(), x.shape());
    }

    #[test]
    fn maxpool_output_dominates_window(seed in 0u64..1000) {
        let x = random_tensor([1, 2, 4, 4], &mut rng(seed), 1.0);
        let (y, _) = maxpool2x2(&x).unwrap();
        for c in 0..2 { for oy in 0..2 { for ox in 0..2 {
            for dy in 0..2 { for dx in 0..2 {
                prop_assert!(y.get(0, c, oy, ox) >= x.get(0, c, 2 * oy + dy, 2 * ox + dx));
            }}
        }}}
    }
}

#[test]
fn every_operator_gradient_within_elementwise_tolerance() {
    for (name, score) in checks::operator_gradient_scores() {
        assert!(score <= 1.0, "{name}: error/allowance {score:.3}");
    }
}

#[test]
fn conv_oracle_grid_deviation() {
    let worst = checks::conv_oracle_max_deviation();
    assert!(worst <= 1e-5, "worst deviation {worst:e}");
}
