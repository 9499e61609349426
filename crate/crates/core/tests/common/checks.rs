//! Checks that report measurements instead of panicking. The integration
//! tests assert on them and the acceptance report prints them.

use super::*;
use cmunext::layers::Mode;
use cmunext::nn::{CmuNextBlock, CmuNextBlockCfg, FusionWidth, SkipFusion, SkipFusionCfg};
use cmunext::tensor::*;
use cmunext::train::bce_dice_loss;
use cmunext::Module;

/// Central-difference step used for operator gradient checks.
pub const FD_STEP: f64 = 1e-3;

/// Worst ratio of error to allowance over all elements, where the allowance
/// is 1e-3 relative, or 1e-4 absolute when the reference is below 1e-2.
/// A score of at most 1 passes.
pub fn grad_score(analytic: &[f32], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    analytic
        .iter()
        .zip(reference)
        .map(|(&a, &r)| {
            let err = (a as f64 - r).abs();
            if r.abs() < 1e-2 {
                err / 1e-4
            } else {
                err / (1e-3 * r.abs())
            }
        })
        .fold(0.0, f64::max)
}

fn fd(x: &[f64], f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    numeric_grad(x, FD_STEP, f)
}

fn conv_scores(label: &str, spec: ConvSpec, xs: Shape, seed: u64, out: &mut Vec<(String, f64)>) {
    let mut r = rng(seed);
    let x = random_tensor(xs, &mut r, 1.0);
    let w = random_tensor(spec.weight_shape(), &mut r, 0.5);
    let b = random_vec(spec.out_channels, &mut r, 0.5);
    let g = random_tensor(spec.output_shape(xs).unwrap(), &mut r, 1.0);
    let grads = conv2d_backward(&g, &x, &w, &spec).unwrap();
    let (xd, wd, bd, gd) = (to_f64(x.data()), to_f64(w.data()), to_f64(&b), to_f64(g.data()));
    let nx = fd(&xd, |p| dot(&conv_ref(p, xs, &wd, Some(&bd), &spec).0, &gd));
    let nw = fd(&wd, |p| dot(&conv_ref(&xd, xs, p, Some(&bd), &spec).0, &gd));
    let nb = fd(&bd, |p| dot(&conv_ref(&xd, xs, &wd, Some(p), &spec).0, &gd));
    out.push((format!("{label} input"), grad_score(grads.input.data(), &nx)));
    out.push((format!("{label} weight"), grad_score(&grads.weight, &nw)));
    out.push((format!("{label} bias"), grad_score(grads.bias.as_ref().unwrap(), &nb)));
}

fn bn_scores(mode: BnMode, seed: u64, out: &mut Vec<(String, f64)>) {
    let xs = [2, 3, 4, 4];
    let mut r = rng(seed);
    let x = random_tensor(xs, &mut r, 2.0);
    let mut st = BatchNormState::new(3);
    st.gamma = vec![1.3, -0.7, 0.4];
    st.beta = vec![0.2, 0.5, -0.1];
    st.running_mean = vec![0.1, -0.3, 0.05];
    st.running_var = vec![0.8, 1.7, 0.6];
    st.mode = mode;
    let snap = st.clone();
    let (_, stats) = batchnorm2d(&x, &mut st).unwrap();
    let g = random_tensor(xs, &mut r, 1.0);
    let grads = batchnorm2d_backward(&g, &x, &snap.gamma, &stats, mode).unwrap();
    let eps = snap.eps as f64;
    let (mean, var) = (to_f64(&snap.running_mean), to_f64(&snap.running_var));
    let f = |xv: &[f64], gm: &[f64], bt: &[f64]| match mode {
        BnMode::Train => bn_train_ref(xv, xs, gm, bt, eps),
        BnMode::Eval => bn_eval_ref(xv, xs, gm, bt, &mean, &var, eps),
    };
    let (xd, gmd, btd, gd) = (
        to_f64(x.data()),
        to_f64(&snap.gamma),
        to_f64(&snap.beta),
        to_f64(g.data()),
    );
    let label = format!("batchnorm {}", if mode == BnMode::Train { "train" } else { "eval" });
    out.push((
        format!("{label} input"),
        grad_score(grads.input.data(), &fd(&xd, |p| dot(&f(p, &gmd, &btd), &gd))),
    ));
    out.push((
        format!("{label} gamma"),
        grad_score(&grads.gamma, &fd(&gmd, |p| dot(&f(&xd, p, &btd), &gd))),
    ));
    out.push((
        format!("{label} beta"),
        grad_score(&grads.beta, &fd(&btd, |p| dot(&f(&xd, &gmd, p), &gd))),
    ));
}

fn elementwise_score(x: &Tensor, analytic: &Tensor, g: &Tensor, f: impl Fn(f64) -> f64) -> f64 {
    let gd = to_f64(g.data());
    let numeric = fd(&to_f64(x.data()), |p| p.iter().zip(&gd).map(|(&v, r)| f(v) * r).sum());
    grad_score(analytic.data(), &numeric)
}

/// Gradient scores for every differentiable operator, inputs at most 2×4×8×8.
pub fn operator_gradient_scores() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    conv_scores("conv 3x3", ConvSpec::same(2, 3, 3), [1, 2, 5, 5], 1, &mut out);
    conv_scores(
        "conv grouped",
        ConvSpec::same(4, 4, 3).with_groups(2),
        [2, 4, 6, 6],
        2,
        &mut out,
    );
    conv_scores(
        "conv depthwise 7x7",
        ConvSpec::depthwise(3, 7),
        [1, 3, 8, 8],
        3,
        &mut out,
    );
    conv_scores("conv pointwise", ConvSpec::pointwise(4, 2), [2, 4, 4, 4], 4, &mut out);
    let strided = ConvSpec {
        stride: 2,
        ..ConvSpec::same(2, 3, 3)
    };
    conv_scores("conv stride 2", strided, [1, 2, 7, 7], 5, &mut out);
    bn_scores(BnMode::Train, 6, &mut out);
    bn_scores(BnMode::Eval, 7, &mut out);

    let xs = [2, 3, 4, 4];
    let mut r = rng(8);
    // keep inputs at least 2·step away from the ReLU kink
    let x = random_tensor(xs, &mut r, 3.0).map(|v| if v.abs() < 0.01 { v + 0.02 } else { v });
    let g = random_tensor(xs, &mut r, 1.0);
    out.push((
        "gelu".into(),
        elementwise_score(&x, &gelu_backward(&g, &x).unwrap(), &g, gelu_ref),
    ));
    out.push((
        "relu".into(),
        elementwise_score(&x, &relu_backward(&g, &x).unwrap(), &g, |v| v.max(0.0)),
    ));
    out.push((
        "sigmoid".into(),
        elementwise_score(&x, &sigmoid_backward(&g, &sigmoid(&x)).unwrap(), &g, sigmoid_ref),
    ));

    // distinct, well separated values so no pooling window is near a tie
    let ps = [2, 2, 4, 6];
    let n = ps.iter().product::<usize>();
    let mut values: Vec<f32> = (0..n).map(|i| i as f32 * 0.05 - 2.0).collect();
    for i in (1..n).rev() {
        values.swap(i, r.random_range(0..=i));
    }
    let x = Tensor::from_vec(ps, values).unwrap();
    let (y, idx) = maxpool2x2(&x).unwrap();
    let g = random_tensor(y.shape(), &mut r, 1.0);
    let gd = to_f64(g.data());
    let numeric = fd(&to_f64(x.data()), |p| dot(&maxpool_ref(p, ps), &gd));
    out.push((
        "maxpool".into(),
        grad_score(maxpool2x2_backward(&g, &idx, ps).unwrap().data(), &numeric),
    ));

    let us = [2, 2, 3, 4];
    let x = random_tensor(us, &mut r, 1.0);
    let g = random_tensor([2, 2, 6, 8], &mut r, 1.0);
    let gd = to_f64(g.data());
    let numeric = fd(&to_f64(x.data()), |p| dot(&upsample_ref(p, us), &gd));
    out.push((
        "upsample".into(),
        grad_score(bilinear_upsample2x_backward(&g, us).unwrap().data(), &numeric),
    ));

    // concatenation and residual addition: backward is slicing / copying
    let a = random_tensor([2, 3, 2, 2], &mut r, 1.0);
    let b = random_tensor([2, 1, 2, 2], &mut r, 1.0);
    let g = random_tensor([2, 4, 2, 2], &mut r, 1.0);
    let gd = to_f64(g.data());
    let (ad, bd) = (to_f64(a.data()), to_f64(b.data()));
    let cat = |p: &[f64], q: &[f64]| {
        let mut v = Vec::new();
        for n in 0..2 {
            v.extend_from_slice(&p[n * 12..(n + 1) * 12]);
            v.extend_from_slice(&q[n * 4..(n + 1) * 4]);
        }
        v
    };
    let na = fd(&ad, |p| dot(&cat(p, &bd), &gd));
    let nb = fd(&bd, |p| dot(&cat(&ad, p), &gd));
    out.push((
        "concat first".into(),
        grad_score(slice_channels(&g, 0, 3).unwrap().data(), &na),
    ));
    out.push((
        "concat second".into(),
        grad_score(slice_channels(&g, 3, 1).unwrap().data(), &nb),
    ));
    let s = random_tensor([2, 3, 2, 2], &mut r, 1.0);
    let gs = random_tensor([2, 3, 2, 2], &mut r, 1.0);
    let gsd = to_f64(gs.data());
    let sd = to_f64(s.data());
    let numeric = fd(&ad, |p| {
        p.iter()
            .zip(&sd)
            .map(|(x, y)| x + y)
            .zip(&gsd)
            .map(|(v, r)| v * r)
            .sum()
    });
    let _ = residual_add(&a, &s).unwrap();
    out.push(("residual add".into(), grad_score(gs.data(), &numeric)));

    let logits = random_tensor([2, 1, 4, 4], &mut r, 2.0);
    let target = Tensor::from_fn([2, 1, 4, 4], |n, _, h, w| ((n + h * 4 + w) % 3 == 0) as u8 as f32);
    let l = bce_dice_loss(&logits, &target).unwrap();
    let td = to_f64(target.data());
    let numeric = fd(&to_f64(logits.data()), |p| loss_ref(p, &td));
    out.push(("bce+dice loss".into(), grad_score(l.grad.data(), &numeric)));
    out
}

/// Largest absolute deviation between `conv2d` and the direct oracle over
/// kernels {1,3,7,9}, groups {1,2,C} and strides {1,2}.
pub fn conv_oracle_max_deviation() -> f64 {
    let mut worst = 0.0f64;
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
                    worst = worst.max((*a as f64 - e).abs());
                }
            }
        }
    }
    worst
}

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Shape, residual pass-through, group isolation and closed-form counts of
/// the two block types.
pub fn block_checks() -> Vec<Check> {
    let mut out = Vec::new();

    let mut shapes_ok = true;
    for k in [3, 5, 7, 9] {
        let cfg = CmuNextBlockCfg {
            channels: 4,
            kernel: k,
            depth: 2,
        };
        let mut b = CmuNextBlock::new("b", cfg, 0).unwrap();
        let y = b
            .forward(&random_tensor([2, 4, 9, 7], &mut rng(k as u64), 1.0), Mode::Train)
            .unwrap();
        shapes_ok &= y.shape() == [2, 4, 9, 7];
    }
    let mut f = SkipFusion::new(
        "f",
        SkipFusionCfg {
            channels: 4,
            width: FusionWidth::Halved,
        },
        0,
    )
    .unwrap();
    let x = random_tensor([2, 4, 6, 6], &mut rng(1), 1.0);
    shapes_ok &= f.forward(&x, &x, Mode::Train).unwrap().shape() == [2, 4, 6, 6];
    out.push(Check::new(
        "block shapes",
        shapes_ok,
        "CMUNeXt k=3,5,7,9 and Skip-Fusion preserve (N,C,H,W)",
    ));

    let cfg = CmuNextBlockCfg {
        channels: 3,
        kernel: 7,
        depth: 1,
    };
    let mut b = CmuNextBlock::new("b", cfg, 0).unwrap();
    let unit = &mut b.units[0];
    unit.dwconv.weight.value.data_mut().fill(0.0);
    unit.dwconv.bias.as_mut().unwrap().value.data_mut().fill(0.0);
    let x = random_tensor([1, 3, 6, 6], &mut rng(2), 1.0);
    let passthrough = unit.spatial_stage(&x, Mode::Eval).unwrap() == x;
    out.push(Check::new(
        "residual pass-through",
        passthrough,
        "zero depthwise branch returns the input exactly",
    ));

    let mut f = SkipFusion::new(
        "f",
        SkipFusionCfg {
            channels: 4,
            width: FusionWidth::Halved,
        },
        3,
    )
    .unwrap();
    let enc = random_tensor([1, 4, 5, 5], &mut rng(3), 1.0);
    let dec = random_tensor([1, 4, 5, 5], &mut rng(4), 1.0);
    let dec2 = random_tensor([1, 4, 5, 5], &mut rng(5), 1.0);
    let half = f.cfg.grouped_out() / 2;
    let a = f.grouped(&enc, &dec, Mode::Eval).unwrap();
    let b2 = f.grouped(&enc, &dec2, Mode::Eval).unwrap();
    let isolated = slice_channels(&a, 0, half).unwrap() == slice_channels(&b2, 0, half).unwrap()
        && slice_channels(&a, half, half).unwrap() != slice_channels(&b2, half, half).unwrap();
    out.push(Check::new(
        "group isolation",
        isolated,
        "encoder group output ignores decoder channels",
    ));

    let mut mismatches = Vec::new();
    for c in [4, 8, 16, 32] {
        for k in [3, 5, 7, 9] {
            let b = CmuNextBlock::new(
                "b",
                CmuNextBlockCfg {
                    channels: c,
                    kernel: k,
                    depth: 1,
                },
                0,
            )
            .unwrap();
            if b.param_count() != unit_params(c, k) {
                mismatches.push(format!("unit C={c} K={k}"));
            }
        }
        for (width, mult) in [(FusionWidth::Halved, 1), (FusionWidth::Paired, 2)] {
            let f = SkipFusion::new("f", SkipFusionCfg { channels: c, width }, 0).unwrap();
            if f.param_count() != fusion_params(c, mult * c) {
                mismatches.push(format!("fusion C={c} {}", width.as_str()));
            }
        }
    }
    let unit16 = CmuNextBlock::new(
        "b",
        CmuNextBlockCfg {
            channels: 16,
            kernel: 3,
            depth: 1,
        },
        0,
    )
    .unwrap()
    .param_count();
    let fusion16 = SkipFusion::new(
        "f",
        SkipFusionCfg {
            channels: 16,
            width: FusionWidth::Halved,
        },
        0,
    )
    .unwrap()
    .param_count();
    out.push(Check::new(
        "closed-form counts",
        mismatches.is_empty(),
        format!(
            "unit C=16,K=3: {unit16} (hand formula {}); fusion C=16: {fusion16} (hand formula {}); mismatches: {}",
            unit_params(16, 3),
            fusion_params(16, 16),
            if mismatches.is_empty() {
                "none".to_string()
            } else {
                mismatches.join(", ")
            }
        ),
    ));
    out
}
