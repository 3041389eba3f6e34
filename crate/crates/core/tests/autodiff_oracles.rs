//! Independent oracles for the differentiable operations: a direct
//! summation convolution, an inner-product adjoint test and central finite
//! differences, all in 64-bit.

use iconify::autodiff::{grad_check, Activation, OpKind, Padding, Tape};
use iconify::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Six nested loops over (n, k, oy, ox, c, ky·kx) with zero padding.
fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let (kn, kc, kh, kw) = k.dims4().unwrap();
    assert_eq!(c, kc);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let xd = x.data();
    let kd = k.data();
    let mut out = vec![0.0; n * kn * oh * ow];
    for b in 0..n {
        for o in 0..kn {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = xd[((b * c + ci) * h + iy as usize) * w + ix as usize];
                                let kv = kd[((o * c + ci) * kh + ky) * kw + kx];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((b * kn + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new([n, kn, oh, ow], out).unwrap()
}

fn conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, padding: Padding) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.constant(k.clone());
    let y = tape.conv2d(xv, kv, stride, padding).unwrap();
    tape.value(y).clone()
}

fn conv_t(y: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let kv = tape.constant(k.clone());
    let x = tape.conv_transpose2d(yv, kv, stride, pad).unwrap();
    tape.value(x).clone()
}

#[test]
fn conv2d_random_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::<f64>::randn([2, 3, 8, 8], 1.0, &mut rng);
    let k = Tensor::<f64>::randn([4, 3, 3, 3], 1.0, &mut rng);
    let fast = conv(&x, &k, 2, Padding::Zero(1));
    let slow = naive_conv2d(&x, &k, 2, 1);
    assert_eq!(fast.shape(), &[2, 4, 4, 4]);
    assert!(fast.max_abs_diff(&slow) < 1e-6);
}

#[test]
fn conv2d_oracle_over_twenty_random_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..24 {
        let n = rng.random_range(1..3);
        let c = rng.random_range(1..4);
        let kn = rng.random_range(1..5);
        let kh = rng.random_range(1..5);
        let kw = rng.random_range(1..5);
        let stride = rng.random_range(1..4);
        let pad = rng.random_range(0..3);
        let h = rng.random_range(kh.max(2)..10);
        let w = rng.random_range(kw.max(2)..10);
        let x = Tensor::<f64>::randn([n, c, h, w], 1.0, &mut rng);
        let k = Tensor::<f64>::randn([kn, c, kh, kw], 1.0, &mut rng);
        let fast = conv(&x, &k, stride, Padding::Zero(pad));
        let slow = naive_conv2d(&x, &k, stride, pad);
        assert_eq!(fast.shape(), slow.shape(), "case {case}");
        assert!(fast.max_abs_diff(&slow) < 1e-6, "case {case}");

        // Transpose convolution is checked against the adjoint of the same
        // direct-summation oracle.
        let y = Tensor::<f64>::randn(slow.shape().to_vec(), 1.0, &mut rng);
        let lhs = slow.dot(&y);
        let xt = conv_t(&y, &k, stride, pad);
        if xt.shape() == x.shape() {
            assert!((lhs - x.dot(&xt)).abs() < 1e-6 * lhs.abs().max(1.0), "case {case}");
        }
    }
}

#[test]
fn conv2d_all_ones() {
    let x = Tensor::<f64>::ones([1, 1, 3, 3]);
    let k = Tensor::<f64>::ones([1, 1, 3, 3]);
    let y = conv(&x, &k, 1, Padding::Zero(0));
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);
}

#[test]
fn conv2d_dirac_kernel_with_reflect_padding_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::<f64>::randn([2, 3, 6, 7], 1.0, &mut rng);
    let mut k = Tensor::<f64>::zeros([3, 3, 3, 3]);
    for c in 0..3 {
        k.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    }
    let y = conv(&x, &k, 1, Padding::Reflect(1));
    assert_eq!(y, x);
}

#[test]
fn conv2d_channel_mismatch_names_dimensions() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros([1, 3, 8, 8]));
    let k = tape.constant(Tensor::zeros([4, 2, 3, 3]));
    let err = tape.conv2d(x, k, 1, Padding::Zero(1)).unwrap_err().to_string();
    assert!(err.contains("3 channels") && err.contains("expect 2"), "{err}");
}

#[test]
fn conv2d_rejects_non_finite_input() {
    let mut tape = Tape::<f64>::new();
    let mut data = Tensor::zeros([1, 1, 3, 3]);
    data.data_mut()[4] = f64::NAN;
    let x = tape.constant(data);
    let k = tape.constant(Tensor::ones([1, 1, 3, 3]));
    assert!(tape.conv2d(x, k, 1, Padding::Zero(0)).is_err());
}

#[test]
fn conv_transpose_single_pixel_spreads_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = Tensor::<f64>::randn([1, 1, 3, 3], 1.0, &mut rng);
    let y = conv_t(&Tensor::full([1, 1, 1, 1], 2.5), &k, 1, 0);
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
    assert!(y.max_abs_diff(&k.scale(2.5)) < 1e-15);
}

#[test]
fn conv_transpose_doubles_with_kernel_four() {
    let k = Tensor::<f64>::ones([1, 1, 4, 4]);
    let y = conv_t(&Tensor::ones([1, 1, 4, 4]), &k, 2, 1);
    assert_eq!(y.shape(), &[1, 1, 8, 8]);
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for &(stride, pad, kh) in &[(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 2), (3, 1, 3)] {
        let h = 9;
        let x = Tensor::<f64>::randn([2, 3, h, h], 1.0, &mut rng);
        let k = Tensor::<f64>::randn([5, 3, kh, kh], 1.0, &mut rng);
        let cx = conv(&x, &k, stride, Padding::Zero(pad));
        let y = Tensor::<f64>::randn(cx.shape().to_vec(), 1.0, &mut rng);
        let ty = conv_t(&y, &k, stride, pad);
        if ty.shape() != x.shape() {
            // Output sizes that a strided conv rounds down are not invertible in shape.
            continue;
        }
        let lhs = cx.dot(&y);
        let rhs = x.dot(&ty);
        assert!((lhs - rhs).abs() < 1e-6, "stride {stride} pad {pad}: {lhs} vs {rhs}");
    }
}

#[test]
fn pad_reflect_mirrors_without_repeating_edge() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    // A single row cannot be reflected vertically, so pad a 3×3 block and
    // read its middle row.
    assert!(tape.pad_reflect(x, 1).is_err());
    let block = Tensor::new([1, 1, 3, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
    let b = tape.constant(block.clone());
    let p = tape.pad_reflect(b, 1).unwrap();
    assert_eq!(&tape.value(p).data()[5..10], &[2.0, 1.0, 2.0, 3.0, 2.0]);
    let same = tape.pad_reflect(b, 0).unwrap();
    assert_eq!(tape.value(same), &block);
}

#[test]
fn pad_reflect_gradient_counts_multiplicity() {
    let (h, w, p) = (4, 5, 2);
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros([1, 1, h, w]));
    let y = tape.pad_reflect(x, p).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    let grad = g.get(x).unwrap();

    // Count how many padded positions read each source pixel.
    let reflect = |i: isize, n: isize| {
        if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        }
    };
    let mut counts = vec![0.0; h * w];
    for y in 0..(h + 2 * p) as isize {
        for x in 0..(w + 2 * p) as isize {
            let sy = reflect(y - p as isize, h as isize) as usize;
            let sx = reflect(x - p as isize, w as isize) as usize;
            counts[sy * w + sx] += 1.0;
        }
    }
    assert_eq!(grad.data(), counts.as_slice());
}

#[test]
fn instance_norm_normalizes_and_absorbs_constant_slices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::randn([1, 2, 8, 8], 3.0, &mut rng).map(|v| v + 4.0));
    let gain = tape.constant(Tensor::ones([2]));
    let bias = tape.constant(Tensor::zeros([2]));
    let y = tape.instance_norm(x, gain, bias, 1e-5).unwrap();
    for plane in tape.value(y).data().chunks(64) {
        let mean = plane.iter().sum::<f64>() / 64.0;
        let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-3);
    }
    let c = tape.constant(Tensor::full([1, 2, 4, 4], 3.0));
    let z = tape.instance_norm(c, gain, bias, 1e-5).unwrap();
    assert!(tape.value(z).data().iter().all(|&v| v == 0.0));
}

#[test]
fn activation_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new([3], vec![-1.0, 0.0, 2.0]).unwrap());
    let l = tape.activation(x, Activation::LeakyRelu(0.2)).unwrap();
    assert_eq!(tape.value(l).data(), &[-0.2, 0.0, 2.0]);
    let t = tape.activation(x, Activation::Tanh).unwrap();
    assert_eq!(tape.value(t).data()[1], 0.0);
    let big = tape.constant(Tensor::new([2], vec![-8.0, 8.0]).unwrap());
    let tb = tape.activation(big, Activation::Tanh).unwrap();
    assert!(tape.value(tb).data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn losses_values() {
    let mut tape = Tape::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = tape.constant(Tensor::randn([2, 3, 4, 4], 1.0, &mut rng));
    let l = tape.l1(a, a).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
    let ones = tape.constant(Tensor::ones([2]));
    let zeros = tape.constant(Tensor::zeros([2]));
    let m = tape.mse(ones, zeros).unwrap();
    assert_eq!(tape.value(m).item(), 1.0);
    assert!(tape.mse(ones, a).is_err());
}

/// Random points kept away from the relu/|·| kinks.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = rng.random_range(0.1..1.5);
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

#[test]
fn activation_gradients_match_finite_differences() {
    let point = away_from_zero(&[2, 3, 4, 4], 21);
    for kind in [
        Activation::Relu,
        Activation::LeakyRelu(0.2),
        Activation::Tanh,
        Activation::Sigmoid,
    ] {
        let r = grad_check(
            |t, x| {
                let a = t.activation(x, kind)?;
                let sq = t.mul(a, a)?;
                t.sum(sq)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(r.passes(1e-6), "{kind:?}: {r:?}");
        assert_eq!(r.skipped_kinks, 0);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let point = away_from_zero(&[1, 2, 3, 3], 4);
    let target = away_from_zero(&[1, 2, 3, 3], 5);
    let r = grad_check(
        |t, x| {
            let y = t.constant(target.clone());
            t.l1(x, y)
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-6), "l1 {r:?}");
    let r = grad_check(
        |t, x| {
            let y = t.constant(target.clone());
            t.mse(x, y)
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-6), "mse {r:?}");
}

#[test]
fn instance_norm_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let point = Tensor::<f64>::randn([2, 3, 4, 4], 1.0, &mut rng);
    let weights = Tensor::<f64>::randn([2, 3, 4, 4], 1.0, &mut rng);
    let gain = Tensor::<f64>::randn([3], 1.0, &mut rng);
    let r = grad_check(
        |t, x| {
            let g = t.constant(gain.clone());
            let b = t.constant(Tensor::full([3], 0.3));
            let y = t.instance_norm(x, g, b, 1e-5)?;
            let w = t.constant(weights.clone());
            let p = t.mul(y, w)?;
            t.sum(p)
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-4), "{r:?}");
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = Tensor::<f64>::randn([2, 2, 5, 5], 1.0, &mut rng);
    let k = Tensor::<f64>::randn([3, 2, 3, 3], 1.0, &mut rng);
    let w = Tensor::<f64>::randn([2, 3, 3, 3], 1.0, &mut rng);
    for padding in [Padding::Zero(1), Padding::Reflect(1)] {
        // w.r.t. input
        let r = grad_check(
            |t, xv| {
                let kv = t.constant(k.clone());
                let y = t.conv2d(xv, kv, 2, padding)?;
                let wv = t.constant(w.clone());
                let p = t.mul(y, wv)?;
                t.sum(p)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(r.passes(1e-6), "{padding:?} input {r:?}");
        // w.r.t. kernels
        let r = grad_check(
            |t, kv| {
                let xv = t.constant(x.clone());
                let y = t.conv2d(xv, kv, 2, padding)?;
                let wv = t.constant(w.clone());
                let p = t.mul(y, wv)?;
                t.sum(p)
            },
            &k,
            1e-5,
        )
        .unwrap();
        assert!(r.passes(1e-6), "{padding:?} kernel {r:?}");
    }
    // transpose conv, both arguments
    let y = Tensor::<f64>::randn([1, 3, 3, 3], 1.0, &mut rng);
    let kt = Tensor::<f64>::randn([3, 2, 4, 4], 1.0, &mut rng);
    let wt = Tensor::<f64>::randn([1, 2, 6, 6], 1.0, &mut rng);
    let obj = |t: &mut Tape<f64>, a, b| {
        let o = t.conv_transpose2d(a, b, 2, 1)?;
        let wv = t.constant(wt.clone());
        let p = t.mul(o, wv)?;
        t.sum(p)
    };
    let r = grad_check(
        |t, yv| {
            let kv = t.constant(kt.clone());
            obj(t, yv, kv)
        },
        &y,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-6), "convT input {r:?}");
    let r = grad_check(
        |t, kv| {
            let yv = t.constant(y.clone());
            obj(t, yv, kv)
        },
        &kt,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-6), "convT kernel {r:?}");
}

#[test]
fn end_to_end_conv_norm_tanh_l1() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = Tensor::<f64>::randn([1, 3, 6, 6], 1.0, &mut rng);
    let k = Tensor::<f64>::randn([3, 3, 3, 3], 0.5, &mut rng);
    let target = Tensor::<f64>::rand_uniform([1, 3, 6, 6], -1.0, 1.0, &mut rng);
    let r = grad_check(
        |t, xv| {
            let kv = t.constant(k.clone());
            let y = t.conv2d(xv, kv, 1, Padding::Reflect(1))?;
            let g = t.constant(Tensor::ones([3]));
            let b = t.constant(Tensor::zeros([3]));
            let n = t.instance_norm(y, g, b, 1e-5)?;
            let a = t.activation(n, Activation::Tanh)?;
            let tv = t.constant(target.clone());
            t.l1(a, tv)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-4), "{r:?}");
}

#[test]
fn sum_of_squares_gradient_is_exactly_two_x() {
    let x0 = Tensor::<f64>::new([4], vec![1.5, -2.0, 0.25, 3.0]).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &x0.scale(2.0));
}

#[test]
fn detached_and_unreachable_nodes_have_no_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::ones([3]));
    let c = tape.constant(Tensor::full([3], 2.0));
    let unused = tape.leaf(Tensor::ones([3]));
    let p = tape.mul(x, c).unwrap();
    let s = tape.sum(p).unwrap();
    let g = tape.backward(s).unwrap();
    assert!(g.contains(x));
    assert!(!g.contains(c));
    assert!(!g.contains(unused));
    assert_eq!(g.get(p).unwrap().shape(), tape.shape(p));
}

#[test]
fn backward_rejects_non_scalar_root() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::ones([3]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn cube_sum_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = Tensor::<f64>::randn([20], 1.0, &mut rng);
    let r = grad_check(
        |t, x| {
            let sq = t.mul(x, x)?;
            let cube = t.mul(sq, x)?;
            t.sum(cube)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-8, "{r:?}");
}

#[test]
fn corrupted_gradient_rule_is_detected() {
    let x = away_from_zero(&[10], 3);
    let r = grad_check(
        |t, x| {
            t.inject_fault(OpKind::Activation, 2.0);
            let a = t.activation(x, Activation::Tanh)?;
            t.sum(a)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!((r.max_rel_error - 0.5).abs() < 1e-6, "{r:?}");
    assert!(!r.passes(0.1));
}

#[test]
fn replay_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::randn([1, 3, 8, 8], 1.0, &mut rng));
        let k = tape.leaf(Tensor::randn([4, 3, 3, 3], 0.1, &mut rng));
        let y = tape.conv2d(x, k, 1, Padding::Reflect(1)).unwrap();
        let a = tape.activation(y, Activation::Tanh).unwrap();
        let s = tape.mean(a).unwrap();
        let g = tape.backward(s).unwrap();
        (
            tape.value(a).clone(),
            g.get(k).unwrap().clone(),
            g.get(x).unwrap().clone(),
        )
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjointness_holds_for_random_geometry(
        seed in any::<u64>(),
        c in 1usize..4,
        k in 1usize..4,
        kh in 1usize..5,
        stride in 1usize..4,
        pad in 0usize..2,
        h in 5usize..10,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::randn([1, c, h, h], 1.0, &mut rng);
        let kern = Tensor::<f64>::randn([k, c, kh, kh], 1.0, &mut rng);
        let cx = conv(&x, &kern, stride, Padding::Zero(pad));
        let y = Tensor::<f64>::randn(cx.shape().to_vec(), 1.0, &mut rng);
        let ty = conv_t(&y, &kern, stride, pad);
        prop_assume!(ty.shape() == x.shape());
        let lhs = cx.dot(&y);
        let rhs = x.dot(&ty);
        prop_assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0));
    }
}
