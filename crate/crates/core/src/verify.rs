//! Self-check suite: finite-difference gradient checks of every tape op and
//! of the composed training objectives, naive-loop convolution oracles and
//! the conv/transposed-conv adjoint identity.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, grad_check_coords, Activation, OpKind, Padding, Tape, Var};
use crate::error::Result;
use crate::loss::{LossWeights, Preset};
use crate::nn::{DiscriminatorConfig, GeneratorConfig, ParamSet};
use crate::tensor::Tensor;
use crate::training::{discriminator_objective, CycleGanConfig, CycleGanModel};

/// Threshold for checks whose path is smooth everywhere.
pub const SMOOTH_THRESHOLD: f64 = 1e-6;
/// Threshold for paths containing relu/|·| kinks and for composed objectives.
pub const KINKED_THRESHOLD: f64 = 1e-4;
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Step for single-op checks; central differences are exact for the
/// quadratic ops, so a large step only removes round-off.
pub const FD_STEP_OPS: f64 = 1e-4;
/// Step for composed objectives, small enough that few probes cross a kink.
pub const FD_STEP_COMPOSED: f64 = 1e-6;
pub const ORACLE_COMBOS: usize = 24;

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Skip the 64×64 composed-objective checks.
    pub fast: bool,
    /// Multiplies the backward rule of one op family (test fixture).
    pub fault: Option<OpKind>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.value < self.threshold
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| !r.passed()).collect()
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let mut s = format!(
            "{:<width$}  {:>12}  {:>9}  status  detail\n",
            "check", "value", "threshold"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>12.3e}  {:>9.0e}  {:<6}  {}",
                r.name,
                r.value,
                r.threshold,
                if r.passed() { "ok" } else { "FAIL" },
                r.detail
            );
        }
        let _ = write!(
            s,
            "{} checks, {} failed, {:.1}s",
            self.rows.len(),
            self.failures().len(),
            self.elapsed.as_secs_f64()
        );
        s
    }
}

const FAULT_FACTOR: f64 = 2.0;

/// Reduces `out` to a scalar through a fixed random weighting, so every
/// output coordinate receives a distinct upstream gradient.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let w = Tensor::rand_uniform(
        tape.shape(out).to_vec(),
        -1.0,
        1.0,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let w = tape.constant(w);
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::rand_uniform(shape.to_vec(), -1.0, 1.0, rng)
}

type Build = Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>;

struct OpCase {
    name: &'static str,
    smooth: bool,
    point: Tensor<f64>,
    build: Build,
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let x4 = |rng: &mut ChaCha8Rng| rand_t(&[2, 3, 6, 6], rng);
    let kern = rand_t(&[4, 3, 3, 3], rng);
    let kern_t = rand_t(&[3, 2, 4, 4], rng);
    let other = rand_t(&[2, 3, 6, 6], rng);
    let bias = rand_t(&[3], rng);
    let gain = Tensor::from_fn([3], |i| 0.5 + i as f64 * 0.25);
    let mut cases: Vec<OpCase> = Vec::new();
    let mut add = |name, smooth, point, build: Build| {
        cases.push(OpCase {
            name,
            smooth,
            point,
            build,
        })
    };
    {
        let k = kern.clone();
        add(
            "conv2d/input s1 p1",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let k = t.constant(k.clone());
                let y = t.conv2d(x, k, 1, Padding::Zero(1))?;
                project(t, y, 1)
            }),
        );
    }
    {
        let k = kern.clone();
        add(
            "conv2d/input s2 p1",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let k = t.constant(k.clone());
                let y = t.conv2d(x, k, 2, Padding::Zero(1))?;
                project(t, y, 2)
            }),
        );
    }
    {
        let k = kern.clone();
        add(
            "conv2d/input reflect",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let k = t.constant(k.clone());
                let y = t.conv2d(x, k, 1, Padding::Reflect(2))?;
                project(t, y, 3)
            }),
        );
    }
    {
        let xin = x4(rng);
        add(
            "conv2d/kernel",
            true,
            kern.clone(),
            Box::new(move |t, k| {
                let x = t.constant(xin.clone());
                let y = t.conv2d(x, k, 2, Padding::Zero(1))?;
                project(t, y, 4)
            }),
        );
    }
    {
        let k = kern_t.clone();
        add(
            "conv_transpose2d/input",
            true,
            rand_t(&[1, 3, 4, 4], rng),
            Box::new(move |t, x| {
                let k = t.constant(k.clone());
                let y = t.conv_transpose2d(x, k, 2, 1)?;
                project(t, y, 5)
            }),
        );
    }
    {
        let xin = rand_t(&[1, 3, 4, 4], rng);
        add(
            "conv_transpose2d/kernel",
            true,
            kern_t,
            Box::new(move |t, k| {
                let x = t.constant(xin.clone());
                let y = t.conv_transpose2d(x, k, 2, 1)?;
                project(t, y, 6)
            }),
        );
    }
    {
        let b = bias.clone();
        add(
            "bias_add/input",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let b = t.constant(b.clone());
                let y = t.bias_add(x, b)?;
                project(t, y, 7)
            }),
        );
    }
    {
        let xin = x4(rng);
        add(
            "bias_add/bias",
            true,
            bias.clone(),
            Box::new(move |t, b| {
                let x = t.constant(xin.clone());
                let y = t.bias_add(x, b)?;
                project(t, y, 8)
            }),
        );
    }
    {
        let (g, b) = (gain.clone(), bias.clone());
        add(
            "instance_norm/input",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let g = t.constant(g.clone());
                let b = t.constant(b.clone());
                let y = t.instance_norm(x, g, b, 1e-5)?;
                project(t, y, 9)
            }),
        );
    }
    {
        let (xin, b) = (x4(rng), bias.clone());
        add(
            "instance_norm/gain",
            true,
            gain.clone(),
            Box::new(move |t, g| {
                let x = t.constant(xin.clone());
                let b = t.constant(b.clone());
                let y = t.instance_norm(x, g, b, 1e-5)?;
                project(t, y, 10)
            }),
        );
    }
    {
        let (xin, g) = (x4(rng), gain);
        add(
            "instance_norm/bias",
            true,
            bias,
            Box::new(move |t, b| {
                let x = t.constant(xin.clone());
                let g = t.constant(g.clone());
                let y = t.instance_norm(x, g, b, 1e-5)?;
                project(t, y, 11)
            }),
        );
    }
    for (name, act, smooth) in [
        ("activation/relu", Activation::Relu, false),
        ("activation/leaky_relu", Activation::LeakyRelu(0.2), false),
        ("activation/tanh", Activation::Tanh, true),
        ("activation/sigmoid", Activation::Sigmoid, true),
    ] {
        add(
            name,
            smooth,
            x4(rng),
            Box::new(move |t, x| {
                let y = t.activation(x, act)?;
                project(t, y, 12)
            }),
        );
    }
    add(
        "pad_reflect",
        true,
        x4(rng),
        Box::new(|t, x| {
            let y = t.pad_reflect(x, 3)?;
            project(t, y, 13)
        }),
    );
    {
        let o = other.clone();
        add(
            "add",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let o = t.constant(o.clone());
                let y = t.add(x, o)?;
                project(t, y, 14)
            }),
        );
    }
    {
        let o = other.clone();
        add(
            "mul",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let o = t.constant(o.clone());
                let y = t.mul(x, o)?;
                project(t, y, 15)
            }),
        );
    }
    add(
        "scale",
        true,
        x4(rng),
        Box::new(|t, x| {
            let y = t.scale(x, -1.7)?;
            project(t, y, 16)
        }),
    );
    add(
        "sum",
        true,
        x4(rng),
        Box::new(|t, x| {
            let y = t.mul(x, x)?;
            t.sum(y)
        }),
    );
    add(
        "mean",
        true,
        x4(rng),
        Box::new(|t, x| {
            let y = t.mul(x, x)?;
            t.mean(y)
        }),
    );
    {
        let o = other.clone();
        add(
            "l1",
            false,
            x4(rng),
            Box::new(move |t, x| {
                let o = t.constant(o.clone());
                t.l1(x, o)
            }),
        );
    }
    {
        let o = other;
        add(
            "mse",
            true,
            x4(rng),
            Box::new(move |t, x| {
                let o = t.constant(o.clone());
                t.mse(x, o)
            }),
        );
    }
    add(
        "view",
        true,
        x4(rng),
        Box::new(|t, x| {
            let y = t.view(x, 7, &[2, 5, 3])?;
            project(t, y, 17)
        }),
    );
    cases
}

fn with_fault(tape: &mut Tape<f64>, fault: Option<OpKind>) {
    if let Some(kind) = fault {
        tape.inject_fault(kind, FAULT_FACTOR);
    }
}

fn grad_rows(opts: &VerifyOptions, rows: &mut Vec<CheckRow>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for case in op_cases(&mut rng) {
        let fault = opts.fault;
        let build = &case.build;
        let r = grad_check(
            |t: &mut Tape<f64>, x| {
                with_fault(t, fault);
                build(t, x)
            },
            &case.point,
            FD_STEP_OPS,
        )?;
        rows.push(CheckRow {
            name: format!("grad {}", case.name),
            value: coverage(r.max_rel_error, r.checked),
            threshold: if case.smooth {
                SMOOTH_THRESHOLD
            } else {
                KINKED_THRESHOLD
            },
            detail: format!("{} coords, {} kink-skipped", r.checked, r.skipped_kinks),
        });
    }
    Ok(())
}

/// The small network configuration used by the composed-objective checks.
pub fn probe_config() -> CycleGanConfig {
    CycleGanConfig {
        generator: GeneratorConfig {
            base_width: 4,
            n_res_blocks: 1,
        },
        discriminator: DiscriminatorConfig {
            base_width: 4,
            n_strided: 3,
        },
        ..CycleGanConfig::default()
    }
}

fn sample_coords(params: &ParamSet<f64>, per_tensor: usize, rng: &mut ChaCha8Rng) -> Vec<(String, Vec<usize>)> {
    params
        .iter()
        .map(|(k, v)| {
            let mut c: Vec<usize> = (0..per_tensor.min(v.len()))
                .map(|_| rng.random_range(0..v.len()))
                .collect();
            c.sort_unstable();
            c.dedup();
            (k.to_owned(), c)
        })
        .collect()
}

/// A check that compared no coordinate fails.
fn coverage(err: f64, checked: usize) -> f64 {
    if checked == 0 {
        f64::INFINITY
    } else {
        err
    }
}

#[derive(Clone, Copy)]
enum Net {
    GXy,
    GYx,
    Dy,
}

/// Gradient check of the full CycleGAN generator objective (adversarial,
/// cycle and identity terms in both directions) with respect to sampled
/// coordinates of every generator parameter tensor and of the input image,
/// plus the discriminator objective with respect to its parameters.
pub fn composed_objective_rows(resolution: usize, per_tensor: usize, opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let model = CycleGanModel::<f64>::build(probe_config(), opts.seed)?;
    let weights = LossWeights::preset(Preset::ColorLogos);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let x = rand_t(&[1, 3, resolution, resolution], &mut rng);
    let y = rand_t(&[1, 3, resolution, resolution], &mut rng);
    let fake = rand_t(&[1, 3, resolution, resolution], &mut rng);
    let fault = opts.fault;
    let mut rows = Vec::new();

    let objective = |t: &mut Tape<f64>, probe: Option<(Net, &str, Var)>, x_override: Option<Var>| -> Result<Var> {
        with_fault(t, fault);
        let mut b = model.bind(t, false, false);
        let xv = x_override.unwrap_or_else(|| t.constant(x.clone()));
        let yv = t.constant(y.clone());
        match probe {
            Some((Net::Dy, name, v)) => {
                b.d_y.replace(name, v)?;
                return discriminator_objective(t, &model.d_y, &b.d_y, &y, &fake, "d_y");
            }
            Some((Net::GXy, name, v)) => b.g_xy.replace(name, v)?,
            Some((Net::GYx, name, v)) => b.g_yx.replace(name, v)?,
            None => {}
        }
        Ok(model.generator_objective(t, &b, xv, yv, &weights)?.total)
    };

    for (net, label, params) in [
        (Net::GXy, "g_xy", model.g_xy.params()),
        (Net::GYx, "g_yx", model.g_yx.params()),
        (Net::Dy, "d_y", model.d_y.params()),
    ] {
        let mut worst = 0.0f64;
        let mut worst_name = String::new();
        let (mut checked, mut skipped) = (0, 0);
        for (name, coords) in sample_coords(params, per_tensor, &mut rng) {
            let point = params.get(&name).expect("listed").clone();
            let r = grad_check_coords(
                |t, v| objective(t, Some((net, &name, v)), None),
                &point,
                FD_STEP_COMPOSED,
                &coords,
            )?;
            checked += r.checked;
            skipped += r.skipped_kinks;
            if r.max_rel_error >= worst {
                worst = r.max_rel_error;
                worst_name = name;
            }
        }
        let what = if matches!(net, Net::Dy) {
            "discriminator objective"
        } else {
            "generator objective"
        };
        rows.push(CheckRow {
            name: format!("grad {what} {resolution}px wrt {label}"),
            value: coverage(worst, checked),
            threshold: KINKED_THRESHOLD,
            detail: format!("{checked} coords, {skipped} kink-skipped, worst in {worst_name}"),
        });
    }
    let coords: Vec<usize> = (0..per_tensor * 4).map(|_| rng.random_range(0..x.len())).collect();
    let r = grad_check_coords(|t, v| objective(t, None, Some(v)), &x, FD_STEP_COMPOSED, &coords)?;
    rows.push(CheckRow {
        name: format!("grad generator objective {resolution}px wrt input"),
        value: coverage(r.max_rel_error, r.checked),
        threshold: KINKED_THRESHOLD,
        detail: format!("{} coords, {} kink-skipped", r.checked, r.skipped_kinks),
    });
    Ok(rows)
}

/// Direct six-loop convolution with zero padding.
pub fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().expect("rank 4");
    let (ko, _, kh, kw) = k.dims4().expect("rank 4");
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; n * ko * oh * ow];
    for b in 0..n {
        for o in 0..ko {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = (oy * stride + dy) as isize - pad as isize;
                                let ix = (ox * stride + dx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += xd[((b * c + ci) * h + iy as usize) * w + ix as usize]
                                    * kd[((o * c + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out[((b * ko + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new([n, ko, oh, ow], out).expect("consistent")
}

/// Direct scatter form of the transposed convolution: every input pixel
/// adds its kernel-weighted footprint to the output.
pub fn naive_conv_transpose2d(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, ki, h, w) = x.dims4().expect("rank 4");
    let (_, c, kh, kw) = k.dims4().expect("rank 4");
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (w - 1) * stride + kw - 2 * pad;
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; n * c * oh * ow];
    for b in 0..n {
        for i in 0..ki {
            for y in 0..h {
                for xx in 0..w {
                    let v = xd[((b * ki + i) * h + y) * w + xx];
                    for co in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let oy = (y * stride + dy) as isize - pad as isize;
                                let ox = (xx * stride + dx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * c + co) * oh + oy as usize) * ow + ox as usize] +=
                                    v * kd[((i * c + co) * kh + dy) * kw + dx];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new([n, c, oh, ow], out).expect("consistent")
}

/// A random geometry whose transposed convolution restores the input size.
#[derive(Clone, Copy, Debug)]
pub struct ConvCase {
    pub n: usize,
    pub c: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

pub fn random_conv_cases(count: usize, seed: u64) -> Vec<ConvCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count {
        let kh = rng.random_range(1..=4);
        let kw = rng.random_range(1..=4);
        let stride = rng.random_range(1..=3);
        let pad = rng.random_range(0..=2.min(kh.min(kw) - 1));
        let oh = rng.random_range(2..=5);
        let ow = rng.random_range(2..=5);
        // Input sizes for which stride divides exactly.
        let h = (oh - 1) * stride + kh - 2 * pad;
        let w = (ow - 1) * stride + kw - 2 * pad;
        if h < kh.max(1) || w < kw.max(1) {
            continue;
        }
        cases.push(ConvCase {
            n: rng.random_range(1..=2),
            c: rng.random_range(1..=3),
            k: rng.random_range(1..=4),
            h,
            w,
            kh,
            kw,
            stride,
            pad,
        });
    }
    cases
}

fn oracle_rows(opts: &VerifyOptions, rows: &mut Vec<CheckRow>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(11));
    let cases = random_conv_cases(ORACLE_COMBOS, opts.seed.wrapping_add(12));
    let (mut conv_err, mut convt_err, mut adj_err) = (0.0f64, 0.0f64, 0.0f64);
    for cs in &cases {
        let x = rand_t(&[cs.n, cs.c, cs.h, cs.w], &mut rng);
        let k = rand_t(&[cs.k, cs.c, cs.kh, cs.kw], &mut rng);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x.clone());
        let kv = tape.constant(k.clone());
        let y = tape.conv2d(xv, kv, cs.stride, Padding::Zero(cs.pad))?;
        let fast = tape.value(y).clone();
        let slow = naive_conv2d(&x, &k, cs.stride, cs.pad);
        conv_err = conv_err.max(fast.max_abs_diff(&slow));

        let g = rand_t(fast.shape(), &mut rng);
        let gv = tape.constant(g.clone());
        let back = tape.conv_transpose2d(gv, kv, cs.stride, cs.pad)?;
        let back = tape.value(back).clone();
        convt_err = convt_err.max(back.max_abs_diff(&naive_conv_transpose2d(&g, &k, cs.stride, cs.pad)));

        let lhs = fast.dot(&g);
        let rhs = x.dot(&back);
        adj_err = adj_err.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    let detail = format!("{} random shape/stride/padding combinations", cases.len());
    rows.push(CheckRow {
        name: "oracle conv2d vs naive loops".into(),
        value: conv_err,
        threshold: ORACLE_TOLERANCE,
        detail: detail.clone(),
    });
    rows.push(CheckRow {
        name: "oracle conv_transpose2d vs naive loops".into(),
        value: convt_err,
        threshold: ORACLE_TOLERANCE,
        detail: detail.clone(),
    });
    rows.push(CheckRow {
        name: "adjoint <conv x, y> = <x, convT y>".into(),
        value: adj_err,
        threshold: ORACLE_TOLERANCE,
        detail,
    });
    Ok(())
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let start = Instant::now();
    let mut rows = Vec::new();
    grad_rows(opts, &mut rows)?;
    oracle_rows(opts, &mut rows)?;
    rows.extend(composed_objective_rows(32, 2, opts)?);
    if !opts.fast {
        rows.extend(composed_objective_rows(64, 1, opts)?);
    }
    Ok(VerifyReport {
        rows,
        elapsed: start.elapsed(),
    })
}
