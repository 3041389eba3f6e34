//! Data-driven layer tables. Each network is a list of [`Layer`]s; the same
//! table drives parameter allocation and the forward pass.

use rand::Rng;

use super::params::{Bound, ParamSet};
use crate::autodiff::{Activation, Padding, Tape, Var};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

pub const INIT_STD: f64 = 0.02;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// Convolution, then optional instance norm, then optional activation.
    /// Convolutions followed by a norm carry no bias (the norm absorbs it).
    Conv {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        norm: bool,
        act: Option<Activation>,
    },
    /// Transpose convolution (zero padding), instance norm, activation.
    ConvTranspose {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        norm: bool,
        act: Option<Activation>,
    },
    /// `x + IN(conv3(pad(relu(IN(conv3(pad(x)))))))` at constant width.
    Residual { name: String, channels: usize },
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv { name, .. } | Layer::ConvTranspose { name, .. } | Layer::Residual { name, .. } => name,
        }
    }

    /// Spatial output size for a square input of side `size`, or `None` if
    /// the layer cannot be applied.
    pub fn output_size(&self, size: usize) -> Option<usize> {
        match *self {
            Layer::Conv {
                kernel,
                stride,
                padding,
                ..
            } => {
                let p = match padding {
                    Padding::Zero(p) => p,
                    Padding::Reflect(p) => {
                        if p >= size {
                            return None;
                        }
                        p
                    }
                };
                let padded = size + 2 * p;
                (padded >= kernel).then(|| (padded - kernel) / stride + 1)
            }
            Layer::ConvTranspose {
                kernel, stride, pad, ..
            } => ((size - 1) * stride + kernel).checked_sub(2 * pad).filter(|&s| s > 0),
            Layer::Residual { .. } => (size > 1).then_some(size),
        }
    }
}

fn conv_params<T: Element, R: Rng>(
    params: &mut ParamSet<T>,
    name: &str,
    weight_shape: [usize; 4],
    out_ch: usize,
    norm: bool,
    rng: &mut R,
) {
    params.insert(format!("{name}.weight"), Tensor::randn(weight_shape, INIT_STD, rng));
    if norm {
        params.insert(format!("{name}.norm.gain"), Tensor::ones([out_ch]));
        params.insert(format!("{name}.norm.bias"), Tensor::zeros([out_ch]));
    } else {
        params.insert(format!("{name}.bias"), Tensor::zeros([out_ch]));
    }
}

/// Allocates parameters for `layers` in table order: kernels from
/// `N(0, 0.02²)`, biases 0, norm gains 1.
pub fn init_params<T: Element, R: Rng>(layers: &[Layer], rng: &mut R) -> ParamSet<T> {
    let mut params = ParamSet::new();
    for layer in layers {
        match layer {
            Layer::Conv {
                name,
                in_ch,
                out_ch,
                kernel,
                norm,
                ..
            } => conv_params(
                &mut params,
                name,
                [*out_ch, *in_ch, *kernel, *kernel],
                *out_ch,
                *norm,
                rng,
            ),
            // Transpose kernels are stored K_in×C_out×kh×kw.
            Layer::ConvTranspose {
                name,
                in_ch,
                out_ch,
                kernel,
                norm,
                ..
            } => conv_params(
                &mut params,
                name,
                [*in_ch, *out_ch, *kernel, *kernel],
                *out_ch,
                *norm,
                rng,
            ),
            Layer::Residual { name, channels } => {
                for part in ["conv1", "conv2"] {
                    conv_params(
                        &mut params,
                        &format!("{name}.{part}"),
                        [*channels, *channels, 3, 3],
                        *channels,
                        true,
                        rng,
                    );
                }
            }
        }
    }
    params
}

fn conv_tail<T: Element>(
    tape: &mut Tape<T>,
    bound: &Bound,
    name: &str,
    y: Var,
    norm: bool,
    act: Option<Activation>,
) -> Result<Var> {
    let mut y = if norm {
        let g = bound.var(&format!("{name}.norm.gain"))?;
        let b = bound.var(&format!("{name}.norm.bias"))?;
        tape.instance_norm(y, g, b, NORM_EPS)?
    } else {
        let b = bound.var(&format!("{name}.bias"))?;
        tape.bias_add(y, b)?
    };
    if let Some(kind) = act {
        y = tape.activation(y, kind)?;
    }
    Ok(y)
}

pub fn forward_layer<T: Element>(tape: &mut Tape<T>, bound: &Bound, layer: &Layer, x: Var) -> Result<Var> {
    match layer {
        Layer::Conv {
            name,
            stride,
            padding,
            norm,
            act,
            ..
        } => {
            let w = bound.var(&format!("{name}.weight"))?;
            let y = tape.conv2d(x, w, *stride, *padding)?;
            conv_tail(tape, bound, name, y, *norm, *act)
        }
        Layer::ConvTranspose {
            name,
            stride,
            pad,
            norm,
            act,
            ..
        } => {
            let w = bound.var(&format!("{name}.weight"))?;
            let y = tape.conv_transpose2d(x, w, *stride, *pad)?;
            conv_tail(tape, bound, name, y, *norm, *act)
        }
        Layer::Residual { name, .. } => {
            let w1 = bound.var(&format!("{name}.conv1.weight"))?;
            let h = tape.conv2d(x, w1, 1, Padding::Reflect(1))?;
            let h = conv_tail(tape, bound, &format!("{name}.conv1"), h, true, Some(Activation::Relu))?;
            let w2 = bound.var(&format!("{name}.conv2.weight"))?;
            let h = tape.conv2d(h, w2, 1, Padding::Reflect(1))?;
            let h = conv_tail(tape, bound, &format!("{name}.conv2"), h, true, None)?;
            tape.add(x, h)
        }
    }
}

pub fn forward_layers<T: Element>(tape: &mut Tape<T>, bound: &Bound, layers: &[Layer], mut x: Var) -> Result<Var> {
    for layer in layers {
        x = forward_layer(tape, bound, layer, x)?;
    }
    Ok(x)
}

/// Spatial size after the whole table, or `None` if some layer fails.
pub fn output_size(layers: &[Layer], size: usize) -> Option<usize> {
    layers.iter().try_fold(size, |s, l| l.output_size(s))
}
