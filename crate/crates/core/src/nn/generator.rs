use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{forward_layers, init_params, Layer};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Activation, Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Channel width of the stem (`ngf`); the bottleneck runs at 4× this.
    pub base_width: usize,
    pub n_res_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            n_res_blocks: 6,
        }
    }
}

/// Reflect-padded 7×7 stem and two stride-2 downsampling convolutions.
pub(crate) fn front_layers(w: usize) -> Vec<Layer> {
    vec![
        Layer::Conv {
            name: "stem".into(),
            in_ch: 3,
            out_ch: w,
            kernel: 7,
            stride: 1,
            padding: Padding::Reflect(3),
            norm: true,
            act: Some(Activation::Relu),
        },
        Layer::Conv {
            name: "down1".into(),
            in_ch: w,
            out_ch: 2 * w,
            kernel: 3,
            stride: 2,
            padding: Padding::Zero(1),
            norm: true,
            act: Some(Activation::Relu),
        },
        Layer::Conv {
            name: "down2".into(),
            in_ch: 2 * w,
            out_ch: 4 * w,
            kernel: 3,
            stride: 2,
            padding: Padding::Zero(1),
            norm: true,
            act: Some(Activation::Relu),
        },
    ]
}

pub(crate) fn residual_layers(prefix: &str, channels: usize, count: usize) -> Vec<Layer> {
    (0..count)
        .map(|i| Layer::Residual {
            name: format!("{prefix}{i}"),
            channels,
        })
        .collect()
}

/// Two stride-2 transpose convolutions and the reflect-padded 7×7 tanh head.
pub(crate) fn back_layers(w: usize) -> Vec<Layer> {
    vec![
        Layer::ConvTranspose {
            name: "up1".into(),
            in_ch: 4 * w,
            out_ch: 2 * w,
            kernel: 4,
            stride: 2,
            pad: 1,
            norm: true,
            act: Some(Activation::Relu),
        },
        Layer::ConvTranspose {
            name: "up2".into(),
            in_ch: 2 * w,
            out_ch: w,
            kernel: 4,
            stride: 2,
            pad: 1,
            norm: true,
            act: Some(Activation::Relu),
        },
        Layer::Conv {
            name: "head".into(),
            in_ch: w,
            out_ch: 3,
            kernel: 7,
            stride: 1,
            padding: Padding::Reflect(3),
            norm: false,
            act: Some(Activation::Tanh),
        },
    ]
}

/// The full generator layer list.
pub fn generator_layers(config: &GeneratorConfig) -> Vec<Layer> {
    let w = config.base_width;
    let mut layers = front_layers(w);
    layers.extend(residual_layers("res", 4 * w, config.n_res_blocks));
    layers.extend(back_layers(w));
    layers
}

pub(crate) fn check_image_input(shape: &[usize], what: &'static str) -> Result<()> {
    match *shape {
        [_, 3, h, w] if h % 4 == 0 && w % 4 == 0 && h >= 4 && w >= 4 => Ok(()),
        _ => Err(Error::shape(
            what,
            format!("expected N×3×H×W with H, W positive multiples of 4, got {shape:?}"),
        )),
    }
}

/// ResNet-style image-to-image generator (one translation direction).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet<T: Element = f32> {
    config: GeneratorConfig,
    layers: Vec<Layer>,
    params: ParamSet<T>,
}

impl<T: Element> GeneratorNet<T> {
    pub fn build(config: GeneratorConfig, resolution: usize, seed: u64) -> Result<Self> {
        if resolution == 0 || !resolution.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "generator resolution must be a positive multiple of 4, got {resolution}"
            )));
        }
        let layers = generator_layers(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&layers, &mut rng);
        Ok(Self { config, layers, params })
    }

    pub fn from_params(config: GeneratorConfig, params: ParamSet<T>) -> Result<Self> {
        let layers = generator_layers(&config);
        let reference: ParamSet<T> = init_params(&layers, &mut ChaCha8Rng::seed_from_u64(0));
        params.check_layout(&reference, "generator")?;
        Ok(Self { config, layers, params })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    pub fn cast<U: Element>(&self) -> GeneratorNet<U> {
        GeneratorNet {
            config: self.config,
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        check_image_input(tape.shape(x), "generator_forward")?;
        forward_layers(tape, bound, &self.layers, x)
    }

    /// Gradient-free evaluation.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }
}
