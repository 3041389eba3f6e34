use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{forward_layers, init_params, output_size, Layer};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Activation, Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    /// Width of the first convolution (`ndf`).
    pub base_width: usize,
    /// Number of stride-2 convolutions after which a stride-1 convolution
    /// and the 1-channel head follow.
    pub n_strided: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            n_strided: 3,
        }
    }
}

/// PatchGAN layer list: `n_strided` 4×4 stride-2 convolutions (instance norm
/// on all but the first), one 4×4 stride-1 convolution, then a 4×4 head to a
/// single channel. Widths double per layer, capped at 8× the base.
pub fn discriminator_layers(config: &DiscriminatorConfig) -> Vec<Layer> {
    let d = config.base_width;
    let act = Some(Activation::LeakyRelu(LEAKY_SLOPE));
    let mut layers = Vec::new();
    let mut in_ch = 3;
    let mut out_ch = d;
    for i in 0..config.n_strided {
        layers.push(Layer::Conv {
            name: format!("conv{i}"),
            in_ch,
            out_ch,
            kernel: 4,
            stride: 2,
            padding: Padding::Zero(1),
            norm: i > 0,
            act,
        });
        in_ch = out_ch;
        out_ch = (out_ch * 2).min(8 * d);
    }
    layers.push(Layer::Conv {
        name: format!("conv{}", config.n_strided),
        in_ch,
        out_ch,
        kernel: 4,
        stride: 1,
        padding: Padding::Zero(1),
        norm: config.n_strided > 0,
        act,
    });
    layers.push(Layer::Conv {
        name: "head".into(),
        in_ch: out_ch,
        out_ch: 1,
        kernel: 4,
        stride: 1,
        padding: Padding::Zero(1),
        norm: false,
        act: None,
    });
    layers
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiscriminator<T: Element = f32> {
    config: DiscriminatorConfig,
    layers: Vec<Layer>,
    params: ParamSet<T>,
}

impl<T: Element> PatchDiscriminator<T> {
    pub fn build(config: DiscriminatorConfig, seed: u64) -> Self {
        let layers = discriminator_layers(&config);
        let params = init_params(&layers, &mut ChaCha8Rng::seed_from_u64(seed));
        Self { config, layers, params }
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamSet<T>) -> Result<Self> {
        let layers = discriminator_layers(&config);
        let reference: ParamSet<T> = init_params(&layers, &mut ChaCha8Rng::seed_from_u64(0));
        params.check_layout(&reference, "discriminator")?;
        Ok(Self { config, layers, params })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
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

    pub fn cast<U: Element>(&self) -> PatchDiscriminator<U> {
        PatchDiscriminator {
            config: self.config,
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    /// Side of the patch map for a square input, `None` if too small.
    pub fn patch_size(&self, input: usize) -> Option<usize> {
        output_size(&self.layers, input).filter(|&s| s > 0)
    }

    /// Smallest square input that yields a non-empty patch map.
    pub fn min_input(&self) -> usize {
        (1..)
            .find(|&s| self.patch_size(s).is_some())
            .expect("some input size fits")
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, img: Var) -> Result<Var> {
        let (_, c, h, w) = tape.value(img).dims4()?;
        if c != 3 {
            return Err(Error::shape(
                "discriminator_forward",
                format!("expected 3 channels, got {c}"),
            ));
        }
        if self.patch_size(h).is_none() || self.patch_size(w).is_none() {
            return Err(Error::InvalidArgument(format!(
                "discriminator input {h}×{w} too small; need at least {0}×{0}",
                self.min_input()
            )));
        }
        forward_layers(tape, bound, &self.layers, img)
    }

    pub fn apply(&self, img: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(img.clone());
        let y = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(y).clone())
    }
}
