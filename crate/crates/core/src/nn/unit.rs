//! UNIT: two domain encoders and two decoders meeting in a shared latent
//! space. The last encoder block and the first decoder block are single
//! parameter sets used by both domains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::discriminator::{DiscriminatorConfig, PatchDiscriminator};
use super::generator::{back_layers, check_image_input, front_layers, residual_layers};
use super::layers::{forward_layers, init_params, Layer};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    X,
    Y,
}

impl Domain {
    pub fn other(self) -> Self {
        match self {
            Domain::X => Domain::Y,
            Domain::Y => Domain::X,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Domain::X => "x",
            Domain::Y => "y",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitConfig {
    pub base_width: usize,
    /// Domain-private residual blocks on each side of the shared pair.
    pub n_private_res: usize,
    pub discriminator: DiscriminatorConfig,
}

impl Default for UnitConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            n_private_res: 2,
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl UnitConfig {
    pub fn encoder_layers(&self) -> Vec<Layer> {
        let mut l = front_layers(self.base_width);
        l.extend(residual_layers("res", 4 * self.base_width, self.n_private_res));
        l
    }

    pub fn shared_encoder_layers(&self) -> Vec<Layer> {
        residual_layers("shared_enc", 4 * self.base_width, 1)
    }

    pub fn shared_decoder_layers(&self) -> Vec<Layer> {
        residual_layers("shared_dec", 4 * self.base_width, 1)
    }

    pub fn decoder_layers(&self) -> Vec<Layer> {
        let mut l = residual_layers("res", 4 * self.base_width, self.n_private_res);
        l.extend(back_layers(self.base_width));
        l
    }

    pub fn latent_channels(&self) -> usize {
        4 * self.base_width
    }
}

/// Latent posterior sample: unit-variance Gaussian around a learned mean.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<T: Element = f32> {
    pub mean: Tensor<T>,
    pub sample: Tensor<T>,
}

/// Standard normal noise with the shape of `like`, from `seed`.
pub fn latent_noise<T: Element>(shape: &[usize], seed: u64) -> Tensor<T> {
    Tensor::randn(shape.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Tape handles for the encoder/decoder parameter groups.
pub struct UnitBound {
    pub enc_x: Bound,
    pub enc_y: Bound,
    pub shared_enc: Bound,
    pub shared_dec: Bound,
    pub dec_x: Bound,
    pub dec_y: Bound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitModel<T: Element = f32> {
    config: UnitConfig,
    enc_layers: Vec<Layer>,
    shared_enc_layers: Vec<Layer>,
    shared_dec_layers: Vec<Layer>,
    dec_layers: Vec<Layer>,
    pub enc_x: ParamSet<T>,
    pub enc_y: ParamSet<T>,
    pub shared_enc: ParamSet<T>,
    pub shared_dec: ParamSet<T>,
    pub dec_x: ParamSet<T>,
    pub dec_y: ParamSet<T>,
    pub d_x: PatchDiscriminator<T>,
    pub d_y: PatchDiscriminator<T>,
}

/// Names of the parameter groups, in checkpoint order.
pub const UNIT_GROUPS: [&str; 8] = [
    "enc_x",
    "enc_y",
    "shared_enc",
    "shared_dec",
    "dec_x",
    "dec_y",
    "d_x",
    "d_y",
];

impl<T: Element> UnitModel<T> {
    pub fn build(config: UnitConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_layers = config.encoder_layers();
        let shared_enc_layers = config.shared_encoder_layers();
        let shared_dec_layers = config.shared_decoder_layers();
        let dec_layers = config.decoder_layers();
        let enc_x = init_params(&enc_layers, &mut rng);
        let enc_y = init_params(&enc_layers, &mut rng);
        let shared_enc = init_params(&shared_enc_layers, &mut rng);
        let shared_dec = init_params(&shared_dec_layers, &mut rng);
        let dec_x = init_params(&dec_layers, &mut rng);
        let dec_y = init_params(&dec_layers, &mut rng);
        let d_x = PatchDiscriminator::build(config.discriminator, seed.wrapping_add(1));
        let d_y = PatchDiscriminator::build(config.discriminator, seed.wrapping_add(2));
        Self {
            config,
            enc_layers,
            shared_enc_layers,
            shared_dec_layers,
            dec_layers,
            enc_x,
            enc_y,
            shared_enc,
            shared_dec,
            dec_x,
            dec_y,
            d_x,
            d_y,
        }
    }

    /// Rebuilds a model from named groups (see [`UNIT_GROUPS`]).
    pub fn from_groups(config: UnitConfig, mut groups: Vec<(String, ParamSet<T>)>) -> Result<Self> {
        let mut model = Self::build(config, 0);
        for name in UNIT_GROUPS {
            let pos = groups
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::InvalidArgument(format!("UNIT model is missing group `{name}`")))?;
            let (_, params) = groups.swap_remove(pos);
            let slot = model.group_mut(name).expect("known group");
            params.check_layout(slot, name)?;
            *slot = params;
        }
        Ok(model)
    }

    pub fn config(&self) -> &UnitConfig {
        &self.config
    }

    pub fn group(&self, name: &str) -> Option<&ParamSet<T>> {
        Some(match name {
            "enc_x" => &self.enc_x,
            "enc_y" => &self.enc_y,
            "shared_enc" => &self.shared_enc,
            "shared_dec" => &self.shared_dec,
            "dec_x" => &self.dec_x,
            "dec_y" => &self.dec_y,
            "d_x" => self.d_x.params(),
            "d_y" => self.d_y.params(),
            _ => return None,
        })
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParamSet<T>> {
        Some(match name {
            "enc_x" => &mut self.enc_x,
            "enc_y" => &mut self.enc_y,
            "shared_enc" => &mut self.shared_enc,
            "shared_dec" => &mut self.shared_dec,
            "dec_x" => &mut self.dec_x,
            "dec_y" => &mut self.dec_y,
            "d_x" => self.d_x.params_mut(),
            "d_y" => self.d_y.params_mut(),
            _ => return None,
        })
    }

    pub fn cast<U: Element>(&self) -> UnitModel<U> {
        UnitModel {
            config: self.config,
            enc_layers: self.enc_layers.clone(),
            shared_enc_layers: self.shared_enc_layers.clone(),
            shared_dec_layers: self.shared_dec_layers.clone(),
            dec_layers: self.dec_layers.clone(),
            enc_x: self.enc_x.cast(),
            enc_y: self.enc_y.cast(),
            shared_enc: self.shared_enc.cast(),
            shared_dec: self.shared_dec.cast(),
            dec_x: self.dec_x.cast(),
            dec_y: self.dec_y.cast(),
            d_x: self.d_x.cast(),
            d_y: self.d_y.cast(),
        }
    }

    /// All tensors the encoder of `domain` reads, private then shared.
    pub fn encoder_view(&self, domain: Domain) -> Vec<(String, &Tensor<T>)> {
        let private = match domain {
            Domain::X => &self.enc_x,
            Domain::Y => &self.enc_y,
        };
        view(private, &self.shared_enc)
    }

    pub fn encoder_view_mut(&mut self, domain: Domain) -> Vec<(String, &mut Tensor<T>)> {
        let private = match domain {
            Domain::X => &mut self.enc_x,
            Domain::Y => &mut self.enc_y,
        };
        view_mut(private, &mut self.shared_enc)
    }

    /// All tensors the decoder of `domain` reads, shared then private.
    pub fn decoder_view(&self, domain: Domain) -> Vec<(String, &Tensor<T>)> {
        let private = match domain {
            Domain::X => &self.dec_x,
            Domain::Y => &self.dec_y,
        };
        view(private, &self.shared_dec)
    }

    pub fn decoder_view_mut(&mut self, domain: Domain) -> Vec<(String, &mut Tensor<T>)> {
        let private = match domain {
            Domain::X => &mut self.dec_x,
            Domain::Y => &mut self.dec_y,
        };
        view_mut(private, &mut self.shared_dec)
    }

    pub fn discriminator(&self, domain: Domain) -> &PatchDiscriminator<T> {
        match domain {
            Domain::X => &self.d_x,
            Domain::Y => &self.d_y,
        }
    }

    pub fn bind_autoencoders(&self, tape: &mut Tape<T>, trainable: bool) -> UnitBound {
        UnitBound {
            enc_x: self.enc_x.bind(tape, trainable),
            enc_y: self.enc_y.bind(tape, trainable),
            shared_enc: self.shared_enc.bind(tape, trainable),
            shared_dec: self.shared_dec.bind(tape, trainable),
            dec_x: self.dec_x.bind(tape, trainable),
            dec_y: self.dec_y.bind(tape, trainable),
        }
    }

    /// Latent mean of `x` under the encoder of `domain`.
    pub fn encode_var(&self, tape: &mut Tape<T>, b: &UnitBound, x: Var, domain: Domain) -> Result<Var> {
        check_image_input(tape.shape(x), "unit_encode")?;
        let private = match domain {
            Domain::X => &b.enc_x,
            Domain::Y => &b.enc_y,
        };
        let h = forward_layers(tape, private, &self.enc_layers, x)?;
        forward_layers(tape, &b.shared_enc, &self.shared_enc_layers, h)
    }

    pub fn decode_var(&self, tape: &mut Tape<T>, b: &UnitBound, z: Var, domain: Domain) -> Result<Var> {
        let (_, c, _, _) = tape.value(z).dims4()?;
        if c != self.config.latent_channels() {
            return Err(Error::shape(
                "unit_decode",
                format!("latent has {c} channels, expected {}", self.config.latent_channels()),
            ));
        }
        let h = forward_layers(tape, &b.shared_dec, &self.shared_dec_layers, z)?;
        let private = match domain {
            Domain::X => &b.dec_x,
            Domain::Y => &b.dec_y,
        };
        forward_layers(tape, private, &self.dec_layers, h)
    }

    pub fn encode(&self, img: &Tensor<T>, domain: Domain, noise_seed: u64) -> Result<LatentCode<T>> {
        let mut tape = Tape::new();
        let b = self.bind_autoencoders(&mut tape, false);
        let x = tape.constant(img.clone());
        let m = self.encode_var(&mut tape, &b, x, domain)?;
        let mean = tape.value(m).clone();
        let noise = latent_noise(mean.shape(), noise_seed);
        let sample = mean.zip_map(&noise, |a, b| a + b)?;
        Ok(LatentCode { mean, sample })
    }

    /// Decodes `z.sample` into `domain`.
    pub fn decode(&self, z: &LatentCode<T>, domain: Domain) -> Result<Tensor<T>> {
        self.decode_tensor(&z.sample, domain)
    }

    pub fn decode_tensor(&self, z: &Tensor<T>, domain: Domain) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let b = self.bind_autoencoders(&mut tape, false);
        let zv = tape.constant(z.clone());
        let y = self.decode_var(&mut tape, &b, zv, domain)?;
        Ok(tape.value(y).clone())
    }

    /// Deterministic translation out of `from`: decode the latent mean with
    /// the other domain's decoder.
    pub fn translate(&self, img: &Tensor<T>, from: Domain) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let b = self.bind_autoencoders(&mut tape, false);
        let x = tape.constant(img.clone());
        let z = self.encode_var(&mut tape, &b, x, from)?;
        let y = self.decode_var(&mut tape, &b, z, from.other())?;
        Ok(tape.value(y).clone())
    }
}

fn view<'a, T: Element>(private: &'a ParamSet<T>, shared: &'a ParamSet<T>) -> Vec<(String, &'a Tensor<T>)> {
    private
        .iter()
        .map(|(k, v)| (format!("private.{k}"), v))
        .chain(shared.iter().map(|(k, v)| (format!("shared.{k}"), v)))
        .collect()
}

fn view_mut<'a, T: Element>(
    private: &'a mut ParamSet<T>,
    shared: &'a mut ParamSet<T>,
) -> Vec<(String, &'a mut Tensor<T>)> {
    private
        .iter_mut()
        .map(|(k, v)| (format!("private.{k}"), v))
        .chain(shared.iter_mut().map(|(k, v)| (format!("shared.{k}"), v)))
        .collect()
}
