//! Training objectives. Each function records its computation on a tape and
//! returns the scalar loss node.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Experiment presets. Black-and-white targets need no colour constancy, so
/// their identity weight is a tenth of the colour preset's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    BwIcons,
    ColorLogos,
    PersonOnly,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::BwIcons, Preset::ColorLogos, Preset::PersonOnly];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BwIcons => "bw-icons",
            Preset::ColorLogos => "color-logos",
            Preset::PersonOnly => "person-only",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{s}`")))
    }
}

pub const LAMBDA_CYC: f64 = 10.0;
pub const LAMBDA_IDT_COLOR: f64 = 5.0;
pub const LAMBDA_IDT_WEAK: f64 = 0.5;
pub const LAMBDA_KL: f64 = 0.1;
pub const LAMBDA_REC: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    /// Absolute identity weight; 0 disables the identity term entirely.
    pub lambda_idt: f64,
    pub lambda_kl: f64,
    pub lambda_rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::preset(Preset::ColorLogos)
    }
}

impl LossWeights {
    pub fn preset(preset: Preset) -> Self {
        let lambda_idt = match preset {
            Preset::ColorLogos => LAMBDA_IDT_COLOR,
            Preset::BwIcons | Preset::PersonOnly => LAMBDA_IDT_WEAK,
        };
        Self {
            lambda_cyc: LAMBDA_CYC,
            lambda_idt,
            lambda_kl: LAMBDA_KL,
            lambda_rec: LAMBDA_REC,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_idt", self.lambda_idt),
            ("lambda_kl", self.lambda_kl),
            ("lambda_rec", self.lambda_rec),
        ];
        let bad: Vec<String> = fields
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(k, v)| format!("{k} must be finite and >= 0, got {v}"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn identity_enabled(&self) -> bool {
        self.lambda_idt > 0.0
    }
}

/// Least-squares adversarial loss `mean((D − t)²)` with `t = 1` for real and
/// `t = 0` for fake. The generator side passes `target_real = true` on its
/// fakes.
pub fn adversarial_loss<T: Element>(tape: &mut Tape<T>, patch_map: Var, target_real: bool) -> Result<Var> {
    let t = if target_real { T::one() } else { T::zero() };
    let target = tape.constant(Tensor::full(tape.shape(patch_map).to_vec(), t));
    tape.mse(patch_map, target)
}

/// L1 between an image and its round trip through both generators.
pub fn cycle_loss<T: Element>(tape: &mut Tape<T>, original: Var, reconstructed: Var) -> Result<Var> {
    tape.l1(original, reconstructed)
}

/// L1 between a target-domain image and the generator's output on it.
pub fn identity_loss<T: Element>(tape: &mut Tape<T>, y: Var, g_of_y: Var) -> Result<Var> {
    tape.l1(y, g_of_y)
}

/// Weighted VAE terms of one domain.
#[derive(Clone, Copy, Debug)]
pub struct VaeTerms {
    /// `lambda_kl · ½·mean(μ²)`.
    pub kl: Var,
    /// `lambda_rec · L1(x, x̂)`.
    pub rec: Var,
    pub total: Var,
}

/// KL of `N(μ, I)` against `N(0, I)` (per element, averaged) is `½·mean(μ²)`.
pub fn latent_kl<T: Element>(tape: &mut Tape<T>, z_mean: Var) -> Result<Var> {
    let zeros = tape.constant(Tensor::zeros(tape.shape(z_mean).to_vec()));
    let sq = tape.mse(z_mean, zeros)?;
    tape.scale(sq, 0.5)
}

pub fn unit_vae_terms<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    z_mean: Var,
    x_rec: Var,
    weights: &LossWeights,
) -> Result<VaeTerms> {
    let kl = latent_kl(tape, z_mean)?;
    let kl = tape.scale(kl, weights.lambda_kl)?;
    let rec = tape.l1(x, x_rec)?;
    let rec = tape.scale(rec, weights.lambda_rec)?;
    let total = tape.add(kl, rec)?;
    Ok(VaeTerms { kl, rec, total })
}

pub fn unit_vae_loss<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    z_mean: Var,
    x_rec: Var,
    weights: &LossWeights,
) -> Result<Var> {
    Ok(unit_vae_terms(tape, x, z_mean, x_rec, weights)?.total)
}
