//! Network definitions: the CycleGAN generator, the PatchGAN discriminator
//! and the UNIT encoder/decoder pairs.

mod discriminator;
mod generator;
pub mod layers;
mod params;
mod unit;

pub use discriminator::{discriminator_layers, DiscriminatorConfig, PatchDiscriminator, LEAKY_SLOPE};
pub use generator::{generator_layers, GeneratorConfig, GeneratorNet};
pub use layers::Layer;
pub use params::{Bound, ParamSet};
pub use unit::{latent_noise, Domain, LatentCode, UnitBound, UnitConfig, UnitModel, UNIT_GROUPS};
