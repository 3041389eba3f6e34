//! Shared inputs for the benchmarks.

use iconify::dataset::{synthetic_shapes, to_tensor};
use iconify::nn::{DiscriminatorConfig, GeneratorConfig};
use iconify::training::CycleGanConfig;
use iconify::Tensor;

/// Deterministic values in [-1, 1).
pub fn ramp(shape: &[usize]) -> Tensor<f32> {
    Tensor::from_fn(shape.to_vec(), |i| ((i * 7919) % 2000) as f32 / 1000.0 - 1.0)
}

/// The network sizes of the bundled smoke configuration.
pub fn smoke_config() -> CycleGanConfig {
    CycleGanConfig {
        generator: GeneratorConfig {
            base_width: 8,
            n_res_blocks: 2,
        },
        discriminator: DiscriminatorConfig {
            base_width: 8,
            n_strided: 3,
        },
        ..CycleGanConfig::default()
    }
}

/// One square and one circle as `1×3×size×size` batches.
pub fn shape_pair(size: u32) -> (Tensor<f32>, Tensor<f32>) {
    let (sq, ci) = synthetic_shapes(1, size, 0);
    let s = size as usize;
    let to = |im| to_tensor::<f32>(im).reshape([1, 3, s, s]).expect("3xHxW image");
    (to(&sq[0]), to(&ci[0]))
}
