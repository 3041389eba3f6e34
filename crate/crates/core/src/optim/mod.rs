//! Parameter updates: Adam, the learning-rate schedule and the generated
//! image history pool.

mod adam;
mod pool;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use pool::{ImagePool, DEFAULT_POOL_CAPACITY};
pub use schedule::lr_schedule;
