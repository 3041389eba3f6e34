//! CycleGAN and UNIT optimization, the coarse-to-fine schedule,
//! checkpointing and inference.

mod checkpoint;
mod cyclegan;
mod report;
mod schedule;
mod session;
mod unit_step;

pub use checkpoint::{checksum, CheckpointFile, ModelKind, FORMAT_VERSION, MAGIC};
pub use cyclegan::{
    convert, cyclegan_train_step, discriminator_objective, reconstruct, CycleGanBound, CycleGanConfig, CycleGanModel,
    Direction, GeneratorTerms, CYCLEGAN_TERMS, IDENTITY_SCOPE,
};
pub use report::{LogLine, LossLog, LossReport};
pub use schedule::{StageSchedule, DEFAULT_STAGE_FRACTIONS};
pub use session::{
    run_coarse_to_fine, stage_checkpoint_name, Model, Position, RunDirectory, Session, TrainObserver, LOSS_LOG_FILE,
};
pub use unit_step::{unit_train_step, UnitTrainConfig, UnitTrainer, UNIT_TERMS};
