use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{CheckpointFile, ModelKind};
use super::cyclegan::{cyclegan_train_step, reconstruct, CycleGanConfig, CycleGanModel, Direction};
use super::report::{LossLog, LossReport};
use super::schedule::StageSchedule;
use super::unit_step::{unit_train_step, UnitTrainConfig, UnitTrainer};
use crate::dataset::{sample_unpaired_batch, stage_resize, DomainDataset};
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::nn::{
    DiscriminatorConfig, Domain, GeneratorConfig, GeneratorNet, ParamSet, PatchDiscriminator, UnitConfig, UnitModel,
    UNIT_GROUPS,
};
use crate::optim::{lr_schedule, AdamConfig, AdamState, ImagePool};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum Model {
    CycleGan(Box<CycleGanModel>),
    Unit(Box<UnitTrainer>),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::CycleGan(_) => ModelKind::CycleGan,
            Model::Unit(_) => ModelKind::Unit,
        }
    }

    fn set_lr(&mut self, lr: f64) {
        match self {
            Model::CycleGan(m) => m.set_lr(lr),
            Model::Unit(t) => t.set_lr(lr),
        }
    }

    fn base_lr(&self) -> f64 {
        match self {
            Model::CycleGan(m) => m.config.adam.lr,
            Model::Unit(t) => t.config.adam.lr,
        }
    }

    fn on_stage_change(&mut self) {
        if let Model::CycleGan(m) = self {
            m.on_stage_change();
        }
    }

    /// Parameter sets by network or group name.
    pub fn param_groups(&self) -> Vec<(&'static str, &ParamSet<f32>)> {
        match self {
            Model::CycleGan(m) => vec![
                ("g_xy", m.g_xy.params()),
                ("g_yx", m.g_yx.params()),
                ("d_x", m.d_x.params()),
                ("d_y", m.d_y.params()),
            ],
            Model::Unit(t) => UNIT_GROUPS
                .iter()
                .map(|g| (*g, t.model.group(g).expect("known group")))
                .collect(),
        }
    }

    /// `(translated, round trip)` for a `1×3×H×W` image. UNIT translates
    /// through the latent mean, so both model kinds are deterministic.
    pub fn reconstruct(
        &self,
        img: &Tensor<f32>,
        direction: Direction,
        trained: &[usize],
    ) -> Result<(Tensor<f32>, Tensor<f32>)> {
        match self {
            Model::CycleGan(m) => reconstruct(m, img, direction, trained),
            Model::Unit(t) => {
                let from = match direction {
                    Direction::PhotoToIcon => Domain::X,
                    Direction::IconToPhoto => Domain::Y,
                };
                let translated = t.model.translate(img, from)?;
                let cycled = t.model.translate(&translated, from.other())?;
                Ok((translated, cycled))
            }
        }
    }

    /// Every parameter tensor, prefixed by its network or group name.
    pub fn parameters(&self) -> Vec<(String, &Tensor<f32>)> {
        self.param_groups()
            .into_iter()
            .flat_map(|(g, p)| p.iter().map(move |(k, v)| (format!("{g}.{k}"), v)))
            .collect()
    }
}

/// Where training stands: stage index, iterations done within it, and
/// steps done overall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Position {
    pub stage_index: usize,
    pub stage_iter: u64,
    pub global_step: u64,
}

/// A model plus everything needed to continue training it exactly.
#[derive(Clone, Debug)]
pub struct Session {
    pub model: Model,
    pub schedule: StageSchedule,
    pub batch_size: usize,
    pub position: Position,
    data_rng: ChaCha8Rng,
}

impl Session {
    pub fn new(model: Model, schedule: StageSchedule, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(Self {
            model,
            schedule,
            batch_size,
            position: Position::default(),
            data_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(100)),
        })
    }

    pub fn cyclegan(config: CycleGanConfig, schedule: StageSchedule, batch_size: usize, seed: u64) -> Result<Self> {
        let model = CycleGanModel::build(config, seed)?;
        Self::new(Model::CycleGan(Box::new(model)), schedule, batch_size, seed)
    }

    pub fn unit(config: UnitTrainConfig, schedule: StageSchedule, batch_size: usize, seed: u64) -> Result<Self> {
        let trainer = UnitTrainer::new(config, seed);
        Self::new(Model::Unit(Box::new(trainer)), schedule, batch_size, seed)
    }

    pub fn current_resolution(&self) -> Option<usize> {
        self.schedule.stages().get(self.position.stage_index).map(|s| s.0)
    }

    /// Resolutions of stages with at least one completed iteration.
    pub fn trained_resolutions(&self) -> Vec<usize> {
        let p = self.position;
        let done = p.stage_index + usize::from(p.stage_iter > 0);
        self.schedule.stages().iter().take(done).map(|s| s.0).collect()
    }

    pub fn is_finished(&self) -> bool {
        self.position.stage_index >= self.schedule.len()
    }

    /// One scheduled step on datasets already at the stage resolution.
    pub fn step(&mut self, x: &DomainDataset, y: &DomainDataset, weights: &LossWeights) -> Result<LossReport> {
        let lr = lr_schedule(
            self.position.global_step,
            self.schedule.total_iterations(),
            self.model.base_lr(),
        )?;
        self.model.set_lr(lr);
        let (xb, yb) = sample_unpaired_batch(x, y, self.batch_size, &mut self.data_rng)?;
        let report = match &mut self.model {
            Model::CycleGan(m) => cyclegan_train_step(m, &xb, &yb, weights)?,
            Model::Unit(t) => unit_train_step(t, &xb, &yb, weights)?,
        };
        self.position.global_step += 1;
        self.position.stage_iter += 1;
        Ok(report)
    }

    pub fn to_checkpoint(&self) -> CheckpointFile {
        let mut f = CheckpointFile::new(self.model.kind());
        let stages: Vec<u64> = self
            .schedule
            .stages()
            .iter()
            .flat_map(|&(r, i)| [r as u64, i])
            .collect();
        f.put_u64s("session.schedule", &stages);
        let p = self.position;
        f.put_u64s(
            "session.position",
            &[
                p.stage_index as u64,
                p.stage_iter,
                p.global_step,
                self.batch_size as u64,
            ],
        );
        f.put_rng("session.data_rng", &self.data_rng);
        match &self.model {
            Model::CycleGan(m) => {
                let c = &m.config;
                f.put_u64s(
                    "meta.arch",
                    &[
                        c.generator.base_width as u64,
                        c.generator.n_res_blocks as u64,
                        c.discriminator.base_width as u64,
                        c.discriminator.n_strided as u64,
                        c.pool_capacity as u64,
                    ],
                );
                put_adam_config(&mut f, &c.adam);
                let nets: [(&str, &ParamSet<f32>, &AdamState<f32>); 4] = [
                    ("g_xy", m.g_xy.params(), &m.adam_g_xy),
                    ("g_yx", m.g_yx.params(), &m.adam_g_yx),
                    ("d_x", m.d_x.params(), &m.adam_d_x),
                    ("d_y", m.d_y.params(), &m.adam_d_y),
                ];
                for (name, params, adam) in nets {
                    put_params(&mut f, name, params);
                    put_adam(&mut f, name, adam);
                }
                for (name, pool) in [("x", &m.pool_x), ("y", &m.pool_y)] {
                    f.put_u64s(format!("pool.{name}.len"), &[pool.len() as u64]);
                    f.put_rng(format!("pool.{name}.rng"), pool.rng());
                    for (i, img) in pool.images().iter().enumerate() {
                        f.put_tensor(format!("pool.{name}.{i:03}"), img);
                    }
                }
            }
            Model::Unit(t) => {
                let c = &t.config.unit;
                f.put_u64s(
                    "meta.arch",
                    &[
                        c.base_width as u64,
                        c.n_private_res as u64,
                        c.discriminator.base_width as u64,
                        c.discriminator.n_strided as u64,
                    ],
                );
                put_adam_config(&mut f, &t.config.adam);
                for (i, g) in UNIT_GROUPS.iter().enumerate() {
                    put_params(&mut f, g, t.model.group(g).expect("known group"));
                    put_adam(&mut f, g, &t.adam[i]);
                }
                f.put_rng("unit.noise_rng", &t.noise_rng);
            }
        }
        f
    }

    pub fn from_checkpoint(f: &CheckpointFile) -> Result<Self> {
        let flat = f.u64s("session.schedule")?;
        let stages = flat.chunks_exact(2).map(|c| (c[0] as usize, c[1])).collect();
        let schedule = StageSchedule::new(stages)?;
        let pos = fixed::<4>(&f.u64s("session.position")?, "session.position")?;
        let arch = f.u64s("meta.arch")?;
        let adam_cfg = read_adam_config(f)?;
        let model = match f.kind {
            super::ModelKind::CycleGan => {
                let a = fixed::<5>(&arch, "meta.arch")?;
                let config = CycleGanConfig {
                    generator: GeneratorConfig {
                        base_width: a[0] as usize,
                        n_res_blocks: a[1] as usize,
                    },
                    discriminator: DiscriminatorConfig {
                        base_width: a[2] as usize,
                        n_strided: a[3] as usize,
                    },
                    adam: adam_cfg,
                    pool_capacity: a[4] as usize,
                };
                let g_xy = GeneratorNet::from_params(config.generator, read_params(f, "g_xy")?)?;
                let g_yx = GeneratorNet::from_params(config.generator, read_params(f, "g_yx")?)?;
                let d_x = PatchDiscriminator::from_params(config.discriminator, read_params(f, "d_x")?)?;
                let d_y = PatchDiscriminator::from_params(config.discriminator, read_params(f, "d_y")?)?;
                let mut m = CycleGanModel::assemble(config, g_xy, g_yx, d_x, d_y, 0);
                m.adam_g_xy = read_adam(f, "g_xy", config.adam, m.g_xy.params())?;
                m.adam_g_yx = read_adam(f, "g_yx", config.adam, m.g_yx.params())?;
                m.adam_d_x = read_adam(f, "d_x", config.adam, m.d_x.params())?;
                m.adam_d_y = read_adam(f, "d_y", config.adam, m.d_y.params())?;
                m.pool_x = read_pool(f, "x", config.pool_capacity)?;
                m.pool_y = read_pool(f, "y", config.pool_capacity)?;
                Model::CycleGan(Box::new(m))
            }
            super::ModelKind::Unit => {
                let a = fixed::<4>(&arch, "meta.arch")?;
                let unit = UnitConfig {
                    base_width: a[0] as usize,
                    n_private_res: a[1] as usize,
                    discriminator: DiscriminatorConfig {
                        base_width: a[2] as usize,
                        n_strided: a[3] as usize,
                    },
                };
                let groups = UNIT_GROUPS
                    .iter()
                    .map(|g| Ok((g.to_string(), read_params(f, g)?)))
                    .collect::<Result<Vec<_>>>()?;
                let model = UnitModel::from_groups(unit, groups)?;
                let config = UnitTrainConfig { unit, adam: adam_cfg };
                let mut t = UnitTrainer::from_model(config, model, 0);
                for (i, g) in UNIT_GROUPS.iter().enumerate() {
                    t.adam[i] = read_adam(f, g, adam_cfg, t.model.group(g).expect("known group"))?;
                }
                t.noise_rng = f.rng("unit.noise_rng")?;
                Model::Unit(Box::new(t))
            }
        };
        Ok(Self {
            model,
            schedule,
            batch_size: pos[3] as usize,
            position: Position {
                stage_index: pos[0] as usize,
                stage_iter: pos[1],
                global_step: pos[2],
            },
            data_rng: f.rng("session.data_rng")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    /// Reads and fully validates a checkpoint; nothing is modified on error.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&CheckpointFile::read(path)?)
    }

    /// Replaces `self` with the checkpoint at `path`, or leaves it untouched
    /// on any error.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        *self = Self::load(path)?;
        Ok(())
    }
}

fn fixed<const N: usize>(v: &[u64], name: &str) -> Result<[u64; N]> {
    v.try_into()
        .map_err(|_| Error::CheckpointMismatch(format!("record `{name}` has {} values, expected {N}", v.len())))
}

fn put_params(f: &mut CheckpointFile, prefix: &str, params: &ParamSet<f32>) {
    f.put_u64s(format!("{prefix}.#count"), &[params.len() as u64]);
    for (k, v) in params.iter() {
        f.put_tensor(format!("{prefix}.{k}"), v);
    }
}

fn read_params(f: &CheckpointFile, prefix: &str) -> Result<ParamSet<f32>> {
    let head = format!("{prefix}.");
    let mut p = ParamSet::new();
    for name in f.names() {
        if let Some(rest) = name.strip_prefix(&head) {
            if !rest.starts_with('#') {
                p.insert(rest, f.tensor(name)?);
            }
        }
    }
    let count = f.u64s(&format!("{prefix}.#count"))?;
    if count != [p.len() as u64] {
        return Err(Error::CheckpointMismatch(format!("`{prefix}` parameter count differs")));
    }
    Ok(p)
}

fn put_adam_config(f: &mut CheckpointFile, c: &AdamConfig) {
    f.put_f64s("meta.adam", &[c.lr, c.beta1, c.beta2, c.eps]);
}

fn read_adam_config(f: &CheckpointFile) -> Result<AdamConfig> {
    let v = f.f64s("meta.adam")?;
    let [lr, beta1, beta2, eps] = v[..]
        .try_into()
        .map_err(|_| Error::CheckpointMismatch("record `meta.adam` malformed".into()))?;
    Ok(AdamConfig { lr, beta1, beta2, eps })
}

fn put_adam(f: &mut CheckpointFile, prefix: &str, s: &AdamState<f32>) {
    f.put_u64s(format!("adam.{prefix}.step"), &[s.step]);
    f.put_f64s(format!("adam.{prefix}.lr"), &[s.lr]);
    for (k, (m, v)) in &s.moments {
        f.put_tensor(format!("adam.{prefix}.m.{k}"), m);
        f.put_tensor(format!("adam.{prefix}.v.{k}"), v);
    }
}

fn read_adam(f: &CheckpointFile, prefix: &str, config: AdamConfig, params: &ParamSet<f32>) -> Result<AdamState<f32>> {
    let mut s = AdamState::new(config, params);
    s.step = fixed::<1>(&f.u64s(&format!("adam.{prefix}.step"))?, "adam step")?[0];
    s.lr = f
        .f64s(&format!("adam.{prefix}.lr"))?
        .first()
        .copied()
        .unwrap_or(config.lr);
    for (k, (m, v)) in s.moments.iter_mut() {
        let mm = f.tensor(&format!("adam.{prefix}.m.{k}"))?;
        let vv = f.tensor(&format!("adam.{prefix}.v.{k}"))?;
        if mm.shape() != m.shape() || vv.shape() != v.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "optimizer state for `{prefix}.{k}` has wrong shape"
            )));
        }
        *m = mm;
        *v = vv;
    }
    Ok(s)
}

fn read_pool(f: &CheckpointFile, name: &str, capacity: usize) -> Result<ImagePool<f32>> {
    let len = fixed::<1>(&f.u64s(&format!("pool.{name}.len"))?, "pool length")?[0] as usize;
    let images = (0..len)
        .map(|i| f.tensor(&format!("pool.{name}.{i:03}")))
        .collect::<Result<Vec<_>>>()?;
    let mut pool = ImagePool::new(capacity, 0);
    pool.restore(images, f.rng(&format!("pool.{name}.rng"))?);
    Ok(pool)
}

/// Callbacks of [`run_coarse_to_fine`].
pub trait TrainObserver {
    fn on_stage_start(&mut self, _stage: usize, _resolution: usize, _session: &Session) -> Result<()> {
        Ok(())
    }

    /// `step` is 1-based and global across stages.
    fn on_step(&mut self, step: u64, resolution: usize, report: &LossReport) -> Result<()>;

    fn on_stage_end(&mut self, stage: usize, resolution: usize, session: &Session) -> Result<()>;

    /// Polled after every step and stage end; `true` pauses the run with the
    /// session left resumable.
    fn should_stop(&self, _session: &Session) -> bool {
        false
    }
}

/// Trains every remaining stage of `session.schedule`: resize the native
/// datasets, run the stage's iterations, notify the observer. Parameters
/// carry over between stages untouched; the fake-image pools are emptied.
pub fn run_coarse_to_fine(
    session: &mut Session,
    x_native: &DomainDataset,
    y_native: &DomainDataset,
    weights: &LossWeights,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    weights.validate()?;
    while !session.is_finished() {
        let stage = session.position.stage_index;
        let (res, iters) = session.schedule.stages()[stage];
        if session.position.stage_iter >= iters {
            session.position.stage_index += 1;
            session.position.stage_iter = 0;
            continue;
        }
        if session.position.stage_iter == 0 && stage > 0 {
            session.model.on_stage_change();
        }
        let xs = stage_resize(x_native, res)?;
        let ys = stage_resize(y_native, res)?;
        info!(
            "stage {stage}: {res}x{res}, iterations {}..{iters}",
            session.position.stage_iter
        );
        observer.on_stage_start(stage, res, session)?;
        while session.position.stage_iter < iters {
            let report = session.step(&xs, &ys, weights)?;
            observer.on_step(session.position.global_step, res, &report)?;
            if session.position.stage_iter < iters && observer.should_stop(session) {
                return Ok(());
            }
        }
        observer.on_stage_end(stage, res, session)?;
        session.position.stage_index += 1;
        session.position.stage_iter = 0;
        if observer.should_stop(session) {
            return Ok(());
        }
    }
    Ok(())
}

/// File name of the checkpoint written at the end of the stage at
/// `resolution`.
pub fn stage_checkpoint_name(resolution: usize) -> String {
    format!("stage-{resolution}.ckpt")
}

pub const LOSS_LOG_FILE: &str = "loss.log";

/// Observer writing the loss log and per-stage checkpoints into a directory.
pub struct RunDirectory {
    dir: PathBuf,
    log: LossLog,
    pub checkpoints: Vec<PathBuf>,
    /// Pause once the global step reaches this value.
    pub pause_at: Option<u64>,
}

impl RunDirectory {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            log: LossLog::create(&dir.join(LOSS_LOG_FILE))?,
            checkpoints: Vec::new(),
            pause_at: None,
        })
    }

    /// Continues a run: the log keeps lines up to the session's step.
    pub fn resume(dir: &Path, session: &Session) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            log: LossLog::resume(&dir.join(LOSS_LOG_FILE), session.position.global_step)?,
            checkpoints: Vec::new(),
            pause_at: None,
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOSS_LOG_FILE)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.log.flush()
    }
}

impl TrainObserver for RunDirectory {
    fn on_step(&mut self, step: u64, resolution: usize, report: &LossReport) -> Result<()> {
        self.log.append(step, resolution, report)
    }

    fn on_stage_end(&mut self, _stage: usize, resolution: usize, session: &Session) -> Result<()> {
        self.log.flush()?;
        let path = self.dir.join(stage_checkpoint_name(resolution));
        session.save(&path)?;
        info!("wrote {}", path.display());
        self.checkpoints.push(path);
        Ok(())
    }

    fn should_stop(&self, session: &Session) -> bool {
        self.pause_at.is_some_and(|n| session.position.global_step >= n)
    }
}
