use log::warn;

use super::report::LossReport;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::loss::{adversarial_loss, cycle_loss, identity_loss, LossWeights};
use crate::nn::{Bound, DiscriminatorConfig, GeneratorConfig, GeneratorNet, PatchDiscriminator};
use crate::optim::{adam_step, AdamConfig, AdamState, ImagePool, DEFAULT_POOL_CAPACITY};
use crate::tensor::{Element, Tensor};

pub const IDENTITY_SCOPE: &str = "identity";

/// Term names of a CycleGAN loss report, in report order.
pub const CYCLEGAN_TERMS: [&str; 8] = ["gan_g", "gan_f", "cyc_x", "cyc_y", "idt_x", "idt_y", "d_x", "d_y"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleGanConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub adam: AdamConfig,
    pub pool_capacity: usize,
}

impl Default for CycleGanConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            adam: AdamConfig::default(),
            pool_capacity: DEFAULT_POOL_CAPACITY,
        }
    }
}

/// Translation direction for inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// X → Y through `g_xy`.
    PhotoToIcon,
    /// Y → X through `g_yx`.
    IconToPhoto,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::PhotoToIcon => Direction::IconToPhoto,
            Direction::IconToPhoto => Direction::PhotoToIcon,
        }
    }
}

/// Two generators (`g_xy`: X→Y, `g_yx`: Y→X), two patch discriminators,
/// their fake-image pools and one Adam state per network.
#[derive(Clone, Debug)]
pub struct CycleGanModel<T: Element = f32> {
    pub config: CycleGanConfig,
    pub g_xy: GeneratorNet<T>,
    pub g_yx: GeneratorNet<T>,
    /// Judges X images; trained on real X and pooled `g_yx` fakes.
    pub d_x: PatchDiscriminator<T>,
    pub d_y: PatchDiscriminator<T>,
    pub pool_x: ImagePool<T>,
    pub pool_y: ImagePool<T>,
    pub adam_g_xy: AdamState<T>,
    pub adam_g_yx: AdamState<T>,
    pub adam_d_x: AdamState<T>,
    pub adam_d_y: AdamState<T>,
}

/// Tape bindings of all four networks.
pub struct CycleGanBound {
    pub g_xy: Bound,
    pub g_yx: Bound,
    pub d_x: Bound,
    pub d_y: Bound,
}

/// Nodes of the composed generator objective.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub gan_g: Var,
    pub gan_f: Var,
    pub cyc_x: Var,
    pub cyc_y: Var,
    pub idt_x: Option<Var>,
    pub idt_y: Option<Var>,
    pub total: Var,
    pub fake_x: Var,
    pub fake_y: Var,
}

impl<T: Element> CycleGanModel<T> {
    pub fn build(config: CycleGanConfig, seed: u64) -> Result<Self> {
        let g_xy = GeneratorNet::build(config.generator, 4, seed)?;
        let g_yx = GeneratorNet::build(config.generator, 4, seed.wrapping_add(1))?;
        let d_x = PatchDiscriminator::build(config.discriminator, seed.wrapping_add(2));
        let d_y = PatchDiscriminator::build(config.discriminator, seed.wrapping_add(3));
        Ok(Self::assemble(config, g_xy, g_yx, d_x, d_y, seed))
    }

    pub(crate) fn assemble(
        config: CycleGanConfig,
        g_xy: GeneratorNet<T>,
        g_yx: GeneratorNet<T>,
        d_x: PatchDiscriminator<T>,
        d_y: PatchDiscriminator<T>,
        seed: u64,
    ) -> Self {
        Self {
            adam_g_xy: AdamState::new(config.adam, g_xy.params()),
            adam_g_yx: AdamState::new(config.adam, g_yx.params()),
            adam_d_x: AdamState::new(config.adam, d_x.params()),
            adam_d_y: AdamState::new(config.adam, d_y.params()),
            pool_x: ImagePool::new(config.pool_capacity, seed.wrapping_add(4)),
            pool_y: ImagePool::new(config.pool_capacity, seed.wrapping_add(5)),
            config,
            g_xy,
            g_yx,
            d_x,
            d_y,
        }
    }

    /// Binds generators as `train_g` and discriminators as `train_d`.
    pub fn bind(&self, tape: &mut Tape<T>, train_g: bool, train_d: bool) -> CycleGanBound {
        CycleGanBound {
            g_xy: self.g_xy.params().bind(tape, train_g),
            g_yx: self.g_yx.params().bind(tape, train_g),
            d_x: self.d_x.params().bind(tape, train_d),
            d_y: self.d_y.params().bind(tape, train_d),
        }
    }

    /// Records the full generator objective: adversarial terms both ways,
    /// weighted cycle terms both ways and, when `lambda_idt > 0`, weighted
    /// identity terms under the [`IDENTITY_SCOPE`] label.
    pub fn generator_objective(
        &self,
        tape: &mut Tape<T>,
        b: &CycleGanBound,
        x: Var,
        y: Var,
        weights: &LossWeights,
    ) -> Result<GeneratorTerms> {
        let fake_y = tape.scoped("g_xy", |t| self.g_xy.forward(t, &b.g_xy, x))?;
        let fake_x = tape.scoped("g_yx", |t| self.g_yx.forward(t, &b.g_yx, y))?;
        let gan_g = tape.scoped("gan_g", |t| {
            let d = self.d_y.forward(t, &b.d_y, fake_y)?;
            adversarial_loss(t, d, true)
        })?;
        let gan_f = tape.scoped("gan_f", |t| {
            let d = self.d_x.forward(t, &b.d_x, fake_x)?;
            adversarial_loss(t, d, true)
        })?;
        let cyc_x = tape.scoped("cyc_x", |t| {
            let rec = self.g_yx.forward(t, &b.g_yx, fake_y)?;
            let l = cycle_loss(t, x, rec)?;
            t.scale(l, weights.lambda_cyc)
        })?;
        let cyc_y = tape.scoped("cyc_y", |t| {
            let rec = self.g_xy.forward(t, &b.g_xy, fake_x)?;
            let l = cycle_loss(t, y, rec)?;
            t.scale(l, weights.lambda_cyc)
        })?;
        let (idt_x, idt_y) = if weights.identity_enabled() {
            tape.scoped(IDENTITY_SCOPE, |t| -> Result<_> {
                let fx = self.g_yx.forward(t, &b.g_yx, x)?;
                let lx = identity_loss(t, x, fx)?;
                let lx = t.scale(lx, weights.lambda_idt)?;
                let gy = self.g_xy.forward(t, &b.g_xy, y)?;
                let ly = identity_loss(t, y, gy)?;
                let ly = t.scale(ly, weights.lambda_idt)?;
                Ok((Some(lx), Some(ly)))
            })?
        } else {
            (None, None)
        };
        let mut all = vec![gan_g, gan_f, cyc_x, cyc_y];
        all.extend(idt_x);
        all.extend(idt_y);
        let total = tape.add_all(&all)?.expect("non-empty");
        Ok(GeneratorTerms {
            gan_g,
            gan_f,
            cyc_x,
            cyc_y,
            idt_x,
            idt_y,
            total,
            fake_x,
            fake_y,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        for s in [
            &mut self.adam_g_xy,
            &mut self.adam_g_yx,
            &mut self.adam_d_x,
            &mut self.adam_d_y,
        ] {
            s.lr = lr;
        }
    }

    pub fn generator(&self, direction: Direction) -> &GeneratorNet<T> {
        match direction {
            Direction::PhotoToIcon => &self.g_xy,
            Direction::IconToPhoto => &self.g_yx,
        }
    }

    /// Clears the fake-image pools (their contents are resolution-bound).
    pub fn on_stage_change(&mut self) {
        self.pool_x.clear();
        self.pool_y.clear();
    }
}

/// One optimization step: the generators first (discriminators frozen),
/// then both discriminators on real images and pooled fakes.
pub fn cyclegan_train_step<T: Element>(
    model: &mut CycleGanModel<T>,
    x_batch: &Tensor<T>,
    y_batch: &Tensor<T>,
    weights: &LossWeights,
) -> Result<LossReport> {
    let mut report = LossReport::default();

    let mut tape = Tape::new();
    let b = model.bind(&mut tape, true, false);
    let x = tape.constant(x_batch.clone());
    let y = tape.constant(y_batch.clone());
    let terms = model.generator_objective(&mut tape, &b, x, y, weights)?;
    let val = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item().as_f64());
    report.push("gan_g", val(Some(terms.gan_g)))?;
    report.push("gan_f", val(Some(terms.gan_f)))?;
    report.push("cyc_x", val(Some(terms.cyc_x)))?;
    report.push("cyc_y", val(Some(terms.cyc_y)))?;
    report.push("idt_x", val(terms.idt_x))?;
    report.push("idt_y", val(terms.idt_y))?;
    report.identity_nodes = tape.scope_counts().get(IDENTITY_SCOPE).copied().unwrap_or(0);
    let fake_x = tape.value(terms.fake_x).clone();
    let fake_y = tape.value(terms.fake_y).clone();
    let mut grads = tape.backward(terms.total)?;
    let g_xy = b.g_xy.gradients(&mut grads)?;
    let g_yx = b.g_yx.gradients(&mut grads)?;
    drop(tape);
    adam_step(model.g_xy.params_mut(), &g_xy, &mut model.adam_g_xy)?;
    adam_step(model.g_yx.params_mut(), &g_yx, &mut model.adam_g_yx)?;

    let pooled_x = model.pool_x.query(&fake_x)?;
    let pooled_y = model.pool_y.query(&fake_y)?;
    let mut tape = Tape::new();
    let dx = model.d_x.params().bind(&mut tape, true);
    let dy = model.d_y.params().bind(&mut tape, true);
    let d_x = discriminator_objective(&mut tape, &model.d_x, &dx, x_batch, &pooled_x, "d_x")?;
    let d_y = discriminator_objective(&mut tape, &model.d_y, &dy, y_batch, &pooled_y, "d_y")?;
    report.push("d_x", tape.value(d_x).item().as_f64())?;
    report.push("d_y", tape.value(d_y).item().as_f64())?;
    let total = tape.add(d_x, d_y)?;
    let mut grads = tape.backward(total)?;
    let gx = dx.gradients(&mut grads)?;
    let gy = dy.gradients(&mut grads)?;
    adam_step(model.d_x.params_mut(), &gx, &mut model.adam_d_x)?;
    adam_step(model.d_y.params_mut(), &gy, &mut model.adam_d_y)?;
    Ok(report)
}

/// `½·(mean((D(real) − 1)²) + mean(D(fake)²))`.
pub fn discriminator_objective<T: Element>(
    tape: &mut Tape<T>,
    d: &PatchDiscriminator<T>,
    bound: &Bound,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    scope: &str,
) -> Result<Var> {
    tape.scoped(scope, |t| {
        let r = t.constant(real.clone());
        let f = t.constant(fake.clone());
        let dr = d.forward(t, bound, r)?;
        let df = d.forward(t, bound, f)?;
        let lr = adversarial_loss(t, dr, true)?;
        let lf = adversarial_loss(t, df, false)?;
        let s = t.add(lr, lf)?;
        t.scale(s, 0.5)
    })
}

fn warn_untrained_resolution(img: &Tensor<impl Element>, trained: &[usize]) {
    if let (Some(&h), false) = (img.shape().get(2), trained.is_empty()) {
        if !trained.contains(&h) {
            warn!("input resolution {h} was not among the trained resolutions {trained:?}");
        }
    }
}

/// Applies one generator. `trained` lists resolutions the model saw; others
/// only produce a warning.
pub fn convert<T: Element>(
    model: &CycleGanModel<T>,
    img: &Tensor<T>,
    direction: Direction,
    trained: &[usize],
) -> Result<Tensor<T>> {
    warn_untrained_resolution(img, trained);
    model.generator(direction).apply(img)
}

/// `(G(x), F(G(x)))` for photo→icon, mirrored for icon→photo.
pub fn reconstruct<T: Element>(
    model: &CycleGanModel<T>,
    img: &Tensor<T>,
    direction: Direction,
    trained: &[usize],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let translated = convert(model, img, direction, trained)?;
    let cycled = model.generator(direction.reverse()).apply(&translated)?;
    Ok((translated, cycled))
}
