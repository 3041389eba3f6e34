use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cyclegan::discriminator_objective;
use super::report::LossReport;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::loss::{adversarial_loss, cycle_loss, latent_kl, unit_vae_terms, LossWeights};
use crate::nn::{latent_noise, Domain, UnitBound, UnitConfig, UnitModel, UNIT_GROUPS};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::{Element, Tensor};

/// Term names of a UNIT loss report, in report order.
pub const UNIT_TERMS: [&str; 10] = [
    "rec_x", "rec_y", "kl_x", "kl_y", "gan_x", "gan_y", "cyc_x", "cyc_y", "d_x", "d_y",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitTrainConfig {
    pub unit: UnitConfig,
    pub adam: AdamConfig,
}

/// A UNIT model with one Adam state per parameter group and the generator
/// of latent sampling noise.
#[derive(Clone, Debug)]
pub struct UnitTrainer<T: Element = f32> {
    pub config: UnitTrainConfig,
    pub model: UnitModel<T>,
    /// Indexed like [`UNIT_GROUPS`].
    pub adam: Vec<AdamState<T>>,
    pub noise_rng: ChaCha8Rng,
}

impl<T: Element> UnitTrainer<T> {
    pub fn new(config: UnitTrainConfig, seed: u64) -> Self {
        Self::from_model(config, UnitModel::build(config.unit, seed), seed)
    }

    pub(crate) fn from_model(config: UnitTrainConfig, model: UnitModel<T>, seed: u64) -> Self {
        let adam = UNIT_GROUPS
            .iter()
            .map(|g| AdamState::new(config.adam, model.group(g).expect("known group")))
            .collect();
        Self {
            config,
            model,
            adam,
            noise_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(7)),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for s in &mut self.adam {
            s.lr = lr;
        }
    }

    fn noisy(&mut self, tape: &mut Tape<T>, mean: Var) -> Result<Var> {
        let seed = self.noise_rng.random::<u64>();
        let noise = tape.constant(latent_noise(tape.shape(mean), seed));
        tape.add(mean, noise)
    }
}

struct Sides {
    x_fake: Var,
    y_fake: Var,
}

#[allow(clippy::too_many_arguments)]
fn generator_side<T: Element>(
    tr: &mut UnitTrainer<T>,
    tape: &mut Tape<T>,
    b: &UnitBound,
    d: &[crate::nn::Bound; 2],
    x: Var,
    y: Var,
    weights: &LossWeights,
    report: &mut LossReport,
) -> Result<(Var, Sides)> {
    let mut terms = Vec::new();
    let mut fakes = Vec::new();
    for (dom, img) in [(Domain::X, x), (Domain::Y, y)] {
        let tag = dom.tag();
        let other = dom.other();
        let (vae, fake) = tape.scoped(&format!("vae_{tag}"), |t| -> Result<_> {
            let mean = tr.model.encode_var(t, b, img, dom)?;
            let z = tr.noisy(t, mean)?;
            let rec = tr.model.decode_var(t, b, z, dom)?;
            let fake = tr.model.decode_var(t, b, z, other)?;
            Ok((unit_vae_terms(t, img, mean, rec, weights)?, fake))
        })?;
        let gan = tape.scoped(&format!("gan_{}", other.tag()), |t| {
            let disc = tr.model.discriminator(other);
            let score = disc.forward(t, &d[other as usize], fake)?;
            adversarial_loss(t, score, true)
        })?;
        let cyc = tape.scoped(&format!("cyc_{tag}"), |t| -> Result<Var> {
            let mean = tr.model.encode_var(t, b, fake, other)?;
            let z = tr.noisy(t, mean)?;
            let back = tr.model.decode_var(t, b, z, dom)?;
            let l1 = cycle_loss(t, img, back)?;
            let l1 = t.scale(l1, weights.lambda_cyc)?;
            let kl = latent_kl(t, mean)?;
            let kl = t.scale(kl, weights.lambda_kl)?;
            t.add(l1, kl)
        })?;
        terms.push((tag, vae.rec, vae.kl, gan, cyc, other));
        fakes.push(fake);
    }
    let v = |t: &Tape<T>, var: Var| t.value(var).item().as_f64();
    for (tag, rec, _, _, _, _) in &terms {
        report.push(&format!("rec_{tag}"), v(tape, *rec))?;
    }
    for (tag, _, kl, _, _, _) in &terms {
        report.push(&format!("kl_{tag}"), v(tape, *kl))?;
    }
    // Adversarial terms are named after the domain whose discriminator
    // judges them.
    let mut gans: Vec<_> = terms.iter().map(|t| (t.5.tag(), t.3)).collect();
    gans.sort_by_key(|g| g.0);
    for (tag, gan) in gans {
        report.push(&format!("gan_{tag}"), v(tape, gan))?;
    }
    for (tag, _, _, _, cyc, _) in &terms {
        report.push(&format!("cyc_{tag}"), v(tape, *cyc))?;
    }
    let all: Vec<Var> = terms.iter().flat_map(|t| [t.1, t.2, t.3, t.4]).collect();
    let total = tape.add_all(&all)?.expect("non-empty");
    // fakes[0] came from x (a Y image), fakes[1] from y (an X image).
    Ok((
        total,
        Sides {
            x_fake: fakes[1],
            y_fake: fakes[0],
        },
    ))
}

/// One UNIT step: encoders/decoders on the VAE, adversarial and cycle terms
/// (discriminators frozen), then both discriminators.
pub fn unit_train_step<T: Element>(
    tr: &mut UnitTrainer<T>,
    x_batch: &Tensor<T>,
    y_batch: &Tensor<T>,
    weights: &LossWeights,
) -> Result<LossReport> {
    let mut report = LossReport::default();
    let mut tape = Tape::new();
    let b = tr.model.bind_autoencoders(&mut tape, true);
    let d = [
        tr.model.d_x.params().bind(&mut tape, false),
        tr.model.d_y.params().bind(&mut tape, false),
    ];
    let x = tape.constant(x_batch.clone());
    let y = tape.constant(y_batch.clone());
    let (total, sides) = generator_side(tr, &mut tape, &b, &d, x, y, weights, &mut report)?;
    let x_fake = tape.value(sides.x_fake).clone();
    let y_fake = tape.value(sides.y_fake).clone();
    let mut grads = tape.backward(total)?;
    let group_grads = [
        b.enc_x.gradients(&mut grads)?,
        b.enc_y.gradients(&mut grads)?,
        b.shared_enc.gradients(&mut grads)?,
        b.shared_dec.gradients(&mut grads)?,
        b.dec_x.gradients(&mut grads)?,
        b.dec_y.gradients(&mut grads)?,
    ];
    drop(tape);
    for (i, g) in group_grads.iter().enumerate() {
        let params = tr.model.group_mut(UNIT_GROUPS[i]).expect("known group");
        adam_step(params, g, &mut tr.adam[i])?;
    }

    let mut tape = Tape::new();
    let dx = tr.model.d_x.params().bind(&mut tape, true);
    let dy = tr.model.d_y.params().bind(&mut tape, true);
    let d_x = discriminator_objective(&mut tape, &tr.model.d_x, &dx, x_batch, &x_fake, "d_x")?;
    let d_y = discriminator_objective(&mut tape, &tr.model.d_y, &dy, y_batch, &y_fake, "d_y")?;
    report.push("d_x", tape.value(d_x).item().as_f64())?;
    report.push("d_y", tape.value(d_y).item().as_f64())?;
    let total = tape.add(d_x, d_y)?;
    let mut grads = tape.backward(total)?;
    let gx = dx.gradients(&mut grads)?;
    let gy = dy.gradients(&mut grads)?;
    adam_step(tr.model.d_x.params_mut(), &gx, &mut tr.adam[6])?;
    adam_step(tr.model.d_y.params_mut(), &gy, &mut tr.adam[7])?;
    Ok(report)
}
