use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args as ClapArgs;
use iconify::config::RunConfig;
use iconify::dataset::{load_domain_dir, synthetic_shapes, DomainDataset, SubsetFilter, SYNTHETIC_SEED};
use iconify::nn::Domain;
use iconify::training::{run_coarse_to_fine, LossReport, RunDirectory, Session, TrainObserver};
use log::info;

use crate::exit::{require_exists, CmdResult, Failure, OutputDir};
use crate::Globals;

/// Copy of the effective configuration kept next to the outputs.
pub const RUN_CONFIG_FILE: &str = "run.cfg";

#[derive(ClapArgs)]
pub struct Args {
    /// Continue from a checkpoint written by an earlier run into the same
    /// output directory.
    #[arg(long, value_name = "CKPT")]
    resume: Option<PathBuf>,
    /// Pause after this global step and write a resumable checkpoint.
    #[arg(long, value_name = "N")]
    max_steps: Option<u64>,
    /// Log progress every this many steps.
    #[arg(long, default_value_t = 50)]
    log_every: u64,
}

/// Progress logging around the run directory.
struct Progress<'a> {
    run: &'a mut RunDirectory,
    every: u64,
    started: Instant,
}

impl TrainObserver for Progress<'_> {
    fn on_stage_start(&mut self, stage: usize, resolution: usize, session: &Session) -> iconify::Result<()> {
        self.run.on_stage_start(stage, resolution, session)
    }

    fn on_step(&mut self, step: u64, resolution: usize, report: &LossReport) -> iconify::Result<()> {
        if self.every > 0 && step.is_multiple_of(self.every) {
            let terms: Vec<_> = report.terms.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            info!(
                "step {step} @{resolution}px {} ({:.1}s)",
                terms.join(" "),
                self.started.elapsed().as_secs_f64()
            );
        }
        self.run.on_step(step, resolution, report)
    }

    fn on_stage_end(&mut self, stage: usize, resolution: usize, session: &Session) -> iconify::Result<()> {
        self.run.on_stage_end(stage, resolution, session)
    }

    fn should_stop(&self, session: &Session) -> bool {
        self.run.should_stop(session)
    }
}

fn filter(label: Option<String>, allow: &Option<PathBuf>, deny: &Option<PathBuf>) -> iconify::Result<SubsetFilter> {
    Ok(SubsetFilter {
        label,
        allow: allow.as_deref().map(SubsetFilter::read_list).transpose()?,
        deny: deny
            .as_deref()
            .map(SubsetFilter::read_list)
            .transpose()?
            .unwrap_or_default(),
    })
}

fn load_data(cfg: &RunConfig) -> CmdResult<(DomainDataset, DomainDataset)> {
    let d = &cfg.data;
    let seed = cfg.run.seed;
    if d.synthetic {
        let (squares, circles) = synthetic_shapes(d.synthetic_count, d.synthetic_size, SYNTHETIC_SEED);
        return Ok((
            DomainDataset::from_images(Domain::X, &squares, seed)?,
            DomainDataset::from_images(Domain::Y, &circles, seed)?,
        ));
    }
    let (x, y) = (
        d.x.as_deref().unwrap_or(Path::new("")),
        d.y.as_deref().unwrap_or(Path::new("")),
    );
    let lists = [&d.x_allow, &d.x_deny, &d.y_allow, &d.y_deny];
    require_exists(
        [x, y]
            .into_iter()
            .chain(lists.into_iter().flatten().map(PathBuf::as_path)),
    )?;
    let label = (cfg.run.preset == iconify::loss::Preset::PersonOnly).then(|| "person".to_string());
    let (xs, _) = load_domain_dir(x, Domain::X, &filter(label, &d.x_allow, &d.x_deny)?, seed)?;
    let (ys, _) = load_domain_dir(y, Domain::Y, &filter(None, &d.y_allow, &d.y_deny)?, seed)?;
    info!("domains: {} X images, {} Y images", xs.len(), ys.len());
    Ok((xs, ys))
}

pub fn run(g: &Globals, args: Args) -> CmdResult {
    let cfg_path = g
        .config
        .as_deref()
        .ok_or_else(|| Failure::usage(anyhow::anyhow!("train needs --config")))?;
    require_exists([cfg_path])?;
    let mut cfg = RunConfig::load(cfg_path)?;
    if let Some(seed) = g.seed {
        cfg.run.seed = seed;
    }
    let out_path = g.output_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    if let Some(ckpt) = &args.resume {
        require_exists([ckpt.as_path()])?;
    }
    let (x, y) = load_data(&cfg)?;
    let weights = cfg.weights();

    let (mut session, mut run, out) = match &args.resume {
        Some(ckpt) => {
            let session = Session::load(ckpt)?;
            let expected = iconify::training::ModelKind::from(cfg.run.model);
            if session.model.kind() != expected {
                return Err(Failure::usage(anyhow::anyhow!(
                    "checkpoint holds a {:?} model but the config asks for {:?}",
                    session.model.kind(),
                    expected
                )));
            }
            info!("resuming at step {}", session.position.global_step);
            let run = RunDirectory::resume(&out_path, &session)?;
            (session, run, None)
        }
        None => {
            let out = OutputDir::create(&out_path)?;
            let session = cfg.session()?;
            fs::write(out.path().join(RUN_CONFIG_FILE), cfg.to_toml())
                .map_err(|e| Failure::failed(anyhow::anyhow!("writing run config: {e}")))?;
            let run = RunDirectory::create(out.path())?;
            (session, run, Some(out))
        }
    };
    run.pause_at = args.max_steps;
    let started = Instant::now();
    let first = session.position.global_step;
    {
        let mut progress = Progress {
            run: &mut run,
            every: args.log_every,
            started,
        };
        run_coarse_to_fine(&mut session, &x, &y, &weights, &mut progress)?;
    }
    run.flush()?;
    let steps = session.position.global_step - first;
    let secs = started.elapsed().as_secs_f64();
    if session.is_finished() {
        println!(
            "trained {steps} steps in {secs:.1}s; {} checkpoint(s), log {}",
            run.checkpoints.len(),
            run.log_path().display()
        );
    } else {
        let path = out_path.join(format!("step-{:06}.ckpt", session.position.global_step));
        session.save(&path)?;
        println!(
            "paused after {steps} steps in {secs:.1}s; resume with --resume {}",
            path.display()
        );
    }
    if let Some(out) = out {
        out.keep();
    }
    Ok(())
}
