//! Run configuration: a sectioned key-value file checked strictly.
//!
//! ```toml
//! [run]
//! model = "cyclegan"
//! preset = "bw-icons"
//! seed = 0
//!
//! [schedule]
//! resolutions = [32]
//! iterations = [200]
//! ```
//!
//! Every key outside the known schema is reported at once, so a typo can
//! never silently fall back to a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossWeights, Preset};
use crate::nn::{DiscriminatorConfig, GeneratorConfig, UnitConfig};
use crate::optim::{AdamConfig, DEFAULT_POOL_CAPACITY};
use crate::training::{CycleGanConfig, ModelKind, Session, StageSchedule, UnitTrainConfig};

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["model", "preset", "seed", "batch_size"]),
    ("schedule", &["resolutions", "iterations", "total_iterations"]),
    (
        "network",
        &[
            "ngf",
            "n_res_blocks",
            "ndf",
            "n_strided",
            "unit_base_width",
            "unit_private_res",
        ],
    ),
    ("loss", &["lambda_cyc", "lambda_idt", "lambda_kl", "lambda_rec"]),
    ("optim", &["lr", "beta1", "beta2", "eps", "pool_capacity"]),
    (
        "data",
        &[
            "x",
            "y",
            "synthetic",
            "synthetic_count",
            "synthetic_size",
            "x_allow",
            "x_deny",
            "y_allow",
            "y_deny",
        ],
    ),
    ("output", &["dir"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Cyclegan,
    Unit,
}

impl From<ModelChoice> for ModelKind {
    fn from(m: ModelChoice) -> Self {
        match m {
            ModelChoice::Cyclegan => ModelKind::CycleGan,
            ModelChoice::Unit => ModelKind::Unit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub model: ModelChoice,
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub batch_size: usize,
}

/// Either explicit per-stage `iterations` or a `total_iterations` split by
/// the default stage fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSection {
    pub resolutions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_iterations: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSection {
    pub ngf: usize,
    pub n_res_blocks: usize,
    pub ndf: usize,
    pub n_strided: usize,
    pub unit_base_width: usize,
    pub unit_private_res: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let d = DiscriminatorConfig::default();
        let u = UnitConfig::default();
        Self {
            ngf: g.base_width,
            n_res_blocks: g.n_res_blocks,
            ndf: d.base_width,
            n_strided: d.n_strided,
            unit_base_width: u.base_width,
            unit_private_res: u.n_private_res,
        }
    }
}

/// Overrides on top of the preset's weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_cyc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_idt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rec: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub pool_capacity: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            pool_capacity: DEFAULT_POOL_CAPACITY,
        }
    }
}

/// Domain directories as written by `prepare`, or the built-in synthetic
/// shapes (filled squares as X, outlined circles as Y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
    pub synthetic: bool,
    pub synthetic_count: usize,
    pub synthetic_size: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_allow: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_deny: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_allow: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_deny: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            synthetic: false,
            synthetic_count: crate::dataset::SYNTHETIC_COUNT,
            synthetic_size: crate::dataset::SYNTHETIC_SIZE,
            x_allow: None,
            x_deny: None,
            y_allow: None,
            y_deny: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> usize {
    1
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut bad = Vec::new();
    for (section, value) in table {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            bad.push(format!("unknown section [{section}]"));
            continue;
        };
        let Some(inner) = value.as_table() else {
            bad.push(format!("`{section}` must be a section"));
            continue;
        };
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                bad.push(format!("unknown key `{section}.{key}`"));
            }
        }
    }
    bad
}

/// The parser message plus the offending text and its line, e.g.
/// "duplicate key `seed` (line 4)".
fn syntax_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start].matches('\n').count() + 1;
            let snippet = text[span].trim();
            if snippet.is_empty() {
                format!("{} (line {line})", e.message())
            } else {
                format!("{} `{snippet}` (line {line})", e.message())
            }
        }
        None => e.message().to_string(),
    }
}

impl RunConfig {
    /// A config for `model` with the preset's defaults and a single stage.
    pub fn new(model: ModelChoice, preset: Preset, resolution: usize, iterations: u64) -> Self {
        Self {
            run: RunSection {
                model,
                preset,
                seed: 0,
                batch_size: 1,
            },
            schedule: ScheduleSection {
                resolutions: vec![resolution],
                iterations: Some(vec![iterations]),
                total_iterations: None,
            },
            network: NetworkSection::default(),
            loss: LossSection::default(),
            optim: OptimSection::default(),
            data: DataSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![syntax_error(text, &e)]))?;
        let bad = unknown_keys(&table);
        if !bad.is_empty() {
            return Err(Error::Config(bad));
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [
            &mut d.x,
            &mut d.y,
            &mut d.x_allow,
            &mut d.x_deny,
            &mut d.y_allow,
            &mut d.y_deny,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Checks every field and reports all problems together.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.run.batch_size == 0 {
            bad.push("run.batch_size must be >= 1".to_string());
        }
        match (&self.schedule.iterations, self.schedule.total_iterations) {
            (Some(_), Some(_)) => bad.push("schedule: give either iterations or total_iterations, not both".into()),
            (None, None) => bad.push("schedule: one of iterations or total_iterations is required".into()),
            (Some(it), None) if it.len() != self.schedule.resolutions.len() => bad.push(format!(
                "schedule.iterations has {} entries for {} resolutions",
                it.len(),
                self.schedule.resolutions.len()
            )),
            _ => {}
        }
        if bad.is_empty() {
            if let Err(e) = self.stage_schedule() {
                bad.push(format!("schedule: {e}"));
            }
        }
        if let Err(e) = self.weights().validate() {
            bad.push(format!("loss: {e}"));
        }
        let n = &self.network;
        for (k, v) in [
            ("ngf", n.ngf),
            ("ndf", n.ndf),
            ("n_strided", n.n_strided),
            ("unit_base_width", n.unit_base_width),
        ] {
            if v == 0 {
                bad.push(format!("network.{k} must be >= 1"));
            }
        }
        let o = &self.optim;
        if !(o.lr.is_finite() && o.lr > 0.0) {
            bad.push(format!("optim.lr must be > 0, got {}", o.lr));
        }
        for (k, v) in [("beta1", o.beta1), ("beta2", o.beta2)] {
            if !(0.0..1.0).contains(&v) {
                bad.push(format!("optim.{k} must lie in [0, 1), got {v}"));
            }
        }
        if !(o.eps.is_finite() && o.eps > 0.0) {
            bad.push(format!("optim.eps must be > 0, got {}", o.eps));
        }
        let d = &self.data;
        if d.synthetic {
            if d.x.is_some() || d.y.is_some() {
                bad.push("data: synthetic excludes x and y".into());
            }
            if d.synthetic_count == 0 || d.synthetic_size == 0 {
                bad.push("data: synthetic_count and synthetic_size must be >= 1".into());
            }
        } else if d.x.is_none() || d.y.is_none() {
            bad.push("data: x and y are required unless synthetic = true".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn weights(&self) -> LossWeights {
        let mut w = LossWeights::preset(self.run.preset);
        let l = &self.loss;
        w.lambda_cyc = l.lambda_cyc.unwrap_or(w.lambda_cyc);
        w.lambda_idt = l.lambda_idt.unwrap_or(w.lambda_idt);
        w.lambda_kl = l.lambda_kl.unwrap_or(w.lambda_kl);
        w.lambda_rec = l.lambda_rec.unwrap_or(w.lambda_rec);
        w
    }

    pub fn stage_schedule(&self) -> Result<StageSchedule> {
        let s = &self.schedule;
        match (&s.iterations, s.total_iterations) {
            (Some(it), None) => StageSchedule::new(s.resolutions.iter().copied().zip(it.iter().copied()).collect()),
            (None, Some(total)) => StageSchedule::from_total(total, &s.resolutions),
            _ => Err(Error::InvalidArgument("ambiguous schedule".into())),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.optim.lr,
            beta1: self.optim.beta1,
            beta2: self.optim.beta2,
            eps: self.optim.eps,
        }
    }

    pub fn cyclegan_config(&self) -> CycleGanConfig {
        let n = &self.network;
        CycleGanConfig {
            generator: GeneratorConfig {
                base_width: n.ngf,
                n_res_blocks: n.n_res_blocks,
            },
            discriminator: DiscriminatorConfig {
                base_width: n.ndf,
                n_strided: n.n_strided,
            },
            adam: self.adam(),
            pool_capacity: self.optim.pool_capacity,
        }
    }

    pub fn unit_config(&self) -> UnitTrainConfig {
        let n = &self.network;
        UnitTrainConfig {
            unit: UnitConfig {
                base_width: n.unit_base_width,
                n_private_res: n.unit_private_res,
                discriminator: DiscriminatorConfig {
                    base_width: n.ndf,
                    n_strided: n.n_strided,
                },
            },
            adam: self.adam(),
        }
    }

    /// A fresh session at step 0.
    pub fn session(&self) -> Result<Session> {
        let schedule = self.stage_schedule()?;
        match self.run.model {
            ModelChoice::Cyclegan => {
                Session::cyclegan(self.cyclegan_config(), schedule, self.run.batch_size, self.run.seed)
            }
            ModelChoice::Unit => Session::unit(self.unit_config(), schedule, self.run.batch_size, self.run.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nmodel = \"cyclegan\"\npreset = \"bw-icons\"\n\n[schedule]\nresolutions = [32]\niterations = [10]\n\n[data]\nsynthetic = true\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.run.batch_size, 1);
        assert_eq!(c.network, NetworkSection::default());
        assert_eq!(c.weights(), LossWeights::preset(Preset::BwIcons));
        assert_eq!(c.stage_schedule().unwrap().stages(), &[(32, 10)]);
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let text = format!("{MINIMAL}colour = 1\n[run2]\na = 1\n[loss]\nlambda_cycle = 3.0\n");
        match RunConfig::parse(&text) {
            Err(Error::Config(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v.iter().any(|m| m.contains("data.colour")));
                assert!(v.iter().any(|m| m.contains("[run2]")));
                assert!(v.iter().any(|m| m.contains("loss.lambda_cycle")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_named() {
        let text = MINIMAL
            .replace("seed", "x")
            .replace("[schedule]", "seed = 1\nseed = 2\n[schedule]");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("seed"), "{msg}");
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.loss.lambda_idt = Some(0.0);
        c.optim.lr = 1.2345678901234567e-4;
        c.data = DataSection {
            synthetic: false,
            x: Some("a/x".into()),
            y: Some("b/y".into()),
            y_deny: Some("deny.txt".into()),
            ..DataSection::default()
        };
        c.schedule = ScheduleSection {
            resolutions: vec![32, 64, 128, 256],
            iterations: None,
            total_iterations: Some(1000),
        };
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), c.to_toml());
    }

    #[test]
    fn semantic_errors_are_collected() {
        let text = MINIMAL.replace("iterations = [10]", "iterations = [10, 20]") + "[optim]\nlr = -1.0\n";
        match RunConfig::parse(&text) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_set_identity_weight() {
        for (p, idt) in [
            (Preset::BwIcons, 0.5),
            (Preset::PersonOnly, 0.5),
            (Preset::ColorLogos, 5.0),
        ] {
            let c = RunConfig::new(ModelChoice::Unit, p, 32, 1);
            assert_eq!(c.weights().lambda_idt, idt);
        }
    }
}
