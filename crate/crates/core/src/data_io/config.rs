//! `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored; keys are dotted
//! (`ddc.gamma`, `ftd.lr`, ...). Unknown keys and malformed values are
//! errors that carry the line number.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::NiqeConfig;
use crate::nnet::{AdamConfig, Arch};
use crate::pipeline::{CalibrationConfig, CurveMode, LrPolicy, TrainConfig};
use crate::schedule::NoiseSchedule;

use super::dataset::DataConfig;

pub const SEED_ENV: &str = "DIFFLLE_SEED";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub ddim_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 200, beta_start: 1e-4, beta_end: 0.02, ddim_steps: 50 }
    }
}

impl ScheduleConfig {
    /// Linear schedule restricted to its DDIM subsequence, with the given `eta`.
    pub fn build(&self, eta: f64) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)?
            .ddim_subsequence(self.ddim_steps)?
            .with_eta(eta)
    }

    /// The first `max_t` steps of the linear schedule. Training a denoiser
    /// only on the low-noise range that calibration visits spends its
    /// capacity where the round trips need it; `alpha_bar` is unchanged on
    /// that range.
    pub fn training(&self, max_t: usize) -> Result<NoiseSchedule> {
        let full = NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)?;
        if max_t == 0 || max_t > self.steps {
            return Err(Error::InvalidParameter(format!("denoiser.max_t must be in 1..={}, got {max_t}", self.steps)));
        }
        NoiseSchedule::from_betas(full.betas()[..max_t].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub ddc: CalibrationConfig,
    pub uem: TrainConfig,
    pub uem_channels: usize,
    pub uem_blocks: usize,
    pub disc_channels: usize,
    pub denoiser: TrainConfig,
    pub denoiser_channels: usize,
    pub denoiser_emb_dim: usize,
    pub denoiser_max_t: usize,
    pub ftd: TrainConfig,
    pub data: DataConfig,
    pub niqe: NiqeConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            schedule: ScheduleConfig::default(),
            ddc: CalibrationConfig::default(),
            uem: TrainConfig::uem_default(),
            uem_channels: 16,
            uem_blocks: 3,
            disc_channels: 16,
            denoiser: TrainConfig::denoiser_default(),
            denoiser_channels: 32,
            denoiser_emb_dim: 32,
            denoiser_max_t: 50,
            ftd: TrainConfig::ftd_default(),
            data: DataConfig::default(),
            niqe: NiqeConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "schedule.steps",
    "schedule.beta_start",
    "schedule.beta_end",
    "schedule.ddim_steps",
    "ddc.gamma",
    "ddc.curve",
    "ddc.omega",
    "ddc.eta",
    "uem.channels",
    "uem.blocks",
    "uem.epochs",
    "uem.batch",
    "uem.patch",
    "uem.lr",
    "uem.decay_start",
    "uem.lambda_cyc",
    "uem.steps_per_epoch",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "disc.channels",
    "denoiser.channels",
    "denoiser.emb_dim",
    "denoiser.max_t",
    "denoiser.epochs",
    "denoiser.batch",
    "denoiser.patch",
    "denoiser.lr",
    "denoiser.lr_min",
    "denoiser.steps_per_epoch",
    "ftd.epochs",
    "ftd.batch",
    "ftd.patch",
    "ftd.lr",
    "ftd.lr_min",
    "ftd.patience",
    "ftd.steps_per_epoch",
    "ftd.beta1",
    "data.train",
    "data.test",
    "data.size",
    "niqe.patch",
    "niqe.sharpness",
];

fn count(v: &str) -> std::result::Result<usize, String> {
    let n: i64 = v.parse().map_err(|_| format!("expected an integer, got `{v}`"))?;
    usize::try_from(n).map_err(|_| format!("value {n} out of range: must be >= 0"))
}

fn positive(v: &str) -> std::result::Result<usize, String> {
    match count(v)? {
        0 => Err("value 0 out of range: must be >= 1".into()),
        n => Ok(n),
    }
}

fn real(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("value `{v}` is not finite"))
    }
}

fn nonneg(v: &str) -> std::result::Result<f64, String> {
    let x = real(v)?;
    if x < 0.0 {
        return Err(format!("value {x} out of range: must be >= 0"));
    }
    Ok(x)
}

fn set_cosine_min(c: &mut TrainConfig, lr_min: f64) {
    c.policy = LrPolicy::Cosine { lr_min };
}

impl Config {
    /// Sets one key from [`KEYS`].
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = v.parse().map_err(|_| format!("expected an unsigned integer, got `{v}`"))?,
            "schedule.steps" => self.schedule.steps = positive(v)?,
            "schedule.beta_start" => self.schedule.beta_start = nonneg(v)?,
            "schedule.beta_end" => self.schedule.beta_end = nonneg(v)?,
            "schedule.ddim_steps" => self.schedule.ddim_steps = positive(v)?,
            "ddc.gamma" => {
                let g = real(v)?;
                if g <= 0.0 {
                    return Err(format!("value {g} out of range: must be > 0"));
                }
                self.ddc.gamma = g;
            }
            "ddc.curve" => self.ddc.curve = v.parse::<CurveMode>()?,
            "ddc.omega" => self.ddc.omega = count(v)?,
            "ddc.eta" => {
                let e = nonneg(v)?;
                if e > 1.0 {
                    return Err(format!("value {e} out of range: must be <= 1"));
                }
                self.ddc.eta = e;
            }
            "uem.channels" => self.uem_channels = positive(v)?,
            "uem.blocks" => self.uem_blocks = count(v)?,
            "uem.epochs" => self.uem.epochs = count(v)?,
            "uem.batch" => self.uem.batch_size = positive(v)?,
            "uem.patch" => self.uem.patch_size = positive(v)?,
            "uem.lr" => self.uem.lr = nonneg(v)?,
            "uem.decay_start" => self.uem.policy = LrPolicy::LinearDecay { decay_start: count(v)? },
            "uem.lambda_cyc" => self.uem.lambda_cyc = nonneg(v)?,
            "uem.steps_per_epoch" => self.uem.steps_per_epoch = count(v)?,
            "adam.beta1" => self.uem.adam.beta1 = nonneg(v)?,
            "adam.beta2" => self.uem.adam.beta2 = nonneg(v)?,
            "adam.eps" => self.uem.adam.eps = nonneg(v)?,
            "disc.channels" => self.disc_channels = positive(v)?,
            "denoiser.channels" => self.denoiser_channels = positive(v)?,
            "denoiser.emb_dim" => self.denoiser_emb_dim = positive(v)?,
            "denoiser.max_t" => self.denoiser_max_t = positive(v)?,
            "denoiser.epochs" => self.denoiser.epochs = count(v)?,
            "denoiser.batch" => self.denoiser.batch_size = positive(v)?,
            "denoiser.patch" => self.denoiser.patch_size = positive(v)?,
            "denoiser.lr" => self.denoiser.lr = nonneg(v)?,
            "denoiser.lr_min" => set_cosine_min(&mut self.denoiser, nonneg(v)?),
            "denoiser.steps_per_epoch" => self.denoiser.steps_per_epoch = count(v)?,
            "ftd.epochs" => self.ftd.epochs = count(v)?,
            "ftd.batch" => self.ftd.batch_size = positive(v)?,
            "ftd.patch" => self.ftd.patch_size = positive(v)?,
            "ftd.lr" => self.ftd.lr = nonneg(v)?,
            "ftd.lr_min" => set_cosine_min(&mut self.ftd, nonneg(v)?),
            "ftd.patience" => self.ftd.patience = count(v)?,
            "ftd.steps_per_epoch" => self.ftd.steps_per_epoch = count(v)?,
            "ftd.beta1" => self.ftd.adam.beta1 = nonneg(v)?,
            "data.train" => self.data.train = positive(v)?,
            "data.test" => self.data.test = positive(v)?,
            "data.size" => self.data.size = positive(v)?,
            "niqe.patch" => self.niqe.patch = positive(v)?,
            "niqe.sharpness" => self.niqe.sharpness_fraction = nonneg(v)?,
            _ => unreachable!("key `{key}` missing from the setter"),
        }
        Ok(())
    }

    /// Applies one assignment; `line` is reported in errors (0 for overrides).
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::UnknownKey { key: key.to_string(), valid: KEYS.join(", ") });
        }
        self.set(key, value).map_err(|msg| Error::Config { line, msg: format!("`{key}`: {msg}") })
    }

    /// Applies `KEY=VALUE` text as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config { line: 0, msg: format!("override `{kv}` is not KEY=VALUE") })?;
        self.apply(k.trim(), v.trim(), 0)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            cfg.apply(k.trim(), v.trim(), i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the seed with `DIFFLLE_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config { line: 0, msg: format!("{SEED_ENV}=`{v}` is not an unsigned integer") })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ddc.validate()?;
        self.uem.validate()?;
        self.ftd.validate()?;
        self.denoiser.validate()?;
        self.niqe.validate()?;
        self.enhancer_arch().validate()?;
        self.denoiser_arch().validate()?;
        self.discriminator_arch().validate()?;
        let s = &self.schedule;
        if !(s.beta_start <= s.beta_end && s.beta_end < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need beta_start <= beta_end < 1, got {} and {}",
                s.beta_start, s.beta_end
            )));
        }
        if s.ddim_steps > s.steps {
            return Err(Error::InvalidParameter("schedule.ddim_steps exceeds schedule.steps".into()));
        }
        if self.ddc.omega > s.ddim_steps {
            return Err(Error::InvalidParameter("ddc.omega exceeds schedule.ddim_steps".into()));
        }
        if self.denoiser_max_t > s.steps {
            return Err(Error::InvalidParameter("denoiser.max_t exceeds schedule.steps".into()));
        }
        Ok(())
    }

    pub fn enhancer_arch(&self) -> Arch {
        Arch::Enhancer { in_channels: 3, channels: self.uem_channels, blocks: self.uem_blocks }
    }

    pub fn denoiser_arch(&self) -> Arch {
        Arch::Denoiser { in_channels: 3, channels: self.denoiser_channels, emb_dim: self.denoiser_emb_dim }
    }

    pub fn discriminator_arch(&self) -> Arch {
        Arch::Discriminator { in_channels: 3, channels: self.disc_channels }
    }

    pub fn gan_adam(&self) -> AdamConfig {
        self.uem.adam
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Config::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_examples() {
        let c = Config::parse_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.ddc.gamma, 1.7);
        assert_eq!(c.ddc.omega, 3);
        assert_eq!(c.uem.adam.beta1, 0.5);
        assert_eq!(c.uem.adam.beta2, 0.999);
        assert_eq!(c.uem.lambda_cyc, 10.0);
        let c = Config::parse_str("# comment\n\nddc.gamma = 2.0  # trailing\n").unwrap();
        assert_eq!(c.ddc.gamma, 2.0);
    }

    #[test]
    fn errors_carry_context() {
        match Config::parse_str("seed = 1\nddc.omega = -1\n") {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("range"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        match Config::parse_str("ddc.gama = 2") {
            Err(Error::UnknownKey { key, valid }) => {
                assert_eq!(key, "ddc.gama");
                assert!(valid.contains("ddc.gamma"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(Config::parse_str("\n\nuem.lr = fast"), Err(Error::Config { line: 3, .. })));
        assert!(Config::parse_str("no equals sign").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        for k in KEYS {
            let v = match *k {
                "ddc.curve" => "literal",
                "ddc.eta" | "niqe.sharpness" | "adam.beta1" | "adam.beta2" | "ftd.beta1" => "0.5",
                "niqe.patch" => "32",
                _ => "1",
            };
            let mut c = Config::default();
            c.apply(k, v, 1).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn training_schedule_is_a_prefix() {
        let c = Config::default();
        let full = c.schedule.build(0.0).unwrap();
        let short = c.schedule.training(50).unwrap();
        assert_eq!(short.num_steps(), 50);
        assert_eq!(short.alpha_bars(), &full.alpha_bars()[..50]);
        assert!(c.schedule.training(0).is_err());
        assert!(c.schedule.training(201).is_err());
    }

    #[test]
    fn overrides() {
        let mut c = Config::default();
        c.apply_override("ftd.lr=3e-4").unwrap();
        assert_eq!(c.ftd.lr, 3e-4);
        assert!(c.apply_override("ftd.lr").is_err());
    }
}
