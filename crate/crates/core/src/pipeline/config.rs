use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nnet::AdamConfig;

/// Direction of the lightness curve applied before calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    /// `y^γ`.
    Literal,
    /// `y^(1/γ)`, which brightens for `γ > 1`.
    Brighten,
}

impl FromStr for CurveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "literal" => Ok(Self::Literal),
            "brighten" => Ok(Self::Brighten),
            _ => Err(format!("expected `literal` or `brighten`, got `{s}`")),
        }
    }
}

impl fmt::Display for CurveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Brighten => "brighten",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub gamma: f64,
    pub curve: CurveMode,
    /// Round-trip depth in DDIM steps; 0 disables the diffusion round trip.
    pub omega: usize,
    pub eta: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { gamma: 1.7, curve: CurveMode::Brighten, omega: 3, eta: 0.0 }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrPolicy {
    Constant,
    /// Constant until epoch `decay_start`, then linear to zero at the end.
    LinearDecay {
        decay_start: usize,
    },
    /// Cosine annealing from the base rate to `lr_min` over all epochs.
    Cosine {
        lr_min: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Side of the random square crop; images no larger are used whole.
    pub patch_size: usize,
    pub lr: f64,
    pub policy: LrPolicy,
    pub lambda_cyc: f64,
    /// Stop after this many epochs without a new best epoch loss; 0 disables.
    pub patience: usize,
    /// Cap on optimizer steps per epoch; 0 means one pass over the data.
    pub steps_per_epoch: usize,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::InvalidParameter("batch and patch sizes must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(self.lambda_cyc >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda_cyc must be >= 0, got {}", self.lambda_cyc)));
        }
        if let LrPolicy::Cosine { lr_min } = self.policy {
            if !(lr_min >= 0.0) {
                return Err(Error::InvalidParameter(format!("lr_min must be >= 0, got {lr_min}")));
            }
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }

    /// Learning rate used throughout `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.policy {
            LrPolicy::Constant => self.lr,
            LrPolicy::LinearDecay { decay_start } => {
                if epoch < decay_start || self.epochs <= decay_start {
                    self.lr
                } else {
                    let span = (self.epochs - decay_start) as f64;
                    self.lr * ((self.epochs - epoch) as f64 / span).clamp(0.0, 1.0)
                }
            }
            LrPolicy::Cosine { lr_min } => {
                if self.epochs <= 1 {
                    return self.lr;
                }
                let p = epoch as f64 / (self.epochs - 1) as f64;
                lr_min + 0.5 * (self.lr - lr_min) * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }

    /// CycleGAN pretraining defaults at desk scale.
    pub fn uem_default() -> Self {
        Self {
            epochs: 20,
            batch_size: 1,
            patch_size: 64,
            lr: 2e-4,
            policy: LrPolicy::LinearDecay { decay_start: 10 },
            lambda_cyc: 10.0,
            patience: 0,
            steps_per_epoch: 0,
            adam: AdamConfig::default(),
        }
    }

    /// Distillation defaults: cosine schedule ending at 1e-8.
    pub fn ftd_default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            patch_size: 64,
            lr: 1e-5,
            policy: LrPolicy::Cosine { lr_min: 1e-8 },
            lambda_cyc: 0.0,
            patience: 10,
            steps_per_epoch: 0,
            adam: AdamConfig::standard(),
        }
    }

    pub fn denoiser_default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            patch_size: 32,
            lr: 1e-3,
            policy: LrPolicy::Cosine { lr_min: 1e-5 },
            lambda_cyc: 0.0,
            patience: 0,
            steps_per_epoch: 0,
            adam: AdamConfig::standard(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let mut c = TrainConfig::ftd_default();
        assert_eq!(c.lr_at(0), 1e-5);
        assert!((c.lr_at(99) - 1e-8).abs() < 1e-20);
        c.policy = LrPolicy::LinearDecay { decay_start: 50 };
        assert_eq!(c.lr_at(49), 1e-5);
        assert!((c.lr_at(75) - 0.5e-5).abs() < 1e-18);
        assert!(c.lr_at(99) > 0.0);
    }

    #[test]
    fn validation() {
        assert!(CalibrationConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(CalibrationConfig { eta: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda_cyc: -1.0, ..TrainConfig::uem_default() }.validate().is_err());
        assert!("brighten".parse::<CurveMode>().is_ok());
        assert!("up".parse::<CurveMode>().is_err());
    }
}
