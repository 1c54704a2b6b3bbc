//! Training and inference stages: enhancer pretraining, distillation
//! against diffusion pseudo-references, and calibrated inference.

mod batch;
mod config;
mod denoiser;
mod ftd;
mod uem;

pub use batch::Batcher;
pub use config::{CalibrationConfig, CurveMode, LrPolicy, TrainConfig};
pub use denoiser::train_denoiser;
pub use ftd::{ftd_finetune, FtdReport};
pub use uem::{train_uem, UemEpoch, UemModels};

use crate::diffusion::{roundtrip_calibrate, NoisePredictor};
use crate::error::{Error, Result};
use crate::nnet::{NetKind, NetworkParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

/// Per-pixel power curve; 0 and 1 are fixed points in both modes.
pub fn gamma_adjust<T: Scalar>(y: &ImageTensor<T>, cfg: &CalibrationConfig) -> ImageTensor<T> {
    let e = match cfg.curve {
        CurveMode::Literal => cfg.gamma,
        CurveMode::Brighten => 1.0 / cfg.gamma,
    };
    if e == 1.0 {
        return y.clone();
    }
    let e = T::lit(e);
    y.map(|v| v.max(T::zero()).powf(e))
}

/// Diffusion round trip of an enhancer output, used as its distillation target.
pub fn ftd_pseudo_ref<T: Scalar>(
    r0: &ImageTensor<T>,
    cfg: &CalibrationConfig,
    denoiser: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    roundtrip_calibrate(&r0.clamp01(), cfg.omega, denoiser, sched, rng)
}

fn check_enhancer<T: Scalar>(phi: &NetworkParams<T>, y: &ImageTensor<T>) -> Result<()> {
    if phi.kind() != NetKind::Enhancer {
        return Err(Error::InvalidParameter(format!("expected an enhancer, got {}", phi.kind())));
    }
    if !y.height().is_multiple_of(4) || !y.width().is_multiple_of(4) {
        return Err(Error::InvalidShape(format!(
            "image dimensions must be multiples of 4, got {}x{}",
            y.height(),
            y.width()
        )));
    }
    Ok(())
}

/// Single enhancer pass, clamped to `[0, 1]`.
pub fn enhance_in_domain<T: Scalar>(y: &ImageTensor<T>, phi: &NetworkParams<T>) -> Result<ImageTensor<T>> {
    check_enhancer(phi, y)?;
    Ok(phi.infer(y, None)?.clamp01())
}

/// Curve adjustment and diffusion round trip applied to the input before
/// the enhancer pass.
pub fn enhance_out_of_domain<T: Scalar>(
    y: &ImageTensor<T>,
    phi: &NetworkParams<T>,
    cfg: &CalibrationConfig,
    denoiser: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    check_enhancer(phi, y)?;
    cfg.validate()?;
    let calibrated = calibrate_input(y, cfg, denoiser, sched, rng)?;
    Ok(phi.infer(&calibrated, None)?.clamp01())
}

/// The calibration half of [`enhance_out_of_domain`].
pub fn calibrate_input<T: Scalar>(
    y: &ImageTensor<T>,
    cfg: &CalibrationConfig,
    denoiser: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    roundtrip_calibrate(&gamma_adjust(y, cfg), cfg.omega, denoiser, sched, rng)
}
