use crate::error::{Error, Result};
use crate::nnet::{denoiser_train_step, AdamState, Arch, NetKind, NetworkParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

use super::{Batcher, TrainConfig};

/// Trains a noise predictor on `clean`; returns it with the per-epoch mean losses.
pub fn train_denoiser<T: Scalar>(
    clean: &[ImageTensor<T>],
    arch: Arch,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(NetworkParams<T>, Vec<f64>)> {
    cfg.validate()?;
    if arch.kind() != NetKind::Denoiser {
        return Err(Error::InvalidParameter(format!("expected a denoiser architecture, got {}", arch.kind())));
    }
    if clean.is_empty() {
        return Err(Error::Empty("denoiser training set".into()));
    }
    let mut net = NetworkParams::init(arch, rng)?;
    let mut adam = AdamState::new(&net, cfg.adam);
    let batcher = Batcher::from_config(cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let batches = batcher.epoch(clean, rng)?;
        let mut total = 0.0;
        for b in &batches {
            total += denoiser_train_step(&mut net, &mut adam, b, sched, lr, rng)?;
        }
        history.push(total / batches.len() as f64);
    }
    Ok((net, history))
}
