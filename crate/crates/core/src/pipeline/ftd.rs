//! Distillation of diffusion pseudo-references into the enhancer.

use crate::diffusion::NoisePredictor;
use crate::error::{Error, Result};
use crate::nnet::{adam_step, backward, loss, AdamState, Gradients, NetKind, NetworkParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

use super::{ftd_pseudo_ref, Batcher, CalibrationConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FtdReport {
    /// Epoch-mean `mean|r̂0 − r0|`, measured before each step's update.
    pub epoch_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Fine-tunes `phi` on `low`: each step enhances a batch, turns the outputs
/// into pseudo-references with a diffusion round trip, and takes an Adam
/// step on the L1 distance to them. Only `phi` is updated.
#[allow(clippy::too_many_arguments)]
pub fn ftd_finetune<T: Scalar>(
    phi: &NetworkParams<T>,
    low: &[ImageTensor<T>],
    cfg: &TrainConfig,
    calib: &CalibrationConfig,
    denoiser: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<(NetworkParams<T>, FtdReport)> {
    cfg.validate()?;
    calib.validate()?;
    if phi.kind() != NetKind::Enhancer {
        return Err(Error::InvalidParameter(format!("expected an enhancer, got {}", phi.kind())));
    }
    if low.is_empty() {
        return Err(Error::Empty("distillation set".into()));
    }
    let mut net = phi.clone();
    let mut adam = AdamState::new(&net, cfg.adam);
    let batcher = Batcher::from_config(cfg);
    let mut report = FtdReport { epoch_loss: Vec::with_capacity(cfg.epochs), stopped_early: false };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let batches = batcher.epoch(low, rng)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let mut grads = Gradients::zeros_for(&net);
            for y in batch {
                let (r0, tape) = net.forward(y, None)?;
                let target = ftd_pseudo_ref(&r0, calib, denoiser, sched, rng)?;
                let (l, g) = loss::l1(&r0, &target)?;
                total += l.as_f64();
                count += 1;
                let (gp, _) = backward(&net, &tape, &g)?;
                grads.accumulate(&gp);
            }
            grads.scale(T::lit(1.0 / batch.len() as f64));
            adam_step(&mut net, &grads, &mut adam, lr)?;
        }
        let mean = total / count as f64;
        report.epoch_loss.push(mean);
        if mean < best {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((net, report))
}
