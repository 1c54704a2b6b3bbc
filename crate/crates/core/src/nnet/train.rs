use crate::diffusion::q_sample_closed;
use crate::error::{Error, Result};
use crate::rng::{sample_gaussian, SeededRng};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

use super::{adam_step, backward, loss, AdamState, Gradients, NetKind, NetworkParams};

/// One optimizer step of the noise-prediction objective
/// `mean ‖eps - eps_theta(x_t, t)‖²` with `t` uniform on `1..=T`.
///
/// Returns the batch-mean loss before the update.
pub fn denoiser_train_step<T: Scalar>(
    net: &mut NetworkParams<T>,
    adam: &mut AdamState<T>,
    batch: &[ImageTensor<T>],
    sched: &NoiseSchedule,
    lr: f64,
    rng: &mut SeededRng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("denoiser batch".into()));
    }
    if net.kind() != NetKind::Denoiser {
        return Err(Error::InvalidParameter(format!("cannot train a {} as a denoiser", net.kind())));
    }
    let mut grads = Gradients::zeros_for(net);
    let mut total = 0.0;
    for x0 in batch {
        let t = 1 + rng.below(sched.num_steps());
        let (c, h, w) = x0.shape();
        let eps = sample_gaussian(rng, c, h, w)?;
        let xt = q_sample_closed(x0, t, &eps, sched)?;
        let (pred, tape) = net.forward(&xt, Some(t))?;
        let (l, g) = loss::mse(&pred, &eps)?;
        total += l.as_f64();
        let (gi, _) = backward(net, &tape, &g)?;
        grads.accumulate(&gi);
    }
    grads.scale(T::lit(1.0 / batch.len() as f64));
    adam_step(net, &grads, adam, lr)?;
    Ok(total / batch.len() as f64)
}
