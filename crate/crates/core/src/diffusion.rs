//! Forward noising, the denoising function, DDIM steps and the
//! add-then-remove calibration round-trip.
//!
//! Forward transitions move along the schedule's DDIM subsequence: a step
//! from `t` to the next DDIM timestep `u` uses the coefficient
//! `alpha_bar_u / alpha_bar_t`, which is the per-step `alpha_u` when the
//! subsequence is the full range `1..=T`. Composing forward steps from a
//! clean image therefore reproduces the closed-form marginal at every
//! visited timestep.

use crate::error::{Error, Result};
use crate::rng::{sample_gaussian, SeededRng};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

/// An estimate of the noise `eps` contained in a latent at timestep `t`.
pub trait NoisePredictor<T: Scalar> {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>>;
}

impl<T: Scalar, P: NoisePredictor<T> + ?Sized> NoisePredictor<T> for &P {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>> {
        (**self).predict(x_t, t)
    }
}

/// Predictor that always returns zeros.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl<T: Scalar> NoisePredictor<T> for ZeroPredictor {
    fn predict(&self, x_t: &ImageTensor<T>, _t: usize) -> Result<ImageTensor<T>> {
        Ok(x_t.zeros_like())
    }
}

/// Knows the clean image and returns the exact noise that separates a
/// latent from it: `(x_t - sqrt(ab_t)·x0) / sqrt(1 - ab_t)`.
#[derive(Debug, Clone)]
pub struct OraclePredictor<'a, T> {
    pub x0: ImageTensor<T>,
    pub schedule: &'a NoiseSchedule,
}

impl<T: Scalar> NoisePredictor<T> for OraclePredictor<'_, T> {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>> {
        let ab = self.schedule.alpha_bar(t);
        if 1.0 - ab <= 0.0 {
            return Ok(x_t.zeros_like());
        }
        let (a, b) = (T::lit(ab.sqrt()), T::lit((1.0 - ab).sqrt()));
        x_t.zip_map(&self.x0, |x, x0| (x - a * x0) / b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState<T> {
    pub tensor: ImageTensor<T>,
    /// 0 for a clean image.
    pub t: usize,
}

impl<T: Scalar> LatentState<T> {
    pub fn clean(tensor: ImageTensor<T>) -> Self {
        Self { tensor, t: 0 }
    }
}

/// `sqrt(ab_t)·x0 + sqrt(1 - ab_t)·eps`.
pub fn q_sample_closed<T: Scalar>(
    x0: &ImageTensor<T>,
    t: usize,
    eps: &ImageTensor<T>,
    sched: &NoiseSchedule,
) -> Result<ImageTensor<T>> {
    sched.check_timestep(t)?;
    let ab = sched.alpha_bar(t);
    x0.axpby(T::lit(ab.sqrt()), eps, T::lit((1.0 - ab).sqrt()))
}

/// One forward transition with caller-supplied noise.
pub fn forward_step_with_noise<T: Scalar>(
    state: &LatentState<T>,
    sched: &NoiseSchedule,
    eps: &ImageTensor<T>,
) -> Result<LatentState<T>> {
    let next = sched.next_ddim_step(state.t).ok_or(Error::ChainExhausted(state.t))?;
    let alpha = sched.alpha_bar(next) / sched.alpha_bar(state.t);
    let tensor = state.tensor.axpby(T::lit(alpha.sqrt()), eps, T::lit((1.0 - alpha).max(0.0).sqrt()))?;
    Ok(LatentState { tensor, t: next })
}

/// One forward transition to the next DDIM timestep with fresh Gaussian noise.
pub fn forward_step<T: Scalar>(
    state: &LatentState<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<LatentState<T>> {
    if sched.next_ddim_step(state.t).is_none() {
        return Err(Error::ChainExhausted(state.t));
    }
    let (c, h, w) = state.tensor.shape();
    let eps = sample_gaussian(rng, c, h, w)?;
    forward_step_with_noise(state, sched, &eps)
}

/// Denoising function: `(x_t - sqrt(1 - ab_t)·eps_hat) / sqrt(ab_t)`.
pub fn predict_x0<T: Scalar>(
    x_t: &ImageTensor<T>,
    t: usize,
    eps_hat: &ImageTensor<T>,
    sched: &NoiseSchedule,
) -> Result<ImageTensor<T>> {
    sched.check_timestep(t)?;
    let ab = sched.alpha_bar(t);
    if ab < 1e-12 {
        return Err(Error::NumericalSingularity(format!("alpha_bar_{t} = {ab:e} too small to invert")));
    }
    let inv = T::lit(1.0 / ab.sqrt());
    let b = T::lit((1.0 - ab).sqrt());
    x_t.zip_map(eps_hat, |x, e| (x - b * e) * inv)
}

fn ddim_update<T: Scalar>(
    x_t: &ImageTensor<T>,
    t: usize,
    s: usize,
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    sigma: f64,
    rng: Option<&mut SeededRng>,
) -> Result<ImageTensor<T>> {
    if s >= t {
        return Err(Error::InvalidParameter(format!("DDIM step needs s < t, got s={s}, t={t}")));
    }
    sched.check_timestep(t)?;
    let ab_s = sched.alpha_bar(s);
    let limit = 1.0 - ab_s;
    if sigma * sigma > limit {
        return Err(Error::InvalidSigma { sigma_sq: sigma * sigma, limit });
    }
    let eps_hat = predictor.predict(x_t, t)?;
    eps_hat.check_same_shape(x_t, "noise prediction")?;
    let x0_hat = predict_x0(x_t, t, &eps_hat, sched)?;
    let dir = T::lit((limit - sigma * sigma).max(0.0).sqrt());
    let mut x_s = x0_hat.axpby(T::lit(ab_s.sqrt()), &eps_hat, dir)?;
    if sigma > 0.0 {
        if let Some(rng) = rng {
            let (c, h, w) = x_t.shape();
            let z = sample_gaussian::<T>(rng, c, h, w)?;
            let sg = T::lit(sigma);
            for (v, n) in x_s.data_mut().iter_mut().zip(z.data()) {
                *v += sg * *n;
            }
        }
    }
    Ok(x_s)
}

/// One DDIM step `t -> s`:
/// `x_s = sqrt(ab_s)·f(x_t) + sqrt(1 - ab_s - sigma_t²)·eps_hat + sigma_t·z`,
/// where `sigma_t` comes from the schedule and is forced to 0 when `s = 0`.
pub fn ddim_step<T: Scalar>(
    x_t: &ImageTensor<T>,
    t: usize,
    s: usize,
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    let sigma = if s == 0 { 0.0 } else { sched.sigma(t) };
    ddim_update(x_t, t, s, predictor, sched, sigma, Some(rng))
}

fn chain<T: Scalar>(
    x: &ImageTensor<T>,
    steps: &[usize],
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    mut rng: Option<&mut SeededRng>,
) -> Result<ImageTensor<T>> {
    if steps.is_empty() {
        return Err(Error::Empty("reverse chain needs at least one timestep".into()));
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("reverse chain steps must be ascending".into()));
    }
    let mut x = x.clone();
    for i in (0..steps.len()).rev() {
        let t = steps[i];
        let s = if i == 0 { 0 } else { steps[i - 1] };
        let sigma = if s == 0 || rng.is_none() { 0.0 } else { sched.sigma(t) };
        x = ddim_update(&x, t, s, predictor, sched, sigma, rng.as_deref_mut())?;
    }
    Ok(x)
}

/// Deterministic DDIM from a latent at `max(steps)` down through the
/// ascending `steps` to the clean index 0. The last step only denoises.
pub fn reverse_chain<T: Scalar>(
    x: &ImageTensor<T>,
    steps: &[usize],
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
) -> Result<ImageTensor<T>> {
    chain(x, steps, predictor, sched, None)
}

/// As [`reverse_chain`], but intermediate steps inject the schedule's
/// `sigma_t` noise. The final step onto the clean image stays noise-free.
pub fn reverse_chain_stochastic<T: Scalar>(
    x: &ImageTensor<T>,
    steps: &[usize],
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    chain(x, steps, predictor, sched, Some(rng))
}

/// Adds noise through the `omega` lowest-noise DDIM timesteps and removes it
/// again with `predictor`, returning a clamped image.
///
/// `omega = 0` performs no diffusion at all and only clamps.
pub fn roundtrip_calibrate<T: Scalar>(
    x: &ImageTensor<T>,
    omega: usize,
    predictor: &dyn NoisePredictor<T>,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<ImageTensor<T>> {
    if omega == 0 {
        return Ok(x.clamp01());
    }
    let window = sched.tail_window(omega)?;
    let mut state = LatentState::clean(x.clone());
    for _ in 0..omega {
        state = forward_step(&state, sched, rng)?;
    }
    debug_assert_eq!(state.t, *window.last().unwrap());
    let out = if sched.eta() > 0.0 {
        reverse_chain_stochastic(&state.tensor, &window, predictor, sched, rng)?
    } else {
        reverse_chain(&state.tensor, &window, predictor, sched)?
    };
    Ok(out.clamp01())
}
