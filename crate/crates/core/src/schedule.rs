//! Noise schedules and DDIM timestep subsequences.
//!
//! Timesteps are 1-based (`1..=T`); index 0 denotes the clean image, for
//! which `alpha_bar(0) = 1`. Schedule coefficients are kept in `f64`
//! regardless of the tensor scalar type.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    /// Indexed by timestep, `sigmas[0]` unused. Applied on the DDIM step
    /// leaving that timestep.
    sigmas: Vec<f64>,
    ddim_steps: Vec<usize>,
    eta: f64,
}

impl NoiseSchedule {
    /// `num_steps` betas linearly spaced from `beta_start` to `beta_end` inclusive.
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidParameter("schedule needs T >= 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "linear schedule requires 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas = if num_steps == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (num_steps - 1) as f64;
            (0..num_steps).map(|i| if i == num_steps - 1 { beta_end } else { beta_start + step * i as f64 }).collect()
        };
        Self::from_betas(betas)
    }

    /// Schedule from arbitrary per-step variances `0 <= beta_t < 1`.
    ///
    /// Zero betas are allowed here so degenerate (identity) schedules can be
    /// built for testing.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter("schedule needs T >= 1".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b >= 0.0 && **b < 1.0)) {
            return Err(Error::InvalidParameter(format!("beta {b} outside [0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let n = betas.len();
        Ok(Self { betas, alphas, alpha_bars, sigmas: vec![0.0; n + 1], ddim_steps: (1..=n).collect(), eta: 0.0 })
    }

    /// A `T`-step schedule with every `alpha_t = 1`; noising and denoising
    /// through it are exact identities.
    pub fn identity(num_steps: usize) -> Result<Self> {
        Self::from_betas(vec![0.0; num_steps])
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn ddim_steps(&self) -> &[usize] {
        &self.ddim_steps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `alpha_t` for `1 <= t <= T`; `alpha_0 = 1`.
    pub fn alpha(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alphas[t - 1]
        }
    }

    /// Cumulative `alpha_bar_t`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas.get(t).copied().unwrap_or(0.0)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            Err(Error::InvalidParameter(format!("timestep {t} outside 1..={}", self.num_steps())))
        } else {
            Ok(())
        }
    }

    /// Replaces the DDIM subsequence with `n` evenly spaced timesteps
    /// `floor(k·T/n)`, `k = 1..=n`; the last one is always `T`.
    pub fn ddim_subsequence(&self, n: usize) -> Result<Self> {
        let total = self.num_steps();
        if n == 0 || n > total {
            return Err(Error::InvalidParameter(format!("DDIM subsequence length {n} outside 1..={total}")));
        }
        let mut out = self.clone();
        out.ddim_steps = (1..=n).map(|k| k * total / n).collect();
        out.refresh_sigmas();
        Ok(out)
    }

    /// Sets the DDIM stochasticity: for a step `t -> s` along the
    /// subsequence, `sigma_t = eta · sqrt((1-ab_s)/(1-ab_t)) · sqrt(1 - ab_t/ab_s)`.
    /// The step landing on the clean image always has `sigma = 0`.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1]")));
        }
        let mut out = self.clone();
        out.eta = eta;
        out.refresh_sigmas();
        Ok(out)
    }

    /// Explicit per-timestep sigmas (index 0 ignored), bypassing `eta`.
    pub fn with_sigmas(&self, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != self.num_steps() + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} sigmas, got {}",
                self.num_steps() + 1,
                sigmas.len()
            )));
        }
        let mut out = self.clone();
        out.sigmas = sigmas;
        Ok(out)
    }

    fn refresh_sigmas(&mut self) {
        self.sigmas = vec![0.0; self.num_steps() + 1];
        if self.eta == 0.0 {
            return;
        }
        let mut prev = 0;
        for &t in &self.ddim_steps {
            let (ab_t, ab_s) = (self.alpha_bar(t), self.alpha_bar(prev));
            let sigma = if 1.0 - ab_t <= 0.0 || prev == 0 {
                0.0
            } else {
                self.eta * ((1.0 - ab_s) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_s).max(0.0).sqrt()
            };
            self.sigmas[t] = sigma;
            prev = t;
        }
    }

    /// The `omega` lowest-noise DDIM timesteps, ascending.
    pub fn tail_window(&self, omega: usize) -> Result<Vec<usize>> {
        if omega == 0 || omega > self.ddim_steps.len() {
            return Err(Error::InvalidParameter(format!("window {omega} outside 1..={}", self.ddim_steps.len())));
        }
        Ok(self.ddim_steps[..omega].to_vec())
    }

    /// Smallest DDIM timestep strictly greater than `t`.
    pub fn next_ddim_step(&self, t: usize) -> Option<usize> {
        self.ddim_steps.iter().copied().find(|&s| s > t)
    }
}
