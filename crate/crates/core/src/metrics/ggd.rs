//! Moment-matching fits of generalized Gaussian distributions.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;
const SHAPE_LO: f64 = 0.05;
const SHAPE_HI: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    /// `sqrt(E[x²])`.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub left_scale: f64,
    pub right_scale: f64,
    pub mean: f64,
    /// Raw one-sided standard deviations before the shape correction.
    pub left_std: f64,
    pub right_std: f64,
}

/// `Γ(1/β)Γ(3/β) / Γ(2/β)²`, strictly decreasing in `β`.
fn ratio(beta: f64) -> f64 {
    (ln_gamma(1.0 / beta) + ln_gamma(3.0 / beta) - 2.0 * ln_gamma(2.0 / beta)).exp()
}

/// Solves `ratio(β) = target` by bisection on `log β`; clamped to the search range.
fn invert_ratio(target: f64) -> f64 {
    let (mut lo, mut hi) = (SHAPE_LO.ln(), SHAPE_HI.ln());
    if target >= ratio(SHAPE_LO) {
        return SHAPE_LO;
    }
    if target <= ratio(SHAPE_HI) {
        return SHAPE_HI;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn check(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("need at least {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    if samples.iter().all(|&v| v == samples[0]) {
        return Err(Error::Degenerate("constant samples".into()));
    }
    Ok(())
}

/// Zero-mean GGD fit.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    check(samples)?;
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let m1 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    Ok(GgdFit { shape: invert_ratio(m2 / (m1 * m1)), scale: m2.sqrt() })
}

/// Asymmetric GGD fit; samples exactly at zero count toward neither side.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit> {
    check(samples)?;
    let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for &v in samples {
        if v < 0.0 {
            sl += v * v;
            nl += 1;
        } else if v > 0.0 {
            sr += v * v;
            nr += 1;
        }
    }
    if nl == 0 || nr == 0 {
        return Err(Error::Degenerate("samples lie on one side of zero".into()));
    }
    let left_std = (sl / nl as f64).sqrt();
    let right_std = (sr / nr as f64).sqrt();
    let g = left_std / right_std;
    let n = samples.len() as f64;
    let m1 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let r = m1 * m1 / m2;
    let rn = r * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let shape = invert_ratio(1.0 / rn);
    let c = (0.5 * (ln_gamma(1.0 / shape) - ln_gamma(3.0 / shape))).exp();
    let (left_scale, right_scale) = (left_std * c, right_std * c);
    let mean = (right_scale - left_scale) * (ln_gamma(2.0 / shape) - ln_gamma(1.0 / shape)).exp();
    Ok(AggdFit { shape, left_scale, right_scale, mean, left_std, right_std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| rng.gaussian()).collect()
    }

    fn laplace(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n)
            .map(|_| {
                let u = rng.uniform() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).max(1e-300).ln()
            })
            .collect()
    }

    #[test]
    fn ratio_known_values() {
        // Γ(1/2)Γ(3/2)/Γ(1)² = π/2 and Γ(1)Γ(3)/Γ(2)² = 2.
        assert!((ratio(2.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((ratio(1.0) - 2.0).abs() < 1e-12);
        assert!((invert_ratio(2.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_known_shapes() {
        let g = fit_ggd(&normal(100_000, 1)).unwrap();
        assert!((1.9..=2.1).contains(&g.shape), "{}", g.shape);
        assert!((g.scale - 1.0).abs() < 0.02);
        let l = fit_ggd(&laplace(100_000, 2)).unwrap();
        assert!((0.9..=1.1).contains(&l.shape), "{}", l.shape);
    }

    #[test]
    fn scale_equivariance() {
        let s = normal(100_000, 3);
        let k: Vec<f64> = s.iter().map(|v| 3.0 * v).collect();
        let (a, b) = (fit_ggd(&s).unwrap(), fit_ggd(&k).unwrap());
        assert!((a.shape - b.shape).abs() / a.shape < 0.02);
        assert!((b.scale / a.scale - 3.0).abs() / 3.0 < 0.02);
        let (a, b) = (fit_aggd(&s).unwrap(), fit_aggd(&k).unwrap());
        assert!((a.shape - b.shape).abs() / a.shape < 0.02);
        assert!((b.left_scale / a.left_scale - 3.0).abs() / 3.0 < 0.02);
        assert!((b.right_scale / a.right_scale - 3.0).abs() / 3.0 < 0.02);
    }

    #[test]
    fn aggd_symmetry_and_mirror() {
        let s = normal(100_000, 4);
        let f = fit_aggd(&s).unwrap();
        assert!((f.left_scale / f.right_scale - 1.0).abs() < 0.05);
        assert!((f.shape - 2.0).abs() < 0.1);
        let skew: Vec<f64> = s.iter().map(|&v| if v > 0.0 { 2.0 * v } else { v }).collect();
        let a = fit_aggd(&skew).unwrap();
        let neg: Vec<f64> = skew.iter().map(|v| -v).collect();
        let b = fit_aggd(&neg).unwrap();
        assert!((a.left_scale - b.right_scale).abs() < 1e-12);
        assert!((a.right_scale - b.left_scale).abs() < 1e-12);
        assert!((a.mean + b.mean).abs() < 1e-12);
        assert!(a.mean > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_ggd(&[0.5; 200]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_aggd(&[0.5; 200]), Err(Error::Degenerate(_))));
        assert!(fit_ggd(&normal(50, 1)).is_err());
    }
}
