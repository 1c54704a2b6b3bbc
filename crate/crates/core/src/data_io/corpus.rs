//! Procedural clean images and low-light degradation synthesis.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

pub const CLEAN_MIN: f64 = 0.15;
pub const CLEAN_MAX: f64 = 0.95;
/// Upper bound on the mean squared value of a clean image. A darkened copy
/// `0 <= low <= clean` then has MSE at most this, i.e. PSNR above 8 dB.
pub const CLEAN_MAX_POWER: f64 = 0.155;

pub const IN_DOMAIN_EXPOSURE: (f64, f64) = (0.15, 0.4);
pub const OOD_EXPOSURE: (f64, f64) = (0.08, 0.2);
pub const DARKENING_GAMMA: (f64, f64) = (1.5, 2.5);
pub const OOD_NOISE_SIGMA: (f64, f64) = (0.02, 0.06);
pub const OOD_NOISE_GAIN: (f64, f64) = (0.01, 0.03);

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// One clean `3 × size × size` image.
pub fn gen_clean_image<T: Scalar>(size: usize, rng: &mut SeededRng) -> ImageTensor<T> {
    let n = size * size;
    let s = size as f64;
    let mut img = vec![0.0f64; 3 * n];

    // Linear colour gradient.
    for c in 0..3 {
        let base = rng.uniform_range(0.2, 0.8);
        let gx = rng.uniform_range(-0.5, 0.5);
        let gy = rng.uniform_range(-0.5, 0.5);
        for y in 0..size {
            for x in 0..size {
                img[c * n + y * size + x] = base + gx * (x as f64 / s - 0.5) + gy * (y as f64 / s - 0.5);
            }
        }
    }

    // Shapes with a one-pixel soft edge.
    let shapes = 2 + rng.below(4);
    for _ in 0..shapes {
        let color = [rng.uniform(), rng.uniform(), rng.uniform()];
        let cx = rng.uniform() * s;
        let cy = rng.uniform() * s;
        let r = rng.uniform_range(0.08, 0.3) * s;
        let rect = rng.uniform() < 0.5;
        let aspect = rng.uniform_range(0.5, 2.0);
        let opacity = rng.uniform_range(0.6, 1.0);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let dist = if rect {
                    (dx.abs() - r * aspect).max(dy.abs() - r)
                } else {
                    (dx * dx + dy * dy / (aspect * aspect)).sqrt() - r
                };
                let a = opacity * (1.0 - smoothstep(-0.5, 0.5, dist));
                for (c, &col) in color.iter().enumerate() {
                    let p = &mut img[c * n + y * size + x];
                    *p = (1.0 - a) * *p + a * col;
                }
            }
        }
    }

    // Band-limited texture: a few low-amplitude plane waves.
    let waves = 3 + rng.below(3);
    for _ in 0..waves {
        let freq = rng.uniform_range(0.05, 0.35);
        let theta = rng.uniform() * std::f64::consts::TAU;
        let phase = rng.uniform() * std::f64::consts::TAU;
        let amp = rng.uniform_range(0.01, 0.05);
        let tint = [rng.uniform_range(0.5, 1.0), rng.uniform_range(0.5, 1.0), rng.uniform_range(0.5, 1.0)];
        let (kx, ky) = (freq * theta.cos(), freq * theta.sin());
        for y in 0..size {
            for x in 0..size {
                let v = amp * (kx * x as f64 + ky * y as f64 + phase).sin();
                for (c, &t) in tint.iter().enumerate() {
                    img[c * n + y * size + x] += t * v;
                }
            }
        }
    }

    // Affine fit into the headroom band, then cap the mean power.
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let target_hi = CLEAN_MIN + (CLEAN_MAX - CLEAN_MIN) * rng.uniform_range(0.6, 1.0);
    img.iter_mut().for_each(|v| *v = CLEAN_MIN + (*v - lo) / span * (target_hi - CLEAN_MIN));
    let m1 = img.iter().map(|v| v - CLEAN_MIN).sum::<f64>() / img.len() as f64;
    let m2 = img.iter().map(|v| (v - CLEAN_MIN).powi(2)).sum::<f64>() / img.len() as f64;
    let power = CLEAN_MIN * CLEAN_MIN + 2.0 * CLEAN_MIN * m1 + m2;
    if power > CLEAN_MAX_POWER {
        // Solve CLEAN_MIN² + 2·CLEAN_MIN·k·m1 + k²·m2 = target for k in (0, 1).
        let target = CLEAN_MAX_POWER - 1e-6;
        let (a, b, c) = (m2, 2.0 * CLEAN_MIN * m1, CLEAN_MIN * CLEAN_MIN - target);
        let k = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        img.iter_mut().for_each(|v| *v = CLEAN_MIN + (*v - CLEAN_MIN) * k);
    }
    let data = img.into_iter().map(|v| T::lit(v.clamp(CLEAN_MIN, CLEAN_MAX))).collect();
    ImageTensor::from_vec(3, size, size, data).expect("consistent dims")
}

/// `n` clean images; image `i` is drawn from child stream `i` of `rng`.
pub fn gen_clean_corpus<T: Scalar>(n: usize, size: usize, rng: &mut SeededRng) -> Result<Vec<ImageTensor<T>>> {
    if n == 0 || size == 0 {
        return Err(Error::InvalidParameter(format!("corpus of {n} images at size {size}")));
    }
    let seed = rng.next_u64();
    Ok((0..n)
        .into_par_iter()
        .map(|i| gen_clean_image(size, &mut SeededRng::new(SeededRng::child_seed(seed, i as u64))))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    exposure: f64,
    gamma: f64,
    noise_sigma: f64,
    noise_gain: f64,
    in_domain: bool,
}

impl DegradationSpec {
    pub fn new(exposure: f64, gamma: f64, noise_sigma: f64, noise_gain: f64, in_domain: bool) -> Result<Self> {
        if !(exposure > 0.0 && exposure <= 1.0) {
            return Err(Error::InvalidParameter(format!("exposure must lie in (0, 1], got {exposure}")));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("darkening exponent must be >= 1, got {gamma}")));
        }
        if !(noise_sigma >= 0.0) || !(noise_gain >= 0.0) {
            return Err(Error::InvalidParameter("noise parameters must be non-negative".into()));
        }
        if in_domain && (noise_sigma != 0.0 || noise_gain != 0.0) {
            return Err(Error::InvalidParameter("in-domain degradation cannot add noise".into()));
        }
        Ok(Self { exposure, gamma, noise_sigma, noise_gain, in_domain })
    }

    pub fn in_domain(exposure: f64, gamma: f64) -> Result<Self> {
        Self::new(exposure, gamma, 0.0, 0.0, true)
    }

    pub fn identity() -> Self {
        Self::in_domain(1.0, 1.0).unwrap()
    }

    pub fn sample_in_domain(rng: &mut SeededRng) -> Self {
        let s = rng.uniform_range(IN_DOMAIN_EXPOSURE.0, IN_DOMAIN_EXPOSURE.1);
        let g = rng.uniform_range(DARKENING_GAMMA.0, DARKENING_GAMMA.1);
        Self::in_domain(s, g).unwrap()
    }

    pub fn sample_out_of_domain(rng: &mut SeededRng) -> Self {
        let s = rng.uniform_range(OOD_EXPOSURE.0, OOD_EXPOSURE.1);
        let g = rng.uniform_range(DARKENING_GAMMA.0, DARKENING_GAMMA.1);
        let sigma = rng.uniform_range(OOD_NOISE_SIGMA.0, OOD_NOISE_SIGMA.1);
        let k = rng.uniform_range(OOD_NOISE_GAIN.0, OOD_NOISE_GAIN.1);
        Self::new(s, g, sigma, k, false).unwrap()
    }

    pub fn exposure(&self) -> f64 {
        self.exposure
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn noise_gain(&self) -> f64 {
        self.noise_gain
    }

    pub fn is_in_domain(&self) -> bool {
        self.in_domain
    }
}

/// `clamp01(s·c^γ + σ·ε + k·sqrt(s·c^γ)·ε′)`; noise draws are skipped when
/// both noise terms are zero.
pub fn synth_degrade<T: Scalar>(clean: &ImageTensor<T>, spec: &DegradationSpec, rng: &mut SeededRng) -> ImageTensor<T> {
    let noisy = spec.noise_sigma > 0.0 || spec.noise_gain > 0.0;
    let data = clean
        .data()
        .iter()
        .map(|&c| {
            let dark = spec.exposure * c.as_f64().max(0.0).powf(spec.gamma);
            let v = if noisy {
                let (e1, e2) = (rng.gaussian(), rng.gaussian());
                dark + spec.noise_sigma * e1 + spec.noise_gain * dark.sqrt() * e2
            } else {
                dark
            };
            T::lit(v.clamp(0.0, 1.0))
        })
        .collect();
    ImageTensor::from_vec(clean.channels(), clean.height(), clean.width(), data).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    #[test]
    fn corpus_range_diversity_determinism() {
        let a: Vec<ImageTensor<f32>> = gen_clean_corpus(40, 32, &mut SeededRng::new(1)).unwrap();
        let b: Vec<ImageTensor<f32>> = gen_clean_corpus(40, 32, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert!(img.data().iter().all(|&v| (CLEAN_MIN as f32..=CLEAN_MAX as f32).contains(&v)));
            let p: f64 = img.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / img.len() as f64;
            assert!(p <= CLEAN_MAX_POWER + 1e-6);
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(a[i].mean_abs_diff(&a[j]).unwrap() > 0.01);
            }
        }
    }

    #[test]
    fn degrade_examples() {
        let mut rng = SeededRng::new(0);
        let clean = ImageTensor::<f64>::filled(3, 2, 2, 0.5);
        assert_eq!(synth_degrade(&clean, &DegradationSpec::identity(), &mut rng), clean);
        let spec = DegradationSpec::in_domain(0.2, 2.0).unwrap();
        let low = synth_degrade(&clean, &spec, &mut rng);
        assert!(low.data().iter().all(|&v| (v - 0.05).abs() < 1e-15));
        assert!(DegradationSpec::new(0.2, 2.0, 0.01, 0.0, true).is_err());
        assert!(DegradationSpec::new(0.0, 2.0, 0.0, 0.0, false).is_err());
        assert!(DegradationSpec::new(0.5, 0.5, 0.0, 0.0, false).is_err());
    }

    #[test]
    fn in_domain_keeps_structure() {
        let mut rng = SeededRng::new(7);
        let corpus: Vec<ImageTensor<f64>> = gen_clean_corpus(60, 32, &mut rng).unwrap();
        for c in &corpus {
            let low = synth_degrade(c, &DegradationSpec::sample_in_domain(&mut rng), &mut rng);
            assert!(psnr(&low, c).unwrap() >= 8.0);
        }
    }
}
