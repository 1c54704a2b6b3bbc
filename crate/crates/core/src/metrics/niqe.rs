//! Natural-scene-statistics quality score against a pristine Gaussian model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::filter::{gaussian_kernel, separable, Border};
use super::ggd::{fit_aggd, fit_ggd};

pub const NIQE_FEATURES: usize = 36;
pub const DEFAULT_PATCH: usize = 32;
pub const DEFAULT_SHARPNESS_FRACTION: f64 = 0.75;
pub const MIN_MODEL_PATCHES: usize = 200;
pub const RIDGE: f64 = 1e-6;
const MSCN_WINDOW: usize = 7;
const MSCN_SIGMA: f64 = 7.0 / 6.0;
const STABILIZER: f64 = 1.0;
/// Orientation offsets `(dy, dx)` of the pairwise MSCN products.
const SHIFTS: [(usize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiqeConfig {
    /// Patch side at full resolution; must be even.
    pub patch: usize,
    pub sharpness_fraction: f64,
}

impl Default for NiqeConfig {
    fn default() -> Self {
        Self { patch: DEFAULT_PATCH, sharpness_fraction: DEFAULT_SHARPNESS_FRACTION }
    }
}

impl NiqeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 22 || !self.patch.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("niqe patch size must be even and >= 22, got {}", self.patch)));
        }
        if !(0.0..=1.0).contains(&self.sharpness_fraction) {
            return Err(Error::InvalidParameter(format!(
                "sharpness fraction must lie in [0, 1], got {}",
                self.sharpness_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// Row-major `NIQE_FEATURES × NIQE_FEATURES`.
    pub cov: Vec<f64>,
    pub config: NiqeConfig,
    pub patches: usize,
}

struct Plane {
    data: Vec<f64>,
    h: usize,
    w: usize,
}

fn gray255<T: Scalar>(img: &ImageTensor<T>) -> Result<Plane> {
    let l = img.luma()?;
    Ok(Plane { data: l.data().iter().map(|v| v.as_f64() * 255.0).collect(), h: l.height(), w: l.width() })
}

/// MSCN coefficients and the local standard deviation map.
fn mscn(p: &Plane) -> (Vec<f64>, Vec<f64>) {
    let k = gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA);
    let (mu, _, _) = separable(&p.data, p.h, p.w, &k, Border::Reflect);
    let sq: Vec<f64> = p.data.iter().map(|v| v * v).collect();
    let (e2, _, _) = separable(&sq, p.h, p.w, &k, Border::Reflect);
    let sigma: Vec<f64> = e2.iter().zip(&mu).map(|(e, m)| (e - m * m).abs().sqrt()).collect();
    let out = p.data.iter().zip(&mu).zip(&sigma).map(|((v, m), s)| (v - m) / (s + STABILIZER)).collect();
    (out, sigma)
}

fn downsample2(p: &Plane) -> Plane {
    let (h, w) = (p.h / 2, p.w / 2);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let i = 2 * y * p.w + 2 * x;
            data.push(0.25 * (p.data[i] + p.data[i + 1] + p.data[i + p.w] + p.data[i + p.w + 1]));
        }
    }
    Plane { data, h, w }
}

/// 18 features of one patch `[y0, y0+s) × [x0, x0+s)` of an MSCN map.
fn patch_features(m: &[f64], w: usize, y0: usize, x0: usize, s: usize, out: &mut Vec<f64>) -> Result<()> {
    let mut vals = Vec::with_capacity(s * s);
    for y in y0..y0 + s {
        vals.extend_from_slice(&m[y * w + x0..y * w + x0 + s]);
    }
    let g = fit_ggd(&vals)?;
    out.push(g.shape);
    out.push(g.scale * g.scale);
    for (dy, dx) in SHIFTS {
        let mut prod = Vec::with_capacity(s * s);
        for y in 0..s - dy {
            for x in 0..s {
                let x2 = x as isize + dx;
                if x2 < 0 || x2 >= s as isize {
                    continue;
                }
                let a = m[(y0 + y) * w + x0 + x];
                let b = m[(y0 + y + dy) * w + x0 + x2 as usize];
                prod.push(a * b);
            }
        }
        let f = fit_aggd(&prod)?;
        out.extend_from_slice(&[f.shape, f.mean, f.left_std * f.left_std, f.right_std * f.right_std]);
    }
    Ok(())
}

/// Feature vectors of the sharpest patches of `img`.
///
/// Patches tile the image from the top-left corner; a patch is kept when
/// its mean local deviation is positive and at least `sharpness_fraction`
/// of the sharpest patch. Patches whose statistics cannot be fitted are
/// dropped.
pub fn niqe_features<T: Scalar>(img: &ImageTensor<T>, cfg: &NiqeConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let p = cfg.patch;
    let g1 = gray255(img)?;
    let (by, bx) = (g1.h / p, g1.w / p);
    if by * bx < 2 {
        return Err(Error::InvalidShape(format!(
            "niqe needs at least two {p}x{p} patches, image is {}x{}",
            g1.h, g1.w
        )));
    }
    let g2 = downsample2(&g1);
    let (m1, sigma) = mscn(&g1);
    let (m2, _) = mscn(&g2);

    let sharp: Vec<f64> = (0..by * bx)
        .map(|b| {
            let (y0, x0) = ((b / bx) * p, (b % bx) * p);
            let mut s = 0.0;
            for y in y0..y0 + p {
                s += sigma[y * g1.w + x0..y * g1.w + x0 + p].iter().sum::<f64>();
            }
            s / (p * p) as f64
        })
        .collect();
    let max = sharp.iter().cloned().fold(0.0, f64::max);
    let mut feats = Vec::new();
    for (b, &s) in sharp.iter().enumerate() {
        if !(s > 0.0 && s >= cfg.sharpness_fraction * max) {
            continue;
        }
        let (py, px) = (b / bx, b % bx);
        let mut f = Vec::with_capacity(NIQE_FEATURES);
        let ok = patch_features(&m1, g1.w, py * p, px * p, p, &mut f)
            .and_then(|_| patch_features(&m2, g2.w, py * p / 2, px * p / 2, p / 2, &mut f));
        if ok.is_ok() {
            feats.push(f);
        }
    }
    if feats.is_empty() {
        return Err(Error::Empty("no patch passed sharpness selection".into()));
    }
    Ok(feats)
}

fn mean_cov(feats: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = NIQE_FEATURES;
    let n = feats.len();
    let mut mean = vec![0.0; d];
    for f in feats {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    if n > 1 {
        for f in feats {
            for i in 0..d {
                let di = f[i] - mean[i];
                for j in i..d {
                    cov[i * d + j] += di * (f[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / (n - 1) as f64;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
    }
    (mean, cov)
}

/// Fits the pristine model on the pooled patch features of `corpus`.
pub fn fit_niqe_model<T: Scalar>(corpus: &[ImageTensor<T>], cfg: &NiqeConfig) -> Result<NiqeModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("niqe corpus".into()));
    }
    let mut feats = Vec::new();
    for img in corpus {
        match niqe_features(img, cfg) {
            Ok(f) => feats.extend(f),
            Err(Error::Empty(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if feats.len() < MIN_MODEL_PATCHES {
        return Err(Error::Empty(format!(
            "niqe model needs at least {MIN_MODEL_PATCHES} selected patches, corpus gave {}",
            feats.len()
        )));
    }
    let (mean, cov) = mean_cov(&feats);
    Ok(NiqeModel { mean, cov, config: *cfg, patches: feats.len() })
}

/// Mahalanobis-type distance between the model and the image's patch
/// statistics. The ridge grows tenfold until the pooled covariance factors.
pub fn niqe_score<T: Scalar>(img: &ImageTensor<T>, model: &NiqeModel) -> Result<f64> {
    let d = NIQE_FEATURES;
    if model.mean.len() != d || model.cov.len() != d * d {
        return Err(Error::InvalidParameter("malformed niqe model".into()));
    }
    let feats = niqe_features(img, &model.config)?;
    let (mean, cov) = mean_cov(&feats);
    let diff = DVector::from_iterator(d, model.mean.iter().zip(&mean).map(|(a, b)| a - b));
    let pooled = DMatrix::from_fn(d, d, |i, j| 0.5 * (model.cov[i * d + j] + cov[i * d + j]));
    let mut ridge = RIDGE;
    for _ in 0..16 {
        let m = &pooled + DMatrix::identity(d, d) * ridge;
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(&diff);
            return Ok(diff.dot(&x).max(0.0).sqrt());
        }
        ridge *= 10.0;
    }
    Err(Error::NumericalSingularity("niqe covariance not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn noise(seed: u64, h: usize, w: usize) -> ImageTensor<f64> {
        let mut rng = SeededRng::new(seed);
        ImageTensor::from_vec(3, h, w, (0..3 * h * w).map(|_| 0.5 + 0.1 * rng.gaussian()).collect()).unwrap()
    }

    #[test]
    fn feature_count_and_white_noise_shape() {
        let f = niqe_features(&noise(1, 96, 96), &NiqeConfig::default()).unwrap();
        assert!(!f.is_empty());
        assert!(f.iter().all(|v| v.len() == NIQE_FEATURES));
        // Each pixel enters its own local deviation estimate, which bounds
        // |MSCN| and makes i.i.d. Gaussian input slightly platykurtic: the
        // fitted shape sits near 3, well away from heavy-tailed natural images.
        for v in &f {
            assert!((2.0..3.5).contains(&v[0]), "mscn shape {}", v[0]);
        }
    }

    #[test]
    fn flat_and_small_images_rejected() {
        let flat = ImageTensor::<f64>::filled(3, 64, 64, 0.4);
        assert!(matches!(niqe_features(&flat, &NiqeConfig::default()), Err(Error::Empty(_))));
        assert!(matches!(niqe_features(&noise(2, 32, 32), &NiqeConfig::default()), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn model_needs_enough_patches() {
        let corpus: Vec<_> = (0..3).map(|s| noise(s, 64, 64)).collect();
        assert!(matches!(fit_niqe_model(&corpus, &NiqeConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn score_nonnegative_and_zero_for_model_stats() {
        let corpus: Vec<_> = (0..80).map(|s| noise(s, 64, 64)).collect();
        let model = fit_niqe_model(&corpus, &NiqeConfig::default()).unwrap();
        let sym = (0..NIQE_FEATURES)
            .all(|i| (0..NIQE_FEATURES).all(|j| model.cov[i * NIQE_FEATURES + j] == model.cov[j * NIQE_FEATURES + i]));
        assert!(sym);
        let s = niqe_score(&corpus[0], &model).unwrap();
        assert!(s >= 0.0 && s.is_finite());
        let again = fit_niqe_model(&corpus, &NiqeConfig::default()).unwrap();
        assert_eq!(model, again);
    }
}
