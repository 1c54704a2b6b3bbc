use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::filter::{gaussian_kernel, separable, Border};

/// Value returned when the two images are (numerically) identical.
pub const PSNR_CAP: f64 = 99.0;

/// `10·log10(1 / MSE)` over all channels at peak 1.0; [`PSNR_CAP`] when
/// `MSE < 1e-10`.
pub fn psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse < 1e-10 {
        Ok(PSNR_CAP)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean SSIM of the BT.601 luma planes: 11×11 Gaussian window (σ = 1.5),
/// valid positions only, dynamic range 1.
pub fn ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::InvalidShape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let (h, w) = (a.height(), a.width());
    let la: Vec<f64> = a.luma()?.data().iter().map(|v| v.as_f64()).collect();
    let lb: Vec<f64> = b.luma()?.data().iter().map(|v| v.as_f64()).collect();
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let filt = |p: &[f64]| separable(p, h, w, &k, Border::Valid).0;
    let mu_a = filt(&la);
    let mu_b = filt(&lb);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let e_aa = filt(&prod(&la, &la));
    let e_bb = filt(&prod(&lb, &lb));
    let e_ab = filt(&prod(&la, &lb));
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        total += num / den;
    }
    Ok(total / n as f64)
}
