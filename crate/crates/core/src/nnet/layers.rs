//! Layer primitives with explicit backward passes.
//!
//! Every forward function returns its output plus whatever it needs to
//! compute exact gradients later; the matching backward function consumes
//! that cache and the gradient of the output.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

pub const NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Reflect,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn same3x3(in_ch: usize, out_ch: usize) -> Self {
        Self { in_ch, out_ch, kernel: 3, stride: 1, pad: 1, padding: Padding::Reflect }
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.padding == Padding::Reflect && self.pad > 0 && (h <= self.pad || w <= self.pad) {
            return Err(Error::InvalidShape(format!("reflection pad {} needs input larger than {h}x{w}", self.pad)));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::InvalidShape(format!(
                "{}x{} kernel does not fit a {h}x{w} input",
                self.kernel, self.kernel
            )));
        }
        Ok(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Padded copy of the input plus the geometry needed to fold gradients back.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    padded: Vec<T>,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

fn pad_input<T: Scalar>(x: &ImageTensor<T>, pad: usize, padding: Padding) -> Vec<T> {
    let (c, h, w) = x.shape();
    if pad == 0 {
        return x.data().to_vec();
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![T::zero(); c * ph * pw];
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = &mut out[ch * ph * pw..(ch + 1) * ph * pw];
        for py in 0..ph {
            let sy = py as isize - pad as isize;
            let row = match padding {
                Padding::Zero if sy < 0 || sy >= h as isize => continue,
                Padding::Zero => sy as usize,
                Padding::Reflect => reflect(sy, h),
            };
            let drow = &mut dst[py * pw..(py + 1) * pw];
            drow[pad..pad + w].copy_from_slice(&src[row * w..(row + 1) * w]);
            if padding == Padding::Reflect {
                for px in 0..pad {
                    drow[px] = src[row * w + reflect(px as isize - pad as isize, w)];
                    let qx = pad + w + px;
                    drow[qx] = src[row * w + reflect(qx as isize - pad as isize, w)];
                }
            }
        }
    }
    out
}

/// Adds the gradient of a padded buffer back onto the unpadded input positions.
fn unpad_grad<T: Scalar>(g: &[T], c: usize, h: usize, w: usize, pad: usize, padding: Padding) -> ImageTensor<T> {
    if pad == 0 {
        return ImageTensor::from_vec(c, h, w, g.to_vec()).expect("grad shape");
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = ImageTensor::zeros(c, h, w);
    for ch in 0..c {
        let src = &g[ch * ph * pw..(ch + 1) * ph * pw];
        let dst = out.plane_mut(ch);
        for py in 0..ph {
            let sy = py as isize - pad as isize;
            let row = match padding {
                Padding::Zero if sy < 0 || sy >= h as isize => continue,
                Padding::Zero => sy as usize,
                Padding::Reflect => reflect(sy, h),
            };
            for px in 0..pw {
                let sx = px as isize - pad as isize;
                let col = match padding {
                    Padding::Zero if sx < 0 || sx >= w as isize => continue,
                    Padding::Zero => sx as usize,
                    Padding::Reflect => reflect(sx, w),
                };
                dst[row * w + col] += src[py * pw + px];
            }
        }
    }
    out
}

pub fn conv2d_forward<T: Scalar>(
    spec: &ConvSpec,
    weight: &[T],
    bias: &[T],
    x: &ImageTensor<T>,
) -> Result<(ImageTensor<T>, ConvCache<T>)> {
    let (c, h, w) = x.shape();
    if c != spec.in_ch {
        return Err(Error::ShapeMismatch(format!("conv expects {} input channels, got {c}", spec.in_ch)));
    }
    debug_assert_eq!(weight.len(), spec.weight_len());
    debug_assert_eq!(bias.len(), spec.out_ch);
    let (oh, ow) = spec.output_dims(h, w)?;
    let padded = pad_input(x, spec.pad, spec.padding);
    let (ph, pw) = (h + 2 * spec.pad, w + 2 * spec.pad);
    let k = spec.kernel;
    let s = spec.stride;
    let mut out = vec![T::zero(); spec.out_ch * oh * ow];
    for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(bias[o]);
        for ci in 0..c {
            let src = &padded[ci * ph * pw..(ci + 1) * ph * pw];
            let wk = &weight[(o * c + ci) * k * k..(o * c + ci + 1) * k * k];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wk[ky * k + kx];
                    for oy in 0..oh {
                        let srow = &src[(oy * s + ky) * pw + kx..];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            for (ov, &iv) in orow.iter_mut().zip(&srow[..ow]) {
                                *ov += wv * iv;
                            }
                        } else {
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                *ov += wv * srow[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((ImageTensor::from_vec(spec.out_ch, oh, ow, out)?, ConvCache { padded, in_h: h, in_w: w, out_h: oh, out_w: ow }))
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn conv2d_backward<T: Scalar>(
    spec: &ConvSpec,
    weight: &[T],
    cache: &ConvCache<T>,
    grad_out: &ImageTensor<T>,
) -> Result<(ImageTensor<T>, Vec<T>, Vec<T>)> {
    let (oh, ow) = (cache.out_h, cache.out_w);
    if grad_out.shape() != (spec.out_ch, oh, ow) {
        return Err(Error::ShapeMismatch(format!(
            "conv grad {:?} vs output {:?}",
            grad_out.shape(),
            (spec.out_ch, oh, ow)
        )));
    }
    let (h, w) = (cache.in_h, cache.in_w);
    let (ph, pw) = (h + 2 * spec.pad, w + 2 * spec.pad);
    let (c, k, s) = (spec.in_ch, spec.kernel, spec.stride);
    let mut gw = vec![T::zero(); spec.weight_len()];
    let mut gb = vec![T::zero(); spec.out_ch];
    let mut gpad = vec![T::zero(); c * ph * pw];
    #[allow(clippy::needless_range_loop)]
    for o in 0..spec.out_ch {
        let go = grad_out.plane(o);
        gb[o] = go.iter().copied().sum();
        for ci in 0..c {
            let src = &cache.padded[ci * ph * pw..(ci + 1) * ph * pw];
            let gsrc = &mut gpad[ci * ph * pw..(ci + 1) * ph * pw];
            let base = (o * c + ci) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[base + ky * k + kx];
                    let mut acc = T::zero();
                    for oy in 0..oh {
                        let grow = &go[oy * ow..(oy + 1) * ow];
                        let off = (oy * s + ky) * pw + kx;
                        if s == 1 {
                            let srow = &src[off..off + ow];
                            let mut row_acc = T::zero();
                            for (&g, &v) in grow.iter().zip(srow) {
                                row_acc += g * v;
                            }
                            acc += row_acc;
                            for (d, &g) in gsrc[off..off + ow].iter_mut().zip(grow) {
                                *d += wv * g;
                            }
                        } else {
                            for (ox, &g) in grow.iter().enumerate() {
                                acc += g * src[off + ox * s];
                                gsrc[off + ox * s] += wv * g;
                            }
                        }
                    }
                    gw[base + ky * k + kx] = acc;
                }
            }
        }
    }
    Ok((unpad_grad(&gpad, c, h, w, spec.pad, spec.padding), gw, gb))
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    normalized: ImageTensor<T>,
    inv_std: Vec<T>,
}

/// Per-channel instance normalization with affine `scale`, `shift`.
pub fn instance_norm_forward<T: Scalar>(
    x: &ImageTensor<T>,
    scale: &[T],
    shift: &[T],
) -> (ImageTensor<T>, NormCache<T>) {
    let (c, h, w) = x.shape();
    let n = T::lit((h * w) as f64);
    let eps = T::lit(NORM_EPS);
    let mut normalized = ImageTensor::zeros(c, h, w);
    let mut out = ImageTensor::zeros(c, h, w);
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let src = x.plane(ch);
        let mean = src.iter().copied().sum::<T>() / n;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        let (g, b) = (scale[ch], shift[ch]);
        for ((xh, o), &v) in normalized.plane_mut(ch).iter_mut().zip(out.plane_mut(ch).iter_mut()).zip(src) {
            *xh = (v - mean) * is;
            *o = g * *xh + b;
        }
    }
    (out, NormCache { normalized, inv_std })
}

/// Returns `(grad_input, grad_scale, grad_shift)`.
pub fn instance_norm_backward<T: Scalar>(
    scale: &[T],
    cache: &NormCache<T>,
    grad_out: &ImageTensor<T>,
) -> (ImageTensor<T>, Vec<T>, Vec<T>) {
    let (c, h, w) = grad_out.shape();
    let n = T::lit((h * w) as f64);
    let mut gx = ImageTensor::zeros(c, h, w);
    let mut gscale = vec![T::zero(); c];
    let mut gshift = vec![T::zero(); c];
    for ch in 0..c {
        let go = grad_out.plane(ch);
        let xh = cache.normalized.plane(ch);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for (&g, &v) in go.iter().zip(xh) {
            sum_g += g;
            sum_gx += g * v;
        }
        gshift[ch] = sum_g;
        gscale[ch] = sum_gx;
        // d xhat = g·scale; dx = inv_std/n · (n·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
        let sc = scale[ch];
        let k = cache.inv_std[ch] / n;
        let (sdx, sdxx) = (sum_g * sc, sum_gx * sc);
        for ((d, &g), &v) in gx.plane_mut(ch).iter_mut().zip(go).zip(xh) {
            *d = k * (n * g * sc - sdx - v * sdxx);
        }
    }
    (gx, gscale, gshift)
}

/// Rectifier with slope `slope` for negative inputs (0 for plain ReLU).
pub fn leaky_relu_forward<T: Scalar>(x: &ImageTensor<T>, slope: f64) -> ImageTensor<T> {
    let a = T::lit(slope);
    x.map(|v| if v > T::zero() { v } else { a * v })
}

/// `pre` is the forward input.
pub fn leaky_relu_backward<T: Scalar>(pre: &ImageTensor<T>, grad_out: &ImageTensor<T>, slope: f64) -> ImageTensor<T> {
    let a = T::lit(slope);
    pre.zip_map(grad_out, |v, g| if v > T::zero() { g } else { a * g }).expect("activation grad shape")
}

/// Sinusoidal timestep embedding: `[sin(t·f_0) .. sin(t·f_{k-1}), cos(t·f_0) .. ]`
/// with `f_i = 10000^(-i/k)`, `k = dim/2`.
pub fn time_embedding<T: Scalar>(t: usize, dim: usize) -> Vec<T> {
    let half = dim / 2;
    let mut out = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(i as f64) / half as f64 * 10000f64.ln()).exp();
        let arg = t as f64 * freq;
        out[i] = T::lit(arg.sin());
        out[half + i] = T::lit(arg.cos());
    }
    out
}

/// Adds `W·emb` (one value per channel) to every pixel of the channel, in place.
pub fn time_bias_forward<T: Scalar>(x: &mut ImageTensor<T>, weight: &[T], emb: &[T]) {
    let e = emb.len();
    for ch in 0..x.channels() {
        let b: T = weight[ch * e..(ch + 1) * e].iter().zip(emb).map(|(&w, &v)| w * v).sum();
        for v in x.plane_mut(ch) {
            *v += b;
        }
    }
}

/// Gradient of the projection weights; the input gradient passes through unchanged.
pub fn time_bias_backward<T: Scalar>(grad_out: &ImageTensor<T>, emb: &[T]) -> Vec<T> {
    let e = emb.len();
    let mut gw = vec![T::zero(); grad_out.channels() * e];
    for ch in 0..grad_out.channels() {
        let s: T = grad_out.plane(ch).iter().copied().sum();
        for (g, &v) in gw[ch * e..(ch + 1) * e].iter_mut().zip(emb) {
            *g = s * v;
        }
    }
    gw
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2_forward<T: Scalar>(x: &ImageTensor<T>) -> ImageTensor<T> {
    let (c, h, w) = x.shape();
    let mut out = ImageTensor::zeros(c, 2 * h, 2 * w);
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..2 * h {
            for x in 0..2 * w {
                dst[y * 2 * w + x] = src[(y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(grad_out: &ImageTensor<T>) -> ImageTensor<T> {
    let (c, h2, w2) = grad_out.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = ImageTensor::zeros(c, h, w);
    for ch in 0..c {
        let src = grad_out.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += src[y * w2 + x];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_matches_finite_differences() {
        for (name, err) in crate::nnet::gradcheck::check_layers(1) {
            assert!(err <= 1e-4, "{name}: relative error {err}");
        }
    }

    #[test]
    fn conv_known_values() {
        // 1x3x3 input, identity-centre kernel with bias 1 and reflect padding.
        let x = ImageTensor::<f64>::from_vec(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap();
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let (out, _) = conv2d_forward(&ConvSpec::same3x3(1, 1), &w, &[1.0], &x).unwrap();
        assert_eq!(out.data(), &[2., 3., 4., 5., 6., 7., 8., 9., 10.]);
        // Top-left tap reads the reflected neighbour (1,1) at the corner.
        let mut w = vec![0.0; 9];
        w[0] = 1.0;
        let (out, _) = conv2d_forward(&ConvSpec::same3x3(1, 1), &w, &[0.0], &x).unwrap();
        assert_eq!(out.at(0, 0, 0), 5.0);
        assert_eq!(out.at(0, 1, 1), 1.0);
    }

    #[test]
    fn embedding_distinguishes_timesteps() {
        let a = time_embedding::<f64>(3, 16);
        let b = time_embedding::<f64>(4, 16);
        assert_ne!(a, b);
        assert_eq!(time_embedding::<f64>(0, 4), vec![0.0, 0.0, 1.0, 1.0]);
    }
}
