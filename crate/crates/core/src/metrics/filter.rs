//! Separable 2-D filtering of single planes in `f64`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Only positions where the whole window fits; output shrinks by `k - 1`.
    Valid,
    /// Mirror about the edge pixel, output keeps the input size.
    Reflect,
}

/// Normalized 1-D Gaussian of odd length `len`.
pub fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let r = (len / 2) as f64;
    let mut k: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // Repeated mirroring for windows wider than the plane.
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Applies `kernel` along rows then columns. Returns `(plane, h, w)`.
pub fn separable(plane: &[f64], h: usize, w: usize, kernel: &[f64], border: Border) -> (Vec<f64>, usize, usize) {
    let k = kernel.len();
    let r = (k / 2) as isize;
    match border {
        Border::Valid => {
            let (oh, ow) = (h + 1 - k, w + 1 - k);
            let mut tmp = vec![0.0; h * ow];
            for y in 0..h {
                for x in 0..ow {
                    tmp[y * ow + x] = (0..k).map(|i| kernel[i] * plane[y * w + x + i]).sum();
                }
            }
            let mut out = vec![0.0; oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    out[y * ow + x] = (0..k).map(|i| kernel[i] * tmp[(y + i) * ow + x]).sum();
                }
            }
            (out, oh, ow)
        }
        Border::Reflect => {
            let mut tmp = vec![0.0; h * w];
            for y in 0..h {
                for x in 0..w {
                    tmp[y * w + x] =
                        (0..k).map(|i| kernel[i] * plane[y * w + reflect(x as isize + i as isize - r, w)]).sum();
                }
            }
            let mut out = vec![0.0; h * w];
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] =
                        (0..k).map(|i| kernel[i] * tmp[reflect(y as isize + i as isize - r, h) * w + x]).sum();
                }
            }
            (out, h, w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((k[0] - k[10]).abs() < 1e-18);
    }

    #[test]
    fn constant_plane_preserved() {
        let p = vec![0.3; 20 * 15];
        let k = gaussian_kernel(7, 7.0 / 6.0);
        for border in [Border::Valid, Border::Reflect] {
            let (o, _, _) = separable(&p, 20, 15, &k, border);
            assert!(o.iter().all(|v| (v - 0.3).abs() < 1e-14));
        }
    }
}
