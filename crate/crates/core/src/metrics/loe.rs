use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

/// Images whose short side exceeds this are resampled so that it becomes this.
pub const LOE_TARGET: usize = 50;

/// Per-pixel maximum over channels, as `(plane, h, w)`.
pub(crate) fn lightness<T: Scalar>(img: &ImageTensor<T>) -> Vec<f64> {
    let n = img.height() * img.width();
    (0..n)
        .map(|i| (0..img.channels()).map(|c| img.data()[c * n + i].as_f64()).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

fn nearest_resample(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = (((y as f64 + 0.5) * h as f64 / oh as f64) as usize).min(h - 1);
        for x in 0..ow {
            let sx = (((x as f64 + 0.5) * w as f64 / ow as f64) as usize).min(w - 1);
            out.push(plane[sy * w + sx]);
        }
    }
    out
}

/// Lightness maps of both images after the LOE resampling rule.
fn prepared<T: Scalar>(enhanced: &ImageTensor<T>, original: &ImageTensor<T>) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (original.height(), original.width());
    let le = lightness(enhanced);
    let lo = lightness(original);
    let short = h.min(w);
    if short <= LOE_TARGET {
        return (le, lo);
    }
    let r = LOE_TARGET as f64 / short as f64;
    let oh = ((h as f64 * r).round() as usize).max(1);
    let ow = ((w as f64 * r).round() as usize).max(1);
    (nearest_resample(&le, h, w, oh, ow), nearest_resample(&lo, h, w, oh, ow))
}

/// Lightness-order error: mean over pixels `x` of the number of pixels `y`
/// whose order relation `L(x) >= L(y)` differs between the two images.
///
/// Counted in `O(m log m)` as `|A| + |B| - 2|A ∩ B|` with
/// `A = {y : L(y) <= L(x)}`, `B = {y : L'(y) <= L'(x)}`.
pub fn loe<T: Scalar>(enhanced: &ImageTensor<T>, original: &ImageTensor<T>) -> Result<f64> {
    enhanced.check_same_shape(original, "loe")?;
    let (a, b) = prepared(enhanced, original);
    Ok(order_error(&b, &a) as f64 / a.len() as f64)
}

/// Total count of flipped ordered pairs between `l` and `l2`.
pub(crate) fn order_error(l: &[f64], l2: &[f64]) -> u64 {
    let m = l.len();
    // Dense ranks of l2 for the Fenwick tree.
    let mut vals: Vec<f64> = l2.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let rank = |v: f64| vals.partition_point(|&u| u < v);
    let le_count = |sorted: &[f64], v: f64| sorted.partition_point(|&u| u <= v) as u64;

    let mut sl: Vec<f64> = l.to_vec();
    sl.sort_by(f64::total_cmp);
    let mut sl2: Vec<f64> = l2.to_vec();
    sl2.sort_by(f64::total_cmp);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| l[i].total_cmp(&l[j]));
    let mut tree = vec![0u64; vals.len() + 1];
    let mut total = 0u64;
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j < m && l[order[j]] == l[order[i]] {
            let mut k = rank(l2[order[j]]) + 1;
            while k < tree.len() {
                tree[k] += 1;
                k += k & k.wrapping_neg();
            }
            j += 1;
        }
        for &x in &order[i..j] {
            let mut k = rank(l2[x]) + 1;
            let mut both = 0u64;
            while k > 0 {
                both += tree[k];
                k -= k & k.wrapping_neg();
            }
            total += le_count(&sl, l[x]) + le_count(&sl2, l2[x]) - 2 * both;
        }
        i = j;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn brute(l: &[f64], l2: &[f64]) -> u64 {
        let mut n = 0;
        for x in 0..l.len() {
            for y in 0..l.len() {
                if (l[x] >= l[y]) != (l2[x] >= l2[y]) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn two_pixel_case() {
        let a = ImageTensor::<f64>::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let b = ImageTensor::<f64>::from_vec(1, 1, 2, vec![2.0, 1.0]).unwrap();
        assert_eq!(loe(&b, &a).unwrap(), 1.0);
        assert_eq!(loe(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = SeededRng::new(9);
        for size in [1usize, 5, 17, 40] {
            // Quantized values force plenty of ties.
            let l: Vec<f64> = (0..size * size).map(|_| (rng.uniform() * 8.0).floor()).collect();
            let l2: Vec<f64> = (0..size * size).map(|_| (rng.uniform() * 8.0).floor()).collect();
            assert_eq!(order_error(&l, &l2), brute(&l, &l2));
        }
    }

    #[test]
    fn monotone_map_gives_zero() {
        let mut rng = SeededRng::new(3);
        let img = ImageTensor::<f64>::from_vec(3, 64, 80, (0..3 * 64 * 80).map(|_| rng.uniform()).collect()).unwrap();
        let mapped = img.map(|v| v.powf(0.6));
        assert_eq!(loe(&mapped, &img).unwrap(), 0.0);
    }

    #[test]
    fn resampled_size() {
        let img = ImageTensor::<f64>::zeros(1, 100, 200);
        let (a, _) = prepared(&img, &img);
        assert_eq!(a.len(), 50 * 100);
    }
}
