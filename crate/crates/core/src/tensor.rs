//! Planar, channel-major `C × H × W` raster.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `C × H × W` array stored channel-major (all of channel 0, then channel 1, ...).
///
/// Images carry 1 or 3 channels with values nominally in `[0, 1]`; the same
/// type also holds noise realizations, latents, feature maps and gradients,
/// which are unbounded and may have any channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::InvalidShape(format!(
                "{} values for shape ({channels}, {height}, {width})",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.channels, self.height, self.width)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", self.shape(), other.shape())))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    /// Elementwise combination of two same-shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Self { data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(), ..*self })
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Every value mapped to `min(max(v, 0), 1)`.
    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero() && v <= T::one())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "mean_abs_diff")?;
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
        Ok(s / self.data.len().max(1) as f64)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).fold(0.0, f64::max))
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Rectangular window `[y0, y0+h) × [x0, x0+w)` across all channels.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(Error::InvalidShape(format!(
                "crop {h}x{w} at ({y0}, {x0}) from {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Self::from_vec(self.channels, h, w, data)
    }

    /// BT.601 luma for 3-channel input; 1-channel input is returned as is.
    pub fn luma(&self) -> Result<Self> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
                let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
                let data = r.iter().zip(g).zip(b).map(|((&r, &g), &b)| wr * r + wg * g + wb * b).collect();
                Self::from_vec(1, self.height, self.width, data)
            }
            c => Err(Error::InvalidShape(format!("luma of {c}-channel tensor"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_examples() {
        let t = ImageTensor::<f32>::from_vec(1, 1, 3, vec![1.3, -0.2, 0.5]).unwrap();
        assert_eq!(t.clamp01().data(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(ImageTensor::<f32>::from_vec(3, 2, 2, vec![0.0; 11]).is_err());
        assert_eq!(ImageTensor::<f32>::from_vec(3, 2, 2, vec![0.0; 12]).unwrap().len(), 12);
    }

    #[test]
    fn crop_and_index() {
        let t = ImageTensor::<f64>::from_vec(2, 3, 3, (0..18).map(f64::from).collect()).unwrap();
        let c = t.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[4.0, 5.0, 7.0, 8.0, 13.0, 14.0, 16.0, 17.0]);
        assert_eq!(t.at(1, 2, 0), 15.0);
        assert!(t.crop(2, 2, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn clamp_idempotent(v in proptest::collection::vec(-3.0f32..3.0, 12)) {
            let t = ImageTensor::from_vec(3, 2, 2, v).unwrap();
            let once = t.clamp01();
            prop_assert_eq!(once.clamp01(), once.clone());
            prop_assert!(once.in_unit_range());
        }
    }
}
