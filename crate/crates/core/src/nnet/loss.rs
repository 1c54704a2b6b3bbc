//! Scalar reducers: each returns the loss value and its gradient with
//! respect to the network output.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

/// `mean((out - target)²)`.
pub fn mse<T: Scalar>(out: &ImageTensor<T>, target: &ImageTensor<T>) -> Result<(T, ImageTensor<T>)> {
    let n = T::lit(out.len() as f64);
    let diff = out.sub(target)?;
    let value = diff.data().iter().map(|&d| d * d).sum::<T>() / n;
    let two_over_n = T::lit(2.0) / n;
    Ok((value, diff.scale(two_over_n)))
}

/// `mean(|out - target|)`, with subgradient 0 at equality.
pub fn l1<T: Scalar>(out: &ImageTensor<T>, target: &ImageTensor<T>) -> Result<(T, ImageTensor<T>)> {
    let n = T::lit(out.len() as f64);
    let diff = out.sub(target)?;
    let value = diff.data().iter().map(|d| d.abs()).sum::<T>() / n;
    let grad = diff.map(|d| {
        if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        }
    });
    Ok((value, grad))
}

/// Least-squares GAN objective `mean((out - label)²)` against a constant label.
pub fn least_squares<T: Scalar>(out: &ImageTensor<T>, label: f64) -> (T, ImageTensor<T>) {
    let target = ImageTensor::filled(out.channels(), out.height(), out.width(), T::lit(label));
    mse(out, &target).expect("same shape")
}

/// Linear functional `Σ out · direction`; its gradient is the direction itself.
pub fn projection<T: Scalar>(out: &ImageTensor<T>, direction: &ImageTensor<T>) -> Result<(T, ImageTensor<T>)> {
    out.check_same_shape(direction, "projection")?;
    let value = out.data().iter().zip(direction.data()).map(|(&a, &b)| a * b).sum();
    Ok((value, direction.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let a = ImageTensor::<f64>::from_vec(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let b = ImageTensor::<f64>::from_vec(1, 1, 2, vec![0.0, 3.5]).unwrap();
        let (v, g) = mse(&a, &b).unwrap();
        assert!((v - 0.625).abs() < 1e-15);
        assert_eq!(g.data(), &[1.0, -0.5]);
        let (v, g) = l1(&a, &b).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(g.data(), &[0.5, -0.5]);
        let (v, _) = least_squares(&a, 1.0);
        assert!((v - 2.0).abs() < 1e-15);
    }
}
