use crate::error::{Error, Result};
use crate::nnet::{NetKind, NetworkParams};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic of the mean raw discriminator map for one image.
pub fn cds_image<T: Scalar>(img: &ImageTensor<T>, disc: &NetworkParams<T>) -> Result<f64> {
    if disc.kind() != NetKind::Discriminator {
        return Err(Error::InvalidParameter(format!("cds needs a discriminator, got {}", disc.kind())));
    }
    Ok(logistic(disc.infer(img, None)?.mean()))
}

/// Cross discriminator score: mean of [`cds_image`] over the set.
pub fn cds<T: Scalar>(images: &[ImageTensor<T>], disc: &NetworkParams<T>) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Empty("cds image set".into()));
    }
    let mut total = 0.0;
    for img in images {
        total += cds_image(img, disc)?;
    }
    Ok(total / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Arch;
    use crate::rng::SeededRng;

    fn disc_with_bias(b: f64) -> NetworkParams<f64> {
        let arch = Arch::Discriminator { in_channels: 3, channels: 4 };
        let mut net = NetworkParams::init(arch, &mut SeededRng::new(1)).unwrap();
        let n = net.tensors().len();
        for p in net.tensors_mut()[n - 2..].iter_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        net.tensors_mut()[n - 1].data[0] = b;
        net
    }

    #[test]
    fn logistic_points() {
        let img = ImageTensor::<f64>::filled(3, 64, 64, 0.3);
        assert_eq!(cds(std::slice::from_ref(&img), &disc_with_bias(0.0)).unwrap(), 0.5);
        assert!((cds(&[img], &disc_with_bias(1.0)).unwrap() - 0.7310585786300049).abs() < 1e-12);
        assert!(cds::<f64>(&[], &disc_with_bias(0.0)).is_err());
    }
}
