use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::TrainConfig;

/// Shuffled mini-batches of random square crops.
#[derive(Debug, Clone, Copy)]
pub struct Batcher {
    pub batch_size: usize,
    pub patch_size: usize,
    /// 0 means one full pass.
    pub max_steps: usize,
}

impl Batcher {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self { batch_size: cfg.batch_size, patch_size: cfg.patch_size, max_steps: cfg.steps_per_epoch }
    }

    pub fn crop<T: Scalar>(&self, img: &ImageTensor<T>, rng: &mut SeededRng) -> Result<ImageTensor<T>> {
        let (h, w) = (img.height(), img.width());
        let p = self.patch_size;
        if h <= p && w <= p {
            return Ok(img.clone());
        }
        let (ph, pw) = (p.min(h), p.min(w));
        let y0 = rng.below(h - ph + 1);
        let x0 = rng.below(w - pw + 1);
        img.crop(y0, x0, ph, pw)
    }

    /// One epoch of batches drawn without replacement.
    pub fn epoch<T: Scalar>(&self, data: &[ImageTensor<T>], rng: &mut SeededRng) -> Result<Vec<Vec<ImageTensor<T>>>> {
        if data.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        let mut batches = Vec::new();
        for chunk in order.chunks(self.batch_size) {
            if self.max_steps > 0 && batches.len() == self.max_steps {
                break;
            }
            batches.push(chunk.iter().map(|&i| self.crop(&data[i], rng)).collect::<Result<Vec<_>>>()?);
        }
        Ok(batches)
    }
}
