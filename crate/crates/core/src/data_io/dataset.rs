//! On-disk dataset layout and the synthetic benchmark that fills it.
//!
//! ```text
//! <root>/trainA      low-light training images
//! <root>/trainB      normal-light training images (unpaired with trainA)
//! <root>/test/low    in-domain test inputs
//! <root>/test/ref    references, paired with test/low by file name
//! <root>/test_ood/low, <root>/test_ood/ref   out-of-domain test pairs
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::corpus::{gen_clean_corpus, synth_degrade, DegradationSpec};
use super::pnm::{load_image, quantize8, save_image};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub names: Vec<String>,
    pub images: Vec<ImageTensor<T>>,
}

impl<T> Dataset<T> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSet<T> {
    pub names: Vec<String>,
    pub low: Vec<ImageTensor<T>>,
    pub reference: Vec<ImageTensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn train_low(&self) -> PathBuf {
        self.root.join("trainA")
    }

    pub fn train_normal(&self) -> PathBuf {
        self.root.join("trainB")
    }

    pub fn test_low(&self) -> PathBuf {
        self.root.join("test").join("low")
    }

    pub fn test_ref(&self) -> PathBuf {
        self.root.join("test").join("ref")
    }

    pub fn ood_low(&self) -> PathBuf {
        self.root.join("test_ood").join("low")
    }

    pub fn ood_ref(&self) -> PathBuf {
        self.root.join("test_ood").join("ref")
    }
}

fn is_image(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm"))
}

/// Sorted image file names (`.ppm` / `.pgm`) in `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<String>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && is_image(&p) {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

pub fn load_dir<T: Scalar>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let names = list_images(dir)?;
    if names.is_empty() {
        return Err(Error::Dataset(format!("no .ppm/.pgm images in {}", dir.display())));
    }
    let images = names.iter().map(|n| load_image(dir.join(n))).collect::<Result<_>>()?;
    Ok(Dataset { names, images })
}

/// Loads `low` and `reference` directories, requiring identical file names.
pub fn load_pairs<T: Scalar>(low: impl AsRef<Path>, reference: impl AsRef<Path>) -> Result<PairedSet<T>> {
    let l = load_dir::<T>(low.as_ref())?;
    let r = load_dir::<T>(reference.as_ref())?;
    if l.names != r.names {
        let missing: Vec<&String> = l.names.iter().filter(|n| !r.names.contains(n)).collect();
        let extra: Vec<&String> = r.names.iter().filter(|n| !l.names.contains(n)).collect();
        return Err(Error::Dataset(format!(
            "pair names differ: only in {}: {missing:?}; only in {}: {extra:?}",
            low.as_ref().display(),
            reference.as_ref().display()
        )));
    }
    for (i, (a, b)) in l.images.iter().zip(&r.images).enumerate() {
        if a.shape() != b.shape() {
            return Err(Error::Dataset(format!("pair `{}` has mismatched shapes", l.names[i])));
        }
    }
    Ok(PairedSet { names: l.names, low: l.images, reference: r.images })
}

pub fn save_dir<T: Scalar>(dir: impl AsRef<Path>, names: &[String], images: &[ImageTensor<T>]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (n, img) in names.iter().zip(images) {
        save_image(img, dir.join(n))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataConfig {
    pub train: usize,
    pub test: usize,
    pub size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train: 500, test: 50, size: 64 }
    }
}

/// All splits of the synthetic benchmark, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark<T> {
    pub train_low: Vec<ImageTensor<T>>,
    pub train_normal: Vec<ImageTensor<T>>,
    pub test: PairedSet<T>,
    pub ood: PairedSet<T>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}.ppm")).collect()
}

impl<T: Scalar> SyntheticBenchmark<T> {
    /// Three disjoint clean sets: sources of `trainA`, the `trainB` images,
    /// and test references shared by the in-domain and out-of-domain splits.
    /// Images are quantized to 8 bits so the in-memory copy equals what
    /// [`write`](Self::write) stores.
    pub fn generate(cfg: &DataConfig, rng: &mut SeededRng) -> Result<Self> {
        if cfg.train == 0 || cfg.test == 0 {
            return Err(Error::InvalidParameter("train and test counts must be positive".into()));
        }
        let clean: Vec<ImageTensor<T>> =
            gen_clean_corpus(2 * cfg.train + cfg.test, cfg.size, rng)?.iter().map(quantize8).collect();
        let (sources, rest) = clean.split_at(cfg.train);
        let (normal, refs) = rest.split_at(cfg.train);
        let mut deg = rng.child(1);
        let train_low = sources
            .iter()
            .map(|c| quantize8(&synth_degrade(c, &DegradationSpec::sample_in_domain(&mut deg), &mut deg)))
            .collect();
        let test_low = refs
            .iter()
            .map(|c| quantize8(&synth_degrade(c, &DegradationSpec::sample_in_domain(&mut deg), &mut deg)))
            .collect();
        let ood_low = refs
            .iter()
            .map(|c| quantize8(&synth_degrade(c, &DegradationSpec::sample_out_of_domain(&mut deg), &mut deg)))
            .collect();
        Ok(Self {
            train_low,
            train_normal: normal.to_vec(),
            test: PairedSet { names: names("t", cfg.test), low: test_low, reference: refs.to_vec() },
            ood: PairedSet { names: names("t", cfg.test), low: ood_low, reference: refs.to_vec() },
        })
    }

    pub fn write(&self, layout: &DatasetLayout) -> Result<()> {
        save_dir(layout.train_low(), &names("a", self.train_low.len()), &self.train_low)?;
        save_dir(layout.train_normal(), &names("b", self.train_normal.len()), &self.train_normal)?;
        save_dir(layout.test_low(), &self.test.names, &self.test.low)?;
        save_dir(layout.test_ref(), &self.test.names, &self.test.reference)?;
        save_dir(layout.ood_low(), &self.ood.names, &self.ood.low)?;
        save_dir(layout.ood_ref(), &self.ood.names, &self.ood.reference)
    }
}
