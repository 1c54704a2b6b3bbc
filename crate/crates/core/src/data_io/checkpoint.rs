//! Binary container for network parameters and NIQE models.
//!
//! Layout (little-endian): magic `DFLL`, `u32` version, `u32` section count,
//! then per section `u32` name length, UTF-8 name, `u32` rank, `u32` dims,
//! `f32` payload; a trailing CRC32 covers every preceding byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{NiqeConfig, NiqeModel, NIQE_FEATURES};
use crate::nnet::{Arch, NetworkParams, ParamTensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"DFLL";
pub const VERSION: u32 = 1;
const ARCH_SECTION: &str = "arch";

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub sections: Vec<Section>,
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        match end {
            Some(e) => {
                let s = &self.b[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for s in &self.sections {
            out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&(s.shape.len() as u32).to_le_bytes());
            for &d in &s.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &s.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("CRC mismatch".into()));
        }
        let mut r = Reader { b: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("section `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            sections.push(Section { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn network_checkpoint<T: Scalar>(net: &NetworkParams<T>) -> Checkpoint {
    let arch = net.arch().encode();
    let mut sections = vec![Section {
        name: ARCH_SECTION.into(),
        shape: vec![arch.len()],
        data: arch.iter().map(|&v| v as f32).collect(),
    }];
    for p in net.tensors() {
        sections.push(Section {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.data.iter().map(|v| v.as_f64() as f32).collect(),
        });
    }
    Checkpoint { sections }
}

/// Rebuilds a network; with `expected`, any descriptor or shape disagreement
/// is a shape-mismatch error.
pub fn network_from_checkpoint<T: Scalar>(ck: &Checkpoint, expected: Option<Arch>) -> Result<NetworkParams<T>> {
    let arch_sec = ck.section(ARCH_SECTION).ok_or_else(|| Error::Checkpoint("missing arch section".into()))?;
    let codes: Vec<usize> = arch_sec.data.iter().map(|&v| v as usize).collect();
    let arch = Arch::decode(&codes)?;
    if let Some(want) = expected {
        if want != arch {
            return Err(Error::ShapeMismatch(format!("checkpoint holds {arch:?}, expected {want:?}")));
        }
    }
    let tensors = ck
        .sections
        .iter()
        .filter(|s| s.name != ARCH_SECTION)
        .map(|s| ParamTensor {
            name: s.name.clone(),
            shape: s.shape.clone(),
            data: s.data.iter().map(|&v| T::lit(v as f64)).collect(),
        })
        .collect();
    NetworkParams::from_tensors(arch, tensors)
}

pub fn save_network<T: Scalar>(net: &NetworkParams<T>, path: impl AsRef<Path>) -> Result<()> {
    network_checkpoint(net).save(path)
}

pub fn load_network<T: Scalar>(path: impl AsRef<Path>, expected: Option<Arch>) -> Result<NetworkParams<T>> {
    network_from_checkpoint(&Checkpoint::load(path)?, expected)
}

pub fn save_niqe_model(model: &NiqeModel, path: impl AsRef<Path>) -> Result<()> {
    let d = NIQE_FEATURES;
    let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
    Checkpoint {
        sections: vec![
            Section { name: "niqe.mean".into(), shape: vec![d], data: f(&model.mean) },
            Section { name: "niqe.cov".into(), shape: vec![d, d], data: f(&model.cov) },
            Section {
                name: "niqe.meta".into(),
                shape: vec![3],
                data: vec![model.config.patch as f32, model.config.sharpness_fraction as f32, model.patches as f32],
            },
        ],
    }
    .save(path)
}

pub fn load_niqe_model(path: impl AsRef<Path>) -> Result<NiqeModel> {
    let ck = Checkpoint::load(path)?;
    let get = |name: &str, len: usize| -> Result<Vec<f64>> {
        let s = ck.section(name).ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")))?;
        if s.data.len() != len {
            return Err(Error::ShapeMismatch(format!("section `{name}` has {} values, expected {len}", s.data.len())));
        }
        Ok(s.data.iter().map(|&v| v as f64).collect())
    };
    let d = NIQE_FEATURES;
    let meta = get("niqe.meta", 3)?;
    let model = NiqeModel {
        mean: get("niqe.mean", d)?,
        cov: get("niqe.cov", d * d)?,
        config: NiqeConfig { patch: meta[0] as usize, sharpness_fraction: meta[1] },
        patches: meta[2] as usize,
    };
    model.config.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn net() -> NetworkParams<f32> {
        let arch = Arch::Enhancer { in_channels: 3, channels: 4, blocks: 1 };
        NetworkParams::init(arch, &mut SeededRng::new(5)).unwrap()
    }

    #[test]
    fn round_trip_bytes_and_values() {
        let n = net();
        let b = network_checkpoint(&n).to_bytes();
        let back: NetworkParams<f32> = network_from_checkpoint(&Checkpoint::from_bytes(&b).unwrap(), None).unwrap();
        assert_eq!(back.tensors(), n.tensors());
        assert_eq!(network_checkpoint(&back).to_bytes(), b);
    }

    #[test]
    fn corruption_detected() {
        let mut b = network_checkpoint(&net()).to_bytes();
        let i = b.len() / 2;
        b[i] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Checkpoint(m)) if m.contains("CRC")));
        let mut b = network_checkpoint(&net()).to_bytes();
        b[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Checkpoint(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_kind_rejected() {
        let ck = network_checkpoint(&net());
        let want = Arch::Denoiser { in_channels: 3, channels: 4, emb_dim: 8 };
        assert!(matches!(network_from_checkpoint::<f32>(&ck, Some(want)), Err(Error::ShapeMismatch(_))));
    }
}
