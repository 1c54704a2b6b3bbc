//! Binary PPM (P6) and PGM (P5) with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self) -> std::result::Result<u32, (usize, String)> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err((start, "expected a decimal number".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| (start, "number out of range".into()))
    }
}

/// Decodes an in-memory P5/P6 file; `path` is only used for error messages.
pub fn decode_pnm<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ImageTensor<T>> {
    let err = |offset: usize, msg: String| Error::Parse { path: path.to_path_buf(), offset, msg };
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(err(0, "expected magic P5 or P6".into())),
    };
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number().map_err(|(o, m)| err(o, m))? as usize;
    let height = c.number().map_err(|(o, m)| err(o, m))? as usize;
    let maxval_at = c.pos;
    let maxval = c.number().map_err(|(o, m)| err(o, m))?;
    if width == 0 || height == 0 {
        return Err(err(2, format!("zero image dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(err(maxval_at, "maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedDepth(maxval));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(err(c.pos, "expected a single whitespace byte after maxval".into())),
    }
    let n = width * height * channels;
    let payload = &bytes[c.pos..];
    if payload.len() < n {
        return Err(err(bytes.len(), format!("truncated payload: expected {n} bytes, found {}", payload.len())));
    }
    let m = maxval as f64;
    let mut data = vec![T::zero(); n];
    let plane = width * height;
    for (i, &v) in payload[..n].iter().enumerate() {
        // Interleaved samples to planar layout.
        data[(i % channels) * plane + i / channels] = T::lit(v as f64 / m);
    }
    ImageTensor::from_vec(channels, height, width, data)
}

pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

fn to_byte(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Rounds to the values an 8-bit save and reload would produce.
pub fn quantize8<T: Scalar>(img: &ImageTensor<T>) -> ImageTensor<T> {
    img.map(|v| T::lit(to_byte(v.as_f64()) as f64 / 255.0))
}

/// Encodes as P6 (3 channels) or P5 (1 channel); values are clamped to
/// `[0, 1]` and rounded half-up to 8 bits.
pub fn encode_pnm<T: Scalar>(img: &ImageTensor<T>) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        3 => "P6",
        1 => "P5",
        c => return Err(Error::InvalidShape(format!("cannot write a {c}-channel image as PNM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let plane = img.height() * img.width();
    out.reserve(plane * img.channels());
    for i in 0..plane {
        for c in 0..img.channels() {
            out.push(to_byte(img.data()[c * plane + i].as_f64()));
        }
    }
    Ok(out)
}

pub fn save_image<T: Scalar>(img: &ImageTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.ppm")
    }

    #[test]
    fn byte_fixture() {
        let mut b = b"P6\n2 2\n255\n".to_vec();
        b.extend((0..12u8).map(|i| i * 20));
        let img: ImageTensor<f64> = decode_pnm(&b, p()).unwrap();
        assert_eq!(img.shape(), (3, 2, 2));
        assert_eq!(img.at(0, 0, 0), 0.0);
        assert_eq!(img.at(1, 0, 0), 20.0 / 255.0);
        assert_eq!(img.at(2, 1, 1), 220.0 / 255.0);
        assert_eq!(encode_pnm(&img).unwrap(), b);
    }

    #[test]
    fn pgm_and_comments() {
        let b = b"P5 # grey\n3 1 # dims\n255\n\x00\x80\xff".to_vec();
        let img: ImageTensor<f32> = decode_pnm(&b, p()).unwrap();
        assert_eq!(img.shape(), (1, 1, 3));
        assert_eq!(img.data()[2], 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(decode_pnm::<f64>(b"P6\n1 1\n65535\n\0\0\0\0\0\0", p()), Err(Error::UnsupportedDepth(65535))));
        match decode_pnm::<f64>(b"P6\n2 2\n255\n\0\0\0", p()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("{other:?}"),
        }
        match decode_pnm::<f64>(b"P6\nx 2\n255\n", p()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
        assert!(decode_pnm::<f64>(b"P3\n1 1\n255\n", p()).is_err());
    }

    #[test]
    fn rounding_half_up() {
        let img = ImageTensor::<f64>::from_vec(1, 1, 3, vec![0.6 / 255.0, 1.4 / 255.0, 2.0]).unwrap();
        let b = encode_pnm(&img).unwrap();
        assert_eq!(&b[b.len() - 3..], &[1, 1, 255]);
    }
}
