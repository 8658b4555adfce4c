use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
///
/// PPM files store 8-bit values and treat them as linear intensities (no
/// sRGB decoding).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Self::from_pixels(width, height, vec![color; width * height])
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::DimMismatch(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::DimMismatch("channel value outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: [f64; 3]) {
        self.data[y * self.width + x] = color.map(|c| c.clamp(0.0, 1.0));
    }

    /// Multiplies every channel by `gain`, clamping to `[0, 1]`.
    pub fn scaled(&self, gain: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|p| p.map(|c| (c * gain).clamp(0.0, 1.0)))
                .collect(),
        }
    }

    /// Rounds every channel to the nearest of the 65536 levels a 16-bit
    /// PPM holds, so a write/read round trip is exact.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|p| p.map(|c| to_u16(c) as f64 / MAX16))
                .collect(),
        }
    }

    /// Binary PPM with 16-bit big-endian samples.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 6);
        for p in &self.data {
            for c in p {
                out.extend(to_u16(*c).to_be_bytes());
            }
        }
        out
    }

    /// Binary PPM with 8-bit samples, for previews.
    pub fn to_ppm8_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 3);
        for p in &self.data {
            out.extend(p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        out
    }

    /// Reads binary PPM of any depth up to 16 bits.
    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Image> {
        let bad = |m: &str| Error::DimMismatch(format!("invalid PPM: {m}"));
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(
                std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?,
            );
        }
        if fields[0] != "P6" {
            return Err(bad("only binary P6 is supported"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad("non-numeric header field"))
        };
        let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if !(1..=65535).contains(&maxval) {
            return Err(bad("maxval must be in 1..=65535"));
        }
        pos += 1; // single whitespace byte after maxval
        let width = if maxval < 256 { 1 } else { 2 };
        let need = w
            .checked_mul(h)
            .and_then(|n| n.checked_mul(3 * width))
            .ok_or_else(|| bad("dimensions overflow"))?;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| bad("truncated pixel data"))?;
        let max = maxval as f64;
        let samples: Vec<f64> = if width == 1 {
            raster.iter().map(|&b| b as f64 / max).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / max)
                .collect()
        };
        if samples.iter().any(|&v| v > 1.0) {
            return Err(bad("sample exceeds maxval"));
        }
        let data = samples
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Image::from_pixels(w, h, data)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_ppm_bytes(&bytes)
    }
}

const MAX16: f64 = 65535.0;

fn to_u16(c: f64) -> u16 {
    (c.clamp(0.0, 1.0) * MAX16).round() as u16
}

/// Row-major boolean image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_of_quantized_image() {
        let mut img = Image::filled(3, 2, [0.2, 0.4, 0.6]).unwrap();
        img.set(2, 1, [1.0, 0.0, 0.5]);
        let q = img.quantized();
        let back = Image::from_ppm_bytes(&q.to_ppm_bytes()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn eight_bit_ppm_is_read() {
        let img = Image::filled(2, 2, [0.2, 0.4, 1.0]).unwrap();
        let back = Image::from_ppm_bytes(&img.to_ppm8_bytes()).unwrap();
        assert_eq!(back.get(1, 0), [51.0 / 255.0, 102.0 / 255.0, 1.0]);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend([255u8; 12]);
        let img = Image::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(img.get(1, 1), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_images() {
        assert!(Image::filled(1, 5, [0.0; 3]).is_err());
        assert!(Image::from_pixels(2, 2, vec![[1.5, 0.0, 0.0]; 4]).is_err());
        assert!(Image::from_ppm_bytes(b"P3\n2 2\n255\n").is_err());
        assert!(Image::from_ppm_bytes(b"P6\n2 2\n255\n\x00").is_err());
    }
}
