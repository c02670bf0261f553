//! Planar real-valued images and binary PNM (P5/P6) I/O.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Planar image with samples in `[0, 1]`.
///
/// Storage on disk is 8-bit; conversion rounds half away from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    planes: Vec<Vec<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if !matches!(planes.len(), 1 | 3) {
            return Err(Error::invalid(format!(
                "images have 1 or 3 channels, got {}",
                planes.len()
            )));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::invalid("plane size does not match width*height"));
        }
        Ok(Image {
            width,
            height,
            planes,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![vec![value; width * height]; channels])
    }

    /// Builds an image from interleaved 8-bit samples.
    pub fn from_u8(width: usize, height: usize, channels: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        let planes = (0..channels)
            .map(|c| {
                data.iter()
                    .skip(c)
                    .step_by(channels)
                    .map(|&v| f64::from(v) / 255.0)
                    .collect()
            })
            .collect();
        Image::new(width, height, planes)
    }

    /// Interleaved 8-bit samples.
    pub fn to_u8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * self.channels());
        for i in 0..n {
            for p in &self.planes {
                out.push(to_8bit(p[i]));
            }
        }
        out
    }

    /// Image with every sample snapped to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            planes: self
                .planes
                .iter()
                .map(|p| p.iter().map(|&v| f64::from(to_8bit(v)) / 255.0).collect())
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.planes[c]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.planes[c][row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels() == other.channels()
    }
}

/// Rounds half away from zero and clamps to `0..=255`.
pub fn to_8bit(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encodes as P6 (3 channels) or P5 (1 channel), maxval 255.
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => {
            return Err(Error::Format(format!(
                "unsupported image magic {other:?}, expected P5 or P6"
            )))
        }
    };
    let width = parse_dim(&next_token(bytes, &mut pos)?)?;
    let height = parse_dim(&next_token(bytes, &mut pos)?)?;
    let maxval = parse_dim(&next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * channels;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("raster truncated: need {need} bytes")))?;
    Image::from_u8(width, height, channels, data)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pnm(&std::fs::read(path)?)
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pnm(img))?;
    Ok(())
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while !matches!(bytes.get(*pos), Some(b'\n') | None) {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("unexpected end of image header".into())),
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(tok: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Format(format!("bad image header field {tok:?}"))),
    }
}
