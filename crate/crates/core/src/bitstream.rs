//! Fixed-rate quantization and bit packing of P-frame motion parameters.
//!
//! Stream layout (all header fields are single bytes unless noted):
//!
//! ```text
//! "AKPC" | version=1 | mode | K | kp_bits | rot_bits | shear_bits | jac_bits | fps
//!        | frame_count (u32 LE) | payload (MSB-first) | zero pad to a byte
//! ```
//!
//! Each frame carries, in order: keypoints (x then y, ascending index), the
//! rotation angle, then shear pairs (lambda then mu) or Jacobian entries
//! (row-major), all fixed-width uniform codes. Nothing is entropy coded, so
//! the payload size follows exactly from [`bits_per_frame`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::transforms::{KeypointFrame, Mat2, MotionParams, Point, Shear, TransformMode};

pub const MAGIC: [u8; 4] = *b"AKPC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

/// Symmetric clamp ranges of each parameter class.
///
/// These are not stored in the stream header; encoder and decoder must agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantRanges {
    pub kp: (f64, f64),
    pub phi: (f64, f64),
    pub shear: (f64, f64),
    pub jac: (f64, f64),
}

impl Default for QuantRanges {
    fn default() -> Self {
        QuantRanges {
            kp: (-1.0, 1.0),
            phi: (-PI, PI),
            shear: (-2.0, 2.0),
            jac: (-4.0, 4.0),
        }
    }
}

/// Bit allocation and frame rate.
///
/// The defaults (6/4/4/5 bits at 25 fps) put ten keypoints at 3.0, 3.1, 5.1
/// and 8.0 kbps for the four modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    pub kp_bits: u8,
    pub rot_bits: u8,
    pub shear_bits: u8,
    pub jac_bits: u8,
    pub fps: u8,
    pub ranges: QuantRanges,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec {
            kp_bits: 6,
            rot_bits: 4,
            shear_bits: 4,
            jac_bits: 5,
            fps: 25,
            ranges: QuantRanges::default(),
        }
    }
}

impl QuantSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, bits) in [
            ("kp_bits", self.kp_bits),
            ("rot_bits", self.rot_bits),
            ("shear_bits", self.shear_bits),
            ("jac_bits", self.jac_bits),
        ] {
            if !(1..=16).contains(&bits) {
                return Err(Error::invalid(format!(
                    "{name} must be in 1..=16, got {bits}"
                )));
            }
        }
        if self.fps == 0 {
            return Err(Error::invalid("fps must be at least 1"));
        }
        Ok(())
    }
}

fn check_quant_args(lo: f64, hi: f64, bits: u8) -> Result<u32> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("bad quantizer range [{lo}, {hi}]")));
    }
    if !(1..=16).contains(&bits) {
        return Err(Error::invalid(format!(
            "bits must be in 1..=16, got {bits}"
        )));
    }
    Ok((1u32 << bits) - 1)
}

/// Index of the nearest of `2^bits` uniform levels spanning `[lo, hi]`.
///
/// Values are clamped to the range first; exact ties round up.
pub fn quantize_uniform(value: f64, lo: f64, hi: f64, bits: u8) -> Result<u32> {
    let max_code = check_quant_args(lo, hi, bits)?;
    if value.is_nan() {
        return Err(Error::invalid("cannot quantize NaN"));
    }
    let t = (value.clamp(lo, hi) - lo) / (hi - lo) * f64::from(max_code);
    Ok(((t + 0.5).floor() as u32).min(max_code))
}

/// `lo + code * (hi - lo) / (2^bits - 1)`.
pub fn dequantize_uniform(code: u32, lo: f64, hi: f64, bits: u8) -> Result<f64> {
    let max_code = check_quant_args(lo, hi, bits)?;
    if code > max_code {
        return Err(Error::invalid(format!(
            "code {code} out of range for {bits} bits"
        )));
    }
    Ok(lo + f64::from(code) * (hi - lo) / f64::from(max_code))
}

/// Half the spacing between adjacent quantizer levels.
pub fn half_step(lo: f64, hi: f64, bits: u8) -> f64 {
    (hi - lo) / f64::from((1u32 << bits) - 1) / 2.0
}

pub fn bits_per_frame(mode: TransformMode, k: usize, quant: &QuantSpec) -> u64 {
    let k = k as u64;
    let kp = 2 * k * u64::from(quant.kp_bits);
    match mode {
        TransformMode::NoJacobian => kp,
        TransformMode::RotScale => kp + u64::from(quant.rot_bits),
        TransformMode::RotScaleShear => {
            kp + u64::from(quant.rot_bits) + 2 * k * u64::from(quant.shear_bits)
        }
        TransformMode::FullJacobian => kp + 4 * k * u64::from(quant.jac_bits),
    }
}

pub fn bitrate_kbps(mode: TransformMode, k: usize, quant: &QuantSpec) -> f64 {
    bits_per_frame(mode, k, quant) as f64 * f64::from(quant.fps) / 1000.0
}

/// Bitrate saved by `mode` relative to `baseline`, in percent.
pub fn savings_percent(
    mode: TransformMode,
    baseline: TransformMode,
    k: usize,
    quant: &QuantSpec,
) -> f64 {
    100.0 * (1.0 - bitrate_kbps(mode, k, quant) / bitrate_kbps(baseline, k, quant))
}

/// MSB-first bit writer.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    buf: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u32, n: u8) {
        debug_assert!(n <= 32);
        for i in (0..n).rev() {
            let bit = (value >> i) & 1;
            let byte = (self.bits / 8) as usize;
            if byte == self.buf.len() {
                self.buf.push(0);
            }
            if bit != 0 {
                self.buf[byte] |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Bytes written so far; the last byte is zero-padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// MSB-first bit reader over a byte slice.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader {
            data,
            pos: 0,
            limit: data.len() as u64 * 8,
        }
    }

    /// Reader that treats only the first `bits` bits as available.
    pub fn with_bit_len(data: &'a [u8], bits: u64) -> Self {
        BitReader {
            data,
            pos: 0,
            limit: bits.min(data.len() as u64 * 8),
        }
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.pos
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn read_bits(&mut self, n: u8) -> Result<u32> {
        if u64::from(n) > self.remaining() {
            return Err(Error::TruncatedStream { frame: None });
        }
        let mut v = 0u32;
        for _ in 0..n {
            let byte = self.data[(self.pos / 8) as usize];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }
}

/// Quantization codes of one frame in canonical field order, with widths.
pub fn frame_codes(
    params: &MotionParams,
    mode: TransformMode,
    quant: &QuantSpec,
) -> Result<Vec<(u32, u8)>> {
    quant.validate()?;
    if params.mode() != mode {
        return Err(Error::invalid(format!(
            "frame carries a {} payload, stream mode is {mode}",
            params.mode()
        )));
    }
    let r = &quant.ranges;
    let q = |v: f64, (lo, hi): (f64, f64), bits: u8| {
        quantize_uniform(v, lo, hi, bits).map(|c| (c, bits))
    };
    let mut codes = Vec::new();
    for p in params.keypoints().points() {
        codes.push(q(p.x, r.kp, quant.kp_bits)?);
        codes.push(q(p.y, r.kp, quant.kp_bits)?);
    }
    if let Some(phi) = params.phi() {
        codes.push(q(phi, r.phi, quant.rot_bits)?);
    }
    for s in params.shear().unwrap_or_default() {
        codes.push(q(s.lambda, r.shear, quant.shear_bits)?);
        codes.push(q(s.mu, r.shear, quant.shear_bits)?);
    }
    for j in params.jacobians().unwrap_or_default() {
        for e in j.entries() {
            codes.push(q(e, r.jac, quant.jac_bits)?);
        }
    }
    Ok(codes)
}

/// Writes one frame; exactly [`bits_per_frame`] bits.
pub fn encode_frame(
    params: &MotionParams,
    mode: TransformMode,
    quant: &QuantSpec,
    sink: &mut BitWriter,
) -> Result<()> {
    for (code, bits) in frame_codes(params, mode, quant)? {
        sink.write_bits(code, bits);
    }
    Ok(())
}

pub fn decode_frame(
    source: &mut BitReader<'_>,
    mode: TransformMode,
    k: usize,
    quant: &QuantSpec,
) -> Result<MotionParams> {
    quant.validate()?;
    if source.remaining() < bits_per_frame(mode, k, quant) {
        return Err(Error::TruncatedStream { frame: None });
    }
    let r = quant.ranges;
    let mut next = |(lo, hi): (f64, f64), bits: u8| -> Result<f64> {
        dequantize_uniform(source.read_bits(bits)?, lo, hi, bits)
    };
    let mut kps = Vec::with_capacity(k);
    for _ in 0..k {
        let x = next(r.kp, quant.kp_bits)?;
        let y = next(r.kp, quant.kp_bits)?;
        kps.push(Point::new(x, y));
    }
    let kps = KeypointFrame::new(kps)?;
    let phi = if mode.has_rotation() {
        Some(next(r.phi, quant.rot_bits)?)
    } else {
        None
    };
    let shear = if mode == TransformMode::RotScaleShear {
        let mut s = Vec::with_capacity(k);
        for _ in 0..k {
            let lambda = next(r.shear, quant.shear_bits)?;
            let mu = next(r.shear, quant.shear_bits)?;
            s.push(Shear::new(lambda, mu));
        }
        Some(s)
    } else {
        None
    };
    let jacobians = if mode == TransformMode::FullJacobian {
        let mut j = Vec::with_capacity(k);
        for _ in 0..k {
            let mut e = [0.0; 4];
            for v in e.iter_mut() {
                *v = next(r.jac, quant.jac_bits)?;
            }
            j.push(Mat2::from_entries(e)?);
        }
        Some(j)
    } else {
        None
    };
    MotionParams::new(mode, kps, phi, shear, jacobians)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub mode: TransformMode,
    pub k: u8,
    pub quant: QuantSpec,
    pub frame_count: u32,
}

impl StreamHeader {
    pub fn new(mode: TransformMode, k: u8, quant: QuantSpec, frame_count: u32) -> Self {
        StreamHeader {
            mode,
            k,
            quant,
            frame_count,
        }
    }

    pub fn bits_per_frame(&self) -> u64 {
        bits_per_frame(self.mode, usize::from(self.k), &self.quant)
    }

    pub fn payload_bits(&self) -> u64 {
        u64::from(self.frame_count) * self.bits_per_frame()
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let q = &self.quant;
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5] = self.mode.code();
        out[6] = self.k;
        out[7] = q.kp_bits;
        out[8] = q.rot_bits;
        out[9] = q.shear_bits;
        out[10] = q.jac_bits;
        out[11] = q.fps;
        out[12..].copy_from_slice(&self.frame_count.to_le_bytes());
        out
    }

    /// Parses a header; quantizer ranges take their defaults.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedStream { frame: None });
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let quant = QuantSpec {
            kp_bits: bytes[7],
            rot_bits: bytes[8],
            shear_bits: bytes[9],
            jac_bits: bytes[10],
            fps: bytes[11],
            ranges: QuantRanges::default(),
        };
        quant.validate()?;
        Ok(StreamHeader {
            mode: TransformMode::from_code(bytes[5])?,
            k: bytes[6],
            quant,
            frame_count: u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]),
        })
    }
}

/// A serialized stream: header plus bit-packed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionBitstream {
    pub header: StreamHeader,
    pub payload: Vec<u8>,
    pub payload_bits: u64,
}

impl MotionBitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn write_stream(frames: &[MotionParams], header: &StreamHeader) -> Result<MotionBitstream> {
    header.quant.validate()?;
    if frames.len() != header.frame_count as usize {
        return Err(Error::invalid(format!(
            "header announces {} frames, got {}",
            header.frame_count,
            frames.len()
        )));
    }
    let mut w = BitWriter::new();
    for (i, f) in frames.iter().enumerate() {
        if f.num_keypoints() != usize::from(header.k) {
            return Err(Error::invalid(format!(
                "frame {i} has {} keypoints, header says {}",
                f.num_keypoints(),
                header.k
            )));
        }
        encode_frame(f, header.mode, &header.quant, &mut w)?;
    }
    let payload_bits = w.bit_len();
    debug_assert_eq!(payload_bits, header.payload_bits());
    Ok(MotionBitstream {
        header: *header,
        payload: w.into_bytes(),
        payload_bits,
    })
}

pub fn read_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<MotionParams>)> {
    let header = StreamHeader::from_bytes(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let mut r = BitReader::new(payload);
    let k = usize::from(header.k);
    let frames = (0..header.frame_count as usize)
        .map(|i| {
            decode_frame(&mut r, header.mode, k, &header.quant).map_err(|e| match e {
                Error::TruncatedStream { .. } => Error::TruncatedStream { frame: Some(i) },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}
