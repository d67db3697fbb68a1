//! Binary file formats. All integers and floats are little-endian.
//!
//! FP16 matrix (`.f16m`):
//!
//! ```text
//! offset  size  field
//! 0       5     magic "F16M\0"
//! 5       4     rows (u32)
//! 9       4     cols (u32)
//! 13      2*r*c binary16 codes, row-major
//! ```
//!
//! Packed INT4 weights (`.w4a16`):
//!
//! ```text
//! offset  size  field
//! 0       6     magic "W4A16\0"
//! 6       2     version (u16) = 1
//! 8       4     K, rows (u32)
//! 12      4     N, cols (u32)
//! 16      1     mode: 0 per-tensor, 1 per-channel
//! 17      7     reserved, zero
//! 24      4*c   scales (f32), c = 1 or N
//! ..      c     zero-points (u8)
//! ..      4*w   packed words (u32), w = K * N / 8, row-major
//! ```

use std::fs;
use std::path::Path;

use w4a16_core::numerics::F16;
use w4a16_core::quant::{PackedInt4Matrix, QuantMode, QuantParams};
use w4a16_core::Fp16Matrix;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 5] = b"F16M\0";
pub const PACKED_MAGIC: &[u8; 6] = b"W4A16\0";
pub const PACKED_VERSION: u16 = 1;
pub const PACKED_HEADER_LEN: usize = 24;

/// Bounds-checked little-endian reader that reports byte offsets.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.pos,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn checked_len(offset: usize, a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b)
        .ok_or_else(|| Error::format(offset, "dimensions overflow"))
}

pub fn encode_matrix(m: &Fp16Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 2 * m.data().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for h in m.data() {
        out.extend_from_slice(&h.to_bits().to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Fp16Matrix> {
    let mut r = Reader::new(bytes);
    if r.take(5, "magic")? != MATRIX_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"F16M\\0\""));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let len = checked_len(5, rows, cols)?;
    let raw = r.take(checked_len(r.pos, len, 2)?, "matrix data")?;
    r.finish()?;
    let data = raw
        .chunks_exact(2)
        .map(|c| F16::from_bits(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    Ok(Fp16Matrix::from_vec(rows, cols, data)?)
}

/// Quantized weights together with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedWeights {
    pub matrix: PackedInt4Matrix,
    pub params: QuantParams,
}

pub fn encode_packed(w: &PackedWeights) -> Vec<u8> {
    let (m, p) = (&w.matrix, &w.params);
    let mut out = Vec::with_capacity(PACKED_HEADER_LEN + 5 * p.scales().len() + 4 * m.words().len());
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&PACKED_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.push(p.mode().as_u8());
    out.extend_from_slice(&[0u8; 7]);
    for s in p.scales() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(p.zero_points());
    for w in m.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_packed(bytes: &[u8]) -> Result<PackedWeights> {
    let mut r = Reader::new(bytes);
    if r.take(6, "magic")? != PACKED_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"W4A16\\0\""));
    }
    let version = r.u16("version")?;
    if version != PACKED_VERSION {
        return Err(Error::format(6, format!("unsupported version {version}")));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if !cols.is_multiple_of(8) {
        return Err(Error::format(12, format!("column count {cols} is not a multiple of 8")));
    }
    let mode = r.u8("mode")?;
    let mode = QuantMode::from_u8(mode).ok_or_else(|| Error::format(16, format!("unknown mode {mode}")))?;
    r.take(7, "reserved")?;

    let count = match mode {
        QuantMode::PerTensor => 1,
        QuantMode::PerChannel => cols,
    };
    let scales_at = r.pos;
    let scales: Vec<f32> = r
        .take(checked_len(scales_at, count, 4)?, "scales")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let zeros_at = r.pos;
    let zero_points = r.take(count, "zero-points")?.to_vec();
    let words_at = r.pos;
    let n_words = checked_len(words_at, rows, cols / 8)?;
    let words: Vec<u32> = r
        .take(checked_len(words_at, n_words, 4)?, "packed words")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.finish()?;

    if let Some(i) = scales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::format(scales_at + 4 * i, "scale is not finite and positive"));
    }
    if let Some(i) = zero_points.iter().position(|&z| z > 15) {
        return Err(Error::format(zeros_at + i, "zero-point exceeds 15"));
    }
    Ok(PackedWeights {
        matrix: PackedInt4Matrix::from_words(rows, cols, words)?,
        params: QuantParams::new(mode, scales, zero_points)?,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Fp16Matrix> {
    decode_matrix(&read(path)?)
}

pub fn save_matrix(path: &Path, m: &Fp16Matrix) -> Result<()> {
    write(path, &encode_matrix(m))
}

pub fn load_packed(path: &Path) -> Result<PackedWeights> {
    decode_packed(&read(path)?)
}

pub fn save_packed(path: &Path, w: &PackedWeights) -> Result<()> {
    write(path, &encode_packed(w))
}
