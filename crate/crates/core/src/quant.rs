//! Uniform affine 4-bit quantization and nibble packing.
//!
//! Codes are unsigned in `[0, 15]`. A real value `x` maps to
//! `round(x / s) + z` (clamped), and a code `q` maps back to `s * (q - z)`.
//! Symmetric quantization uses `z = 8`, so a signed code `q'` in `[-8, 7]`
//! is stored as `q' + 8`.
//!
//! Packed storage keeps eight codes per `u32`, code `i` of a word in bits
//! `[4i, 4i + 4)`.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Fp16Matrix;
use crate::numerics::{f16_from_f32, F16};

pub const CODES_PER_WORD: usize = 8;
pub const MAX_CODE: u8 = 15;
/// Zero-point of the symmetric scheme.
pub const SYMMETRIC_ZERO_POINT: u8 = 8;
/// Smallest scale produced by [`quantize_matrix`]; stops all-zero columns
/// from dividing by zero.
pub const MIN_SCALE: f32 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantMode {
    PerTensor,
    /// One scale and zero-point per output column of `W`.
    PerChannel,
}

impl QuantMode {
    pub fn as_u8(self) -> u8 {
        match self {
            QuantMode::PerTensor => 0,
            QuantMode::PerChannel => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(QuantMode::PerTensor),
            1 => Some(QuantMode::PerChannel),
            _ => None,
        }
    }
}

/// Scales and zero-points for a `K x N` weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantParams {
    mode: QuantMode,
    scales: Vec<f32>,
    zero_points: Vec<u8>,
}

impl QuantParams {
    pub fn new(mode: QuantMode, scales: Vec<f32>, zero_points: Vec<u8>) -> Result<Self> {
        if scales.len() != zero_points.len() {
            return Err(Error::ShapeMismatch {
                what: "zero-point count",
                expected: scales.len(),
                got: zero_points.len(),
            });
        }
        if scales.is_empty() {
            return Err(Error::Shape("quantization parameters are empty"));
        }
        if mode == QuantMode::PerTensor && scales.len() != 1 {
            return Err(Error::ShapeMismatch {
                what: "per-tensor scale count",
                expected: 1,
                got: scales.len(),
            });
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Domain("scales must be finite and positive"));
        }
        if zero_points.iter().any(|&z| z > MAX_CODE) {
            return Err(Error::Domain("zero-points must lie in [0, 15]"));
        }
        Ok(QuantParams {
            mode,
            scales,
            zero_points,
        })
    }

    pub fn per_tensor(scale: f32, zero_point: u8) -> Result<Self> {
        Self::new(QuantMode::PerTensor, alloc::vec![scale], alloc::vec![zero_point])
    }

    /// Per-channel parameters with the symmetric zero-point on every column.
    pub fn symmetric_per_channel(scales: Vec<f32>) -> Result<Self> {
        let zero_points = alloc::vec![SYMMETRIC_ZERO_POINT; scales.len()];
        Self::new(QuantMode::PerChannel, scales, zero_points)
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn zero_points(&self) -> &[u8] {
        &self.zero_points
    }

    #[inline]
    pub fn scale(&self, col: usize) -> f32 {
        match self.mode {
            QuantMode::PerTensor => self.scales[0],
            QuantMode::PerChannel => self.scales[col],
        }
    }

    #[inline]
    pub fn zero_point(&self, col: usize) -> u8 {
        match self.mode {
            QuantMode::PerTensor => self.zero_points[0],
            QuantMode::PerChannel => self.zero_points[col],
        }
    }

    /// Checks that these parameters can describe a matrix with `cols` columns.
    pub fn check_cols(&self, cols: usize) -> Result<()> {
        if self.mode == QuantMode::PerChannel && self.scales.len() != cols {
            return Err(Error::ShapeMismatch {
                what: "per-channel scale count",
                expected: cols,
                got: self.scales.len(),
            });
        }
        Ok(())
    }
}

/// Round half to even for values already known to be finite.
fn round_half_even(v: f32) -> f32 {
    // Every f32 of magnitude >= 2^23 is an integer.
    if v.abs() >= 8_388_608.0 {
        return v;
    }
    let t = v as i32;
    let frac = v - t as f32;
    let odd = t & 1 != 0;
    let r = if frac > 0.5 || (frac == 0.5 && odd) {
        t + 1
    } else if frac < -0.5 || (frac == -0.5 && odd) {
        t - 1
    } else {
        t
    };
    r as f32
}

/// `round(x / s) + z`, clamped to `[0, 15]`, rounding half to even.
pub fn quantize(x: f32, s: f32, z: u8) -> Result<u8> {
    if !x.is_finite() {
        return Err(Error::Domain("value to quantize is not finite"));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain("scale must be finite and positive"));
    }
    if z > MAX_CODE {
        return Err(Error::Domain("zero-point must lie in [0, 15]"));
    }
    let q = round_half_even(x / s) + z as f32;
    Ok(if q <= 0.0 {
        0
    } else if q >= MAX_CODE as f32 {
        MAX_CODE
    } else {
        q as u8
    })
}

/// `s * (code - z)` rounded once to binary16. The subtraction is exact
/// integer arithmetic and the product is binary32.
#[inline]
pub fn dequantize(code: u8, s: f32, z: u8) -> F16 {
    debug_assert!(code <= MAX_CODE);
    f16_from_f32(s * (code as i32 - z as i32) as f32)
}

/// Packs codes eight to a word, low nibble first.
pub fn pack(codes: &[u8]) -> Result<Vec<u32>> {
    if !codes.len().is_multiple_of(CODES_PER_WORD) {
        return Err(Error::Shape("code count must be a multiple of 8"));
    }
    if codes.iter().any(|&c| c > MAX_CODE) {
        return Err(Error::Domain("codes must lie in [0, 15]"));
    }
    Ok(codes
        .chunks_exact(CODES_PER_WORD)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u32, |w, (i, &c)| w | (c as u32) << (4 * i))
        })
        .collect())
}

pub fn unpack(words: &[u32]) -> Vec<u8> {
    let mut codes = Vec::with_capacity(words.len() * CODES_PER_WORD);
    for &w in words {
        codes.extend((0..CODES_PER_WORD).map(|i| ((w >> (4 * i)) & 0xF) as u8));
    }
    codes
}

/// A `K x N` matrix of 4-bit codes, row-major, eight codes per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedInt4Matrix {
    rows: usize,
    cols: usize,
    words: Vec<u32>,
}

impl PackedInt4Matrix {
    pub fn from_words(rows: usize, cols: usize, words: Vec<u32>) -> Result<Self> {
        if !cols.is_multiple_of(CODES_PER_WORD) {
            return Err(Error::Shape("packed matrix column count must be a multiple of 8"));
        }
        let expected = rows * (cols / CODES_PER_WORD);
        if words.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "packed word count",
                expected,
                got: words.len(),
            });
        }
        Ok(PackedInt4Matrix { rows, cols, words })
    }

    /// Builds the matrix from row-major codes.
    pub fn from_codes(rows: usize, cols: usize, codes: &[u8]) -> Result<Self> {
        if codes.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "code count",
                expected: rows * cols,
                got: codes.len(),
            });
        }
        if !cols.is_multiple_of(CODES_PER_WORD) {
            return Err(Error::Shape("packed matrix column count must be a multiple of 8"));
        }
        Ok(PackedInt4Matrix {
            rows,
            cols,
            words: pack(codes)?,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn words(&self) -> &[u32] {
        &self.words
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        self.cols / CODES_PER_WORD
    }

    #[inline]
    pub fn code(&self, row: usize, col: usize) -> u8 {
        let w = self.words[row * self.words_per_row() + col / CODES_PER_WORD];
        ((w >> (4 * (col % CODES_PER_WORD))) & 0xF) as u8
    }

    pub fn codes(&self) -> Vec<u8> {
        unpack(&self.words)
    }
}

/// Quantizes `wf` with symmetric scales `s = max|x| / 7` (floored at
/// [`MIN_SCALE`]) and zero-point 8, per column or over the whole tensor.
pub fn quantize_matrix(wf: &Fp16Matrix, mode: QuantMode) -> Result<(PackedInt4Matrix, QuantParams)> {
    let (rows, cols) = (wf.rows(), wf.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("weight matrix must be non-empty"));
    }
    if cols % CODES_PER_WORD != 0 {
        return Err(Error::Shape("weight column count must be a multiple of 8"));
    }
    if wf.data().iter().any(|h| !h.is_finite()) {
        return Err(Error::Domain("weight matrix has non-finite entries"));
    }

    let mut col_max = alloc::vec![0.0f32; cols];
    for r in 0..rows {
        for (m, h) in col_max.iter_mut().zip(wf.row(r)) {
            *m = m.max(h.to_f32().abs());
        }
    }
    let scale_of = |max: f32| (max / 7.0).max(MIN_SCALE);
    let scales: Vec<f32> = match mode {
        QuantMode::PerChannel => col_max.iter().map(|&m| scale_of(m)).collect(),
        QuantMode::PerTensor => {
            alloc::vec![scale_of(col_max.iter().fold(0.0f32, |a, &b| a.max(b)))]
        }
    };
    let params = QuantParams::new(mode, scales.clone(), alloc::vec![SYMMETRIC_ZERO_POINT; scales.len()])?;

    let mut codes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for (c, h) in wf.row(r).iter().enumerate() {
            codes.push(quantize(h.to_f32(), params.scale(c), params.zero_point(c))?);
        }
    }
    Ok((PackedInt4Matrix::from_codes(rows, cols, &codes)?, params))
}

/// Dequantizes the sub-block `rows x cols` of `w`. Column bounds must be
/// multiples of 8 (or the matrix width), so a tile never splits a word.
pub fn dequantize_tile(
    w: &PackedInt4Matrix,
    params: &QuantParams,
    rows: Range<usize>,
    cols: Range<usize>,
) -> Result<Fp16Matrix> {
    params.check_cols(w.cols())?;
    if rows.start > rows.end || rows.end > w.rows() {
        return Err(Error::Shape("tile row range out of bounds"));
    }
    if cols.start > cols.end || cols.end > w.cols() {
        return Err(Error::Shape("tile column range out of bounds"));
    }
    if !cols.start.is_multiple_of(CODES_PER_WORD) || !cols.end.is_multiple_of(CODES_PER_WORD) {
        return Err(Error::Shape("tile column range must be aligned to 8"));
    }
    let width = cols.len();
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows.clone() {
        for c in cols.clone() {
            data.push(dequantize(w.code(r, c), params.scale(c), params.zero_point(c)));
        }
    }
    Fp16Matrix::from_vec(rows.len(), width, data)
}

pub fn dequantize_matrix(w: &PackedInt4Matrix, params: &QuantParams) -> Result<Fp16Matrix> {
    dequantize_tile(w, params, 0..w.rows(), 0..w.cols())
}
