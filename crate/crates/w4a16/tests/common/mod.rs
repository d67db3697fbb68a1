//! Reference implementations that share no code with the crate under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use w4a16_core::numerics::F16;
use w4a16_core::quant::{PackedInt4Matrix, QuantMode, QuantParams};
use w4a16_core::Fp16Matrix;

/// Decodes a binary16 code straight from its fields.
pub fn decode_f16(bits: u16) -> f64 {
    let sign = if bits & 0x8000 != 0 { -1.0 } else { 1.0 };
    let exp = ((bits >> 10) & 0x1f) as i32;
    let mant = (bits & 0x3ff) as f64;
    sign * match exp {
        0 => mant * 2f64.powi(-24),
        31 if mant == 0.0 => f64::INFINITY,
        31 => f64::NAN,
        _ => (1024.0 + mant) * 2f64.powi(exp - 25),
    }
}

/// Every finite non-negative binary16 value in increasing order, with its code.
pub struct F16Table {
    values: Vec<(f64, u16)>,
}

impl F16Table {
    pub fn new() -> Self {
        F16Table {
            values: (0..=0x7bffu16).map(|b| (decode_f16(b), b)).collect(),
        }
    }

    /// Nearest binary16 to `x` by search, ties to the even code, overflow to
    /// infinity at or beyond the midpoint above MAX.
    pub fn round(&self, x: f64) -> u16 {
        if x.is_nan() {
            return 0x7e00;
        }
        let sign = if x.is_sign_negative() { 0x8000 } else { 0 };
        let a = x.abs();
        // Halfway between MAX (65504) and the next step (65536).
        if a >= 65520.0 {
            return sign | 0x7c00;
        }
        let idx = self.values.partition_point(|&(v, _)| v < a);
        let code = if idx == 0 {
            self.values[0].1
        } else if idx == self.values.len() {
            self.values[idx - 1].1
        } else {
            let (hi, hc) = self.values[idx];
            let (lo, lc) = self.values[idx - 1];
            if hi == a {
                hc
            } else if a - lo < hi - a {
                lc
            } else if hi - a < a - lo {
                hc
            } else if lc % 2 == 0 {
                lc
            } else {
                hc
            }
        };
        sign | code
    }
}

/// `C = A * B` in f64, then each entry rounded to binary16 by table search.
pub fn oracle_gemm(table: &F16Table, a: &Fp16Matrix, b: &Fp16Matrix) -> Vec<u16> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut sum = 0.0f64;
            for t in 0..k {
                sum += decode_f16(a.get(i, t).to_bits()) * decode_f16(b.get(t, j).to_bits());
            }
            out.push(table.round(sum));
        }
    }
    out
}

/// Dequantization by hand: `s * (q - z)` in f64, rounded by table search.
pub fn oracle_dequant(table: &F16Table, w: &PackedInt4Matrix, p: &QuantParams) -> Fp16Matrix {
    let (k, n) = (w.rows(), w.cols());
    let words = w.words();
    let mut data = Vec::with_capacity(k * n);
    for r in 0..k {
        for c in 0..n {
            let idx = r * n + c;
            let q = (words[idx / 8] >> (4 * (idx % 8))) & 0xf;
            let v = p.scale(c) as f64 * (q as f64 - p.zero_point(c) as f64);
            data.push(F16::from_bits(table.round(v)));
        }
    }
    Fp16Matrix::from_vec(k, n, data).unwrap()
}

pub fn bits(m: &Fp16Matrix) -> Vec<u16> {
    m.data().iter().map(|h| h.to_bits()).collect()
}

/// A problem whose f32 accumulation is exact: activations are multiples of
/// 1/8 in [-2, 2], scales are powers of two in [1/8, 2].
pub struct GridInstance {
    pub a: Fp16Matrix,
    pub w: PackedInt4Matrix,
    pub params: QuantParams,
}

pub fn grid_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> GridInstance {
    let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-16i32..=16) as f32 / 8.0).collect();
    let codes: Vec<u8> = (0..k * n).map(|_| rng.random_range(0u8..16)).collect();
    let pow2 = |rng: &mut ChaCha8Rng| 2f32.powi(rng.random_range(-3i32..=1));
    let params = if rng.random_bool(0.5) {
        QuantParams::new(
            QuantMode::PerChannel,
            (0..n).map(|_| pow2(rng)).collect(),
            (0..n).map(|_| rng.random_range(0u8..16)).collect(),
        )
        .unwrap()
    } else {
        QuantParams::per_tensor(pow2(rng), rng.random_range(0u8..16)).unwrap()
    };
    GridInstance {
        a: Fp16Matrix::from_f32(m, k, &a).unwrap(),
        w: PackedInt4Matrix::from_codes(k, n, &codes).unwrap(),
        params,
    }
}

pub fn random_shape(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize, usize) {
    (
        rng.random_range(1..=max),
        8 * rng.random_range(1..=max / 8),
        rng.random_range(1..=max),
    )
}
