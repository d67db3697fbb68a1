//! Software binary16 and binary32 arithmetic.
//!
//! Every conversion rounds to nearest, ties to even. Results are defined by
//! bit manipulation alone, so they do not depend on the host's half-precision
//! support.

use core::fmt;

/// An IEEE 754 binary16 value, stored as its raw code.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct F16(pub u16);

impl F16 {
    pub const ZERO: F16 = F16(0x0000);
    pub const NEG_ZERO: F16 = F16(0x8000);
    pub const ONE: F16 = F16(0x3C00);
    pub const INFINITY: F16 = F16(0x7C00);
    pub const NEG_INFINITY: F16 = F16(0xFC00);
    pub const NAN: F16 = F16(0x7E00);
    /// Largest finite value, 65504.
    pub const MAX: F16 = F16(0x7BFF);

    #[inline]
    pub const fn from_bits(bits: u16) -> Self {
        F16(bits)
    }

    #[inline]
    pub const fn to_bits(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn from_f32(x: f32) -> Self {
        f16_from_f32(x)
    }

    #[inline]
    pub fn to_f32(self) -> f32 {
        f16_to_f32(self)
    }

    #[inline]
    pub const fn is_nan(self) -> bool {
        (self.0 & 0x7C00) == 0x7C00 && (self.0 & 0x03FF) != 0
    }

    #[inline]
    pub const fn is_finite(self) -> bool {
        (self.0 & 0x7C00) != 0x7C00
    }
}

impl fmt::Debug for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F16({:#06x} = {})", self.0, self.to_f32())
    }
}

impl fmt::Display for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f32(), f)
    }
}

/// Nearest binary16 to `x`, ties to even.
///
/// Magnitudes that round past 65504 become infinity. NaN maps to a quiet
/// NaN carrying the top payload bits.
pub fn f16_from_f32(x: f32) -> F16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xFF) as i32;
    let man = bits & 0x007F_FFFF;

    if exp == 0xFF {
        if man == 0 {
            return F16(sign | 0x7C00);
        }
        return F16(sign | 0x7E00 | (man >> 13) as u16);
    }

    let e = exp - 127;
    if e > 15 {
        return F16(sign | 0x7C00);
    }

    if e >= -14 {
        let half_man = (man >> 13) as u16;
        let rest = man & 0x1FFF;
        let mut out = sign | (((e + 15) as u16) << 10) | half_man;
        // A carry out of the mantissa bumps the exponent, which also yields
        // infinity from 0x7BFF.
        if rest > 0x1000 || (rest == 0x1000 && (half_man & 1) == 1) {
            out += 1;
        }
        return F16(out);
    }

    if e < -25 {
        return F16(sign);
    }

    // Subnormal result: value / 2^-24 = full_man * 2^(e + 1).
    let full_man = man | 0x0080_0000;
    let shift = (-(e + 1)) as u32;
    let half_man = (full_man >> shift) as u16;
    let rest = full_man & ((1u32 << shift) - 1);
    let halfway = 1u32 << (shift - 1);
    let mut out = sign | half_man;
    if rest > halfway || (rest == halfway && (half_man & 1) == 1) {
        out += 1;
    }
    F16(out)
}

/// Exact widening of a binary16 code.
pub fn f16_to_f32(h: F16) -> f32 {
    let bits = h.0 as u32;
    let sign = (bits & 0x8000) << 16;
    let exp = (bits >> 10) & 0x1F;
    let man = bits & 0x03FF;

    let out = match exp {
        0 if man == 0 => sign,
        0 => {
            // Normalise the subnormal: shift the leading one into bit 10.
            let lz = man.leading_zeros() - 21;
            let man = (man << lz) & 0x03FF;
            let exp = 127 - 15 + 1 - lz;
            sign | (exp << 23) | (man << 13)
        }
        0x1F if man == 0 => sign | 0x7F80_0000,
        0x1F => sign | 0x7FC0_0000 | (man << 13),
        _ => sign | ((exp + 127 - 15) << 23) | (man << 13),
    };
    f32::from_bits(out)
}

/// A binary32 accumulator for one multiply-accumulate lane.
#[derive(Clone, Copy, Default, PartialEq)]
#[repr(transparent)]
pub struct F32Acc(pub f32);

impl F32Acc {
    pub const ZERO: F32Acc = F32Acc(0.0);

    #[inline]
    pub fn value(self) -> f32 {
        self.0
    }

    #[inline]
    pub fn to_f16(self) -> F16 {
        f16_from_f32(self.0)
    }
}

impl fmt::Debug for F32Acc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F32Acc({:#010x} = {})", self.0.to_bits(), self.0)
    }
}

/// `acc + widen(a) * widen(b)`.
///
/// The product of two binary16 values always fits binary32 exactly (22
/// significand bits, exponent range within binary32), so the only rounding
/// is the final addition. Rust never contracts this into a fused
/// multiply-add.
#[inline]
pub fn fma_acc(acc: F32Acc, a: F16, b: F16) -> F32Acc {
    F32Acc(acc.0 + a.to_f32() * b.to_f32())
}
