use serde::{Deserialize, Serialize};

/// A real multiplier in quantized form: `mantissa * 2^(exponent - 31)`.
///
/// Non-zero mantissas are normalized to `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EffectiveScale {
    pub mantissa: i32,
    pub exponent: i32,
}

impl EffectiveScale {
    pub const ZERO: EffectiveScale = EffectiveScale {
        mantissa: 0,
        exponent: 0,
    };

    /// Exactly one.
    pub const ONE: EffectiveScale = EffectiveScale {
        mantissa: 1 << 30,
        exponent: 1,
    };

    pub fn is_normalized(self) -> bool {
        self.mantissa == 0 || (self.mantissa >= 1 << 30)
    }
}

/// `round(v / 2^k)` with ties away from zero.
#[inline]
pub fn rounded_shift_right(v: i64, k: u32) -> i64 {
    debug_assert!(k < 64);
    if k == 0 {
        return v;
    }
    shift_round_i128(v as i128, k) as i64
}

#[inline]
fn shift_round_i128(v: i128, k: u32) -> i128 {
    // floor((v + 2^(k-1) - [v < 0]) / 2^k) rounds half away from zero.
    let nudge = (1i128 << (k - 1)) - ((v < 0) as i128);
    (v + nudge) >> k
}

/// Multiplies `v` by the scale, rounding to nearest (ties away from zero) and
/// saturating to the int32 range.
#[inline]
pub fn rescale(v: i32, s: EffectiveScale) -> i32 {
    let prod = v as i64 * s.mantissa as i64;
    let shift = 31 - s.exponent;
    if (1..=62).contains(&shift) {
        let nudge = (1i64 << (shift - 1)) - ((prod < 0) as i64);
        // |prod| < 2^62, so the nudge cannot overflow.
        saturate_i32((prod + nudge) >> shift)
    } else {
        rescale_wide(v as i64, s)
    }
}

/// `rescale` for 64-bit inputs such as the layer-norm accumulator.
pub fn rescale_wide(v: i64, s: EffectiveScale) -> i32 {
    let prod = v as i128 * s.mantissa as i128;
    let shift = 31 - s.exponent;
    let out = if shift > 0 {
        shift_round_i128(prod, shift.min(126) as u32)
    } else {
        // |prod| <= 2^94 and any non-zero prod is at least 2^30, so a left
        // shift of 32 saturates without overflowing i128.
        prod << (-shift).min(32)
    };
    out.clamp(i32::MIN as i128, i32::MAX as i128) as i32
}

/// Clamps `v` to the signed range of a `bits`-wide integer.
#[inline]
pub fn saturating_cast(v: i64, bits: u32) -> i64 {
    debug_assert!((1..=64).contains(&bits));
    let hi = (1i128 << (bits - 1)) - 1;
    let lo = -(1i128 << (bits - 1));
    (v as i128).clamp(lo, hi) as i64
}

#[inline]
pub fn saturate_i8(v: i64) -> i8 {
    v.clamp(i8::MIN as i64, i8::MAX as i64) as i8
}

#[inline]
pub fn saturate_i16(v: i64) -> i16 {
    v.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

#[inline]
pub fn saturate_i32(v: i64) -> i32 {
    v.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// `floor(sqrt(v))`, computed digit by digit in a fixed 32 iterations.
pub fn integer_sqrt(v: u64) -> u32 {
    let mut rem = v;
    let mut root: u64 = 0;
    let mut bit: u64 = 1 << 62;
    for _ in 0..32 {
        let trial = root + bit;
        let take = (rem >= trial) as u64;
        rem -= trial * take;
        root = (root >> 1) + bit * take;
        bit >>= 2;
    }
    root as u32
}
