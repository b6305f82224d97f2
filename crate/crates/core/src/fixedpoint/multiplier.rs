use super::convert::pow2;
use super::ops::EffectiveScale;
use crate::error::{Error, Result};

/// Splits a positive finite `x` into `(frac, exp)` with `x = frac * 2^exp`
/// and `frac` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i32) {
    const EXP_MASK: u64 = 0x7ff << 52;
    let bits = x.to_bits();
    let biased = ((bits & EXP_MASK) >> 52) as i32;
    if biased == 0 {
        // subnormal: renormalize first
        let (frac, exp) = frexp(x * pow2(64));
        return (frac, exp - 64);
    }
    let frac = f64::from_bits((bits & !EXP_MASK) | (1022u64 << 52));
    (frac, biased - 1022)
}

/// Converts a real multiplier into `mantissa * 2^(exponent - 31)` with the
/// mantissa normalized to `[2^30, 2^31)`. Relative error is at most `2^-31`.
pub fn quantize_multiplier(s: f64) -> Result<EffectiveScale> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::InvalidScale(s));
    }
    let (frac, mut exponent) = frexp(s);
    let mut mantissa = (frac * pow2(31)).round() as i64;
    if mantissa == 1 << 31 {
        mantissa = 1 << 30;
        exponent += 1;
    }
    Ok(EffectiveScale {
        mantissa: mantissa as i32,
        exponent,
    })
}

impl EffectiveScale {
    /// The real value this scale stands for.
    pub fn to_f64(self) -> f64 {
        // two steps so tiny results stay exact when they are representable
        let e = self.exponent - 31;
        let half = e / 2;
        self.mantissa as f64 * pow2(half) * pow2(e - half)
    }
}
