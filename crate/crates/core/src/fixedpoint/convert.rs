//! Real-valued views of fixed-point data. Used at file boundaries and when
//! building models, never inside the integer kernel.

use super::QFormat;

/// Exact `2^e` for any `e` whose result is representable (including
/// subnormals); saturates to `0` or `inf` outside that range.
pub fn pow2(e: i32) -> f64 {
    if (-1022..=1023).contains(&e) {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e < -1022 {
        if e < -1074 {
            0.0
        } else {
            f64::from_bits(1u64 << (e + 1074))
        }
    } else {
        f64::INFINITY
    }
}

impl QFormat {
    /// Real value of one least-significant bit.
    pub fn scale(self) -> f64 {
        pow2(-(self.fractional_bits() as i32))
    }

    pub fn to_real(self, q: i64) -> f64 {
        q as f64 * self.scale()
    }

    /// Nearest representable raw value, saturating at the format bounds.
    pub fn from_real(self, x: f64) -> i64 {
        let q = (x / self.scale()).round();
        q.clamp(self.min_raw() as f64, self.max_raw() as f64) as i64
    }

    /// Real range `[-2^m, 2^m - 2^-n]`.
    pub fn real_range(self) -> (f64, f64) {
        (self.to_real(self.min_raw()), self.to_real(self.max_raw()))
    }
}
