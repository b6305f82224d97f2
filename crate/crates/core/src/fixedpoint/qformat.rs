use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed fixed-point format `Q{m}.{n}`: `m` integer bits, `n` fractional
/// bits and a sign bit, so `m + n + 1` is the storage width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawQFormat", into = "RawQFormat")]
pub struct QFormat {
    m: u32,
    n: u32,
}

impl QFormat {
    /// Gate pre-activations and activation inputs.
    pub const Q3_12: QFormat = QFormat { m: 3, n: 12 };
    /// Activation outputs.
    pub const Q0_15: QFormat = QFormat { m: 0, n: 15 };

    pub fn new(m: u32, n: u32) -> Result<Self> {
        let width = m + n + 1;
        if width != 16 && width != 32 {
            return Err(Error::UnsupportedFormat {
                m,
                n,
                width,
                context: "Q format (width must be 16 or 32)",
            });
        }
        Ok(QFormat { m, n })
    }

    /// `Q{m}.{15-m}`, the 16-bit family used for activations and the cell state.
    pub fn q16(m: u32) -> Result<Self> {
        if m > 15 {
            return Err(Error::UnsupportedFormat {
                m,
                n: 0,
                width: 16,
                context: "Q format",
            });
        }
        QFormat::new(m, 15 - m)
    }

    pub fn integer_bits(self) -> u32 {
        self.m
    }

    pub fn fractional_bits(self) -> u32 {
        self.n
    }

    pub fn width(self) -> u32 {
        self.m + self.n + 1
    }

    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.width() - 1))
    }

    pub fn max_raw(self) -> i64 {
        (1i64 << (self.width() - 1)) - 1
    }
}

impl std::fmt::Display for QFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}.{}", self.m, self.n)
    }
}

#[derive(Serialize, Deserialize)]
struct RawQFormat {
    m: u32,
    n: u32,
}

impl TryFrom<RawQFormat> for QFormat {
    type Error = Error;

    fn try_from(raw: RawQFormat) -> Result<Self> {
        QFormat::new(raw.m, raw.n)
    }
}

impl From<QFormat> for RawQFormat {
    fn from(q: QFormat) -> Self {
        RawQFormat { m: q.m, n: q.n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_invariant() {
        for m in 0..=15 {
            let q = QFormat::q16(m).unwrap();
            assert_eq!(q.integer_bits() + q.fractional_bits() + 1, 16);
            assert_eq!(q.min_raw(), -32768);
            assert_eq!(q.max_raw(), 32767);
        }
        let wide = QFormat::new(7, 24).unwrap();
        assert_eq!(wide.width(), 32);
        assert_eq!(wide.max_raw(), i32::MAX as i64);
    }

    #[test]
    fn rejects_odd_widths() {
        assert!(QFormat::new(3, 10).is_err());
        assert!(QFormat::q16(16).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(QFormat::Q3_12.to_string(), "Q3.12");
        assert_eq!(QFormat::q16(4).unwrap().to_string(), "Q4.11");
    }
}
