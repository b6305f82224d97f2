//! Lookup-table-free sigmoid and tanh on 16-bit fixed-point inputs.
//!
//! Inputs are `Q{m}.{15-m}` with `m` in `0..=6`; outputs are always `Q0.15`.
//! Both functions reduce to `exp(-y)` for `y >= 0`, computed as
//! `2^-k * exp(-r)` with `y = k ln2 + r`, a degree-10 polynomial for
//! `exp(-r)` on `[0, ln 2)` and a variable shift for `2^-k`. The only data
//! dependent control is the shift amount, so the evaluation has no branches
//! and no tables.

mod error_sweep;

use serde::{Deserialize, Serialize};

pub use error_sweep::{activation_error_sweep, balanced_integer_bits, ActivationError};

use crate::error::{Error, Result};
use crate::fixedpoint::QFormat;

/// Largest supported number of integer bits for activation inputs.
pub const MAX_INPUT_INTEGER_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
}

/// round(ln 2 * 2^32)
const LN2_Q32: i64 = 2_977_044_472;

/// Taylor coefficients of exp(-r), (-1)^j / j! in Q30, j = 0..=10.
const EXP_NEG_Q30: [i64; 11] = [
    1_073_741_824,
    -1_073_741_824,
    536_870_912,
    -178_956_971,
    44_739_243,
    -8_947_849,
    1_491_308,
    -213_044,
    26_631,
    -2_959,
    296,
];

const ONE_Q30: i64 = 1 << 30;

/// `exp(-y)` in Q30 for `y >= 0` given in Q32.
#[inline]
fn exp_neg_q30(y_q32: i64) -> i64 {
    let k = y_q32 / LN2_Q32;
    let r = y_q32 - k * LN2_Q32;
    let mut p = EXP_NEG_Q30[10];
    for &c in EXP_NEG_Q30[..10].iter().rev() {
        p = c + ((p * r + (1 << 31)) >> 32);
    }
    let shift = k.min(62) as u32;
    (p + ((1i64 << shift) >> 1)) >> shift
}

/// `round(num * 2^15 / den)` for `num >= 0`, `den > 0`.
#[inline]
fn div_q15(num: i64, den: i64) -> i64 {
    ((num << 15) + (den >> 1)) / den
}

/// tanh of `q * 2^-(15-m)`. Assumes `m <= MAX_INPUT_INTEGER_BITS`.
#[inline]
pub(crate) fn tanh_raw(q: i16, m: u32) -> i16 {
    let a = (q as i64).abs();
    // 2|x| in Q32: |q| * 2^-(15-m) * 2 * 2^32
    let e = exp_neg_q30(a << (18 + m));
    let t = div_q15(ONE_Q30 - e, ONE_Q30 + e);
    let neg = (q < 0) as i64;
    let pos = t.min(32767);
    (pos + neg * (-t - pos)) as i16
}

/// sigmoid of `q * 2^-(15-m)`. Assumes `m <= MAX_INPUT_INTEGER_BITS`.
#[inline]
pub(crate) fn sigmoid_raw(q: i16, m: u32) -> i16 {
    let a = (q as i64).abs();
    let e = exp_neg_q30(a << (17 + m));
    let den = ONE_Q30 + e;
    let upper = div_q15(ONE_Q30, den).min(32767);
    let lower = div_q15(e, den);
    let neg = (q < 0) as i64;
    (upper + neg * (lower - upper)) as i16
}

fn check_input_format(fmt: QFormat) -> Result<u32> {
    let m = fmt.integer_bits();
    if fmt.width() != 16 || m > MAX_INPUT_INTEGER_BITS {
        return Err(Error::UnsupportedFormat {
            m,
            n: fmt.fractional_bits(),
            width: fmt.width(),
            context: "activation input (expected Q0.15 ..= Q6.9)",
        });
    }
    Ok(m)
}

/// Fixed-point tanh; the result is `Q0.15`, clamped to `[-32768, 32767]`.
pub fn fixed_tanh(q: i16, fmt: QFormat) -> Result<i16> {
    let m = check_input_format(fmt)?;
    Ok(tanh_raw(q, m))
}

/// Fixed-point sigmoid; the result is `Q0.15` in `[0, 32767]`.
pub fn fixed_sigmoid(q: i16, fmt: QFormat) -> Result<i16> {
    let m = check_input_format(fmt)?;
    Ok(sigmoid_raw(q, m))
}

/// Applies `kind` elementwise into `out`.
pub fn activate_slice(kind: ActivationKind, input: &[i16], fmt: QFormat, out: &mut [i16]) -> Result<()> {
    let m = check_input_format(fmt)?;
    if input.len() != out.len() {
        return Err(Error::dims("activation output", input.len(), out.len()));
    }
    match kind {
        ActivationKind::Sigmoid => {
            for (o, &q) in out.iter_mut().zip(input) {
                *o = sigmoid_raw(q, m);
            }
        }
        ActivationKind::Tanh => {
            for (o, &q) in out.iter_mut().zip(input) {
                *o = tanh_raw(q, m);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(m: u32) -> QFormat {
        QFormat::q16(m).unwrap()
    }

    fn dequant_in(v: i16, m: u32) -> f64 {
        v as f64 / (1u32 << (15 - m)) as f64
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(fixed_tanh(0, QFormat::Q3_12).unwrap(), 0);
        assert_eq!(fixed_tanh(32767, QFormat::Q3_12).unwrap(), 32767);
        let expected = 1f64.tanh() * 32768.0;
        let got = fixed_tanh(4096, QFormat::Q3_12).unwrap() as f64;
        assert!((got - expected).abs() <= 1.0, "{got} vs {expected}");
        assert!((got - 24957.0).abs() <= 2.0);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(fixed_sigmoid(0, QFormat::Q3_12).unwrap(), 16384);
        let lo = fixed_sigmoid(-32768, QFormat::Q3_12).unwrap();
        assert!((lo - 11).abs() <= 2, "{lo}");
        let hi = fixed_sigmoid(32767, QFormat::Q3_12).unwrap();
        assert!((hi - 32756).abs() <= 2, "{hi}");
    }

    #[test]
    fn rejects_unsupported_formats() {
        assert!(fixed_tanh(0, q(7)).is_err());
        assert!(fixed_sigmoid(0, QFormat::new(3, 28).unwrap()).is_err());
        let mut out = [0i16; 2];
        assert!(activate_slice(ActivationKind::Tanh, &[1, 2, 3], QFormat::Q3_12, &mut out).is_err());
    }

    #[test]
    fn exp_endpoints() {
        assert_eq!(exp_neg_q30(0), ONE_Q30);
        assert_eq!(exp_neg_q30(LN2_Q32), ONE_Q30 / 2);
        assert_eq!(exp_neg_q30(i64::MAX / 4), 0);
    }

    #[test]
    fn every_supported_format_is_accurate() {
        for m in 0..=MAX_INPUT_INTEGER_BITS {
            let mut worst_t: f64 = 0.0;
            let mut worst_s: f64 = 0.0;
            for v in (i16::MIN..=i16::MAX).step_by(7) {
                let x = dequant_in(v, m);
                let t = tanh_raw(v, m) as f64 / 32768.0;
                let s = sigmoid_raw(v, m) as f64 / 32768.0;
                worst_t = worst_t.max((t - x.tanh()).abs());
                worst_s = worst_s.max((s - 1.0 / (1.0 + (-x).exp())).abs());
            }
            assert!(worst_t <= 3e-4, "m={m} tanh err {worst_t}");
            assert!(worst_s <= 1.5e-4, "m={m} sigmoid err {worst_s}");
        }
    }

    #[test]
    fn slice_matches_scalar() {
        let input: Vec<i16> = (-20..20).map(|i| i * 1500).collect();
        let mut out = vec![0; input.len()];
        activate_slice(ActivationKind::Sigmoid, &input, q(4), &mut out).unwrap();
        for (&x, &y) in input.iter().zip(&out) {
            assert_eq!(y, fixed_sigmoid(x, q(4)).unwrap());
        }
    }
}
