//! JSON file formats: models, calibration statistics, sequences, run
//! outputs and comparison reports.
//!
//! Every file is an object with `format_version` and `kind`. Real scales are
//! stored as an exact `mantissa * 2^exponent` pair plus a decimal rendering,
//! so a reload is bit-exact.

mod model;
mod report;
mod sequences;
mod stats;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::pow2;

pub use model::{model_from_json, model_to_json, ModelFile};
pub use report::{
    compare_models, BenchEngine, BenchReport, CompareReport, ErrorStats, RunOutput, RunSequence, Runtime,
    SequenceComparison, WithinK, WITHIN_STEPS,
};
pub use sequences::{SequenceFile, SequenceRecord};
pub use stats::{stats_from_json, stats_to_json};

pub const FORMAT_VERSION: u32 = 1;

/// A finite `f64` stored as `mantissa * 2^exponent` with a decimal copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactF64 {
    pub mantissa: i64,
    pub exponent: i32,
    pub decimal: String,
}

impl ExactF64 {
    pub fn new(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite("scale".into()));
        }
        let bits = v.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i64;
        let (mut mantissa, mut exponent) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1i64 << 52), biased - 1075)
        };
        if mantissa == 0 {
            exponent = 0;
        } else {
            let tz = mantissa.trailing_zeros();
            mantissa >>= tz;
            exponent += tz as i32;
        }
        if v.is_sign_negative() {
            mantissa = -mantissa;
        }
        Ok(ExactF64 {
            mantissa,
            exponent,
            decimal: format!("{v:e}"),
        })
    }

    pub fn value(&self) -> Result<f64> {
        let bad = || {
            Error::Format(format!(
                "scale {}*2^{} is not a finite double",
                self.mantissa, self.exponent
            ))
        };
        if self.mantissa.unsigned_abs() >= 1u64 << 53 {
            return Err(bad());
        }
        let v = if self.mantissa == 0 {
            0.0
        } else {
            let p = pow2(self.exponent);
            if p == 0.0 || !p.is_finite() {
                return Err(bad());
            }
            self.mantissa as f64 * p
        };
        if !v.is_finite() {
            return Err(bad());
        }
        match self.decimal.parse::<f64>() {
            Ok(d) if d == v => Ok(v),
            _ => Err(Error::Format(format!(
                "scale decimal `{}` disagrees with {}*2^{}",
                self.decimal, self.mantissa, self.exponent
            ))),
        }
    }
}

/// Checks the `format_version` and `kind` header fields of a parsed file.
pub(crate) fn check_header(value: &serde_json::Value, expected_kind: &str) -> Result<()> {
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::Format(format!(
            "unsupported format_version {:?}, expected {FORMAT_VERSION}",
            value.get("format_version")
        )));
    }
    let kind = value.get("kind").and_then(|k| k.as_str());
    if kind != Some(expected_kind) {
        return Err(Error::Format(format!(
            "expected a `{expected_kind}` file, found kind {kind:?}"
        )));
    }
    Ok(())
}

/// The `kind` field of a file, if present.
pub fn file_kind(value: &serde_json::Value) -> Option<&str> {
    value.get("kind").and_then(|k| k.as_str())
}

pub fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_scales_round_trip() {
        for v in [
            0.0,
            1.0,
            -0.75,
            0.1,
            1.0 / 255.0,
            3.0e-300,
            f64::from_bits(1),
            f64::MAX,
            -2.5e-8,
        ] {
            let e = ExactF64::new(v).unwrap();
            assert_eq!(e.value().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        let e = ExactF64::new(0.375).unwrap();
        assert_eq!((e.mantissa, e.exponent), (3, -3));
        assert!(ExactF64::new(f64::NAN).is_err());
    }

    #[test]
    fn inconsistent_decimal_rejected() {
        let mut e = ExactF64::new(0.5).unwrap();
        e.decimal = "0.25".into();
        assert!(e.value().is_err());
    }
}
