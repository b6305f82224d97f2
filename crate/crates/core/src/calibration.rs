//! Post-training statistics collection and range-to-parameter conversion.

use serde::{Deserialize, Serialize};

use crate::activations::MAX_INPUT_INTEGER_BITS;
use crate::error::{Error, Result};
use crate::fixedpoint::{pow2, QFormat};
use crate::float_ref::{float_cell_trace, FloatLstmModel, FloatLstmState};
use crate::generate::Sequence;
use crate::variant::{Gate, Gates, LstmVariant};

/// Running min/max envelope of one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TensorStats {
    pub min: f64,
    pub max: f64,
    /// Number of scalar values observed.
    pub count: u64,
}

impl TensorStats {
    pub fn from_range(min: f64, max: f64) -> Self {
        TensorStats { min, max, count: 1 }
    }

    /// Widens the envelope to cover `values`. Rejects NaN and infinities,
    /// naming `tensor` in the error.
    pub fn observe(&mut self, tensor: &str, values: &[f64]) -> Result<()> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(tensor.to_string()));
        }
        for &v in values {
            if self.count == 0 {
                self.min = v;
                self.max = v;
            } else {
                self.min = self.min.min(v);
                self.max = self.max.max(v);
            }
            self.count += 1;
        }
        Ok(())
    }

    /// Envelope of both; commutative and associative.
    pub fn merge(&self, other: &TensorStats) -> TensorStats {
        match (self.count, other.count) {
            (0, _) => *other,
            (_, 0) => *self,
            _ => TensorStats {
                min: self.min.min(other.min),
                max: self.max.max(other.max),
                count: self.count + other.count,
            },
        }
    }

    /// The observed range widened to include zero.
    pub fn range_finalize(&self) -> (f64, f64) {
        (self.min.min(0.0), self.max.max(0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// Statistics for every activation tensor the recipe needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub variant: LstmVariant,
    pub x: TensorStats,
    pub h: TensorStats,
    pub c: TensorStats,
    /// Hidden state before projection; only with projection.
    pub m: Option<TensorStats>,
    /// `W x + R h + P ⊙ c` per gate; only with layer norm.
    pub gates: Option<Gates<TensorStats>>,
}

impl CalibrationStats {
    pub fn empty(variant: LstmVariant) -> Self {
        let gate_stats = || Gates {
            input: variant.has_gate(Gate::Input).then(TensorStats::default),
            forget: TensorStats::default(),
            cell: TensorStats::default(),
            output: TensorStats::default(),
        };
        CalibrationStats {
            variant,
            x: TensorStats::default(),
            h: TensorStats::default(),
            c: TensorStats::default(),
            m: variant.projection.then(TensorStats::default),
            gates: variant.layer_norm.then(gate_stats),
        }
    }

    /// Named stats in a fixed order, e.g. `("g_f", stats)`.
    pub fn named(&self) -> Vec<(String, TensorStats)> {
        let mut out = vec![
            ("x".to_string(), self.x),
            ("h".to_string(), self.h),
            ("c".to_string(), self.c),
        ];
        if let Some(m) = self.m {
            out.push(("m".to_string(), m));
        }
        if let Some(g) = &self.gates {
            for (gate, s) in g.iter() {
                out.push((format!("g_{}", gate.suffix()), *s));
            }
        }
        out
    }

    /// Checks that the stats carry exactly the tensors `variant` needs.
    pub fn check_complete(&self, variant: LstmVariant) -> Result<()> {
        let expected = CalibrationStats::empty(variant).named();
        let have = self.named();
        for (name, _) in &have {
            if !expected.iter().any(|(n, _)| n == name) {
                return Err(Error::UnexpectedStats(name.clone()));
            }
        }
        for (name, _) in &expected {
            match have.iter().find(|(n, _)| n == name) {
                Some((_, s)) if s.count > 0 => {}
                _ => return Err(Error::MissingStats(name.clone())),
            }
        }
        Ok(())
    }

    pub fn merge(&self, other: &CalibrationStats) -> Result<CalibrationStats> {
        if self.variant != other.variant {
            return Err(Error::InvalidModel(format!(
                "cannot merge stats of variants {} and {}",
                self.variant, other.variant
            )));
        }
        let opt = |a: Option<TensorStats>, b: Option<TensorStats>| a.zip(b).map(|(a, b)| a.merge(&b));
        Ok(CalibrationStats {
            variant: self.variant,
            x: self.x.merge(&other.x),
            h: self.h.merge(&other.h),
            c: self.c.merge(&other.c),
            m: opt(self.m, other.m),
            gates: match (&self.gates, &other.gates) {
                (Some(a), Some(b)) => {
                    Some(a.try_map(|g, s| Ok::<_, Error>(s.merge(b.get(g).expect("same variant has same gates"))))?)
                }
                _ => None,
            },
        })
    }
}

/// Runs the float model over every sequence, starting each from the zero
/// state, and records `x` and `c` every step, `h` after every step, `m` when
/// there is a projection, and the per-gate accumulations when there is layer
/// normalization.
pub fn calibrate(model: &FloatLstmModel, dataset: &[Sequence]) -> Result<CalibrationStats> {
    model.validate()?;
    let mut stats = CalibrationStats::empty(model.variant);
    for seq in dataset {
        let mut state = FloatLstmState::zeros(model.dims);
        for x in seq {
            let trace = float_cell_trace(model, x, &state)?;
            stats.x.observe("x", x)?;
            stats.h.observe("h", &trace.state.h)?;
            stats.c.observe("c", &trace.state.c)?;
            if let Some(m) = stats.m.as_mut() {
                m.observe("m", &trace.hidden)?;
            }
            if let Some(g) = stats.gates.as_mut() {
                for gate in Gate::ALL {
                    if let (Some(s), Some(acc)) = (g.get_mut(gate), trace.accumulations.get(gate)) {
                        s.observe(&format!("g_{}", gate.suffix()), acc)?;
                    }
                }
            }
            state = trace.state;
        }
    }
    if stats.x.count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(stats)
}

/// Asymmetric int8 parameters: `real = scale * (q - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricParams {
    pub scale: f64,
    pub zero_point: i8,
}

/// Scale used when a tensor never leaves zero.
pub const DEGENERATE_ASYMMETRIC_SCALE: f64 = 1.0 / 255.0;

impl AsymmetricParams {
    pub fn quantize(&self, r: f64) -> i8 {
        let q = (r / self.scale).round() + self.zero_point as f64;
        q.clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        self.scale * (q as f64 - self.zero_point as f64)
    }

    /// Real range actually covered after nudging the zero point.
    pub fn nudged_range(&self) -> (f64, f64) {
        (self.dequantize(-128), self.dequantize(127))
    }
}

/// Maps `[min, max]` (widened to include zero) onto `[-128, 127]` with an
/// integer zero point.
pub fn asymmetric_params(min: f64, max: f64) -> Result<AsymmetricParams> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(Error::InvalidModel(format!("invalid range [{min}, {max}]")));
    }
    let (lo, hi) = (min.min(0.0), max.max(0.0));
    if hi - lo == 0.0 {
        return Ok(AsymmetricParams {
            scale: DEGENERATE_ASYMMETRIC_SCALE,
            zero_point: 0,
        });
    }
    let scale = (hi - lo) / 255.0;
    let zp = (-128.0 - lo / scale).round().clamp(-128.0, 127.0);
    Ok(AsymmetricParams {
        scale,
        zero_point: zp as i8,
    })
}

/// Smallest `Q{m}.{15-m}` (with `m >= 0`) whose power-of-two range `[-2^m, 2^m]`
/// covers the measured range. An all-zero range yields `Q0.15`.
pub fn pot_extend(min: f64, max: f64) -> Result<QFormat> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(Error::InvalidModel(format!("invalid range [{min}, {max}]")));
    }
    let max_abs = min.abs().max(max.abs());
    let m = (0..=MAX_INPUT_INTEGER_BITS)
        .find(|&m| pow2(m as i32) >= max_abs)
        .ok_or(Error::CellRangeTooLarge { max_abs })?;
    QFormat::q16(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observe_examples() {
        let mut s = TensorStats::default();
        s.observe("t", &[1.0, -2.0]).unwrap();
        assert_eq!((s.min, s.max), (-2.0, 1.0));
        s.observe("t", &[3.0]).unwrap();
        assert_eq!((s.min, s.max), (-2.0, 3.0));
        s.observe("t", &[0.0]).unwrap();
        assert_eq!((s.min, s.max), (-2.0, 3.0));
        assert_eq!(s.count, 4);
        let err = s.observe("g_f", &[f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("g_f"));
    }

    #[test]
    fn finalize_includes_zero() {
        let s = TensorStats::from_range(0.2, 1.0);
        assert_eq!(s.range_finalize(), (0.0, 1.0));
        let s = TensorStats::from_range(-3.0, -1.0);
        assert_eq!(s.range_finalize(), (-3.0, 0.0));
    }

    #[test]
    fn asymmetric_examples() {
        let p = asymmetric_params(0.0, 2.55).unwrap();
        assert!((p.scale - 0.01).abs() < 1e-15);
        assert_eq!(p.zero_point, -128);
        let p = asymmetric_params(-1.28, 1.27).unwrap();
        assert!((p.scale - 0.01).abs() < 1e-15);
        assert_eq!(p.zero_point, 0);
        let p = asymmetric_params(0.2, 1.0).unwrap();
        assert_eq!(p.scale, 1.0 / 255.0);
        assert_eq!(p.zero_point, -128);
        assert_eq!(p.dequantize(p.zero_point), 0.0);
    }

    #[test]
    fn asymmetric_degenerate() {
        let p = asymmetric_params(0.0, 0.0).unwrap();
        assert_eq!(p.scale, DEGENERATE_ASYMMETRIC_SCALE);
        assert_eq!(p.zero_point, 0);
        assert!(asymmetric_params(1.0, -1.0).is_err());
    }

    #[test]
    fn pot_examples() {
        assert_eq!(pot_extend(-3.2, 10.0).unwrap(), QFormat::q16(4).unwrap());
        assert_eq!(pot_extend(-1.0, 1.0).unwrap(), QFormat::Q0_15);
        assert_eq!(pot_extend(-0.3, 0.4).unwrap(), QFormat::Q0_15);
        assert_eq!(pot_extend(0.0, 0.0).unwrap(), QFormat::Q0_15);
        assert_eq!(pot_extend(-64.0, 3.0).unwrap(), QFormat::q16(6).unwrap());
        assert!(matches!(pot_extend(-64.5, 0.0), Err(Error::CellRangeTooLarge { .. })));
    }

    #[test]
    fn stats_completeness() {
        let v = LstmVariant {
            layer_norm: true,
            cifg: true,
            ..LstmVariant::PLAIN
        };
        let mut s = CalibrationStats::empty(v);
        assert!(matches!(s.check_complete(v), Err(Error::MissingStats(_))));
        for t in [&mut s.x, &mut s.h, &mut s.c] {
            t.observe("t", &[0.5]).unwrap();
        }
        let g = s.gates.as_mut().unwrap();
        for gate in [Gate::Forget, Gate::Cell, Gate::Output] {
            g.get_mut(gate).unwrap().observe("g", &[1.0]).unwrap();
        }
        s.check_complete(v).unwrap();
        let proj = LstmVariant { projection: true, ..v };
        assert!(matches!(s.check_complete(proj), Err(Error::MissingStats(n)) if n == "m"));
        assert!(matches!(
            s.check_complete(LstmVariant::PLAIN),
            Err(Error::UnexpectedStats(_))
        ));
    }
}
