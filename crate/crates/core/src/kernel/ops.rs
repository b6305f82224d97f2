//! Integer building blocks of one cell step.

use serde::{Deserialize, Serialize};

use crate::activations::tanh_raw;
use crate::error::{Error, Result};
use crate::fixedpoint::{
    integer_sqrt, rescale, rescale_wide, rounded_shift_right, saturate_i16, saturate_i8, EffectiveScale,
};
use crate::tensor::Matrix;

/// Longest int8 x int8 dot product that cannot overflow an int32 accumulator.
pub const SAFE_ACCUMULATION_DEPTH: usize = 1 << 15;

/// Raw accumulators of one gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateAccumulators {
    /// `W x` plus the folded input zero point.
    pub acc_x: Vec<i32>,
    /// `R h` plus the bias (no layer norm) and the folded state zero point.
    pub acc_h: Vec<i32>,
    /// `P ⊙ c`, only with peepholes.
    pub acc_c: Option<Vec<i32>>,
}

/// Multipliers taking each accumulator to the gate's int16 output scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEffectiveScales {
    pub x: EffectiveScale,
    pub h: EffectiveScale,
    pub c: Option<EffectiveScale>,
}

/// `W v + bias` with exact int32 products; the bias is added saturating.
pub fn matvec_i8(w: &Matrix<i8>, v: &[i8], bias: &[i32]) -> Result<Vec<i32>> {
    if w.cols() > SAFE_ACCUMULATION_DEPTH {
        return Err(Error::UnsafeAccumulationDepth { depth: w.cols() });
    }
    if v.len() != w.cols() {
        return Err(Error::dims("matvec operand", w.cols(), v.len()));
    }
    if bias.len() != w.rows() {
        return Err(Error::dims("matvec bias", w.rows(), bias.len()));
    }
    Ok(w.iter_rows()
        .zip(bias)
        .map(|(row, &b)| {
            let dot: i32 = row.iter().zip(v).map(|(&a, &x)| a as i32 * x as i32).sum();
            dot.saturating_add(b)
        })
        .collect())
}

pub fn elementwise_mul_i16(a: &[i16], b: &[i16]) -> Result<Vec<i32>> {
    if a.len() != b.len() {
        return Err(Error::dims("elementwise product", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).collect())
}

/// Rescales each accumulator on its own, saturates each to int16 and adds
/// them with saturation.
pub fn gate_pre_activation(accs: &GateAccumulators, eff: &GateEffectiveScales) -> Result<Vec<i16>> {
    let n = accs.acc_x.len();
    if accs.acc_h.len() != n {
        return Err(Error::dims("recurrent accumulator", n, accs.acc_h.len()));
    }
    let branch = |acc: i32, s: EffectiveScale| saturate_i16(rescale(acc, s) as i64) as i64;
    let mut out: Vec<i16> = accs
        .acc_x
        .iter()
        .zip(&accs.acc_h)
        .map(|(&x, &h)| saturate_i16(branch(x, eff.x) + branch(h, eff.h)))
        .collect();
    match (&accs.acc_c, eff.c) {
        (Some(acc_c), Some(s)) => {
            if acc_c.len() != n {
                return Err(Error::dims("peephole accumulator", n, acc_c.len()));
            }
            for (o, &c) in out.iter_mut().zip(acc_c) {
                *o = saturate_i16(*o as i64 + branch(c, s));
            }
        }
        (None, None) => {}
        _ => {
            return Err(Error::InvalidModel(
                "peephole accumulator and scale must come together".into(),
            ))
        }
    }
    Ok(out)
}

/// `round(a / b)` with ties away from zero, for `b > 0`.
fn div_round(a: i128, b: i128) -> i128 {
    let half = b / 2;
    if a >= 0 {
        (a + half) / b
    } else {
        -((-a + half) / b)
    }
}

/// Layer normalization over int16 inputs. The normalized value is held at
/// scale `2^-10`; `coefficients * normalized + bias` is then rescaled by
/// `output_scale` into int16.
pub fn layer_norm_integer(
    q: &[i16],
    coefficients: &[i16],
    bias: &[i32],
    output_scale: EffectiveScale,
) -> Result<Vec<i16>> {
    let n = q.len();
    if n == 0 {
        return Err(Error::dims("layer norm input", 1, 0));
    }
    if coefficients.len() != n {
        return Err(Error::dims("layer norm coefficients", n, coefficients.len()));
    }
    if bias.len() != n {
        return Err(Error::dims("layer norm bias", n, bias.len()));
    }
    let n_wide = n as i128;
    let sum: i128 = q.iter().map(|&v| v as i128).sum();
    let sum_sq: i128 = q.iter().map(|&v| (v as i128) * (v as i128)).sum();
    // mean and variance carry 10 and 20 extra fractional bits
    let mean = div_round(sum << 10, n_wide);
    let var = (div_round(sum_sq << 20, n_wide) - mean * mean).max(0);
    let sigma = integer_sqrt(var as u64) as i128;

    Ok(q.iter()
        .zip(coefficients.iter().zip(bias))
        .map(|(&v, (&l, &b))| {
            let normed = if sigma == 0 {
                0
            } else {
                div_round((((v as i128) << 10) - mean) << 10, sigma)
            };
            let scaled = normed as i64 * l as i64 + b as i64;
            saturate_i16(rescale_wide(scaled, output_scale) as i64)
        })
        .collect())
}

/// `i = min(32768 - f, 32767)` for coupled input and forget gates.
pub fn cifg_input_gate(f: &[i16]) -> Vec<i16> {
    f.iter().map(|&f| (32768 - f as i32).min(32767) as i16).collect()
}

/// `c' = i ⊙ z + f ⊙ c` with `i, z, f` in `Q0.15` and `c` in `Q{m}.{15-m}`.
pub fn cell_update(i: &[i16], z: &[i16], f: &[i16], c: &[i16], m: u32) -> Result<Vec<i16>> {
    let n = c.len();
    for (what, v) in [("input gate", i), ("cell input", z), ("forget gate", f)] {
        if v.len() != n {
            return Err(Error::dims(what, n, v.len()));
        }
    }
    Ok((0..n)
        .map(|k| {
            let iz = rounded_shift_right(i[k] as i64 * z[k] as i64, 15 + m);
            let fc = rounded_shift_right(f[k] as i64 * c[k] as i64, 15);
            saturate_i16(iz + fc)
        })
        .collect())
}

/// `m = rescale(o ⊙ tanh(c), scale) + zero_point` as int8, where `scale`
/// maps the `Q0.30` product to the hidden-state scale.
pub fn hidden_update(o: &[i16], c: &[i16], m: u32, scale: EffectiveScale, zero_point: i8) -> Result<Vec<i8>> {
    if o.len() != c.len() {
        return Err(Error::dims("output gate", c.len(), o.len()));
    }
    Ok(o.iter()
        .zip(c)
        .map(|(&o, &c)| {
            let prod = o as i32 * tanh_raw(c, m) as i32;
            saturate_i8(rescale(prod, scale) as i64 + zero_point as i64)
        })
        .collect())
}

/// `h = rescale(W m + bias, scale) + zero_point` as int8.
pub fn projection_step(
    w: &Matrix<i8>,
    m: &[i8],
    bias: &[i32],
    scale: EffectiveScale,
    zero_point: i8,
) -> Result<Vec<i8>> {
    Ok(matvec_i8(w, m, bias)?
        .into_iter()
        .map(|acc| saturate_i8(rescale(acc, scale) as i64 + zero_point as i64))
        .collect())
}
