//! Post-training quantization of a float model.
//!
//! Weights are symmetric int8, peepholes and layer-norm coefficients symmetric
//! int16, biases int32, `x`/`h`/`m` asymmetric int8 and the cell state int16
//! with a power-of-two scale. Zero points are folded into int32 offsets so the
//! kernel treats every activation as symmetric.

use serde::{Deserialize, Serialize};

use crate::calibration::{asymmetric_params, pot_extend, AsymmetricParams, CalibrationStats, TensorStats};
use crate::error::{Error, Result};
use crate::fixedpoint::{pow2, quantize_multiplier, QFormat};
use crate::float_ref::{FloatGate, FloatLstmModel, FloatLstmState};
use crate::kernel::{GateEffectiveScales, IntGate, IntLayerNorm, IntLstmState, IntProjection, IntegerLstm};
use crate::tensor::Matrix;
use crate::variant::{Dims, Gate, Gates, LstmVariant};

/// Scale of the `Q3.12` gate pre-activation without layer norm.
pub const GATE_SCALE: f64 = 1.0 / 4096.0;
/// Scale of the normalized value inside integer layer norm.
pub const NORMALIZED_SCALE: f64 = 1.0 / 1024.0;
/// Scale used for a symmetric tensor that is all zero.
pub const DEGENERATE_SYMMETRIC_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetricTarget {
    Int8,
    Int16,
}

impl SymmetricTarget {
    /// Largest magnitude; the most negative code is never produced.
    pub fn limit(self) -> i32 {
        match self {
            SymmetricTarget::Int8 => 127,
            SymmetricTarget::Int16 => 32767,
        }
    }
}

/// `max|v| / limit`, or the fallback for an all-zero tensor.
pub fn symmetric_scale(values: &[f64], target: SymmetricTarget) -> f64 {
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs == 0.0 {
        DEGENERATE_SYMMETRIC_SCALE
    } else {
        max_abs / target.limit() as f64
    }
}

fn quantize_with(values: &[f64], scale: f64, limit: i32) -> Vec<i32> {
    let lim = limit as f64;
    values
        .iter()
        .map(|v| (v / scale).round().clamp(-lim, lim) as i32)
        .collect()
}

/// Symmetric quantization to `[-limit, limit]`; returns the codes and scale.
pub fn quantize_symmetric(values: &[f64], target: SymmetricTarget) -> (Vec<i32>, f64) {
    let scale = symmetric_scale(values, target);
    (quantize_with(values, scale, target.limit()), scale)
}

fn symmetric_i8(m: &Matrix<f64>) -> (Matrix<i8>, f64) {
    let scale = symmetric_scale(m.data(), SymmetricTarget::Int8);
    (m.map(|v| (v / scale).round().clamp(-127.0, 127.0) as i8), scale)
}

fn symmetric_i16(v: &[f64]) -> (Vec<i16>, f64) {
    let (q, scale) = quantize_symmetric(v, SymmetricTarget::Int16);
    (q.into_iter().map(|x| x as i16).collect(), scale)
}

/// `round(v / scale)` clamped to `[-(2^31 - 1), 2^31 - 1]`.
pub fn quantize_bias(values: &[f64], scale: f64) -> Result<Vec<i32>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    Ok(quantize_with(values, scale, i32::MAX))
}

/// `b - zp * sum_j W[r, j]` per row, so that `W (q - zp) + b = W q + b'`.
pub fn fold_zero_point(w: &Matrix<i8>, zero_point: i8, bias: &[i32]) -> Result<Vec<i32>> {
    if bias.len() != w.rows() {
        return Err(Error::dims("folded bias", w.rows(), bias.len()));
    }
    w.iter_rows()
        .zip(bias)
        .enumerate()
        .map(|(row, (weights, &b))| {
            let sum: i64 = weights.iter().map(|&v| v as i64).sum();
            let folded = b as i64 - zero_point as i64 * sum;
            i32::try_from(folded).map_err(|_| Error::FoldOverflow { row })
        })
        .collect()
}

/// Real-valued scales of one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateScales {
    pub w: f64,
    pub r: f64,
    pub peephole: Option<f64>,
    pub layer_norm: Option<f64>,
    /// Scale of the int32 bias (`s_R s_h`, or `2^-10 s_L` with layer norm).
    pub bias: f64,
    /// Scale of the int16 gate pre-activation: `2^-12`, or the measured
    /// `max|g| / 32767` with layer norm.
    pub output: f64,
}

/// Float parameters needed outside the kernel: input quantization, output
/// dequantization, and a record of every scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub x: AsymmetricParams,
    pub h: AsymmetricParams,
    /// Hidden state before projection; only with projection.
    pub m: Option<AsymmetricParams>,
    pub cell: QFormat,
    pub gates: Gates<GateScales>,
    pub projection_weight: Option<f64>,
}

impl QuantParams {
    /// Parameters of `m`, which is `h` itself without projection.
    pub fn hidden(&self) -> AsymmetricParams {
        self.m.unwrap_or(self.h)
    }
}

/// A quantized model: float bookkeeping plus the integer-only payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedLstmModel {
    pub params: QuantParams,
    pub kernel: IntegerLstm,
}

impl AsRef<IntegerLstm> for QuantizedLstmModel {
    fn as_ref(&self) -> &IntegerLstm {
        &self.kernel
    }
}

impl QuantizedLstmModel {
    pub fn variant(&self) -> LstmVariant {
        self.kernel.variant
    }

    pub fn dims(&self) -> Dims {
        self.kernel.dims
    }

    pub fn zero_state(&self) -> IntLstmState {
        self.kernel.zero_state()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let v = self.variant();
        if self.params.m.is_some() != v.projection || self.params.projection_weight.is_some() != v.projection {
            return Err(Error::InvalidModel(
                "projection parameters do not match the variant".into(),
            ));
        }
        if self.params.gates.input.is_some() == v.cifg {
            return Err(Error::InvalidModel("input gate scales do not match the variant".into()));
        }
        if self.params.cell != self.kernel.cell_format {
            return Err(Error::InvalidModel(
                "cell format differs between parameters and kernel".into(),
            ));
        }
        Ok(())
    }

    pub fn quantize_input(&self, x: &[f64]) -> Result<Vec<i8>> {
        if x.len() != self.dims().input {
            return Err(Error::dims("input vector", self.dims().input, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x".into()));
        }
        Ok(x.iter().map(|&v| self.params.x.quantize(v)).collect())
    }

    pub fn dequantize_output(&self, h: &[i8]) -> Vec<f64> {
        h.iter().map(|&q| self.params.h.dequantize(q)).collect()
    }

    pub fn dequantize_cell(&self, c: &[i16]) -> Vec<f64> {
        c.iter().map(|&q| self.params.cell.to_real(q as i64)).collect()
    }

    pub fn quantize_state(&self, state: &FloatLstmState) -> Result<IntLstmState> {
        let dims = self.dims();
        if state.h.len() != dims.output {
            return Err(Error::dims("state h", dims.output, state.h.len()));
        }
        if state.c.len() != dims.cell {
            return Err(Error::dims("state c", dims.cell, state.c.len()));
        }
        Ok(IntLstmState {
            h: state.h.iter().map(|&v| self.params.h.quantize(v)).collect(),
            c: state.c.iter().map(|&v| self.params.cell.from_real(v) as i16).collect(),
        })
    }

    pub fn dequantize_state(&self, state: &IntLstmState) -> FloatLstmState {
        FloatLstmState {
            h: self.dequantize_output(&state.h),
            c: self.dequantize_cell(&state.c),
        }
    }
}

fn range_params(stats: &TensorStats) -> Result<AsymmetricParams> {
    let (lo, hi) = stats.range_finalize();
    asymmetric_params(lo, hi)
}

struct Context {
    x: AsymmetricParams,
    h: AsymmetricParams,
    cell: QFormat,
    layer_norm: bool,
}

fn quantize_gate(ctx: &Context, g: &FloatGate, gate_stats: Option<&TensorStats>) -> Result<(IntGate, GateScales)> {
    let (w, s_w) = symmetric_i8(&g.w);
    let (r, s_r) = symmetric_i8(&g.r);
    let peephole = g.peephole.as_deref().map(symmetric_i16);
    let s_c = ctx.cell.scale();
    let cell = g.w.rows();

    let (output, bias_scale, layer_norm_q, h_bias) = if ctx.layer_norm {
        let stats = gate_stats.ok_or_else(|| Error::MissingStats("gate accumulation".into()))?;
        let max_abs = stats.max_abs();
        let s_g = if max_abs == 0.0 {
            DEGENERATE_SYMMETRIC_SCALE
        } else {
            max_abs / 32767.0
        };
        let coefs = g
            .layer_norm
            .as_deref()
            .ok_or_else(|| Error::InvalidModel("layer norm coefficients missing".into()))?;
        let (l_q, s_l) = symmetric_i16(coefs);
        let bias_scale = NORMALIZED_SCALE * s_l;
        let ln = IntLayerNorm {
            coefficients: l_q,
            bias: quantize_bias(&g.bias, bias_scale)?,
            output_scale: quantize_multiplier(bias_scale / GATE_SCALE)?,
        };
        (s_g, bias_scale, Some((ln, s_l)), vec![0; cell])
    } else {
        let bias_scale = s_r * ctx.h.scale;
        (GATE_SCALE, bias_scale, None, quantize_bias(&g.bias, bias_scale)?)
    };

    let effective = GateEffectiveScales {
        x: quantize_multiplier(s_w * ctx.x.scale / output)?,
        h: quantize_multiplier(s_r * ctx.h.scale / output)?,
        c: match &peephole {
            Some((_, s_p)) => Some(quantize_multiplier(s_p * s_c / output)?),
            None => None,
        },
    };
    let scales = GateScales {
        w: s_w,
        r: s_r,
        peephole: peephole.as_ref().map(|(_, s)| *s),
        layer_norm: layer_norm_q.as_ref().map(|(_, s)| *s),
        bias: bias_scale,
        output,
    };
    let int_gate = IntGate {
        x_offset: fold_zero_point(&w, ctx.x.zero_point, &vec![0; cell])?,
        h_offset: fold_zero_point(&r, ctx.h.zero_point, &h_bias)?,
        w,
        r,
        peephole: peephole.map(|(p, _)| p),
        effective,
        layer_norm: layer_norm_q.map(|(ln, _)| ln),
    };
    Ok((int_gate, scales))
}

/// Applies the quantization recipe to `model` using calibration `stats`.
pub fn build_quantized_model(model: &FloatLstmModel, stats: &CalibrationStats) -> Result<QuantizedLstmModel> {
    model.validate()?;
    let v = model.variant;
    if stats.variant != v {
        return Err(Error::InvalidModel(format!(
            "statistics were collected for variant `{}` but the model is `{v}`",
            stats.variant
        )));
    }
    stats.check_complete(v)?;

    let x = range_params(&stats.x)?;
    let h = range_params(&stats.h)?;
    let (c_lo, c_hi) = stats.c.range_finalize();
    let cell = pot_extend(c_lo, c_hi)?;
    let m = match &stats.m {
        Some(s) if v.projection => Some(range_params(s)?),
        _ => None,
    };
    let hidden = m.unwrap_or(h);
    let ctx = Context {
        x,
        h,
        cell,
        layer_norm: v.layer_norm,
    };

    let mut int_gates: Vec<(Gate, IntGate, GateScales)> = Vec::new();
    for (gate, g) in model.gates.iter() {
        let gate_stats = stats.gates.as_ref().and_then(|s| s.get(gate));
        let (ig, sc) = quantize_gate(&ctx, g, gate_stats)?;
        int_gates.push((gate, ig, sc));
    }
    let mut take = |gate: Gate| {
        int_gates
            .iter()
            .position(|(g, _, _)| *g == gate)
            .map(|i| int_gates.remove(i))
            .map(|(_, ig, sc)| (ig, sc))
    };
    let input = take(Gate::Input);
    let (forget, cell_gate, output) = match (take(Gate::Forget), take(Gate::Cell), take(Gate::Output)) {
        (Some(f), Some(z), Some(o)) => (f, z, o),
        _ => return Err(Error::InvalidModel("model lacks a required gate".into())),
    };
    let (input_int, input_scales) = match input {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };

    let (projection, projection_weight) = match &model.projection {
        Some(p) => {
            let (w, s_wp) = symmetric_i8(&p.weights);
            let bias = quantize_bias(&p.bias, s_wp * hidden.scale)?;
            let proj = IntProjection {
                bias: fold_zero_point(&w, hidden.zero_point, &bias)?,
                weights: w,
                effective: quantize_multiplier(s_wp * hidden.scale / h.scale)?,
            };
            (Some(proj), Some(s_wp))
        }
        None => (None, None),
    };

    let kernel = IntegerLstm {
        variant: v,
        dims: model.dims,
        gates: Gates {
            input: input_int,
            forget: forget.0,
            cell: cell_gate.0,
            output: output.0,
        },
        cell_format: cell,
        hidden_scale: quantize_multiplier(pow2(-30) / hidden.scale)?,
        hidden_zero_point: hidden.zero_point,
        output_zero_point: h.zero_point,
        projection,
    };
    let params = QuantParams {
        x,
        h,
        m,
        cell,
        gates: Gates {
            input: input_scales,
            forget: forget.1,
            cell: cell_gate.1,
            output: output.1,
        },
        projection_weight,
    };
    let q = QuantizedLstmModel { params, kernel };
    q.validate()?;
    Ok(q)
}
