//! The integer-only LSTM cell.
//!
//! Everything reachable from [`integer_cell_step`] works on `i8`/`i16`/`i32`
//! values and [`EffectiveScale`] multipliers; the float parameters used to
//! quantize inputs and read outputs live outside this module.

mod ops;

use serde::{Deserialize, Serialize};

use crate::activations::{sigmoid_raw, tanh_raw, MAX_INPUT_INTEGER_BITS};
use crate::error::{Error, Result};
use crate::fixedpoint::{EffectiveScale, QFormat};
use crate::tensor::Matrix;
use crate::variant::{Dims, Gates, LstmVariant};

pub use ops::{
    cell_update, cifg_input_gate, elementwise_mul_i16, gate_pre_activation, hidden_update, layer_norm_integer,
    matvec_i8, projection_step, GateAccumulators, GateEffectiveScales, SAFE_ACCUMULATION_DEPTH,
};

/// Integer bits of the format every gate pre-activation is brought to.
pub const GATE_INTEGER_BITS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntLayerNorm {
    pub coefficients: Vec<i16>,
    pub bias: Vec<i32>,
    /// Takes `coefficients * normalized + bias` to `Q3.12`.
    pub output_scale: EffectiveScale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntGate {
    pub w: Matrix<i8>,
    pub r: Matrix<i8>,
    pub peephole: Option<Vec<i16>>,
    /// Added to `W x`: the folded input zero point.
    pub x_offset: Vec<i32>,
    /// Added to `R h`: the bias (without layer norm) and the folded state
    /// zero point.
    pub h_offset: Vec<i32>,
    pub effective: GateEffectiveScales,
    pub layer_norm: Option<IntLayerNorm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntProjection {
    pub weights: Matrix<i8>,
    /// Bias with the hidden-state zero point folded in.
    pub bias: Vec<i32>,
    pub effective: EffectiveScale,
}

/// The integer payload of a quantized model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerLstm {
    pub variant: LstmVariant,
    pub dims: Dims,
    pub gates: Gates<IntGate>,
    pub cell_format: QFormat,
    /// Takes the `Q0.30` product `o ⊙ tanh(c)` to the hidden-state scale.
    pub hidden_scale: EffectiveScale,
    pub hidden_zero_point: i8,
    pub output_zero_point: i8,
    pub projection: Option<IntProjection>,
}

impl AsRef<IntegerLstm> for IntegerLstm {
    fn as_ref(&self) -> &IntegerLstm {
        self
    }
}

/// Recurrent state: int8 output `h` and int16 cell `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntLstmState {
    pub h: Vec<i8>,
    pub c: Vec<i16>,
}

fn check_len(what: impl Into<String>, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::dims(what, expected, len));
    }
    Ok(())
}

fn check_scale(name: &str, s: EffectiveScale) -> Result<()> {
    if s.mantissa < 0 || !s.is_normalized() {
        return Err(Error::InvalidModel(format!(
            "effective scale `{name}` is not normalized"
        )));
    }
    Ok(())
}

fn check_symmetric_i8(name: &str, v: &[i8]) -> Result<()> {
    if v.contains(&i8::MIN) {
        return Err(Error::InvalidModel(format!(
            "`{name}` contains -128; symmetric int8 is [-127, 127]"
        )));
    }
    Ok(())
}

fn check_symmetric_i16(name: &str, v: &[i16]) -> Result<()> {
    if v.contains(&i16::MIN) {
        return Err(Error::InvalidModel(format!(
            "`{name}` contains -32768; symmetric int16 is [-32767, 32767]"
        )));
    }
    Ok(())
}

fn presence(name: &str, present: bool, expected: bool) -> Result<()> {
    if present != expected {
        let what = if present {
            "present but unused by the variant"
        } else {
            "missing"
        };
        return Err(Error::InvalidModel(format!("`{name}` {what}")));
    }
    Ok(())
}

impl IntegerLstm {
    /// The zero state: `h` at its zero point and `c = 0`.
    pub fn zero_state(&self) -> IntLstmState {
        IntLstmState {
            h: vec![self.output_zero_point; self.dims.output],
            c: vec![0; self.dims.cell],
        }
    }

    /// Checks shapes, tensor presence and parameter ranges, for models read
    /// from disk.
    pub fn validate(&self) -> Result<()> {
        let Dims { input, cell, output } = self.dims;
        if input == 0 || cell == 0 || output == 0 {
            return Err(Error::InvalidModel("dimensions must be positive".into()));
        }
        let v = self.variant;
        if !v.projection && output != cell {
            return Err(Error::InvalidModel(format!(
                "output dim {output} must equal cell dim {cell} without projection"
            )));
        }
        let fmt = self.cell_format;
        if fmt.width() != 16 || fmt.integer_bits() > MAX_INPUT_INTEGER_BITS {
            return Err(Error::UnsupportedFormat {
                m: fmt.integer_bits(),
                n: fmt.fractional_bits(),
                width: fmt.width(),
                context: "cell state (expected Q0.15 ..= Q6.9)",
            });
        }
        if !v.projection && self.hidden_zero_point != self.output_zero_point {
            return Err(Error::InvalidModel(
                "hidden and output zero points differ without projection".into(),
            ));
        }
        check_scale("hidden", self.hidden_scale)?;
        presence("W_i", self.gates.input.is_some(), !v.cifg)?;
        for (gate, g) in self.gates.iter() {
            let s = gate.suffix();
            check_len(format!("W_{s} rows"), g.w.rows(), cell)?;
            check_len(format!("W_{s} cols"), g.w.cols(), input)?;
            check_len(format!("R_{s} rows"), g.r.rows(), cell)?;
            check_len(format!("R_{s} cols"), g.r.cols(), output)?;
            check_symmetric_i8(&format!("W_{s}"), g.w.data())?;
            check_symmetric_i8(&format!("R_{s}"), g.r.data())?;
            check_len(format!("x offset {s}"), g.x_offset.len(), cell)?;
            check_len(format!("h offset {s}"), g.h_offset.len(), cell)?;
            check_scale(&format!("{s} x"), g.effective.x)?;
            check_scale(&format!("{s} h"), g.effective.h)?;
            presence(&format!("P_{s}"), g.peephole.is_some(), v.has_peephole(gate))?;
            presence(
                &format!("{s} peephole scale"),
                g.effective.c.is_some(),
                v.has_peephole(gate),
            )?;
            if let Some(p) = &g.peephole {
                check_len(format!("P_{s}"), p.len(), cell)?;
                check_symmetric_i16(&format!("P_{s}"), p)?;
            }
            if let Some(c) = g.effective.c {
                check_scale(&format!("{s} c"), c)?;
            }
            presence(&format!("L_{s}"), g.layer_norm.is_some(), v.layer_norm)?;
            if let Some(ln) = &g.layer_norm {
                check_len(format!("L_{s}"), ln.coefficients.len(), cell)?;
                check_symmetric_i16(&format!("L_{s}"), &ln.coefficients)?;
                check_len(format!("LN bias {s}"), ln.bias.len(), cell)?;
                check_scale(&format!("{s} layer norm"), ln.output_scale)?;
            }
        }
        presence("W_proj", self.projection.is_some(), v.projection)?;
        if let Some(p) = &self.projection {
            check_len("W_proj rows", p.weights.rows(), output)?;
            check_len("W_proj cols", p.weights.cols(), cell)?;
            check_symmetric_i8("W_proj", p.weights.data())?;
            check_len("b_proj", p.bias.len(), output)?;
            check_scale("projection", p.effective)?;
        }
        Ok(())
    }
}

fn accumulate(g: &IntGate, x: &[i8], h: &[i8], c: &[i16]) -> Result<GateAccumulators> {
    Ok(GateAccumulators {
        acc_x: matvec_i8(&g.w, x, &g.x_offset)?,
        acc_h: matvec_i8(&g.r, h, &g.h_offset)?,
        acc_c: match &g.peephole {
            Some(p) => Some(elementwise_mul_i16(p, c)?),
            None => None,
        },
    })
}

/// Gate pre-activation in `Q3.12`, through layer norm when present.
fn gate_input(g: &IntGate, x: &[i8], h: &[i8], c: &[i16]) -> Result<Vec<i16>> {
    let pre = gate_pre_activation(&accumulate(g, x, h, c)?, &g.effective)?;
    match &g.layer_norm {
        Some(ln) => layer_norm_integer(&pre, &ln.coefficients, &ln.bias, ln.output_scale),
        None => Ok(pre),
    }
}

fn sigmoid_q3_12(v: &[i16]) -> Vec<i16> {
    v.iter().map(|&q| sigmoid_raw(q, GATE_INTEGER_BITS)).collect()
}

/// Every intermediate of one step, for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntStepTrace {
    /// Gate inputs in `Q3.12`, after layer norm when present.
    pub pre_activations: Gates<Vec<i16>>,
    pub input_gate: Vec<i16>,
    pub forget_gate: Vec<i16>,
    pub cell_input: Vec<i16>,
    pub output_gate: Vec<i16>,
    /// `o ⊙ tanh(c)` before projection, as int8.
    pub hidden: Vec<i8>,
    pub state: IntLstmState,
}

/// Like [`integer_cell_step`], exposing intermediates.
pub fn integer_cell_trace<M: AsRef<IntegerLstm>>(model: &M, x: &[i8], state: &IntLstmState) -> Result<IntStepTrace> {
    let model = model.as_ref();
    let dims = model.dims;
    check_len("input vector", x.len(), dims.input)?;
    check_len("state h", state.h.len(), dims.output)?;
    check_len("state c", state.c.len(), dims.cell)?;
    let gates = &model.gates;
    let (h, c_prev) = (&state.h, &state.c);

    let pre_f = gate_input(&gates.forget, x, h, c_prev)?;
    let f = sigmoid_q3_12(&pre_f);
    let pre_i = match &gates.input {
        Some(g) => Some(gate_input(g, x, h, c_prev)?),
        None => None,
    };
    let i = match &pre_i {
        Some(p) => sigmoid_q3_12(p),
        None => cifg_input_gate(&f),
    };
    let pre_z = gate_input(&gates.cell, x, h, c_prev)?;
    let z: Vec<i16> = pre_z.iter().map(|&q| tanh_raw(q, GATE_INTEGER_BITS)).collect();
    let m_bits = model.cell_format.integer_bits();
    let c = cell_update(&i, &z, &f, c_prev, m_bits)?;
    // the output gate peeks at the updated cell
    let pre_o = gate_input(&gates.output, x, h, &c)?;
    let o = sigmoid_q3_12(&pre_o);
    let hidden = hidden_update(&o, &c, m_bits, model.hidden_scale, model.hidden_zero_point)?;
    let h_next = match &model.projection {
        Some(p) => projection_step(&p.weights, &hidden, &p.bias, p.effective, model.output_zero_point)?,
        None => hidden.clone(),
    };
    Ok(IntStepTrace {
        pre_activations: Gates {
            input: pre_i,
            forget: pre_f,
            cell: pre_z,
            output: pre_o,
        },
        input_gate: i,
        forget_gate: f,
        cell_input: z,
        output_gate: o,
        hidden,
        state: IntLstmState { h: h_next, c },
    })
}

/// One LSTM step in integer arithmetic. Returns the int8 output and the next
/// state.
pub fn integer_cell_step<M: AsRef<IntegerLstm>>(
    model: &M,
    x: &[i8],
    state: &IntLstmState,
) -> Result<(Vec<i8>, IntLstmState)> {
    let trace = integer_cell_trace(model, x, state)?;
    Ok((trace.state.h.clone(), trace.state))
}

/// Runs a sequence from `initial`, returning the state after every step.
pub fn integer_sequence_run<M: AsRef<IntegerLstm>>(
    model: &M,
    inputs: &[Vec<i8>],
    initial: &IntLstmState,
) -> Result<Vec<IntLstmState>> {
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (_, next) = integer_cell_step(model, x, &state)?;
        out.push(next.clone());
        state = next;
    }
    Ok(out)
}
