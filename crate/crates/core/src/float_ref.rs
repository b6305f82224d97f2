//! Double-precision LSTM cell covering every variant. This is the reference
//! the integer kernel is checked against and the engine calibration runs on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::variant::{Dims, Gate, Gates, LstmVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatGate {
    /// Input weights, `cell x input`.
    pub w: Matrix<f64>,
    /// Recurrent weights, `cell x output`.
    pub r: Matrix<f64>,
    pub peephole: Option<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Layer-norm coefficients.
    pub layer_norm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatProjection {
    /// `output x cell`
    pub weights: Matrix<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatLstmModel {
    pub variant: LstmVariant,
    pub dims: Dims,
    pub gates: Gates<FloatGate>,
    pub projection: Option<FloatProjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatLstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl FloatLstmState {
    pub fn zeros(dims: Dims) -> Self {
        FloatLstmState {
            h: vec![0.0; dims.output],
            c: vec![0.0; dims.cell],
        }
    }
}

/// Every intermediate tensor of one float step.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatStepTrace {
    /// `W x + R h + P ⊙ c` per gate, before normalization and bias.
    pub accumulations: Gates<Vec<f64>>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub cell_input: Vec<f64>,
    pub output_gate: Vec<f64>,
    /// Hidden state `o ⊙ tanh(c)`, before projection.
    pub hidden: Vec<f64>,
    pub state: FloatLstmState,
}

fn check_len(what: impl Into<String>, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dims(what, expected, v.len()));
    }
    Ok(())
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

fn check_shape(name: &str, m: &Matrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::dims(format!("{name} rows"), rows, m.rows()));
    }
    if m.cols() != cols {
        return Err(Error::dims(format!("{name} cols"), cols, m.cols()));
    }
    check_finite(name, m.data())
}

fn presence(name: &str, present: bool, expected: bool) -> Result<()> {
    match (present, expected) {
        (true, false) => Err(Error::InvalidModel(format!(
            "`{name}` present but the variant does not use it"
        ))),
        (false, true) => Err(Error::InvalidModel(format!("`{name}` missing"))),
        _ => Ok(()),
    }
}

impl FloatLstmModel {
    /// Checks shapes, finiteness and that tensor presence matches the variant.
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
        presence("W_i", self.gates.input.is_some(), !v.cifg)?;
        for (gate, g) in self.gates.iter() {
            let s = gate.suffix();
            check_shape(&format!("W_{s}"), &g.w, cell, input)?;
            check_shape(&format!("R_{s}"), &g.r, cell, output)?;
            check_len(format!("b_{s}"), &g.bias, cell)?;
            check_finite(&format!("b_{s}"), &g.bias)?;
            presence(&format!("P_{s}"), g.peephole.is_some(), v.has_peephole(gate))?;
            if let Some(p) = &g.peephole {
                check_len(format!("P_{s}"), p, cell)?;
                check_finite(&format!("P_{s}"), p)?;
            }
            presence(&format!("L_{s}"), g.layer_norm.is_some(), v.layer_norm)?;
            if let Some(l) = &g.layer_norm {
                check_len(format!("L_{s}"), l, cell)?;
                check_finite(&format!("L_{s}"), l)?;
            }
        }
        presence("W_proj", self.projection.is_some(), v.projection)?;
        if let Some(p) = &self.projection {
            check_shape("W_proj", &p.weights, output, cell)?;
            check_len("b_proj", &p.bias, output)?;
            check_finite("b_proj", &p.bias)?;
        }
        Ok(())
    }

    /// A model of the given shape with every tensor zero.
    pub fn zeros(variant: LstmVariant, dims: Dims) -> Result<Self> {
        let cell = dims.cell;
        let make = |gate: Gate| FloatGate {
            w: Matrix::filled(cell, dims.input, 0.0),
            r: Matrix::filled(cell, dims.output, 0.0),
            peephole: variant.has_peephole(gate).then(|| vec![0.0; cell]),
            bias: vec![0.0; cell],
            layer_norm: variant.layer_norm.then(|| vec![0.0; cell]),
        };
        let model = FloatLstmModel {
            variant,
            dims,
            gates: Gates {
                input: variant.has_gate(Gate::Input).then(|| make(Gate::Input)),
                forget: make(Gate::Forget),
                cell: make(Gate::Cell),
                output: make(Gate::Output),
            },
            projection: variant.projection.then(|| FloatProjection {
                weights: Matrix::filled(dims.output, cell, 0.0),
                bias: vec![0.0; dims.output],
            }),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        check_len("input vector", x, self.dims.input)
    }

    pub fn check_state(&self, state: &FloatLstmState) -> Result<()> {
        check_len("state h", &state.h, self.dims.output)?;
        check_len("state c", &state.c, self.dims.cell)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `((x - mean) / stddev) ⊙ l + b` with the population standard deviation.
/// A zero-variance input normalizes to all zeros, so the output is `b`.
pub fn float_layer_norm(x: &[f64], l: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::dims("layer norm input", 1, 0));
    }
    check_len("layer norm coefficients", l, x.len())?;
    check_len("layer norm bias", b, x.len())?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    Ok(x.iter()
        .zip(l.iter().zip(b))
        .map(|(&xi, (&li, &bi))| {
            let normed = if std > 0.0 { (xi - mean) / std } else { 0.0 };
            normed * li + bi
        })
        .collect())
}

fn accumulate(g: &FloatGate, x: &[f64], h: &[f64], c: &[f64]) -> Vec<f64> {
    let mut acc = g.w.matvec(x);
    for (a, rh) in acc.iter_mut().zip(g.r.matvec(h)) {
        *a += rh;
    }
    if let Some(p) = &g.peephole {
        for ((a, p), c) in acc.iter_mut().zip(p).zip(c) {
            *a += p * c;
        }
    }
    acc
}

fn pre_activation(g: &FloatGate, acc: &[f64]) -> Result<Vec<f64>> {
    match &g.layer_norm {
        Some(l) => float_layer_norm(acc, l, &g.bias),
        None => Ok(acc.iter().zip(&g.bias).map(|(a, b)| a + b).collect()),
    }
}

/// One step with every intermediate tensor exposed.
pub fn float_cell_trace(model: &FloatLstmModel, x: &[f64], state: &FloatLstmState) -> Result<FloatStepTrace> {
    model.check_input(x)?;
    model.check_state(state)?;
    let gates = &model.gates;
    let c_prev = &state.c;

    let acc_f = accumulate(&gates.forget, x, &state.h, c_prev);
    let forget_gate: Vec<f64> = pre_activation(&gates.forget, &acc_f)?
        .into_iter()
        .map(sigmoid)
        .collect();

    let (acc_i, input_gate) = match &gates.input {
        Some(g) => {
            let acc = accumulate(g, x, &state.h, c_prev);
            let act: Vec<f64> = pre_activation(g, &acc)?.into_iter().map(sigmoid).collect();
            (Some(acc), act)
        }
        None => (None, forget_gate.iter().map(|f| 1.0 - f).collect()),
    };

    let acc_z = accumulate(&gates.cell, x, &state.h, c_prev);
    let cell_input: Vec<f64> = pre_activation(&gates.cell, &acc_z)?
        .into_iter()
        .map(f64::tanh)
        .collect();

    let c: Vec<f64> = (0..model.dims.cell)
        .map(|k| input_gate[k] * cell_input[k] + forget_gate[k] * c_prev[k])
        .collect();

    // the output gate peeks at the updated cell
    let acc_o = accumulate(&gates.output, x, &state.h, &c);
    let output_gate: Vec<f64> = pre_activation(&gates.output, &acc_o)?
        .into_iter()
        .map(sigmoid)
        .collect();

    let hidden: Vec<f64> = output_gate.iter().zip(&c).map(|(o, c)| o * c.tanh()).collect();
    let h = match &model.projection {
        Some(p) => p
            .weights
            .matvec(&hidden)
            .into_iter()
            .zip(&p.bias)
            .map(|(v, b)| v + b)
            .collect(),
        None => hidden.clone(),
    };

    Ok(FloatStepTrace {
        accumulations: Gates {
            input: acc_i,
            forget: acc_f,
            cell: acc_z,
            output: acc_o,
        },
        input_gate,
        forget_gate,
        cell_input,
        output_gate,
        hidden,
        state: FloatLstmState { h, c },
    })
}

/// One LSTM step; returns the output `h` and the next state.
pub fn float_cell_step(
    model: &FloatLstmModel,
    x: &[f64],
    state: &FloatLstmState,
) -> Result<(Vec<f64>, FloatLstmState)> {
    let trace = float_cell_trace(model, x, state)?;
    Ok((trace.state.h.clone(), trace.state))
}

/// Runs a whole sequence and returns the state after every step.
pub fn float_sequence_run(
    model: &FloatLstmModel,
    inputs: &[Vec<f64>],
    initial: &FloatLstmState,
) -> Result<Vec<FloatLstmState>> {
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (_, next) = float_cell_step(model, x, &state)?;
        out.push(next.clone());
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn layer_norm_examples() {
        let out = float_layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(close(&out, &[1.0, -1.0], 1e-15));
        let out = float_layer_norm(&[5.0, 5.0], &[1.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(out, vec![2.0, 3.0]);
        let out = float_layer_norm(&[0.0, 2.0, 4.0], &[2.0; 3], &[1.0; 3]).unwrap();
        // mean 2, stddev sqrt(8/3)
        let d = 2.0 * 2.0 / (8.0f64 / 3.0).sqrt();
        assert!(close(&out, &[1.0 - d, 1.0, 1.0 + d], 1e-12));
        assert!(close(&out, &[-1.449, 1.0, 3.449], 1e-3));
    }

    #[test]
    fn layer_norm_length_mismatch() {
        assert!(float_layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0]).is_err());
        assert!(float_layer_norm(&[], &[], &[]).is_err());
    }

    #[test]
    fn zero_model_gives_zero_output() {
        for v in LstmVariant::all() {
            let dims = Dims::new(3, 4, if v.projection { 2 } else { 4 });
            let model = FloatLstmModel::zeros(v, dims).unwrap();
            let (h, st) = float_cell_step(&model, &[0.3, -1.0, 2.0], &FloatLstmState::zeros(dims)).unwrap();
            assert!(h.iter().all(|&x| x == 0.0), "{v}");
            assert!(st.c.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn memory_retention() {
        let dims = Dims::new(1, 1, 1);
        let mut model = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        model.gates.forget.bias = vec![20.0];
        model.gates.input.as_mut().unwrap().bias = vec![-20.0];
        model.gates.output.bias = vec![0.7];
        let state = FloatLstmState {
            h: vec![0.0],
            c: vec![1.0],
        };
        let (h, next) = float_cell_step(&model, &[0.5], &state).unwrap();
        assert!((next.c[0] - 1.0).abs() < 1e-8);
        assert!((h[0] - sigmoid(0.7) * 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn validation_catches_shape_and_presence_errors() {
        let dims = Dims::new(2, 3, 3);
        let mut m = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        m.gates.forget.bias.pop();
        assert!(m.validate().is_err());

        let mut m = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        m.gates.cell.peephole = Some(vec![0.0; 3]);
        assert!(m.validate().is_err());

        let mut m = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        m.gates.output.w = Matrix::filled(3, 2, f64::NAN);
        assert!(matches!(m.validate(), Err(Error::NonFinite(_))));

        assert!(FloatLstmModel::zeros(LstmVariant::PLAIN, Dims::new(2, 3, 2)).is_err());
        let proj = LstmVariant {
            projection: true,
            ..LstmVariant::PLAIN
        };
        assert!(FloatLstmModel::zeros(proj, Dims::new(2, 3, 2)).is_ok());
    }

    #[test]
    fn dimension_mismatch_on_step() {
        let dims = Dims::new(2, 3, 3);
        let m = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        assert!(float_cell_step(&m, &[1.0], &FloatLstmState::zeros(dims)).is_err());
        let bad = FloatLstmState {
            h: vec![0.0; 2],
            c: vec![0.0; 3],
        };
        assert!(float_cell_step(&m, &[1.0, 2.0], &bad).is_err());
    }

    #[test]
    fn sequence_run_edges() {
        let dims = Dims::new(2, 3, 3);
        let m = FloatLstmModel::zeros(LstmVariant::PLAIN, dims).unwrap();
        let init = FloatLstmState::zeros(dims);
        assert!(float_sequence_run(&m, &[], &init).unwrap().is_empty());
        let one = float_sequence_run(&m, &[vec![1.0, 2.0]], &init).unwrap();
        let (_, st) = float_cell_step(&m, &[1.0, 2.0], &init).unwrap();
        assert_eq!(one, vec![st]);
    }
}
