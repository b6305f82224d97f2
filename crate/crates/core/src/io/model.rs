use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_header, read_json_value, write_json, ExactF64, FORMAT_VERSION};
use crate::calibration::AsymmetricParams;
use crate::error::{Error, Result};
use crate::fixedpoint::{EffectiveScale, QFormat};
use crate::float_ref::{FloatGate, FloatLstmModel, FloatProjection};
use crate::kernel::{GateEffectiveScales, IntGate, IntLayerNorm, IntProjection, IntegerLstm};
use crate::quantizer::{GateScales, QuantParams, QuantizedLstmModel};
use crate::tensor::Matrix;
use crate::variant::{Dims, Gate, Gates, LstmVariant};

pub const FLOAT_KIND: &str = "float";
pub const QUANTIZED_KIND: &str = "quantized";

/// Either kind of model file.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ModelFile {
    Float(FloatLstmModel),
    Quantized(QuantizedLstmModel),
}

impl ModelFile {
    pub fn variant(&self) -> LstmVariant {
        match self {
            ModelFile::Float(m) => m.variant,
            ModelFile::Quantized(m) => m.variant(),
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            ModelFile::Float(m) => m.dims,
            ModelFile::Quantized(m) => m.dims(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Float(_) => FLOAT_KIND,
            ModelFile::Quantized(_) => QUANTIZED_KIND,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        model_from_json(read_json_value(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &model_to_json(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DType {
    F64,
    I8,
    I16,
    I32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTensor {
    dtype: DType,
    shape: Vec<usize>,
    data: serde_json::Value,
}

#[derive(Default)]
struct Tensors(BTreeMap<String, RawTensor>);

impl Tensors {
    fn put<T: Serialize>(
        &mut self,
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        data: &[T],
    ) -> Result<()> {
        let data = serde_json::to_value(data)?;
        self.0.insert(name.into(), RawTensor { dtype, shape, data });
        Ok(())
    }

    fn put_matrix<T: Serialize + Copy>(&mut self, name: impl Into<String>, dtype: DType, m: &Matrix<T>) -> Result<()> {
        self.put(name, dtype, vec![m.rows(), m.cols()], m.data())
    }

    fn put_vec<T: Serialize>(&mut self, name: impl Into<String>, dtype: DType, v: &[T]) -> Result<()> {
        self.put(name, dtype, vec![v.len()], v)
    }

    fn take<T: DeserializeOwned>(&mut self, name: &str, dtype: DType, shape: &[usize]) -> Result<Vec<T>> {
        let t = self
            .0
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
        if t.dtype != dtype {
            return Err(Error::Format(format!(
                "tensor `{name}` has dtype {:?}, expected {dtype:?}",
                t.dtype
            )));
        }
        if t.shape != shape {
            return Err(Error::Format(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        let data: Vec<T> =
            serde_json::from_value(t.data).map_err(|e| Error::Format(format!("tensor `{name}` data: {e}")))?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Format(format!(
                "tensor `{name}` has {} elements, shape {shape:?} needs {expected}",
                data.len()
            )));
        }
        Ok(data)
    }

    fn take_matrix<T: DeserializeOwned + Copy>(
        &mut self,
        name: &str,
        dtype: DType,
        rows: usize,
        cols: usize,
    ) -> Result<Matrix<T>> {
        Matrix::from_vec(rows, cols, self.take(name, dtype, &[rows, cols])?)
    }

    fn take_vec<T: DeserializeOwned>(&mut self, name: &str, dtype: DType, len: usize) -> Result<Vec<T>> {
        self.take(name, dtype, &[len])
    }

    fn take_if<T: DeserializeOwned>(
        &mut self,
        on: bool,
        name: &str,
        dtype: DType,
        len: usize,
    ) -> Result<Option<Vec<T>>> {
        if on {
            Ok(Some(self.take_vec(name, dtype, len)?))
        } else {
            Ok(None)
        }
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(name) => Err(Error::Format(format!(
                "tensor `{name}` is not used by this model variant"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAsymmetric {
    scale: ExactF64,
    zero_point: i8,
}

impl RawAsymmetric {
    fn new(p: &AsymmetricParams) -> Result<Self> {
        Ok(RawAsymmetric {
            scale: ExactF64::new(p.scale)?,
            zero_point: p.zero_point,
        })
    }

    fn params(&self) -> Result<AsymmetricParams> {
        let scale = self.scale.value()?;
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::InvalidScale(scale));
        }
        Ok(AsymmetricParams {
            scale,
            zero_point: self.zero_point,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGateQuant {
    w: ExactF64,
    r: ExactF64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peephole: Option<ExactF64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_norm: Option<ExactF64>,
    bias: ExactF64,
    output: ExactF64,
    effective_x: EffectiveScale,
    effective_h: EffectiveScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    effective_c: Option<EffectiveScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    effective_layer_norm: Option<EffectiveScale>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProjectionQuant {
    weight: ExactF64,
    effective: EffectiveScale,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuant {
    x: RawAsymmetric,
    h: RawAsymmetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<RawAsymmetric>,
    cell_m: u32,
    effective_hidden: EffectiveScale,
    gates: BTreeMap<String, RawGateQuant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<RawProjectionQuant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    format_version: u32,
    kind: String,
    variant: LstmVariant,
    dims: Dims,
    tensors: BTreeMap<String, RawTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quant: Option<RawQuant>,
}

fn exact_opt(v: Option<f64>) -> Result<Option<ExactF64>> {
    v.map(ExactF64::new).transpose()
}

fn value_opt(v: &Option<ExactF64>) -> Result<Option<f64>> {
    v.as_ref().map(ExactF64::value).transpose()
}

pub fn model_to_json(model: &ModelFile) -> Result<serde_json::Value> {
    let raw = match model {
        ModelFile::Float(m) => float_to_raw(m)?,
        ModelFile::Quantized(m) => quantized_to_raw(m)?,
    };
    Ok(serde_json::to_value(raw)?)
}

pub fn model_from_json(value: serde_json::Value) -> Result<ModelFile> {
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or_default()
        .to_string();
    match kind.as_str() {
        FLOAT_KIND => check_header(&value, FLOAT_KIND)?,
        QUANTIZED_KIND => check_header(&value, QUANTIZED_KIND)?,
        other => return Err(Error::Format(format!("not a model file (kind `{other}`)"))),
    }
    let raw: RawModel = serde_json::from_value(value)?;
    if kind == FLOAT_KIND {
        Ok(ModelFile::Float(float_from_raw(raw)?))
    } else {
        Ok(ModelFile::Quantized(quantized_from_raw(raw)?))
    }
}

fn float_to_raw(m: &FloatLstmModel) -> Result<RawModel> {
    m.validate()?;
    let mut t = Tensors::default();
    for (gate, g) in m.gates.iter() {
        let s = gate.suffix();
        t.put_matrix(format!("W_{s}"), DType::F64, &g.w)?;
        t.put_matrix(format!("R_{s}"), DType::F64, &g.r)?;
        t.put_vec(format!("b_{s}"), DType::F64, &g.bias)?;
        if let Some(p) = &g.peephole {
            t.put_vec(format!("P_{s}"), DType::F64, p)?;
        }
        if let Some(l) = &g.layer_norm {
            t.put_vec(format!("L_{s}"), DType::F64, l)?;
        }
    }
    if let Some(p) = &m.projection {
        t.put_matrix("W_proj", DType::F64, &p.weights)?;
        t.put_vec("b_proj", DType::F64, &p.bias)?;
    }
    Ok(RawModel {
        format_version: FORMAT_VERSION,
        kind: FLOAT_KIND.into(),
        variant: m.variant,
        dims: m.dims,
        tensors: t.0,
        quant: None,
    })
}

fn gates_from<T>(variant: LstmVariant, mut f: impl FnMut(Gate) -> Result<T>) -> Result<Gates<T>> {
    Ok(Gates {
        input: if variant.has_gate(Gate::Input) {
            Some(f(Gate::Input)?)
        } else {
            None
        },
        forget: f(Gate::Forget)?,
        cell: f(Gate::Cell)?,
        output: f(Gate::Output)?,
    })
}

fn float_from_raw(raw: RawModel) -> Result<FloatLstmModel> {
    if raw.quant.is_some() {
        return Err(Error::Format("float model carries quantization parameters".into()));
    }
    let (v, d) = (raw.variant, raw.dims);
    let mut t = Tensors(raw.tensors);
    let gates = gates_from(v, |gate| {
        let s = gate.suffix();
        Ok(FloatGate {
            w: t.take_matrix(&format!("W_{s}"), DType::F64, d.cell, d.input)?,
            r: t.take_matrix(&format!("R_{s}"), DType::F64, d.cell, d.output)?,
            peephole: t.take_if(v.has_peephole(gate), &format!("P_{s}"), DType::F64, d.cell)?,
            bias: t.take_vec(&format!("b_{s}"), DType::F64, d.cell)?,
            layer_norm: t.take_if(v.layer_norm, &format!("L_{s}"), DType::F64, d.cell)?,
        })
    })?;
    let projection = if v.projection {
        Some(FloatProjection {
            weights: t.take_matrix("W_proj", DType::F64, d.output, d.cell)?,
            bias: t.take_vec("b_proj", DType::F64, d.output)?,
        })
    } else {
        None
    };
    t.finish()?;
    let model = FloatLstmModel {
        variant: v,
        dims: d,
        gates,
        projection,
    };
    model.validate()?;
    Ok(model)
}

fn quantized_to_raw(m: &QuantizedLstmModel) -> Result<RawModel> {
    m.validate()?;
    let k = &m.kernel;
    let p = &m.params;
    let mut t = Tensors::default();
    let mut gates = BTreeMap::new();
    for (gate, g) in k.gates.iter() {
        let s = gate.suffix();
        let sc = p
            .gates
            .get(gate)
            .ok_or_else(|| Error::InvalidModel(format!("scales for gate {s} missing")))?;
        t.put_matrix(format!("W_{s}"), DType::I8, &g.w)?;
        t.put_matrix(format!("R_{s}"), DType::I8, &g.r)?;
        t.put_vec(format!("bx_{s}"), DType::I32, &g.x_offset)?;
        t.put_vec(format!("b_{s}"), DType::I32, &g.h_offset)?;
        if let Some(pp) = &g.peephole {
            t.put_vec(format!("P_{s}"), DType::I16, pp)?;
        }
        if let Some(ln) = &g.layer_norm {
            t.put_vec(format!("L_{s}"), DType::I16, &ln.coefficients)?;
            t.put_vec(format!("Lb_{s}"), DType::I32, &ln.bias)?;
        }
        gates.insert(
            s.to_string(),
            RawGateQuant {
                w: ExactF64::new(sc.w)?,
                r: ExactF64::new(sc.r)?,
                peephole: exact_opt(sc.peephole)?,
                layer_norm: exact_opt(sc.layer_norm)?,
                bias: ExactF64::new(sc.bias)?,
                output: ExactF64::new(sc.output)?,
                effective_x: g.effective.x,
                effective_h: g.effective.h,
                effective_c: g.effective.c,
                effective_layer_norm: g.layer_norm.as_ref().map(|ln| ln.output_scale),
            },
        );
    }
    let projection = match (&k.projection, p.projection_weight) {
        (Some(proj), Some(w)) => {
            t.put_matrix("W_proj", DType::I8, &proj.weights)?;
            t.put_vec("b_proj", DType::I32, &proj.bias)?;
            Some(RawProjectionQuant {
                weight: ExactF64::new(w)?,
                effective: proj.effective,
            })
        }
        _ => None,
    };
    Ok(RawModel {
        format_version: FORMAT_VERSION,
        kind: QUANTIZED_KIND.into(),
        variant: k.variant,
        dims: k.dims,
        tensors: t.0,
        quant: Some(RawQuant {
            x: RawAsymmetric::new(&p.x)?,
            h: RawAsymmetric::new(&p.h)?,
            m: p.m.as_ref().map(RawAsymmetric::new).transpose()?,
            cell_m: p.cell.integer_bits(),
            effective_hidden: k.hidden_scale,
            gates,
            projection,
        }),
    })
}

fn quantized_from_raw(raw: RawModel) -> Result<QuantizedLstmModel> {
    let (v, d) = (raw.variant, raw.dims);
    let mut q = raw
        .quant
        .ok_or_else(|| Error::Format("quantized model lacks the `quant` section".into()))?;
    let mut t = Tensors(raw.tensors);
    let mut int_gates = Vec::new();
    let mut scales = Vec::new();
    for gate in Gate::ALL.into_iter().filter(|&g| v.has_gate(g)) {
        let s = gate.suffix();
        let rq = q
            .gates
            .remove(s)
            .ok_or_else(|| Error::Format(format!("quantization parameters for gate `{s}` missing")))?;
        let layer_norm = if v.layer_norm {
            Some(IntLayerNorm {
                coefficients: t.take_vec(&format!("L_{s}"), DType::I16, d.cell)?,
                bias: t.take_vec(&format!("Lb_{s}"), DType::I32, d.cell)?,
                output_scale: rq
                    .effective_layer_norm
                    .ok_or_else(|| Error::Format(format!("gate `{s}` lacks effective_layer_norm")))?,
            })
        } else {
            None
        };
        int_gates.push(IntGate {
            w: t.take_matrix(&format!("W_{s}"), DType::I8, d.cell, d.input)?,
            r: t.take_matrix(&format!("R_{s}"), DType::I8, d.cell, d.output)?,
            peephole: t.take_if(v.has_peephole(gate), &format!("P_{s}"), DType::I16, d.cell)?,
            x_offset: t.take_vec(&format!("bx_{s}"), DType::I32, d.cell)?,
            h_offset: t.take_vec(&format!("b_{s}"), DType::I32, d.cell)?,
            effective: GateEffectiveScales {
                x: rq.effective_x,
                h: rq.effective_h,
                c: rq.effective_c,
            },
            layer_norm,
        });
        scales.push(GateScales {
            w: rq.w.value()?,
            r: rq.r.value()?,
            peephole: value_opt(&rq.peephole)?,
            layer_norm: value_opt(&rq.layer_norm)?,
            bias: rq.bias.value()?,
            output: rq.output.value()?,
        });
    }
    if let Some(extra) = q.gates.keys().next() {
        return Err(Error::Format(format!(
            "quantization parameters for unused gate `{extra}`"
        )));
    }
    let mut int_gates = int_gates.into_iter();
    let mut scales = scales.into_iter();
    let int_gates = gates_from(v, |_| Ok(int_gates.next().expect("one entry per present gate")))?;
    let scale_gates = gates_from(v, |_| Ok(scales.next().expect("one entry per present gate")))?;

    let (projection, projection_weight) = match (v.projection, q.projection) {
        (true, Some(rp)) => (
            Some(IntProjection {
                weights: t.take_matrix("W_proj", DType::I8, d.output, d.cell)?,
                bias: t.take_vec("b_proj", DType::I32, d.output)?,
                effective: rp.effective,
            }),
            Some(rp.weight.value()?),
        ),
        (false, None) => (None, None),
        _ => return Err(Error::Format("projection parameters do not match the variant".into())),
    };
    t.finish()?;

    let x = q.x.params()?;
    let h = q.h.params()?;
    let m = q.m.as_ref().map(RawAsymmetric::params).transpose()?;
    let cell = QFormat::q16(q.cell_m)?;
    let hidden = m.unwrap_or(h);
    let model = QuantizedLstmModel {
        params: QuantParams {
            x,
            h,
            m,
            cell,
            gates: scale_gates,
            projection_weight,
        },
        kernel: IntegerLstm {
            variant: v,
            dims: d,
            gates: int_gates,
            cell_format: cell,
            hidden_scale: q.effective_hidden,
            hidden_zero_point: hidden.zero_point,
            output_zero_point: h.zero_point,
            projection,
        },
    };
    model.validate()?;
    Ok(model)
}
