use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ModelFile, SequenceRecord, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::float_ref::{float_cell_step, FloatLstmModel, FloatLstmState};
use crate::generate::Sequence;
use crate::kernel::integer_cell_step;
use crate::quantizer::QuantizedLstmModel;
use crate::variant::{Dims, LstmVariant};

pub const RUN_KIND: &str = "run";
pub const COMPARE_KIND: &str = "compare";
pub const BENCH_KIND: &str = "bench";

/// Error thresholds, in output quantization steps.
pub const WITHIN_STEPS: [u32; 3] = [1, 3, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSequence {
    pub h: Sequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Sequence>,
}

/// Per-timestep outputs of one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub format_version: u32,
    pub kind: String,
    pub engine: String,
    pub sequences: Vec<RunSequence>,
}

fn check_width(dims: Dims, seqs: &[SequenceRecord]) -> Result<()> {
    for seq in seqs {
        for x in &seq.inputs {
            if x.len() != dims.input {
                return Err(Error::dims("input vector", dims.input, x.len()));
            }
        }
    }
    Ok(())
}

fn float_run(model: &FloatLstmModel, inputs: &[Vec<f64>], dump_state: bool) -> Result<RunSequence> {
    let mut state = FloatLstmState::zeros(model.dims);
    let (mut h, mut c) = (Vec::new(), Vec::new());
    for x in inputs {
        let (out, next) = float_cell_step(model, x, &state)?;
        h.push(out);
        if dump_state {
            c.push(next.c.clone());
        }
        state = next;
    }
    Ok(RunSequence {
        h,
        c: dump_state.then_some(c),
    })
}

fn integer_run(model: &QuantizedLstmModel, inputs: &[Vec<f64>], dump_state: bool) -> Result<RunSequence> {
    let mut state = model.zero_state();
    let (mut h, mut c) = (Vec::new(), Vec::new());
    for x in inputs {
        let (out, next) = integer_cell_step(model, &model.quantize_input(x)?, &state)?;
        h.push(model.dequantize_output(&out));
        if dump_state {
            c.push(model.dequantize_cell(&next.c));
        }
        state = next;
    }
    Ok(RunSequence {
        h,
        c: dump_state.then_some(c),
    })
}

impl RunOutput {
    /// Runs every sequence from the zero state with the engine matching the
    /// model kind.
    pub fn run(model: &ModelFile, seqs: &[SequenceRecord], dump_state: bool) -> Result<Self> {
        check_width(model.dims(), seqs)?;
        let sequences = seqs
            .iter()
            .map(|s| match model {
                ModelFile::Float(m) => float_run(m, &s.inputs, dump_state),
                ModelFile::Quantized(m) => integer_run(m, &s.inputs, dump_state),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunOutput {
            format_version: FORMAT_VERSION,
            kind: RUN_KIND.into(),
            engine: match model {
                ModelFile::Float(_) => "float",
                ModelFile::Quantized(_) => "integer",
            }
            .into(),
            sequences,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinK {
    pub k: u32,
    pub count: usize,
    pub fraction: f64,
}

/// Absolute error of dequantized integer outputs against the float outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub elements: usize,
    pub max_abs_error: f64,
    /// Elements with `|error| <= k * s_h`.
    pub within: Vec<WithinK>,
}

impl ErrorStats {
    fn empty() -> Self {
        ErrorStats {
            elements: 0,
            max_abs_error: 0.0,
            within: WITHIN_STEPS
                .iter()
                .map(|&k| WithinK {
                    k,
                    count: 0,
                    fraction: 1.0,
                })
                .collect(),
        }
    }

    fn add(&mut self, err: f64, step: f64) {
        self.elements += 1;
        self.max_abs_error = self.max_abs_error.max(err);
        for w in &mut self.within {
            if err <= w.k as f64 * step {
                w.count += 1;
            }
        }
    }

    /// Pools two summaries.
    pub fn merge(&mut self, other: &ErrorStats) {
        self.elements += other.elements;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        for (a, b) in self.within.iter_mut().zip(&other.within) {
            a.count += b.count;
        }
        self.finish();
    }

    fn finish(&mut self) {
        for w in &mut self.within {
            w.fraction = if self.elements == 0 {
                1.0
            } else {
                w.count as f64 / self.elements as f64
            };
        }
    }

    /// Fraction within `k` steps, if `k` is one of [`WITHIN_STEPS`].
    pub fn fraction_within(&self, k: u32) -> Option<f64> {
        self.within.iter().find(|w| w.k == k).map(|w| w.fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceComparison {
    pub steps: usize,
    pub summary: ErrorStats,
    /// One entry per timestep.
    pub trajectory: Vec<ErrorStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub float_ns_per_step: f64,
    pub integer_ns_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub format_version: u32,
    pub kind: String,
    pub variant: LstmVariant,
    pub dims: Dims,
    /// The output quantization step `s_h` the thresholds are measured in.
    pub output_scale: f64,
    pub overall: ErrorStats,
    pub sequences: Vec<SequenceComparison>,
    pub runtime: Runtime,
}

fn ns_per_step(total: Duration, steps: usize) -> f64 {
    if steps == 0 {
        0.0
    } else {
        total.as_nanos() as f64 / steps as f64
    }
}

/// Runs both engines from the zero state over every sequence and measures
/// the output error in units of the quantized model's `s_h`.
pub fn compare_models(
    float: &FloatLstmModel,
    quant: &QuantizedLstmModel,
    seqs: &[SequenceRecord],
) -> Result<CompareReport> {
    if float.variant != quant.variant() || float.dims != quant.dims() {
        return Err(Error::InvalidModel(format!(
            "float model ({} {:?}) and quantized model ({} {:?}) differ",
            float.variant,
            float.dims,
            quant.variant(),
            quant.dims()
        )));
    }
    check_width(float.dims, seqs)?;
    let step = quant.params.h.scale;
    let (mut t_float, mut t_int) = (Duration::ZERO, Duration::ZERO);
    let mut total_steps = 0;
    let mut overall = ErrorStats::empty();
    let mut sequences = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let mut fs = FloatLstmState::zeros(float.dims);
        let mut is = quant.zero_state();
        let mut summary = ErrorStats::empty();
        let mut trajectory = Vec::with_capacity(seq.inputs.len());
        for x in &seq.inputs {
            let t0 = Instant::now();
            let (fh, fnext) = float_cell_step(float, x, &fs)?;
            t_float += t0.elapsed();
            let xq = quant.quantize_input(x)?;
            let t1 = Instant::now();
            let (ih, inext) = integer_cell_step(quant, &xq, &is)?;
            t_int += t1.elapsed();
            let mut point = ErrorStats::empty();
            for (a, b) in fh.iter().zip(quant.dequantize_output(&ih)) {
                point.add((a - b).abs(), step);
            }
            point.finish();
            summary.merge(&point);
            trajectory.push(point);
            fs = fnext;
            is = inext;
        }
        total_steps += seq.inputs.len();
        overall.merge(&summary);
        sequences.push(SequenceComparison {
            steps: seq.inputs.len(),
            summary,
            trajectory,
        });
    }
    overall.finish();
    Ok(CompareReport {
        format_version: FORMAT_VERSION,
        kind: COMPARE_KIND.into(),
        variant: float.variant,
        dims: float.dims,
        output_scale: step,
        overall,
        sequences,
        runtime: Runtime {
            float_ns_per_step: ns_per_step(t_float, total_steps),
            integer_ns_per_step: ns_per_step(t_int, total_steps),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEngine {
    pub engine: String,
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub kind: String,
    pub variant: LstmVariant,
    pub dims: Dims,
    pub engines: Vec<BenchEngine>,
}

impl BenchReport {
    pub fn new(variant: LstmVariant, dims: Dims, engines: Vec<BenchEngine>) -> Self {
        BenchReport {
            format_version: FORMAT_VERSION,
            kind: BENCH_KIND.into(),
            variant,
            dims,
            engines,
        }
    }
}

impl BenchEngine {
    pub fn new(engine: &str, steps: usize, elapsed: Duration) -> Self {
        let seconds = elapsed.as_secs_f64();
        BenchEngine {
            engine: engine.into(),
            steps,
            seconds,
            steps_per_second: if seconds > 0.0 { steps as f64 / seconds } else { 0.0 },
        }
    }
}
