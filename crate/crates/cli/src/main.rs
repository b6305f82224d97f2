//! `intlstm`: calibrate, quantize, run, compare, generate and benchmark LSTM
//! models stored as JSON.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or model errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use intlstm_core::generate::{random_dataset, random_model};
use intlstm_core::io::{
    compare_models, read_json_value, stats_from_json, stats_to_json, write_json, BenchEngine, BenchReport, ModelFile,
    RunOutput, SequenceFile,
};
use intlstm_core::{
    build_quantized_model, calibrate, float_cell_step, integer_cell_step, Dims, FloatLstmModel, FloatLstmState,
    LstmVariant, QuantizedLstmModel,
};

#[derive(Parser)]
#[command(name = "intlstm", version, about = "Integer-only LSTM quantization and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect activation ranges of a float model over a sequence file.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a float model with calibration statistics.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a float or quantized model over a sequence file.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the cell state after every step.
        #[arg(long)]
        dump_state: bool,
    },
    /// Run a float model and its quantized version side by side.
    Compare {
        #[arg(long = "float")]
        float_model: PathBuf,
        #[arg(long = "quant")]
        quant_model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a seeded random float model and optionally a dataset.
    Gen {
        /// Comma-separated flags from ln, proj, peephole, cifg; or `none`.
        #[arg(long, value_parser = parse_variant)]
        variant: LstmVariant,
        /// Input, cell and output widths, e.g. `16,32,16`.
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data_out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        seq_len: usize,
        #[arg(long, default_value_t = 5)]
        num_seq: usize,
    },
    /// Time single-sequence steps. A float model is benchmarked on both
    /// engines, quantizing it with statistics from generated data.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_variant(s: &str) -> Result<LstmVariant, String> {
    LstmVariant::parse_flags(s)
        .ok_or_else(|| format!("unknown variant flags `{s}` (use ln,proj,peephole,cifg or none)"))
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("invalid dims `{s}`: {e}"))?;
    match parts.as_slice() {
        &[i, c, o] if i > 0 && c > 0 && o > 0 => Ok(Dims::new(i, c, o)),
        _ => Err(format!(
            "dims must be three positive integers INPUT,CELL,OUTPUT, got `{s}`"
        )),
    }
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_float(path: &Path) -> Result<FloatLstmModel> {
    match load_model(path)? {
        ModelFile::Float(m) => Ok(m),
        ModelFile::Quantized(_) => bail!("{} is a quantized model; a float model is required", path.display()),
    }
}

fn load_quantized(path: &Path) -> Result<QuantizedLstmModel> {
    match load_model(path)? {
        ModelFile::Quantized(m) => Ok(m),
        ModelFile::Float(_) => bail!("{} is a float model; a quantized model is required", path.display()),
    }
}

fn load_sequences(path: &Path) -> Result<SequenceFile> {
    SequenceFile::load(path).with_context(|| format!("loading sequences {}", path.display()))
}

fn save<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

fn cmd_calibrate(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = load_float(model)?;
    let data = load_sequences(data)?;
    let stats = calibrate(&model, &data.inputs())?;
    save(out, &stats_to_json(&stats)?)
}

fn cmd_quantize(model: &Path, stats: &Path, out: &Path) -> Result<()> {
    let model = load_float(model)?;
    let stats =
        stats_from_json(read_json_value(stats)?).with_context(|| format!("loading stats {}", stats.display()))?;
    let q = build_quantized_model(&model, &stats)?;
    ModelFile::Quantized(q)
        .save(out)
        .with_context(|| format!("writing {}", out.display()))
}

fn cmd_run(model: &Path, input: &Path, out: &Path, dump_state: bool) -> Result<()> {
    let model = load_model(model)?;
    let data = load_sequences(input)?;
    let output = RunOutput::run(&model, &data.sequences, dump_state)?;
    save(out, &output)
}

fn cmd_compare(float_model: &Path, quant_model: &Path, data: &Path, report: &Path) -> Result<()> {
    let float = load_float(float_model)?;
    let quant = load_quantized(quant_model)?;
    let data = load_sequences(data)?;
    let r = compare_models(&float, &quant, &data.sequences)?;
    save(report, &r)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    variant: LstmVariant,
    dims: Dims,
    seed: u64,
    out: &Path,
    data_out: Option<&Path>,
    seq_len: usize,
    num_seq: usize,
) -> Result<()> {
    if !variant.projection && dims.output != dims.cell {
        return Err(UsageError(format!(
            "without projection the output width must equal the cell width (got {},{},{})",
            dims.input, dims.cell, dims.output
        ))
        .into());
    }
    let model = random_model(variant, dims, seed)?;
    ModelFile::Float(model)
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = data_out {
        let data = random_dataset(dims.input, seq_len, num_seq, seed.wrapping_add(1));
        SequenceFile::from_inputs(data)
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Inputs reused cyclically by the benchmark.
const BENCH_INPUTS: usize = 64;

fn bench_float(model: &FloatLstmModel, inputs: &[Vec<f64>], steps: usize) -> Result<BenchEngine> {
    let mut state = FloatLstmState::zeros(model.dims);
    let start = Instant::now();
    for t in 0..steps {
        let (_, next) = float_cell_step(model, &inputs[t % inputs.len()], &state)?;
        state = next;
    }
    Ok(BenchEngine::new("float", steps, start.elapsed()))
}

fn bench_integer(model: &QuantizedLstmModel, inputs: &[Vec<f64>], steps: usize) -> Result<BenchEngine> {
    let xq = inputs
        .iter()
        .map(|x| model.quantize_input(x))
        .collect::<intlstm_core::Result<Vec<_>>>()?;
    let mut state = model.zero_state();
    let start = Instant::now();
    for t in 0..steps {
        let (_, next) = integer_cell_step(model, &xq[t % xq.len()], &state)?;
        state = next;
    }
    Ok(BenchEngine::new("integer", steps, start.elapsed()))
}

fn cmd_bench(model: &Path, steps: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let model = load_model(model)?;
    let dims = model.dims();
    let inputs = random_dataset(dims.input, BENCH_INPUTS, 1, seed).remove(0);
    let mut engines = Vec::new();
    if steps > 0 {
        match &model {
            ModelFile::Float(m) => {
                let calib = random_dataset(dims.input, 100, 5, seed.wrapping_add(1));
                let q = build_quantized_model(m, &calibrate(m, &calib)?)?;
                engines.push(bench_float(m, &inputs, steps)?);
                engines.push(bench_integer(&q, &inputs, steps)?);
            }
            ModelFile::Quantized(q) => engines.push(bench_integer(q, &inputs, steps)?),
        }
    }
    let report = BenchReport::new(model.variant(), dims, engines);
    match out {
        Some(path) => save(path, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { model, data, out } => cmd_calibrate(&model, &data, &out),
        Command::Quantize { model, stats, out } => cmd_quantize(&model, &stats, &out),
        Command::Run {
            model,
            input,
            out,
            dump_state,
        } => cmd_run(&model, &input, &out, dump_state),
        Command::Compare {
            float_model,
            quant_model,
            data,
            report,
        } => cmd_compare(&float_model, &quant_model, &data, &report),
        Command::Gen {
            variant,
            dims,
            seed,
            out,
            data_out,
            seq_len,
            num_seq,
        } => cmd_gen(variant, dims, seed, &out, data_out.as_deref(), seq_len, num_seq),
        Command::Bench {
            model,
            steps,
            seed,
            out,
        } => cmd_bench(&model, steps, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
