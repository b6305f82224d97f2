//! Seeded pseudo-random models and input sequences.
//!
//! Weights (input, recurrent, peephole, projection) are uniform in
//! `[-0.5, 0.5]`, biases uniform in `[-1, 1]`, layer-norm coefficients uniform
//! in `[0.5, 1.5]`, and sequence inputs uniform in `[-1, 1]`. The generator is
//! ChaCha8, so files are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::float_ref::{FloatGate, FloatLstmModel, FloatProjection};
use crate::tensor::Matrix;
use crate::variant::{Dims, Gate, Gates, LstmVariant};

pub const WEIGHT_RANGE: f64 = 0.5;
pub const BIAS_RANGE: f64 = 1.0;
pub const LN_COEF_MIN: f64 = 0.5;
pub const LN_COEF_MAX: f64 = 1.5;
pub const INPUT_RANGE: f64 = 1.0;

/// A sequence of input vectors.
pub type Sequence = Vec<Vec<f64>>;

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, range: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-range..=range))
}

pub fn random_model(variant: LstmVariant, dims: Dims, seed: u64) -> Result<FloatLstmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gate = |g: Gate| FloatGate {
        w: uniform_matrix(&mut rng, dims.cell, dims.input, WEIGHT_RANGE),
        r: uniform_matrix(&mut rng, dims.cell, dims.output, WEIGHT_RANGE),
        peephole: variant
            .has_peephole(g)
            .then(|| uniform_vec(&mut rng, dims.cell, -WEIGHT_RANGE, WEIGHT_RANGE)),
        bias: uniform_vec(&mut rng, dims.cell, -BIAS_RANGE, BIAS_RANGE),
        layer_norm: variant
            .layer_norm
            .then(|| uniform_vec(&mut rng, dims.cell, LN_COEF_MIN, LN_COEF_MAX)),
    };
    let gates = Gates {
        input: variant.has_gate(Gate::Input).then(|| gate(Gate::Input)),
        forget: gate(Gate::Forget),
        cell: gate(Gate::Cell),
        output: gate(Gate::Output),
    };
    let projection = variant.projection.then(|| FloatProjection {
        weights: uniform_matrix(&mut rng, dims.output, dims.cell, WEIGHT_RANGE),
        bias: uniform_vec(&mut rng, dims.output, -BIAS_RANGE, BIAS_RANGE),
    });
    let model = FloatLstmModel {
        variant,
        dims,
        gates,
        projection,
    };
    model.validate()?;
    Ok(model)
}

pub fn random_dataset(input_dim: usize, seq_len: usize, num_seq: usize, seed: u64) -> Vec<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_seq)
        .map(|_| {
            (0..seq_len)
                .map(|_| uniform_vec(&mut rng, input_dim, -INPUT_RANGE, INPUT_RANGE))
                .collect()
        })
        .collect()
}
