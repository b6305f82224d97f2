//! Integer-only LSTM inference with a post-training quantization toolkit.
//!
//! A [`FloatLstmModel`] is calibrated on representative sequences
//! ([`calibrate`]), converted to a [`QuantizedLstmModel`] with 8-bit weights,
//! 8/16-bit activations and 32-bit biases ([`build_quantized_model`]), and run
//! with [`integer_cell_step`], which uses integer arithmetic only.

pub mod activations;
pub mod calibration;
mod error;
pub mod fixedpoint;
pub mod float_ref;
pub mod generate;
pub mod io;
pub mod kernel;
pub mod quantizer;
pub mod tensor;
pub mod variant;

pub use calibration::{calibrate, CalibrationStats, TensorStats};
pub use error::{Error, Result};
pub use float_ref::{float_cell_step, float_sequence_run, FloatLstmModel, FloatLstmState};
pub use kernel::{integer_cell_step, IntLstmState, IntegerLstm};
pub use quantizer::{build_quantized_model, QuantizedLstmModel};
pub use tensor::Matrix;
pub use variant::{Dims, Gate, Gates, LstmVariant};
