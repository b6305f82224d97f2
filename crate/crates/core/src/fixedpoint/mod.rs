//! Fixed-point numerics shared by the quantizer and the integer kernel.
//!
//! `ops` and `qformat` hold everything the kernel executes and contain only
//! integer arithmetic. `multiplier` and `convert` are build-time helpers that
//! turn real-valued scales into integer form and back.

mod convert;
mod multiplier;
mod ops;
mod qformat;

pub use convert::pow2;
pub use multiplier::quantize_multiplier;
pub use ops::{
    integer_sqrt, rescale, rescale_wide, rounded_shift_right, saturate_i16, saturate_i32, saturate_i8, saturating_cast,
    EffectiveScale,
};
pub use qformat::QFormat;
