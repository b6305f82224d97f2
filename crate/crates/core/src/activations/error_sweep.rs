use serde::Serialize;

use super::{ActivationKind, MAX_INPUT_INTEGER_BITS};
use crate::fixedpoint::pow2;

/// Worst-case errors of feeding an activation a `Q{m}.{15-m}` input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActivationError {
    /// `f(inf) - f(2^m)`: lost by clamping the input range.
    pub clamping: f64,
    /// `2^-(15-m) * max f'`: lost to the input grid spacing.
    pub resolution: f64,
}

impl ActivationError {
    pub fn worst(&self) -> f64 {
        self.clamping.max(self.resolution)
    }
}

impl ActivationKind {
    /// `f(inf) - f(x)`, written to avoid cancellation for large `x`.
    fn tail(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let e = (-x).exp();
                e / (1.0 + e)
            }
            ActivationKind::Tanh => {
                let e = (-2.0 * x).exp();
                2.0 * e / (1.0 + e)
            }
        }
    }

    fn max_slope(self) -> f64 {
        match self {
            ActivationKind::Sigmoid => 0.25,
            ActivationKind::Tanh => 1.0,
        }
    }
}

pub fn activation_error_sweep(kind: ActivationKind, m: u32) -> ActivationError {
    let edge = pow2(m as i32);
    ActivationError {
        clamping: kind.tail(edge),
        resolution: pow2(-(15 - m as i32)) * kind.max_slope(),
    }
}

/// The input integer-bit count that minimizes the worst error over both
/// activations.
pub fn balanced_integer_bits() -> u32 {
    (0..=MAX_INPUT_INTEGER_BITS)
        .min_by(|&a, &b| {
            let worst = |m| {
                [ActivationKind::Sigmoid, ActivationKind::Tanh]
                    .into_iter()
                    .map(|k| activation_error_sweep(k, m).worst())
                    .fold(0.0, f64::max)
            };
            worst(a).total_cmp(&worst(b))
        })
        .unwrap_or(3)
}
