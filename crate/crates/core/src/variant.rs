use serde::{Deserialize, Serialize};

/// Which optional LSTM extensions a model uses. All 16 combinations are valid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LstmVariant {
    pub layer_norm: bool,
    pub projection: bool,
    pub peephole: bool,
    /// Coupled input and forget gates: `i = 1 - f`.
    pub cifg: bool,
}

impl LstmVariant {
    pub const PLAIN: LstmVariant = LstmVariant {
        layer_norm: false,
        projection: false,
        peephole: false,
        cifg: false,
    };

    /// All 16 combinations, in a fixed order.
    pub fn all() -> impl Iterator<Item = LstmVariant> {
        (0u8..16).map(|bits| LstmVariant {
            layer_norm: bits & 1 != 0,
            projection: bits & 2 != 0,
            peephole: bits & 4 != 0,
            cifg: bits & 8 != 0,
        })
    }

    /// Parses a comma-separated flag list such as `ln,proj,peephole,cifg`.
    /// `none` or an empty string selects the plain cell.
    pub fn parse_flags(s: &str) -> Option<LstmVariant> {
        let mut v = LstmVariant::PLAIN;
        for flag in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match flag.to_ascii_lowercase().as_str() {
                "none" | "plain" => {}
                "ln" | "layer_norm" | "layernorm" => v.layer_norm = true,
                "proj" | "projection" => v.projection = true,
                "ph" | "peephole" => v.peephole = true,
                "cifg" => v.cifg = true,
                _ => return None,
            }
        }
        Some(v)
    }

    pub fn label(&self) -> String {
        let flags: Vec<&str> = [
            (self.layer_norm, "ln"),
            (self.projection, "proj"),
            (self.peephole, "peephole"),
            (self.cifg, "cifg"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        if flags.is_empty() {
            "none".to_string()
        } else {
            flags.join(",")
        }
    }

    pub fn has_gate(&self, gate: Gate) -> bool {
        gate != Gate::Input || !self.cifg
    }

    /// Whether `gate` has a peephole connection; the cell input never does.
    pub fn has_peephole(&self, gate: Gate) -> bool {
        self.peephole && gate != Gate::Cell && self.has_gate(gate)
    }
}

impl std::fmt::Display for LstmVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// The four gate computations of an LSTM cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    Input,
    Forget,
    /// The cell input `z`, squashed by tanh rather than sigmoid.
    Cell,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Cell => "z",
            Gate::Output => "o",
        }
    }
}

/// Per-gate storage; `input` is `None` for CIFG models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gates<T> {
    pub input: Option<T>,
    pub forget: T,
    pub cell: T,
    pub output: T,
}

impl<T> Gates<T> {
    pub fn get(&self, gate: Gate) -> Option<&T> {
        match gate {
            Gate::Input => self.input.as_ref(),
            Gate::Forget => Some(&self.forget),
            Gate::Cell => Some(&self.cell),
            Gate::Output => Some(&self.output),
        }
    }

    pub fn get_mut(&mut self, gate: Gate) -> Option<&mut T> {
        match gate {
            Gate::Input => self.input.as_mut(),
            Gate::Forget => Some(&mut self.forget),
            Gate::Cell => Some(&mut self.cell),
            Gate::Output => Some(&mut self.output),
        }
    }

    /// Present gates with their names.
    pub fn iter(&self) -> impl Iterator<Item = (Gate, &T)> {
        Gate::ALL.into_iter().filter_map(move |g| self.get(g).map(|t| (g, t)))
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(Gate, &T) -> Result<U, E>) -> Result<Gates<U>, E> {
        Ok(Gates {
            input: match &self.input {
                Some(t) => Some(f(Gate::Input, t)?),
                None => None,
            },
            forget: f(Gate::Forget, &self.forget)?,
            cell: f(Gate::Cell, &self.cell)?,
            output: f(Gate::Output, &self.output)?,
        })
    }
}

/// Input, cell and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub cell: usize,
    pub output: usize,
}

impl Dims {
    pub fn new(input: usize, cell: usize, output: usize) -> Self {
        Dims { input, cell, output }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sixteen_distinct_variants() {
        let all: HashSet<_> = LstmVariant::all().collect();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn flags_round_trip() {
        for v in LstmVariant::all() {
            assert_eq!(LstmVariant::parse_flags(&v.label()), Some(v));
        }
        assert_eq!(LstmVariant::parse_flags(""), Some(LstmVariant::PLAIN));
        assert!(LstmVariant::parse_flags("ln,bogus").is_none());
    }

    #[test]
    fn cifg_drops_input_gate() {
        let v = LstmVariant {
            cifg: true,
            peephole: true,
            ..LstmVariant::PLAIN
        };
        assert!(!v.has_gate(Gate::Input));
        assert!(!v.has_peephole(Gate::Input));
        assert!(v.has_peephole(Gate::Forget));
        assert!(!v.has_peephole(Gate::Cell));
    }
}
