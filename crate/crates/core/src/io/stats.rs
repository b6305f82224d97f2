use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_header, FORMAT_VERSION};
use crate::calibration::{CalibrationStats, TensorStats};
use crate::error::{Error, Result};
use crate::variant::{Gate, LstmVariant};

pub const STATS_KIND: &str = "stats";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStats {
    format_version: u32,
    kind: String,
    variant: LstmVariant,
    tensors: BTreeMap<String, TensorStats>,
}

/// Stats keyed by tensor name: `x`, `h`, `c`, `m`, and `g_i`/`g_f`/`g_z`/`g_o`.
pub fn stats_to_json(stats: &CalibrationStats) -> Result<serde_json::Value> {
    let raw = RawStats {
        format_version: FORMAT_VERSION,
        kind: STATS_KIND.into(),
        variant: stats.variant,
        tensors: stats.named().into_iter().collect(),
    };
    Ok(serde_json::to_value(raw)?)
}

pub fn stats_from_json(value: serde_json::Value) -> Result<CalibrationStats> {
    check_header(&value, STATS_KIND)?;
    let raw: RawStats = serde_json::from_value(value)?;
    let mut tensors = raw.tensors;
    for (name, s) in &tensors {
        if !(s.min.is_finite() && s.max.is_finite()) || (s.count > 0 && s.min > s.max) {
            return Err(Error::Format(format!("stats for `{name}` have an invalid range")));
        }
    }
    let mut stats = CalibrationStats::empty(raw.variant);
    let mut take = |name: &str| tensors.remove(name);
    stats.x = take("x").unwrap_or_default();
    stats.h = take("h").unwrap_or_default();
    stats.c = take("c").unwrap_or_default();
    if let Some(m) = stats.m.as_mut() {
        *m = take("m").unwrap_or_default();
    }
    if let Some(g) = stats.gates.as_mut() {
        for gate in Gate::ALL {
            if let Some(slot) = g.get_mut(gate) {
                *slot = take(&format!("g_{}", gate.suffix())).unwrap_or_default();
            }
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::UnexpectedStats(extra.clone()));
    }
    Ok(stats)
}
