use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_header, read_json_value, write_json, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::generate::Sequence;

pub const SEQUENCES_KIND: &str = "sequences";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    pub inputs: Sequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Sequence>,
}

/// Input sequences, optionally with expected outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub format_version: u32,
    pub kind: String,
    pub sequences: Vec<SequenceRecord>,
}

impl SequenceFile {
    pub fn new(sequences: Vec<SequenceRecord>) -> Self {
        SequenceFile {
            format_version: FORMAT_VERSION,
            kind: SEQUENCES_KIND.into(),
            sequences,
        }
    }

    pub fn from_inputs(inputs: Vec<Sequence>) -> Self {
        SequenceFile::new(
            inputs
                .into_iter()
                .map(|inputs| SequenceRecord { inputs, expected: None })
                .collect(),
        )
    }

    /// Common input width, or `None` when there are no input vectors.
    pub fn input_dim(&self) -> Result<Option<usize>> {
        let mut dim = None;
        for (i, seq) in self.sequences.iter().enumerate() {
            if let Some(e) = &seq.expected {
                if e.len() != seq.inputs.len() {
                    return Err(Error::Format(format!(
                        "sequence {i}: {} expected outputs for {} inputs",
                        e.len(),
                        seq.inputs.len()
                    )));
                }
            }
            for x in &seq.inputs {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("sequence {i} input")));
                }
                match dim {
                    None => dim = Some(x.len()),
                    Some(d) if d != x.len() => {
                        return Err(Error::Format(format!(
                            "sequence {i} has an input of width {}, others have {d}",
                            x.len()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(dim)
    }

    pub fn inputs(&self) -> Vec<Sequence> {
        self.sequences.iter().map(|s| s.inputs.clone()).collect()
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        check_header(&value, SEQUENCES_KIND)?;
        let file: SequenceFile = serde_json::from_value(value)?;
        file.input_dim()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SequenceFile::from_json(read_json_value(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.input_dim()?;
        write_json(path, self)
    }
}
