//! Trained model file: a version line, the weight vector, then the
//! configuration the weights were trained with.
//!
//! ```text
//! dctrack-model 1
//! weights = 2.3 15.6 14.4 0.15 0.15 4.9 4.9 9.0 -0.6
//! lambda = 0.001
//! ...
//! ```

use std::path::Path;

use super::{read_text, write_text, Config, IoError};
use crate::model::{WeightVector, FEATURE_DIM};

pub const MODEL_MAGIC: &str = "dctrack-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub weights: WeightVector,
    pub config: Config,
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let w: Vec<String> = self.weights.0.iter().map(|v| format!("{v:?}")).collect();
        format!("{MODEL_MAGIC} {MODEL_VERSION}\nweights = {}\n{}", w.join(" "), self.config.to_text())
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("").trim();
        let version = header.strip_prefix(MODEL_MAGIC).map(str::trim).ok_or_else(|| IoError::Parse {
            line: 1,
            column: 1,
            reason: format!("not a model file (expected `{MODEL_MAGIC} {MODEL_VERSION}`)"),
        })?;
        if version != MODEL_VERSION.to_string() {
            return Err(IoError::IncompatibleModel { found: version.to_string(), expected: MODEL_VERSION });
        }
        let weights_line = lines.next().unwrap_or("");
        let bad = |reason: String| IoError::Parse { line: 2, column: 2, reason };
        let values = weights_line
            .split_once('=')
            .filter(|(k, _)| k.trim() == "weights")
            .map(|(_, v)| v)
            .ok_or_else(|| IoError::Parse { line: 2, column: 1, reason: "expected `weights = ...`".into() })?;
        let w: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(format!("bad weight `{v}`"))))
            .collect::<Result<_, _>>()?;
        let weights = WeightVector(w.try_into().map_err(|w: Vec<f64>| IoError::DimensionMismatch { line: 2, expected: FEATURE_DIM, got: w.len() })?);
        // Keep line numbers of the config part relative to the whole file.
        let rest: String = text.lines().enumerate().map(|(i, l)| if i < 2 { "\n".to_string() } else { format!("{l}\n") }).collect();
        Ok(Self { weights, config: Config::parse(&rest)? })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_text(path, &self.to_text())
    }
}
