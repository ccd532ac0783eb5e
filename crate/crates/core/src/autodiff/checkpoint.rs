//! Structured-text parameter checkpoints.
//!
//! Format, one tensor per record:
//!
//! ```text
//! sympde-checkpoint v1
//! param <name> <rows> <cols>
//! <row-major values, space separated, one line>
//! ...
//! end
//! ```
//!
//! Values print with Rust's shortest round-trip formatting, so a load after
//! save is bit-identical.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::autodiff::params::ParamSet;
use crate::autodiff::Array;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub fn save_params<W: Write>(w: &mut W, params: &ParamSet) -> Result<(), CheckpointError> {
    writeln!(w, "sympde-checkpoint v1")?;
    for t in &params.tensors {
        writeln!(w, "param {} {} {}", t.name, t.array.rows, t.array.cols)?;
        let mut line = String::with_capacity(t.array.numel() * 8);
        for (i, v) in t.array.data().iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn load_params<R: BufRead>(r: &mut R) -> Result<ParamSet, CheckpointError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CheckpointError::BadHeader("empty file".into()))?;
    let header = header?;
    if header.trim() != "sympde-checkpoint v1" {
        return Err(CheckpointError::BadHeader(header));
    }
    let mut params = ParamSet::new();
    while let Some((lineno, line)) = lines.next() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end" {
            return Ok(params);
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or("");
        if tag != "param" {
            return Err(CheckpointError::Malformed {
                line: lineno + 1,
                reason: format!("expected `param`, got `{tag}`"),
            });
        }
        let name = parts
            .next()
            .ok_or_else(|| CheckpointError::Malformed { line: lineno + 1, reason: "missing name".into() })?
            .to_string();
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CheckpointError::Malformed { line: lineno + 1, reason: "bad rows".into() })?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CheckpointError::Malformed { line: lineno + 1, reason: "bad cols".into() })?;
        let (vline_no, values_line) = lines.next().ok_or_else(|| CheckpointError::Malformed {
            line: lineno + 1,
            reason: "missing values line".into(),
        })?;
        let values_line = values_line?;
        let mut data = Vec::with_capacity(rows * cols);
        for v in values_line.split_whitespace() {
            let x: f64 = v.parse().map_err(|_| CheckpointError::Malformed {
                line: vline_no + 1,
                reason: format!("bad value `{v}`"),
            })?;
            data.push(x);
        }
        if data.len() != rows * cols {
            return Err(CheckpointError::Malformed {
                line: vline_no + 1,
                reason: format!("expected {} values, got {}", rows * cols, data.len()),
            });
        }
        params.push(name, Array::new(rows, cols, data));
    }
    Err(CheckpointError::BadHeader("missing `end`".into()))
}
