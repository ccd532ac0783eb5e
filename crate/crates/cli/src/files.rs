//! Run-directory file formats: result, history table, and memory dump.
//!
//! All files are line-stable structured text so fixtures diff cleanly and a
//! (config, seed) pair reproduces them bit-for-bit. Expressions are stored
//! in prefix form with a separate constants array (authoritative) plus an
//! infix rendering for display.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sympde_core::expr::{parse_prefix, ParseOutcome};
use sympde_core::pde::PdeProblem;
use sympde_core::trainer::{EpochRecord, RunResult, TopKMemory};

pub const RESULT_FILE: &str = "result.txt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const MEMORY_FILE: &str = "memory.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

pub fn render_result(problem: &PdeProblem, result: &RunResult) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "problem {}", result.problem)?;
    writeln!(out, "seed {}", result.seed)?;
    writeln!(out, "stages {}", result.stage_epochs.len())?;
    writeln!(
        out,
        "stage_epochs {}",
        result.stage_epochs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
    )?;
    match &result.best {
        Some(best) => {
            writeln!(out, "reward {}", best.reward)?;
            writeln!(out, "mse {}", best.mse)?;
            writeln!(out, "srr {}", best.srr)?;
            writeln!(out, "expr_prefix {}", best.tree.render_prefix(&problem.vocab))?;
            writeln!(out, "constants {}", join_f64(&best.tree.constants))?;
            writeln!(out, "expr_inline {}", best.tree.render_prefix_inline(&problem.vocab))?;
            writeln!(out, "expr_infix {}", best.tree.render_infix(&problem.vocab)?)?;
        }
        None => {
            writeln!(out, "reward nan")?;
            writeln!(out, "mse nan")?;
            writeln!(out, "srr false")?;
        }
    }
    Ok(out)
}

/// Minimal view of a result file, for the report command.
#[derive(Debug, Clone)]
pub struct ResultSummary {
    pub problem: String,
    pub mse: f64,
    pub srr: bool,
}

pub fn parse_result(text: &str) -> Result<ResultSummary> {
    let mut problem = None;
    let mut mse = None;
    let mut srr = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once(' ') else { continue };
        match key {
            "problem" => problem = Some(value.to_string()),
            "mse" => mse = value.parse().ok(),
            "srr" => srr = value.parse().ok(),
            _ => {}
        }
    }
    Ok(ResultSummary {
        problem: problem.context("result file missing `problem`")?,
        mse: mse.context("result file missing `mse`")?,
        srr: srr.context("result file missing `srr`")?,
    })
}

pub const HISTORY_HEADER: &str = "epoch\tstage\tbest_reward\tmean_reward\tmean_entropy\tlr";

pub fn history_row(r: &EpochRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        r.epoch, r.stage, r.best_reward, r.mean_reward, r.mean_entropy, r.lr
    )
}

pub fn render_memory(problem: &PdeProblem, memory: &TopKMemory) -> Result<String> {
    let mut out = String::from("sympde-memory v1\n");
    for e in memory.entries() {
        writeln!(out, "entry {} {}", e.reward, e.stage)?;
        writeln!(out, "prefix {}", e.tree.render_prefix(&problem.vocab))?;
        writeln!(out, "constants {}", join_f64(&e.tree.constants))?;
    }
    out.push_str("end\n");
    Ok(out)
}

/// Validate that every expression stored in a run directory round-trips
/// through the prefix parser (invariant of the emitted files).
pub fn validate_expressions(problem: &PdeProblem, dir: &Path) -> Result<()> {
    let result = std::fs::read_to_string(dir.join(RESULT_FILE))?;
    for line in result.lines() {
        if let Some(prefix) = line.strip_prefix("expr_prefix ") {
            let tokens: Vec<_> = prefix
                .split_whitespace()
                .map(|w| problem.vocab.lookup(w).context("unknown token in result"))
                .collect::<Result<_>>()?;
            match parse_prefix(&problem.vocab, &tokens)? {
                ParseOutcome::Complete(_) => {}
                _ => bail!("stored expression does not parse complete"),
            }
        }
    }
    Ok(())
}
