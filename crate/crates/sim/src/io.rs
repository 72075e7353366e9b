//! Instance and decision-set files.
//!
//! An instance file is TOML with keys `d`, `H`, `S`, `A`, `phi[s][a]`,
//! `measures[h][i][s]`, `thetas[h]` and optionally `initial_state`.
//!
//! A decision-set file holds one set per round. Each line is an action
//! vector (numbers separated by spaces or commas) and a blank line ends the
//! round. Lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use dprl_core::LinearMdp;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("line {line}: {message}")]
    DecisionSet { line: usize, message: String },
}

pub fn read_instance(path: &Path) -> Result<LinearMdp, FileError> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn parse_instance(text: &str) -> Result<LinearMdp, FileError> {
    toml::from_str(text).map_err(|e| FileError::Instance(e.to_string()))
}

pub fn instance_to_toml(mdp: &LinearMdp) -> String {
    toml::to_string(mdp).expect("instances serialize")
}

pub fn write_instance(mdp: &LinearMdp, path: &Path) -> Result<(), FileError> {
    std::fs::write(path, instance_to_toml(mdp))?;
    Ok(())
}

pub fn read_decision_sets(path: &Path) -> Result<Vec<Vec<Vec<f64>>>, FileError> {
    parse_decision_sets(&std::fs::read_to_string(path)?)
}

pub fn parse_decision_sets(text: &str) -> Result<Vec<Vec<Vec<f64>>>, FileError> {
    let mut rounds = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.is_empty() {
                rounds.push(std::mem::take(&mut current));
            }
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| FileError::DecisionSet {
                line: i + 1,
                message: e.to_string(),
            })?;
        if *dim.get_or_insert(row.len()) != row.len() {
            return Err(FileError::DecisionSet {
                line: i + 1,
                message: format!("expected {} entries, found {}", dim.unwrap_or(0), row.len()),
            });
        }
        current.push(row);
    }
    if !current.is_empty() {
        rounds.push(current);
    }
    Ok(rounds)
}

pub fn format_decision_sets(rounds: &[Vec<Vec<f64>>]) -> String {
    let mut out = String::new();
    for set in rounds {
        for x in set {
            let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out.push('\n');
    }
    out
}
