//! Score file I/O.
//!
//! Labeled format, one trial per line: `utt_id attack_id label score`.
//! Blind format (inference without ground truth): `utt_id score`.
//! Scores are printed with Rust's shortest round-trip float formatting, so
//! write -> read reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{Label, ScoreRecord};

/// Parsed contents of a score file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreFileContent {
    Labeled(Vec<ScoreRecord>),
    Blind(Vec<(String, f64)>),
}

pub fn write_score_file(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} {} {} {}", r.utt_id, r.attack_id, r.label, r.score)
            .expect("string write");
    }
    crate::fsutil::write_atomic(path, out.as_bytes())
}

pub fn write_blind_scores(path: &Path, scores: &[(String, f64)]) -> Result<()> {
    let mut out = String::new();
    for (utt, s) in scores {
        writeln!(out, "{utt} {s}").expect("string write");
    }
    crate::fsutil::write_atomic(path, out.as_bytes())
}

pub fn read_score_file(path: &Path) -> Result<ScoreFileContent> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labeled = Vec::new();
    let mut blind = Vec::new();
    let mut offenders = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [utt, attack, label, score] => {
                match (Label::from_str(label), score.parse::<f64>()) {
                    (Ok(label), Ok(score)) => match ScoreRecord::new(*utt, *attack, label, score)
                    {
                        Ok(rec) => labeled.push(rec),
                        Err(e) => offenders.push(format!("line {}: {e}", lineno + 1)),
                    },
                    _ => offenders.push(format!("line {}: bad label or score", lineno + 1)),
                }
            }
            [utt, score] => match score.parse::<f64>() {
                Ok(s) => blind.push((utt.to_string(), s)),
                Err(_) => offenders.push(format!("line {}: bad score", lineno + 1)),
            },
            _ => offenders.push(format!(
                "line {}: expected 2 or 4 fields, got {}",
                lineno + 1,
                fields.len()
            )),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), offenders });
    }
    match (labeled.is_empty(), blind.is_empty()) {
        (false, true) => Ok(ScoreFileContent::Labeled(labeled)),
        (true, false) => Ok(ScoreFileContent::Blind(blind)),
        (true, true) => Err(Error::Input(format!("empty score file: {}", path.display()))),
        (false, false) => Err(Error::Parse {
            path: path.to_path_buf(),
            offenders: vec!["file mixes labeled and blind records".into()],
        }),
    }
}
