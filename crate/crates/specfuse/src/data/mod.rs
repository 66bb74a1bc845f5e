//! Trial protocols, dataset manifests, and the synthetic desk-scale corpus.

mod toy;

pub use toy::{synth_toy_dataset, ToyConfig, ToyDataset};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Label;

/// One line of a trial protocol:
/// `speaker_id utt_id system_id attack_id key`.
///
/// The third field is unused by this toolkit but preserved verbatim so that
/// parse -> serialize reproduces the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEntry {
    pub speaker_id: String,
    pub utt_id: String,
    /// Unused third protocol column, kept for round-trip fidelity.
    pub system_id: String,
    /// "-" for bona fide trials.
    pub attack_id: String,
    pub key: Label,
}

impl ProtocolEntry {
    /// The structural invariant: bona fide iff attack_id is "-".
    pub fn is_consistent(&self) -> bool {
        (self.key == Label::Bonafide) == (self.attack_id == "-")
    }
}

impl fmt::Display for ProtocolEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.speaker_id, self.utt_id, self.system_id, self.attack_id, self.key
        )
    }
}

/// Partition of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl Partition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        }
    }

    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Eval];
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            other => Err(Error::Config(format!("unknown partition '{other}'"))),
        }
    }
}

/// Parse a 5-field whitespace-delimited protocol file.
///
/// Structurally malformed lines are collected and reported together with
/// their line numbers. Entries violating the label/attack consistency
/// invariant parse fine (the data checker reports them).
pub fn parse_protocol(path: &Path) -> Result<Vec<ProtocolEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_protocol_str(&text, path)
}

/// Parse protocol text held in memory.
pub fn parse_protocol_text(text: &str) -> Result<Vec<ProtocolEntry>> {
    parse_protocol_str(text, Path::new("<memory>"))
}

pub(crate) fn parse_protocol_str(text: &str, path: &Path) -> Result<Vec<ProtocolEntry>> {
    let mut entries = Vec::new();
    let mut offenders = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            offenders.push(format!("line {}: expected 5 fields, got {}", lineno + 1, fields.len()));
            continue;
        }
        match Label::from_str(fields[4]) {
            Ok(key) => entries.push(ProtocolEntry {
                speaker_id: fields[0].to_string(),
                utt_id: fields[1].to_string(),
                system_id: fields[2].to_string(),
                attack_id: fields[3].to_string(),
                key,
            }),
            Err(_) => {
                offenders.push(format!("line {}: unknown key '{}'", lineno + 1, fields[4]))
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), offenders });
    }
    if entries.is_empty() {
        return Err(Error::Input(format!("empty protocol file: {}", path.display())));
    }
    Ok(entries)
}

/// Render entries in the 5-field protocol format.
pub fn serialize_protocol(entries: &[ProtocolEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

/// Per-class and per-attack trial counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PartitionStats {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub per_attack: BTreeMap<String, usize>,
}

pub fn partition_stats(entries: &[ProtocolEntry]) -> PartitionStats {
    let mut stats = PartitionStats::default();
    for e in entries {
        match e.key {
            Label::Bonafide => stats.n_bonafide += 1,
            Label::Spoof => {
                stats.n_spoof += 1;
                *stats.per_attack.entry(e.attack_id.clone()).or_insert(0) += 1;
            }
        }
    }
    stats
}

/// A partition's trial list bound to an audio directory.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub partition: Partition,
    pub entries: Vec<ProtocolEntry>,
    pub audio_root: PathBuf,
}

impl Manifest {
    pub fn load(protocol_path: &Path, audio_root: &Path, partition: Partition) -> Result<Self> {
        let entries = parse_protocol(protocol_path)?;
        Ok(Manifest { partition, entries, audio_root: audio_root.to_path_buf() })
    }

    /// Audio file for an utterance: `<root>/<utt>.wav`, falling back to
    /// `.flac`. The file's existence is checked lazily here, not at parse
    /// time.
    pub fn audio_path(&self, utt_id: &str) -> Result<PathBuf> {
        for ext in ["wav", "flac"] {
            let p = self.audio_root.join(format!("{utt_id}.{ext}"));
            if p.exists() {
                return Ok(p);
            }
        }
        Err(Error::Input(format!(
            "no audio for utterance {utt_id} under {}",
            self.audio_root.display()
        )))
    }

    pub fn stats(&self) -> PartitionStats {
        partition_stats(&self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_line_kinds() {
        let text = "SPK01 UTT001 - - bonafide\nSPK02 UTT002 - A07 spoof\n";
        let entries = parse_protocol_str(text, Path::new("mem")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, Label::Bonafide);
        assert_eq!(entries[0].attack_id, "-");
        assert_eq!(entries[1].key, Label::Spoof);
        assert_eq!(entries[1].attack_id, "A07");
        assert!(entries[0].is_consistent() && entries[1].is_consistent());
    }

    #[test]
    fn malformed_lines_reported_with_numbers() {
        let text = "SPK01 UTT001 - - bonafide\nbroken line\nSPK03 UTT003 - A01 spooof\n";
        match parse_protocol_str(text, Path::new("mem")).unwrap_err() {
            Error::Parse { offenders, .. } => {
                assert_eq!(offenders.len(), 2);
                assert!(offenders[0].contains("line 2"));
                assert!(offenders[1].contains("line 3"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_input_error() {
        assert!(matches!(
            parse_protocol_str("", Path::new("mem")),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let text = "SPK01 UTT001 SYSX - bonafide\nSPK02 UTT002 - A07 spoof\n";
        let entries = parse_protocol_str(text, Path::new("mem")).unwrap();
        let round = parse_protocol_str(&serialize_protocol(&entries), Path::new("mem")).unwrap();
        assert_eq!(entries, round);
        // the unused third field survives
        assert_eq!(round[0].system_id, "SYSX");
    }

    #[test]
    fn stats_count_classes_and_attacks() {
        let text = "S A - - bonafide\nS B - A01 spoof\nS C - A01 spoof\nS D - A02 spoof\n";
        let entries = parse_protocol_str(text, Path::new("mem")).unwrap();
        let stats = partition_stats(&entries);
        assert_eq!(stats.n_bonafide, 1);
        assert_eq!(stats.n_spoof, 3);
        assert_eq!(stats.per_attack["A01"], 2);
        assert_eq!(stats.per_attack["A02"], 1);
        assert_eq!(partition_stats(&[]), PartitionStats::default());
    }

    #[test]
    fn inconsistent_entry_parses_but_flags() {
        let text = "SPK01 UTT001 - A05 bonafide\n";
        let entries = parse_protocol_str(text, Path::new("mem")).unwrap();
        assert!(!entries[0].is_consistent());
    }
}
