//! Countermeasure scoring: equal error rate and minimum normalized tandem
//! detection cost, pooled and per attack.
//!
//! Score polarity is fixed toolkit-wide: higher score means more bona fide.

mod scorefile;
mod tdcf;

pub use scorefile::{read_score_file, write_blind_scores, write_score_file, ScoreFileContent};
pub use tdcf::{compute_min_tdcf, AsvOperatingPoint, TdcfParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trial key: genuine speech or a spoofing attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Bonafide => write!(f, "bonafide"),
            Label::Spoof => write!(f, "spoof"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(Error::Input(format!("unknown label '{other}'"))),
        }
    }
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub utt_id: String,
    /// Attack identifier; "-" for bona fide trials.
    pub attack_id: String,
    pub label: Label,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(utt_id: impl Into<String>, attack_id: impl Into<String>, label: Label, score: f64) -> Result<Self> {
        let rec =
            ScoreRecord { utt_id: utt_id.into(), attack_id: attack_id.into(), label, score };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::Input(format!("non-finite score for {}", self.utt_id)));
        }
        let bona = self.label == Label::Bonafide;
        if bona != (self.attack_id == "-") {
            return Err(Error::Input(format!(
                "label/attack mismatch for {}: {} with attack '{}'",
                self.utt_id, self.label, self.attack_id
            )));
        }
        Ok(())
    }
}

/// False-acceptance and false-rejection rates at a threshold:
/// FAR = P(spoof score >= t), FRR = P(bona score < t).
fn rates_at(bona: &[f64], spoof: &[f64], t: f64) -> (f64, f64) {
    let fa = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
    let fr = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
    (fa, fr)
}

pub(crate) fn split_scores(records: &[ScoreRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let bona: Vec<f64> =
        records.iter().filter(|r| r.label == Label::Bonafide).map(|r| r.score).collect();
    let spoof: Vec<f64> =
        records.iter().filter(|r| r.label == Label::Spoof).map(|r| r.score).collect();
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::Input(format!(
            "EER/t-DCF need both classes; got {} bona fide and {} spoof trials",
            bona.len(),
            spoof.len()
        )));
    }
    Ok((bona, spoof))
}

/// Threshold sweep points: every distinct score, ascending, plus a sentinel
/// above the maximum where FAR = 0 and FRR = 1.
pub(crate) fn sweep_thresholds(bona: &[f64], spoof: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = bona.iter().chain(spoof.iter()).cloned().collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    let last = *t.last().unwrap();
    let span = (last - t[0]).abs().max(1.0);
    t.push(last + span);
    t
}

/// Equal error rate via linear interpolation of the FAR/FRR curves over the
/// sorted-score threshold sweep. Returns (eer, threshold).
pub fn compute_eer(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let (bona, spoof) = split_scores(records)?;
    let thresholds = sweep_thresholds(&bona, &spoof);
    let mut prev: Option<(f64, f64, f64)> = None; // (t, far, frr)
    for &t in &thresholds {
        let (far, frr) = rates_at(&bona, &spoof, t);
        let diff = frr - far;
        if diff >= 0.0 {
            return Ok(match prev {
                // crossing exactly on a sweep point
                None => (far.max(frr), t),
                Some((pt, pfar, pfrr)) => {
                    let pdiff = pfrr - pfar;
                    if diff == 0.0 {
                        (far, t)
                    } else {
                        // linear interpolation between adjacent sweep points
                        let w = pdiff / (pdiff - diff); // in (0, 1]
                        let eer = pfar + w * (far - pfar);
                        let theta = pt + w * (t - pt);
                        (eer, theta)
                    }
                }
            });
        }
        prev = Some((t, far, frr));
    }
    unreachable!("sentinel threshold guarantees a crossing");
}

/// EER per attack: all bona fide trials pooled against each attack's spoof
/// trials. Attacks with zero trials are omitted with a warning.
pub fn per_attack_breakdown(records: &[ScoreRecord]) -> Result<BTreeMap<String, f64>> {
    let mut attacks: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.label == Label::Spoof) {
        attacks.entry(r.attack_id.clone()).or_default().push(r);
    }
    let bona: Vec<ScoreRecord> =
        records.iter().filter(|r| r.label == Label::Bonafide).cloned().collect();
    if bona.is_empty() {
        return Err(Error::Input("per-attack breakdown needs bona fide trials".into()));
    }
    let mut out = BTreeMap::new();
    for (attack, recs) in attacks {
        if recs.is_empty() {
            log::warn!("attack {attack} has zero trials; omitted from breakdown");
            continue;
        }
        let mut pool = bona.clone();
        pool.extend(recs.into_iter().cloned());
        let (eer, _) = compute_eer(&pool)?;
        out.insert(attack, eer);
    }
    Ok(out)
}
