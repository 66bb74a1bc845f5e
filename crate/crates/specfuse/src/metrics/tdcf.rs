//! Minimum normalized tandem detection cost function.
//!
//! The countermeasure is scored in tandem with a fixed automatic speaker
//! verification system characterized by its operating point. Cost constants
//! and priors follow the ASVspoof2019 LA evaluation convention; the ASV
//! operating point is supplied by configuration (or measured externally from
//! ASV scores) since it is a property of the deployment, not of this toolkit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{split_scores, sweep_thresholds, ScoreRecord};

/// Fixed ASV error rates entering the tandem cost.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AsvOperatingPoint {
    /// P(ASV rejects a target speaker).
    pub p_miss_asv: f64,
    /// P(ASV accepts a nontarget speaker).
    pub p_fa_asv: f64,
    /// P(ASV accepts a spoofed trial), i.e. 1 - P_miss,spoof.
    pub p_spoof_accept_asv: f64,
}

impl Default for AsvOperatingPoint {
    fn default() -> Self {
        // nominal operating point; override with measured ASV rates when
        // scoring against a concrete verification system
        AsvOperatingPoint { p_miss_asv: 0.05, p_fa_asv: 0.01, p_spoof_accept_asv: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TdcfParams {
    /// Cost of a miss (applies to both ASV and CM misses).
    pub c_miss: f64,
    /// Cost of a false acceptance (both systems).
    pub c_fa: f64,
    /// Prior of a target trial.
    pub p_tar: f64,
    /// Prior of a nontarget (zero-effort impostor) trial.
    pub p_non: f64,
    /// Prior of a spoofing attack.
    pub p_spoof: f64,
    pub asv: AsvOperatingPoint,
}

impl Default for TdcfParams {
    fn default() -> Self {
        TdcfParams {
            c_miss: 1.0,
            c_fa: 10.0,
            p_tar: 0.9405,
            p_non: 0.0095,
            p_spoof: 0.05,
            asv: AsvOperatingPoint::default(),
        }
    }
}

impl TdcfParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_tar <= 0.0 || self.p_non <= 0.0 || self.p_spoof <= 0.0 {
            return Err(Error::Config("t-DCF priors must all be positive".into()));
        }
        if (self.p_tar + self.p_non + self.p_spoof - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "t-DCF priors must sum to 1, got {}",
                self.p_tar + self.p_non + self.p_spoof
            )));
        }
        if self.c_miss <= 0.0 || self.c_fa <= 0.0 {
            return Err(Error::Config("t-DCF costs must be positive".into()));
        }
        for (name, r) in [
            ("p_miss_asv", self.asv.p_miss_asv),
            ("p_fa_asv", self.asv.p_fa_asv),
            ("p_spoof_accept_asv", self.asv.p_spoof_accept_asv),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {r}")));
            }
        }
        let (c1, c2) = self.weights();
        if c1 <= 0.0 || c2 <= 0.0 {
            return Err(Error::Config(format!(
                "degenerate t-DCF weights (C1={c1}, C2={c2}); check the ASV operating point"
            )));
        }
        Ok(())
    }

    /// The two constants multiplying the CM miss and false-alarm rates.
    pub fn weights(&self) -> (f64, f64) {
        let c1 = self.p_tar * self.c_miss * (1.0 - self.asv.p_miss_asv)
            - self.p_non * self.c_fa * self.asv.p_fa_asv;
        let c2 = self.c_fa * self.p_spoof * self.asv.p_spoof_accept_asv;
        (c1, c2)
    }
}

/// Normalized t-DCF minimized over the countermeasure threshold.
/// Returns (min_tdcf, threshold); the value lies in [0, 1].
pub fn compute_min_tdcf(records: &[ScoreRecord], params: &TdcfParams) -> Result<(f64, f64)> {
    params.validate()?;
    let (bona, spoof) = split_scores(records)?;
    let (c1, c2) = params.weights();
    let norm = c1.min(c2);
    let mut thresholds = sweep_thresholds(&bona, &spoof);
    // sentinel below the minimum: everything accepted (P_miss=0, P_fa=1)
    let lo = thresholds[0] - (thresholds[thresholds.len() - 1] - thresholds[0]).abs().max(1.0);
    thresholds.insert(0, lo);
    let mut best = f64::INFINITY;
    let mut best_t = thresholds[0];
    for &t in &thresholds {
        let p_miss_cm = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
        let p_fa_cm = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
        let cost = (c1 * p_miss_cm + c2 * p_fa_cm) / norm;
        if cost < best {
            best = cost;
            best_t = t;
        }
    }
    Ok((best, best_t))
}
