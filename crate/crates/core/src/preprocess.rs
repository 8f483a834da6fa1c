//! Quality gating, confidence-adaptive smoothing and linear imputation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Confidence threshold τ.
    pub tau: f64,
    /// A session is dropped when more than this fraction of its frames fall below τ.
    pub exclusion_fraction: f64,
    pub impute: bool,
    /// d_max is searched in {1, …, ⌊M/divisor⌋}.
    pub d_max_cap_divisor: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            tau: 0.7,
            exclusion_fraction: 0.30,
            impute: false,
            d_max_cap_divisor: 10,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.exclusion_fraction) {
            return Err(Error::InvalidArgument(format!(
                "exclusion_fraction must lie in [0, 1], got {}",
                self.exclusion_fraction
            )));
        }
        if self.d_max_cap_divisor == 0 {
            return Err(Error::InvalidArgument(
                "d_max_cap_divisor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Frame-wise worst confidence over the two subjects.
pub fn min_confidence(session: &Session) -> Vec<f64> {
    session.subjects[0]
        .confidence
        .iter()
        .zip(&session.subjects[1].confidence)
        .map(|(a, b)| a.min(*b))
        .collect()
}

/// True when more than `fraction` of the frames have confidence below `tau`.
pub fn is_low_quality(confidence: &[f64], tau: f64, fraction: f64) -> bool {
    if confidence.is_empty() {
        return true;
    }
    let below = confidence.iter().filter(|&&c| c < tau).count();
    // Tolerance absorbs rounding in fraction·len at the exact boundary.
    below as f64 > fraction * confidence.len() as f64 + 1e-9 * confidence.len() as f64
}

/// Splits sessions into retained and excluded ids. A session is excluded when
/// its frame-wise worst confidence is below τ on more than the configured
/// fraction of frames. Retained order is preserved.
pub fn exclude_low_quality(
    sessions: Vec<Session>,
    cfg: &PreprocessConfig,
) -> (Vec<Session>, Vec<String>) {
    let mut retained = Vec::with_capacity(sessions.len());
    let mut excluded = Vec::new();
    for s in sessions {
        if is_low_quality(&min_confidence(&s), cfg.tau, cfg.exclusion_fraction) {
            excluded.push(s.id.clone());
        } else {
            retained.push(s);
        }
    }
    (retained, excluded)
}

/// Per-frame smoothing half-width, linear in confidence:
/// `d[m] = ⌊d_max − (d_max − 1)·c[m]⌋`.
pub fn adaptive_half_width(conf: &[f64], d_max: usize) -> Vec<usize> {
    let d = d_max.max(1) as f64;
    conf.iter()
        .map(|&c| {
            let w = (d - (d - 1.0) * c.clamp(0.0, 1.0)).floor();
            w.max(0.0) as usize
        })
        .collect()
}

/// Moving average with per-frame half-width; windows are clipped at the
/// session boundaries and averaged over their actual size.
pub fn smooth(signal: &[f64], half_widths: &[usize]) -> Result<Vec<f64>> {
    if signal.len() != half_widths.len() {
        return Err(Error::LengthMismatch {
            expected: signal.len(),
            got: half_widths.len(),
        });
    }
    let n = signal.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in signal {
        acc += x;
        prefix.push(acc);
    }
    Ok((0..n)
        .map(|m| {
            let d = half_widths[m];
            if d == 0 {
                return signal[m];
            }
            let lo = m.saturating_sub(d);
            let hi = (m + d).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
        })
        .collect())
}

/// Chooses d_max maximizing the number of frames whose self-smoothed
/// confidence reaches τ. Ties go to the smallest candidate.
pub fn select_d_max(conf: &[f64], cfg: &PreprocessConfig) -> Result<usize> {
    let cap = conf.len() / cfg.d_max_cap_divisor.max(1);
    if cap < 1 {
        return Err(Error::Degenerate(format!(
            "{} frames is too short to search d_max (need at least {})",
            conf.len(),
            cfg.d_max_cap_divisor
        )));
    }
    let mut best = (1, usize::MIN);
    for d_max in 1..=cap {
        let widths = adaptive_half_width(conf, d_max);
        let smoothed = smooth(conf, &widths)?;
        let good = smoothed.iter().filter(|&&c| c >= cfg.tau).count();
        if good > best.1 {
            best = (d_max, good);
        }
    }
    Ok(best.0)
}

/// Maximal runs `[start, end]` (0-based, inclusive) where `conf < tau`.
pub fn low_confidence_runs(conf: &[f64], tau: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (m, &c) in conf.iter().enumerate() {
        match (c < tau, start) {
            (true, None) => start = Some(m),
            (false, Some(s)) => {
                runs.push((s, m - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, conf.len() - 1));
    }
    runs
}

/// Replaces each low-confidence run with a straight line between its two
/// neighbouring frames. Runs touching either end of the session have a single
/// anchor and are filled with that anchor's value; a run covering the whole
/// session is left untouched.
pub fn impute_linear(signal: &[f64], smoothed_conf: &[f64], tau: f64) -> Result<Vec<f64>> {
    if signal.len() != smoothed_conf.len() {
        return Err(Error::LengthMismatch {
            expected: signal.len(),
            got: smoothed_conf.len(),
        });
    }
    let n = signal.len();
    let mut out = signal.to_vec();
    for (m1, m2) in low_confidence_runs(smoothed_conf, tau) {
        let left = m1.checked_sub(1).map(|i| signal[i]);
        let right = (m2 + 1 < n).then(|| signal[m2 + 1]);
        match (left, right) {
            (Some(a), Some(b)) => {
                let span = (m2 - m1 + 2) as f64;
                for m in m1..=m2 {
                    out[m] = a + ((m - m1 + 1) as f64 / span) * (b - a);
                }
            }
            (Some(a), None) | (None, Some(a)) => out[m1..=m2].fill(a),
            (None, None) => {}
        }
    }
    Ok(out)
}
