//! Session-level orchestration: preprocessing, feature extraction and
//! feature-table persistence.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    au_duration_features, au_intensity_features, emd_1d, mea_sync_features, wcc_duration,
    MeaMethod, WccParams,
};
use crate::error::{Error, Result};
use crate::prediction::{repeated_cv, CvOptions, CvReport, FeatureMatrix};
use crate::preprocess::{
    adaptive_half_width, exclude_low_quality, impute_linear, select_d_max, smooth,
    PreprocessConfig,
};
use crate::pursuit::{
    information_loss_from_errors, matching_pursuit, relative_error, Dictionary, DEFAULT_ATOMS,
    DEFAULT_SIGMAS,
};
use crate::session::{binarize_trust, Role, Session, Subject, AU_COLUMNS, K_AU, MEA_COLUMN};
use crate::warping::{AlignmentConstraints, WarpMethod, WarpingPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuitConfig {
    pub atoms: usize,
    pub sigmas: Vec<f64>,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        PursuitConfig {
            atoms: DEFAULT_ATOMS,
            sigmas: DEFAULT_SIGMAS.to_vec(),
        }
    }
}

/// Dictionaries shared across sessions of equal length.
#[derive(Default)]
pub struct DictionaryCache {
    sigmas: Vec<f64>,
    built: Mutex<HashMap<usize, Arc<Dictionary>>>,
}

impl DictionaryCache {
    pub fn new(sigmas: &[f64]) -> Self {
        DictionaryCache {
            sigmas: sigmas.to_vec(),
            built: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, length: usize) -> Result<Arc<Dictionary>> {
        if let Some(d) = self.built.lock().expect("cache lock").get(&length) {
            return Ok(d.clone());
        }
        let dict = Arc::new(Dictionary::new(length, &self.sigmas)?);
        Ok(self
            .built
            .lock()
            .expect("cache lock")
            .entry(length)
            .or_insert(dict)
            .clone())
    }
}

/// A session after smoothing, optional imputation and sparse reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSession {
    /// Channels hold the reconstructions; confidence is the smoothed series.
    pub session: Session,
    pub d_max: [usize; 2],
    /// Relative reconstruction error per subject and channel.
    pub errors: [Vec<Option<f64>>; 2],
}

fn process_subject(
    subject: &Subject,
    cfg: &PreprocessConfig,
    pursuit: &PursuitConfig,
    dict: &Dictionary,
) -> Result<(Subject, usize, Vec<Option<f64>>)> {
    let d_max = select_d_max(&subject.confidence, cfg)?;
    let widths = adaptive_half_width(&subject.confidence, d_max);
    let conf = smooth(&subject.confidence, &widths)?;
    let mut channels = Vec::with_capacity(K_AU);
    let mut errors = Vec::with_capacity(K_AU);
    for (k, raw) in subject.channels.iter().enumerate() {
        let wrap = |e: Error| Error::Channel {
            channel: AU_COLUMNS[k].to_string(),
            source: Box::new(e),
        };
        let mut x = smooth(raw, &widths).map_err(wrap)?;
        if cfg.impute {
            x = impute_linear(&x, &conf, cfg.tau).map_err(wrap)?;
        }
        let dec = matching_pursuit(&x, dict, pursuit.atoms).map_err(wrap)?;
        errors.push(relative_error(&x, &dec.reconstruction)?);
        channels.push(dec.reconstruction);
    }
    Ok((
        Subject {
            channels,
            confidence: conf,
            mea: subject.mea.clone(),
        },
        d_max,
        errors,
    ))
}

/// Smoothing, then imputation when enabled, then matching pursuit, for each
/// subject with its own d_max.
pub fn preprocess_session(
    session: &Session,
    cfg: &PreprocessConfig,
    pursuit: &PursuitConfig,
    dicts: &DictionaryCache,
) -> Result<ProcessedSession> {
    let dict = dicts.get(session.frames())?;
    let (h, dh, eh) = process_subject(&session.subjects[0], cfg, pursuit, &dict)?;
    let (t, dt, et) = process_subject(&session.subjects[1], cfg, pursuit, &dict)?;
    Ok(ProcessedSession {
        session: Session::new(
            session.id.clone(),
            session.frame_rate_hz,
            [h, t],
            session.trust_amount,
        )?,
        d_max: [dh, dt],
        errors: [eh, et],
    })
}

#[derive(Debug, Default)]
pub struct PreprocessOutcome {
    pub retained: Vec<ProcessedSession>,
    pub excluded: Vec<String>,
    pub failed: Vec<(String, Error)>,
}

/// Quality gate followed by per-session preprocessing in parallel. A failing
/// session is reported and skipped; input order is preserved.
pub fn preprocess_sessions(
    sessions: Vec<Session>,
    cfg: &PreprocessConfig,
    pursuit: &PursuitConfig,
) -> Result<PreprocessOutcome> {
    cfg.validate()?;
    if pursuit.atoms == 0 {
        return Err(Error::InvalidArgument("mp_atoms must be positive".into()));
    }
    let (kept, excluded) = exclude_low_quality(sessions, cfg);
    let dicts = DictionaryCache::new(&pursuit.sigmas);
    let results: Vec<(String, Result<ProcessedSession>)> = kept
        .par_iter()
        .map(|s| (s.id.clone(), preprocess_session(s, cfg, pursuit, &dicts)))
        .collect();
    let mut out = PreprocessOutcome {
        excluded,
        ..PreprocessOutcome::default()
    };
    for (id, r) in results {
        match r {
            Ok(p) => out.retained.push(p),
            Err(e) => out.failed.push((id, e)),
        }
    }
    Ok(out)
}

/// Information loss per AU channel, in [0, 1].
pub fn loss_report(processed: &[ProcessedSession]) -> Result<Vec<(String, f64)>> {
    if processed.is_empty() {
        return Err(Error::EmptyInput("no processed sessions".into()));
    }
    (0..K_AU)
        .map(|k| {
            let slot = |s: usize| -> Vec<Option<f64>> {
                processed.iter().map(|p| p.errors[s][k]).collect()
            };
            information_loss_from_errors(AU_COLUMNS[k], &slot(0), &slot(1))
                .map(|l| (AU_COLUMNS[k].to_string(), l))
        })
        .collect()
}

/// Every per-session feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMethod {
    Warp(WarpMethod),
    Wcc,
    Emd,
    AuDuration(Role),
    AuIntensity(Role),
    Mea(MeaMethod),
}

impl FeatureMethod {
    pub const ALL: [FeatureMethod; 12] = [
        FeatureMethod::Warp(WarpMethod::WpDdtw),
        FeatureMethod::Warp(WarpMethod::WpDtw),
        FeatureMethod::Warp(WarpMethod::DistDdtw),
        FeatureMethod::Warp(WarpMethod::DistDtw),
        FeatureMethod::Wcc,
        FeatureMethod::Emd,
        FeatureMethod::AuDuration(Role::H),
        FeatureMethod::AuDuration(Role::T),
        FeatureMethod::AuIntensity(Role::H),
        FeatureMethod::AuIntensity(Role::T),
        FeatureMethod::Mea(MeaMethod::WpMeddev),
        FeatureMethod::Mea(MeaMethod::WccDuration),
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMethod::Warp(WarpMethod::WpDdtw) => "wp_ddtw",
            FeatureMethod::Warp(WarpMethod::WpDtw) => "wp_dtw",
            FeatureMethod::Warp(WarpMethod::DistDdtw) => "dist_ddtw",
            FeatureMethod::Warp(WarpMethod::DistDtw) => "dist_dtw",
            FeatureMethod::Wcc => "wcc",
            FeatureMethod::Emd => "emd",
            FeatureMethod::AuDuration(Role::H) => "au_duration_h",
            FeatureMethod::AuDuration(Role::T) => "au_duration_t",
            FeatureMethod::AuIntensity(Role::H) => "au_intensity_h",
            FeatureMethod::AuIntensity(Role::T) => "au_intensity_t",
            FeatureMethod::Mea(MeaMethod::WpMeddev) => "wp_mea",
            FeatureMethod::Mea(MeaMethod::WccDuration) => "wcc_mea",
        }
    }

    pub fn feature_names(self) -> Vec<String> {
        match self {
            FeatureMethod::Mea(_) => vec![MEA_COLUMN.to_string()],
            _ => AU_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn is_warp(self) -> bool {
        matches!(self, FeatureMethod::Warp(_))
    }
}

impl fmt::Display for FeatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = FeatureMethod::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown method `{s}`; valid methods: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Parameters shared by the feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub theta_seconds: f64,
    pub wcc: WccParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            theta_seconds: crate::warping::DEFAULT_THETA_SECONDS,
            wcc: WccParams::default(),
        }
    }
}

fn per_channel<F>(session: &Session, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let [h, t] = &session.subjects;
    (0..K_AU)
        .map(|k| {
            f(&h.channels[k], &t.channels[k]).map_err(|e| Error::Channel {
                channel: AU_COLUMNS[k].to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn session_features(session: &Session, method: FeatureMethod, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let constraints = AlignmentConstraints::new(cfg.theta_seconds, session.frame_rate_hz)?;
    match method {
        FeatureMethod::Warp(w) => crate::warping::session_sync_features(session, w, &constraints),
        FeatureMethod::Wcc => per_channel(session, |a, b| {
            wcc_duration(a, b, &cfg.wcc, session.frame_rate_hz)
        }),
        // Reconstructions can dip slightly below zero; mass must be non-negative.
        FeatureMethod::Emd => per_channel(session, |a, b| {
            let clip = |x: &[f64]| x.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>();
            emd_1d(&clip(a), &clip(b))
        }),
        FeatureMethod::AuDuration(r) => Ok(au_duration_features(session, r)),
        FeatureMethod::AuIntensity(r) => Ok(au_intensity_features(session, r)),
        FeatureMethod::Mea(m) => Ok(vec![mea_sync_features(session, m, &cfg.wcc, &constraints)?]),
    }
}

/// Optimal paths per AU channel for a warping method.
pub fn session_paths(session: &Session, method: WarpMethod, cfg: &FeatureConfig) -> Result<Vec<WarpingPath>> {
    let constraints = AlignmentConstraints::new(cfg.theta_seconds, session.frame_rate_hz)?;
    let [h, t] = &session.subjects;
    (0..K_AU)
        .map(|k| method.align(&h.channels[k], &t.channels[k], &constraints))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub session_id: String,
    /// Trust class, when the session is labelled.
    pub trust_class: Option<u8>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    /// Labelled rows as a design matrix, plus the ids of unlabelled rows.
    pub fn to_matrix(&self) -> Result<(FeatureMatrix, Vec<String>)> {
        let (labelled, unlabelled): (Vec<&FeatureRow>, Vec<&FeatureRow>) =
            self.rows.iter().partition(|r| r.trust_class.is_some());
        let x = FeatureMatrix::new(
            labelled.iter().map(|r| r.session_id.clone()).collect(),
            self.feature_names.clone(),
            labelled.iter().map(|r| r.values.clone()).collect(),
            labelled.iter().map(|r| r.trust_class.unwrap_or(0)).collect(),
        )?;
        Ok((x, unlabelled.iter().map(|r| r.session_id.clone()).collect()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["session_id".to_string(), "trust_class".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            let mut rec = vec![
                r.session_id.clone(),
                r.trust_class.map(|c| c.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        for (i, name) in ["session_id", "trust_class"].iter().enumerate() {
            if header.get(i).map(String::as_str) != Some(name) {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                });
            }
        }
        let feature_names = header[2..].to_vec();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let bad = |column: &str, value: &str| Error::NonNumeric {
                path: path.to_path_buf(),
                row: i + 1,
                column: column.to_string(),
                value: value.to_string(),
            };
            let class = rec.get(1).unwrap_or("").trim();
            let trust_class = if class.is_empty() {
                None
            } else {
                Some(class.parse::<u8>().map_err(|_| bad("trust_class", class))?)
            };
            let values = feature_names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let v = rec.get(j + 2).unwrap_or("").trim();
                    v.parse::<f64>().map_err(|_| bad(name, v))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(FeatureRow {
                session_id: rec.get(0).unwrap_or("").to_string(),
                trust_class,
                values,
            });
        }
        Ok(FeatureTable {
            feature_names,
            rows,
        })
    }
}

#[derive(Debug)]
pub struct FeatureOutcome {
    pub table: FeatureTable,
    pub failed: Vec<(String, Error)>,
}

/// Features for every session in parallel; sessions whose extraction fails
/// are dropped and reported.
pub fn compute_features(sessions: &[Session], method: FeatureMethod, cfg: &FeatureConfig) -> Result<FeatureOutcome> {
    cfg.wcc.validate()?;
    let results: Vec<Result<FeatureRow>> = sessions
        .par_iter()
        .map(|s| {
            let trust_class = s.trust_amount.map(binarize_trust).transpose()?.map(|l| l.as_u8());
            Ok(FeatureRow {
                session_id: s.id.clone(),
                trust_class,
                values: session_features(s, method, cfg)?,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (s, r) in sessions.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failed.push((s.id.clone(), e)),
        }
    }
    Ok(FeatureOutcome {
        table: FeatureTable {
            feature_names: method.feature_names(),
            rows,
        },
        failed,
    })
}

/// One row of a Θ sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub theta_seconds: f64,
    pub class_accuracy: [f64; 2],
    pub overall_accuracy: f64,
}

/// Recomputes warping features and reruns cross-validation for each Θ.
pub fn theta_sweep(
    sessions: &[Session],
    method: WarpMethod,
    thetas: &[f64],
    base: &FeatureConfig,
    cv: &CvOptions,
) -> Result<Vec<ThetaRow>> {
    thetas
        .iter()
        .map(|&theta_seconds| {
            let cfg = FeatureConfig {
                theta_seconds,
                ..*base
            };
            let out = compute_features(sessions, FeatureMethod::Warp(method), &cfg)?;
            if let Some((id, e)) = out.failed.into_iter().next() {
                return Err(Error::InvalidArgument(format!("session {id}: {e}")));
            }
            let (x, _) = out.table.to_matrix()?;
            let report = repeated_cv(&x, cv)?;
            Ok(ThetaRow {
                theta_seconds,
                class_accuracy: report.class_accuracy,
                overall_accuracy: report.overall_accuracy,
            })
        })
        .collect()
}

/// A row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model_name: String,
    pub measure: String,
    pub features: String,
    pub class0_acc: f64,
    pub class1_acc: f64,
    pub overall_acc: f64,
}

impl TableRow {
    pub fn from_report(report: &CvReport) -> Self {
        TableRow {
            model_name: report.model_name.clone().unwrap_or_default(),
            measure: report.measure.clone().unwrap_or_default(),
            features: report.features.clone().unwrap_or_default(),
            class0_acc: report.class_accuracy[0],
            class1_acc: report.class_accuracy[1],
            overall_acc: report.overall_accuracy,
        }
    }
}

/// Measure label and default model name for a feature method.
pub fn describe_method(method: FeatureMethod) -> (&'static str, &'static str) {
    match method {
        FeatureMethod::Warp(WarpMethod::WpDdtw) => ("WP-DDTW", "WP-meddev"),
        FeatureMethod::Warp(WarpMethod::WpDtw) => ("WP-DTW", "WP-meddev"),
        FeatureMethod::Warp(WarpMethod::DistDdtw) => ("DDTW-distance", "DDTW distance"),
        FeatureMethod::Warp(WarpMethod::DistDtw) => ("DTW-distance", "DTW distance"),
        FeatureMethod::Wcc => ("WCC-AUs", "WCC (duration)"),
        FeatureMethod::Emd => ("EMD", "EMD"),
        FeatureMethod::AuDuration(Role::H) => ("AU-durations (H)", "AU duration"),
        FeatureMethod::AuDuration(Role::T) => ("AU-durations (T)", "AU duration"),
        FeatureMethod::AuIntensity(Role::H) => ("AU-intensities (H)", "AU intensity"),
        FeatureMethod::AuIntensity(Role::T) => ("AU-intensities (T)", "AU intensity"),
        FeatureMethod::Mea(MeaMethod::WpMeddev) => ("WP-MEA", "WP-meddev"),
        FeatureMethod::Mea(MeaMethod::WccDuration) => ("WCC-MEA", "WCC (duration)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_sessions, SynthSpec};

    fn small() -> Vec<Session> {
        generate_synthetic_sessions(&SynthSpec {
            n_sessions: 4,
            n_coupled: 2,
            frames: 400,
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in FeatureMethod::ALL {
            assert_eq!(m.name().parse::<FeatureMethod>().unwrap(), m);
        }
        let err = "wp_foo".parse::<FeatureMethod>().unwrap_err().to_string();
        assert!(err.contains("wp_ddtw") && err.contains("wcc_mea"));
    }

    #[test]
    fn preprocessing_keeps_shape_and_reports_loss() {
        let out = preprocess_sessions(small(), &PreprocessConfig::default(), &PursuitConfig::default()).unwrap();
        assert_eq!(out.retained.len(), 4);
        assert!(out.excluded.is_empty() && out.failed.is_empty());
        for p in &out.retained {
            assert_eq!(p.session.frames(), 400);
            assert_eq!(p.d_max, [1, 1]);
        }
        let loss = loss_report(&out.retained).unwrap();
        assert_eq!(loss.len(), K_AU);
        assert!(loss.iter().all(|(_, l)| (0.0..1.0).contains(l)));
    }

    #[test]
    fn identical_subjects_give_zero_warp_features() {
        let mut s = small().remove(0);
        s.subjects[1] = s.subjects[0].clone();
        let f = session_features(&s, FeatureMethod::Warp(WarpMethod::WpDdtw), &FeatureConfig::default()).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_mea_fails_only_that_session() {
        let out = compute_features(&small(), FeatureMethod::Mea(MeaMethod::WpMeddev), &FeatureConfig::default()).unwrap();
        assert!(out.table.rows.is_empty());
        assert_eq!(out.failed.len(), 4);
    }

    #[test]
    fn feature_table_round_trip() {
        let out = compute_features(&small(), FeatureMethod::Emd, &FeatureConfig::default()).unwrap();
        let mut table = out.table;
        table.rows[1].trust_class = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        table.write_csv(&path).unwrap();
        assert_eq!(FeatureTable::read_csv(&path).unwrap(), table);
        let (x, dropped) = table.to_matrix().unwrap();
        assert_eq!(x.len(), 3);
        assert_eq!(dropped, vec![table.rows[1].session_id.clone()]);
    }
}
