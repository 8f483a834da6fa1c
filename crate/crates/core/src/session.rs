//! Dyadic session data model and OpenFace-style CSV ingestion.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of action-unit channels per subject.
pub const K_AU: usize = 17;

/// OpenFace intensity column names, in channel order.
pub const AU_COLUMNS: [&str; K_AU] = [
    "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r", "AU12_r",
    "AU14_r", "AU15_r", "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r", "AU45_r",
];

/// Human-readable names for the channels in [`AU_COLUMNS`].
pub const AU_LABELS: [&str; K_AU] = [
    "Inner Brow",
    "Outer Brow",
    "Brow Lower",
    "Lid Raise",
    "Cheek Raise",
    "Lid Tighten",
    "Nose Wrinkle",
    "Lip Raise",
    "Lip Pull",
    "Dimple",
    "Lip Corner",
    "Chin Raise",
    "Lip Stretch",
    "Lip Tighten",
    "Lip Part",
    "Jaw Drop",
    "Blink",
];

pub const MEA_COLUMN: &str = "mea";

/// Legal amounts H can send in the trust game.
pub const TRUST_AMOUNTS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Which player a subject record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    H,
    T,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::H => 0,
            Role::T => 1,
        }
    }
}

/// Binary trust outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrustLabel {
    Class0,
    Class1,
}

impl TrustLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            TrustLabel::Class0 => 0,
            TrustLabel::Class1 => 1,
        }
    }
}

/// One participant's per-frame record: 17 AU intensity channels, the tracker
/// confidence, and an optional precomputed motion-energy series.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub channels: Vec<Vec<f64>>,
    pub confidence: Vec<f64>,
    pub mea: Option<Vec<f64>>,
}

impl Subject {
    pub fn frames(&self) -> usize {
        self.confidence.len()
    }

    pub fn truncate(&mut self, frames: usize) {
        for c in &mut self.channels {
            c.truncate(frames);
        }
        self.confidence.truncate(frames);
        if let Some(m) = &mut self.mea {
            m.truncate(frames);
        }
    }

    fn validate(&self, frames: usize) -> Result<()> {
        if self.channels.len() != K_AU {
            return Err(Error::LengthMismatch {
                expected: K_AU,
                got: self.channels.len(),
            });
        }
        let series = self
            .channels
            .iter()
            .chain(std::iter::once(&self.confidence))
            .chain(self.mea.iter());
        for s in series {
            if s.len() != frames {
                return Err(Error::LengthMismatch {
                    expected: frames,
                    got: s.len(),
                });
            }
        }
        Ok(())
    }
}

/// One dyadic interaction. Subject 0 is H, subject 1 is T.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub frame_rate_hz: f64,
    pub subjects: [Subject; 2],
    pub trust_amount: Option<f64>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        frame_rate_hz: f64,
        subjects: [Subject; 2],
        trust_amount: Option<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "session `{id}`: frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        let frames = subjects[0].frames();
        if frames == 0 {
            return Err(Error::Degenerate(format!("session `{id}` has no frames")));
        }
        subjects[0].validate(frames)?;
        subjects[1].validate(frames)?;
        if let Some(a) = trust_amount {
            binarize_trust(a)?;
        }
        Ok(Session {
            id,
            frame_rate_hz,
            subjects,
            trust_amount,
        })
    }

    /// M_n, shared by both subjects.
    pub fn frames(&self) -> usize {
        self.subjects[0].frames()
    }

    pub fn subject(&self, role: Role) -> &Subject {
        &self.subjects[role.index()]
    }

    pub fn label(&self) -> Option<TrustLabel> {
        self.trust_amount.and_then(|a| binarize_trust(a).ok())
    }
}

/// Maps a trust-game amount to its binary class: only the full dollar is class 1.
pub fn binarize_trust(amount: f64) -> Result<TrustLabel> {
    let legal = TRUST_AMOUNTS.iter().any(|&a| (a - amount).abs() < 1e-9);
    if !legal {
        return Err(Error::IllegalTrustAmount(amount));
    }
    if (amount - 1.0).abs() < 1e-9 {
        Ok(TrustLabel::Class1)
    } else {
        Ok(TrustLabel::Class0)
    }
}

/// Raw contents of one subject CSV.
#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub subject: Subject,
    pub timestamps: Vec<f64>,
}

impl SubjectRecord {
    /// Frame rate measured from the timestamp column.
    pub fn frame_rate(&self, path: &Path) -> Result<f64> {
        let n = self.timestamps.len();
        if n < 2 {
            return Err(Error::Degenerate(format!(
                "{}: at least two frames are needed to measure the frame rate",
                path.display()
            )));
        }
        let span = self.timestamps[n - 1] - self.timestamps[0];
        if !(span > 0.0) {
            return Err(Error::Degenerate(format!(
                "{}: timestamps do not increase",
                path.display()
            )));
        }
        Ok((n - 1) as f64 / span)
    }
}

fn parse_cell(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Reads one per-subject CSV. `check_ranges` enforces raw-data bounds
/// (AU intensities in [0, 5]); processed files skip it because matching-pursuit
/// reconstructions may overshoot.
pub fn read_subject_csv(path: &Path, check_ranges: bool) -> Result<SubjectRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| {
        index.get(name).copied().ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let frame_col = column("frame")?;
    let ts_col = column("timestamp")?;
    let conf_col = column("confidence")?;
    let au_cols = AU_COLUMNS
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let mea_col = index.get(MEA_COLUMN).copied();

    let mut timestamps = Vec::new();
    let mut confidence = Vec::new();
    let mut channels = vec![Vec::new(); K_AU];
    let mut mea = mea_col.map(|_| Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = i + 1;
        let get = |col: usize, name: &str| {
            parse_cell(path, row, name, record.get(col).unwrap_or(""))
        };
        get(frame_col, "frame")?;
        timestamps.push(get(ts_col, "timestamp")?);
        let c = get(conf_col, "confidence")?;
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::OutOfRange {
                path: path.to_path_buf(),
                row,
                column: "confidence".into(),
                value: c,
                lo: 0.0,
                hi: 1.0,
            });
        }
        confidence.push(c);
        for (k, &col) in au_cols.iter().enumerate() {
            let v = get(col, AU_COLUMNS[k])?;
            if check_ranges && !(0.0..=5.0).contains(&v) {
                return Err(Error::OutOfRange {
                    path: path.to_path_buf(),
                    row,
                    column: AU_COLUMNS[k].into(),
                    value: v,
                    lo: 0.0,
                    hi: 5.0,
                });
            }
            channels[k].push(v);
        }
        if let (Some(col), Some(m)) = (mea_col, mea.as_mut()) {
            let v = get(col, MEA_COLUMN)?;
            if check_ranges && v < 0.0 {
                return Err(Error::OutOfRange {
                    path: path.to_path_buf(),
                    row,
                    column: MEA_COLUMN.into(),
                    value: v,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
            m.push(v);
        }
    }
    if confidence.is_empty() {
        return Err(Error::ZeroFrames(path.to_path_buf()));
    }
    Ok(SubjectRecord {
        subject: Subject {
            channels,
            confidence,
            mea,
        },
        timestamps,
    })
}

/// Writes a subject in the input CSV schema. Timestamps are regenerated from
/// the frame rate.
pub fn write_subject_csv(path: &Path, subject: &Subject, frame_rate_hz: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("frame,timestamp,confidence");
    for c in AU_COLUMNS {
        header.push(',');
        header.push_str(c);
    }
    if subject.mea.is_some() {
        header.push_str(",mea");
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for m in 0..subject.frames() {
        let mut line = format!(
            "{},{},{}",
            m + 1,
            m as f64 / frame_rate_hz,
            subject.confidence[m]
        );
        for ch in &subject.channels {
            line.push(',');
            line.push_str(&ch[m].to_string());
        }
        if let Some(mea) = &subject.mea {
            line.push(',');
            line.push_str(&mea[m].to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Loads a dyad from its two subject files. Unequal frame counts are
/// reconciled by truncating to the shorter recording.
pub fn load_session(
    id: &str,
    h_csv: &Path,
    t_csv: &Path,
    trust_amount: Option<f64>,
    check_ranges: bool,
) -> Result<Session> {
    let h = read_subject_csv(h_csv, check_ranges)?;
    let t = read_subject_csv(t_csv, check_ranges)?;
    let fh = h.frame_rate(h_csv)?;
    let ft = t.frame_rate(t_csv)?;
    if ((fh - ft) / fh).abs() > 1e-2 {
        return Err(Error::FrameRateMismatch { h: fh, t: ft });
    }
    let (mut hs, mut ts) = (h.subject, t.subject);
    let frames = hs.frames().min(ts.frames());
    if hs.frames() != ts.frames() {
        log::warn!(
            "session {id}: frame counts differ ({} vs {}), truncating to {frames}",
            hs.frames(),
            ts.frames()
        );
        hs.truncate(frames);
        ts.truncate(frames);
    }
    Session::new(id, fh, [hs, ts], trust_amount)
}

/// One row of a session manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub session_id: String,
    pub h_csv: PathBuf,
    pub t_csv: PathBuf,
    pub trust_amount: Option<f64>,
}

/// Reads `session_id, h_csv, t_csv, trust_amount`. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (ci, ch, ct, ca) = (
        find("session_id")?,
        find("h_csv")?,
        find("t_csv")?,
        find("trust_amount")?,
    );
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        let amount = field(ca);
        let trust_amount = if amount.is_empty() {
            None
        } else {
            Some(parse_cell(path, i + 1, "trust_amount", &amount)?)
        };
        out.push(ManifestEntry {
            session_id: field(ci),
            h_csv: base.join(field(ch)),
            t_csv: base.join(field(ct)),
            trust_amount,
        });
    }
    Ok(out)
}

/// Writes a manifest with paths relative to the manifest's directory when possible.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let rel = |p: &Path| {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    w.write_record(["session_id", "h_csv", "t_csv", "trust_amount"])
        .map_err(|e| Error::csv(path, e))?;
    for e in entries {
        let amount = e.trust_amount.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([e.session_id.clone(), rel(&e.h_csv), rel(&e.t_csv), amount])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a session's two subject files into `dir` and returns its manifest row.
pub fn save_session(dir: &Path, session: &Session) -> Result<ManifestEntry> {
    let h = dir.join(format!("{}_H.csv", session.id));
    let t = dir.join(format!("{}_T.csv", session.id));
    write_subject_csv(&h, &session.subjects[0], session.frame_rate_hz)?;
    write_subject_csv(&t, &session.subjects[1], session.frame_rate_hz)?;
    Ok(ManifestEntry {
        session_id: session.id.clone(),
        h_csv: h,
        t_csv: t,
        trust_amount: session.trust_amount,
    })
}

pub fn load_manifest_entry(entry: &ManifestEntry, check_ranges: bool) -> Result<Session> {
    load_session(
        &entry.session_id,
        &entry.h_csv,
        &entry.t_csv,
        entry.trust_amount,
        check_ranges,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(frames: usize, value: f64) -> Subject {
        Subject {
            channels: vec![vec![value; frames]; K_AU],
            confidence: vec![1.0; frames],
            mea: None,
        }
    }

    #[test]
    fn binarization_table() {
        assert_eq!(binarize_trust(1.0).unwrap(), TrustLabel::Class1);
        assert_eq!(binarize_trust(0.8).unwrap(), TrustLabel::Class0);
        assert_eq!(binarize_trust(0.0).unwrap(), TrustLabel::Class0);
        let classes: Vec<u8> = TRUST_AMOUNTS
            .iter()
            .map(|&a| binarize_trust(a).unwrap().as_u8())
            .collect();
        assert_eq!(classes, vec![0, 0, 0, 0, 0, 1]);
        assert!(matches!(
            binarize_trust(0.5),
            Err(Error::IllegalTrustAmount(_))
        ));
        assert!(binarize_trust(1.2).is_err());
    }

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let s = Session::new("s1", 30.0, [subject(5400, 1.5), subject(5400, 0.5)], Some(1.0))
            .unwrap();
        let entry = save_session(dir.path(), &s).unwrap();
        let loaded = load_manifest_entry(&entry, true).unwrap();
        assert_eq!(loaded.frames(), 5400);
        assert!((loaded.frame_rate_hz - 30.0).abs() < 1e-9);
        assert_eq!(loaded.subjects, s.subjects);

        let short = Session::new("s2", 30.0, [subject(5395, 1.0), subject(5395, 1.0)], None)
            .unwrap();
        let e2 = save_session(dir.path(), &short).unwrap();
        let mixed = load_session("mix", &entry.h_csv, &e2.t_csv, None, true).unwrap();
        assert_eq!(mixed.frames(), 5395);
        assert_eq!(mixed.subjects[0].channels[3].len(), 5395);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let s = Session::new("s", 30.0, [subject(10, 1.0), subject(10, 1.0)], None).unwrap();
        let entry = save_session(dir.path(), &s).unwrap();
        let text = std::fs::read_to_string(&entry.h_csv).unwrap();
        let stripped: String = text
            .lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                let keep: Vec<&str> = cols[..cols.len() - 1].to_vec();
                keep.join(",") + "\n"
            })
            .collect();
        std::fs::write(&entry.h_csv, stripped).unwrap();
        match read_subject_csv(&entry.h_csv, true) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "AU45_r"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn bad_cells_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut header = String::from("frame,timestamp,confidence");
        for c in AU_COLUMNS {
            header += ",";
            header += c;
        }
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, format!("{header}\n")).unwrap();
        assert!(matches!(read_subject_csv(&p, true), Err(Error::ZeroFrames(_))));

        let mut row = String::from("1,0.0,abc");
        for _ in 0..K_AU {
            row += ",0";
        }
        std::fs::write(&p, format!("{header}\n{row}\n")).unwrap();
        assert!(matches!(
            read_subject_csv(&p, true),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn frame_rate_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = Session::new("a", 30.0, [subject(50, 1.0), subject(50, 1.0)], None).unwrap();
        let b = Session::new("b", 25.0, [subject(50, 1.0), subject(50, 1.0)], None).unwrap();
        let ea = save_session(dir.path(), &a).unwrap();
        let eb = save_session(dir.path(), &b).unwrap();
        assert!(matches!(
            load_session("x", &ea.h_csv, &eb.t_csv, None, true),
            Err(Error::FrameRateMismatch { .. })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let entries = vec![
            ManifestEntry {
                session_id: "a".into(),
                h_csv: dir.path().join("a_H.csv"),
                t_csv: dir.path().join("a_T.csv"),
                trust_amount: Some(0.4),
            },
            ManifestEntry {
                session_id: "b".into(),
                h_csv: dir.path().join("b_H.csv"),
                t_csv: dir.path().join("b_T.csv"),
                trust_amount: None,
            },
        ];
        write_manifest(&path, &entries).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.contains("a,a_H.csv,a_T.csv,0.4"));
    }
}
