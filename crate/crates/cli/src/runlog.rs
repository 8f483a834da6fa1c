//! Append-only structured run log: one `key=value` line per event.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{Context, Result};

pub struct RunLog {
    file: Mutex<File>,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening run log {}", path.display()))?;
        Ok(RunLog {
            file: Mutex::new(file),
        })
    }

    /// Records `session_id`, `stage` and `outcome` plus optional detail.
    pub fn event(&self, session: &str, stage: &str, outcome: &str, detail: &str) {
        let mut line = format!("session_id={session} stage={stage} outcome={outcome}");
        if !detail.is_empty() {
            line.push_str(&format!(" detail={detail:?}"));
        }
        let mut f = self.file.lock().expect("run log lock");
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("could not write run log: {e}");
        }
    }
}
