//! Append-only files for finished human games.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hypsearch::grid::EpisodeStatus;
use hypsearch::learning::{write_demo_header, write_demo_steps, ConfigFingerprint, Demonstration};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const DEMO_FILE: &str = "human_demos.jsonl";
pub const FAILURE_FILE: &str = "human_failures.jsonl";

/// One line of the failure log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub session: String,
    pub episode_id: u64,
    pub status: EpisodeStatus,
    pub steps: usize,
    pub recorded_moves: usize,
    pub fingerprint: ConfigFingerprint,
}

impl FailureRecord {
    pub fn new(session: &str, status: EpisodeStatus, steps: usize, demo: &Demonstration<f64>) -> Self {
        Self {
            session: session.to_string(),
            episode_id: demo.episode_id,
            status,
            steps,
            recorded_moves: demo.steps.len(),
            fingerprint: demo.fingerprint.clone(),
        }
    }
}

pub struct DemoStore {
    dir: PathBuf,
    write: Mutex<()>,
}

impl DemoStore {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            write: Mutex::new(()),
        }
    }

    pub fn demo_path(&self) -> PathBuf {
        self.dir.join(DEMO_FILE)
    }

    pub fn failure_path(&self) -> PathBuf {
        self.dir.join(FAILURE_FILE)
    }

    /// Appends a header and the steps as one write.
    pub fn append_success(&self, demo: &Demonstration<f64>) -> Result<(), ServiceError> {
        let mut buf = Vec::new();
        write_demo_header(&mut buf, &demo.fingerprint).map_err(storage)?;
        write_demo_steps(&mut buf, demo).map_err(storage)?;
        self.append(&self.demo_path(), &buf)
    }

    pub fn append_failure(&self, record: &FailureRecord) -> Result<(), ServiceError> {
        let mut buf = serde_json::to_vec(record).map_err(storage)?;
        buf.push(b'\n');
        self.append(&self.failure_path(), &buf)
    }

    fn append(&self, path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
        let _guard = self.write.lock().expect("store lock poisoned");
        fs::create_dir_all(&self.dir).map_err(storage)?;
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(storage)?;
        f.write_all(bytes).map_err(storage)?;
        f.flush().map_err(storage)
    }
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}
