//! Demonstration records and their line-delimited file format.
//!
//! A file is a sequence of JSON lines. A `header` line carries the
//! configuration fingerprint for every `step` line after it, until the next
//! header; this lets demonstrations from separate sessions be appended to
//! one store.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::{FeatureVariant, Template3x3};
use crate::grid::{ActionClass, Board, GridCell, Orientation};
use crate::Scalar;

pub const DEMO_FORMAT_VERSION: u32 = 1;

/// What a demonstration (or model) was recorded under. Datasets may only mix
/// demonstrations with equal fingerprints.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub rows: usize,
    pub cols: usize,
    pub template: String,
    pub orientations: Vec<Orientation>,
    pub feature_variant: FeatureVariant,
}

impl ConfigFingerprint {
    pub fn board(&self) -> Result<Board, LearnError> {
        Board::new(self.rows, self.cols)
            .map_err(|e| LearnError::MalformedDemo(format!("fingerprint board: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoSource {
    Oracle,
    Human,
}

/// One expert move, with everything captured before the move was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DemoStep<T> {
    pub step: usize,
    /// Template at `agent_cell`.
    pub template: Template3x3<T>,
    /// Direction class; `None` for a move to a non-adjacent cell.
    pub action: Option<ActionClass>,
    pub agent_cell: GridCell,
    pub chosen_cell: GridCell,
    /// Full feature map, row-major.
    pub feature: Vec<T>,
    /// Opened cells.
    pub opened: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration<T> {
    pub episode_id: u64,
    pub source: DemoSource,
    pub fingerprint: ConfigFingerprint,
    pub steps: Vec<DemoStep<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
enum Line<T> {
    Header {
        format_version: u32,
        fingerprint: ConfigFingerprint,
    },
    Step {
        episode_id: u64,
        source: DemoSource,
        #[serde(flatten)]
        step: DemoStep<T>,
    },
}

pub fn write_demo_header<W: Write>(w: &mut W, fingerprint: &ConfigFingerprint) -> Result<(), LearnError> {
    let line: Line<f64> = Line::Header {
        format_version: DEMO_FORMAT_VERSION,
        fingerprint: fingerprint.clone(),
    };
    serde_json::to_writer(&mut *w, &line)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes the step lines of one demonstration (no header).
pub fn write_demo_steps<T: Scalar, W: Write>(
    w: &mut W,
    demo: &Demonstration<T>,
) -> Result<(), LearnError> {
    for step in &demo.steps {
        let line = Line::Step {
            episode_id: demo.episode_id,
            source: demo.source,
            step: step.clone(),
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_demos<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<Demonstration<T>>, LearnError> {
    let mut demos: Vec<Demonstration<T>> = Vec::new();
    let mut current: Option<ConfigFingerprint> = None;
    let mut fresh_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line<T> = serde_json::from_str(&line).map_err(|e| LearnError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            Line::Header {
                format_version,
                fingerprint,
            } => {
                if format_version != DEMO_FORMAT_VERSION {
                    return Err(LearnError::UnsupportedVersion(format_version));
                }
                current = Some(fingerprint);
                fresh_header = true;
            }
            Line::Step {
                episode_id,
                source,
                step,
            } => {
                let fp = current.clone().ok_or(LearnError::Parse {
                    line: i + 1,
                    message: "step record before any header".into(),
                })?;
                match demos.last_mut() {
                    Some(d) if !fresh_header && d.episode_id == episode_id && d.source == source => {
                        d.steps.push(step)
                    }
                    _ => demos.push(Demonstration {
                        episode_id,
                        source,
                        fingerprint: fp,
                        steps: vec![step],
                    }),
                }
                fresh_header = false;
            }
        }
    }
    Ok(demos)
}
