//! Labeled datasets built from demonstrations.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::demo::{ConfigFingerprint, Demonstration};
use super::model::{ModelFingerprint, ModelKind};
use super::LearnError;
use crate::features::{extract_template, FeatureMap};
use crate::grid::{frontier, Board, Direction, GridCell};
use crate::{seed, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryMode {
    /// Negatives are the other legal neighbors of the expert.
    B8,
    /// Negatives are sampled from the frontier.
    Be,
}

/// Feature rows with labels: class index `0..8` for multiclass, `±1` for binary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub kind: ModelKind,
    pub samples: Vec<[T; 9]>,
    pub labels: Vec<i32>,
    pub fingerprint: Option<ModelFingerprint>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            samples: Vec::new(),
            labels: Vec::new(),
            fingerprint: None,
        }
    }

    pub fn push(&mut self, x: [T; 9], y: i32) {
        self.samples.push(x);
        self.labels.push(y);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Counts per class (multiclass), or `[negatives, positives]` (binary).
    pub fn class_counts(&self) -> Vec<usize> {
        match self.kind {
            ModelKind::Multiclass8 => {
                let mut c = vec![0; 8];
                for &y in &self.labels {
                    c[y as usize] += 1;
                }
                c
            }
            ModelKind::Binary => {
                let pos = self.labels.iter().filter(|&&y| y > 0).count();
                vec![self.labels.len() - pos, pos]
            }
        }
    }

    /// Same samples with every binary label negated.
    pub fn negated(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|y| -y).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetReport {
    pub rows: usize,
    pub excluded_relocations: usize,
    pub warnings: Vec<String>,
}

impl DatasetReport {
    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }
}

fn common_fingerprint<T>(demos: &[Demonstration<T>]) -> Result<Option<ConfigFingerprint>, LearnError> {
    let Some(first) = demos.first() else {
        return Ok(None);
    };
    if let Some(other) = demos.iter().find(|d| d.fingerprint != first.fingerprint) {
        return Err(LearnError::MixedConfig(format!(
            "episode {} has {:?}, episode {} has {:?}",
            first.episode_id, first.fingerprint, other.episode_id, other.fingerprint
        )));
    }
    Ok(Some(first.fingerprint.clone()))
}

/// One row per adjacent expert move: template at the agent, direction as label.
pub fn build_mc_dataset<T: Scalar>(
    demos: &[Demonstration<T>],
) -> Result<(Dataset<T>, DatasetReport), LearnError> {
    let fp = common_fingerprint(demos)?;
    let mut ds = Dataset::new(ModelKind::Multiclass8);
    ds.fingerprint = fp.map(|config| ModelFingerprint::new(config, "mc"));
    let mut report = DatasetReport::default();
    for d in demos {
        for s in &d.steps {
            let adjacent = Direction::between(s.agent_cell, s.chosen_cell);
            match (s.action.and_then(|a| a.direction()), adjacent) {
                (Some(a), Some(b)) if a == b => ds.push(s.template.values, a.index() as i32),
                _ => {
                    report.excluded_relocations += 1;
                    report.warn(format!(
                        "episode {} step {}: move {} -> {} is not an 8-neighbor action; skipped",
                        d.episode_id, s.step, s.agent_cell, s.chosen_cell
                    ));
                }
            }
        }
    }
    report.rows = ds.len();
    Ok((ds, report))
}

/// Actionable (+1) / not actionable (−1) rows centered on candidate cells.
pub fn build_binary_dataset<T: Scalar>(
    demos: &[Demonstration<T>],
    mode: BinaryMode,
    negatives_per_positive: usize,
    sample_seed: u64,
) -> Result<(Dataset<T>, DatasetReport), LearnError> {
    let fp = common_fingerprint(demos)?;
    let mut ds = Dataset::new(ModelKind::Binary);
    let mut report = DatasetReport::default();
    let Some(fp) = fp else {
        return Ok((ds, report));
    };
    let board = fp.board()?;
    ds.fingerprint = Some(match mode {
        BinaryMode::B8 => ModelFingerprint::new(fp.clone(), "b8"),
        BinaryMode::Be => ModelFingerprint {
            negatives_per_positive: Some(negatives_per_positive),
            sample_seed: Some(sample_seed),
            ..ModelFingerprint::new(fp.clone(), "be")
        },
    });
    for d in demos {
        for s in &d.steps {
            let fm = FeatureMap::from_scores(board, s.feature.clone()).ok_or_else(|| {
                LearnError::MalformedDemo(format!(
                    "episode {} step {}: feature map has {} values, board has {}",
                    d.episode_id,
                    s.step,
                    s.feature.len(),
                    board.len()
                ))
            })?;
            let opened: BTreeSet<GridCell> = s.opened.iter().copied().collect();
            let template_at = |c: GridCell| {
                extract_template(&fm, c)
                    .map(|t| t.values)
                    .map_err(|e| LearnError::MalformedDemo(format!("episode {} step {}: {e}", d.episode_id, s.step)))
            };
            let negatives: Vec<GridCell> = match mode {
                BinaryMode::B8 => {
                    if Direction::between(s.agent_cell, s.chosen_cell).is_none() {
                        report.excluded_relocations += 1;
                        report.warn(format!(
                            "episode {} step {}: non-adjacent move skipped for b8 data",
                            d.episode_id, s.step
                        ));
                        continue;
                    }
                    legal_neighbors(&board, s.agent_cell, &opened)
                        .filter(|c| *c != s.chosen_cell)
                        .collect()
                }
                BinaryMode::Be => {
                    let marks: BTreeMap<GridCell, ()> = opened.iter().map(|c| (*c, ())).collect();
                    let pool: Vec<GridCell> = frontier(&board, &marks)
                        .into_iter()
                        .filter(|c| *c != s.chosen_cell)
                        .collect();
                    let k = negatives_per_positive.min(pool.len());
                    let mut rng = seed::rng(seed::derive(
                        sample_seed,
                        seed::SAMPLE_STREAM,
                        d.episode_id,
                        s.step as u64,
                    ));
                    index::sample(&mut rng, pool.len(), k)
                        .into_iter()
                        .map(|i| pool[i])
                        .collect()
                }
            };
            ds.push(template_at(s.chosen_cell)?, 1);
            for c in negatives {
                ds.push(template_at(c)?, -1);
            }
        }
    }
    report.rows = ds.len();
    Ok((ds, report))
}

fn legal_neighbors<'a>(
    board: &'a Board,
    cell: GridCell,
    opened: &'a BTreeSet<GridCell>,
) -> impl Iterator<Item = GridCell> + 'a {
    board.neighbors(cell).filter(move |c| !opened.contains(c))
}
