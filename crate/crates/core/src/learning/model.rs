//! Linear scoring models and their on-disk format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::demo::ConfigFingerprint;
use super::svm::Hyperparameters;
use super::LearnError;
use crate::features::Template3x3;
use crate::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One-vs-all over the eight directions.
    Multiclass8,
    /// A single actionable / not-actionable score.
    Binary,
}

impl ModelKind {
    pub fn num_classes(self) -> usize {
        match self {
            ModelKind::Multiclass8 => 8,
            ModelKind::Binary => 1,
        }
    }
}

/// Training provenance: board configuration plus dataset construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFingerprint {
    pub config: ConfigFingerprint,
    /// `mc`, `b8` or `be`.
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives_per_positive: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
}

impl ModelFingerprint {
    pub fn new(config: ConfigFingerprint, dataset: &str) -> Self {
        Self {
            config,
            dataset: dataset.to_string(),
            negatives_per_positive: None,
            sample_seed: None,
        }
    }
}

/// Per-class linear scores `w · f + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T> {
    pub format_version: u32,
    pub kind: ModelKind,
    /// Class labels in score order: 0–7 for multiclass, `[1]` for binary.
    pub classes: Vec<u8>,
    pub weights: Vec<[T; 9]>,
    pub biases: Vec<T>,
    /// Classes with no training rows are never predicted.
    pub predictable: Vec<bool>,
    pub fingerprint: Option<ModelFingerprint>,
    pub hyperparameters: Hyperparameters,
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(kind: ModelKind, hyperparameters: Hyperparameters) -> Self {
        let n = kind.num_classes();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            classes: match kind {
                ModelKind::Multiclass8 => (0..8).collect(),
                ModelKind::Binary => vec![1],
            },
            weights: vec![[T::zero(); 9]; n],
            biases: vec![T::zero(); n],
            predictable: vec![true; n],
            fingerprint: None,
            hyperparameters,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    /// Raw score of one class.
    pub fn score(&self, class: usize, x: &Template3x3<T>) -> T {
        x.dot(&self.weights[class]) + self.biases[class]
    }

    /// Per-class scores; never-predictable classes score −∞.
    pub fn scores(&self, x: &Template3x3<T>) -> Vec<T> {
        (0..self.num_classes())
            .map(|k| {
                if self.predictable[k] {
                    self.score(k, x)
                } else {
                    T::neg_infinity()
                }
            })
            .collect()
    }

    /// Argmax over predictable classes, lowest index on ties.
    pub fn predict_class(&self, x: &Template3x3<T>) -> Option<usize> {
        argmax(self.scores(x).into_iter().map(Some))
    }

    /// Every weight and bias multiplied by `lambda`.
    pub fn scaled(&self, lambda: T) -> Self {
        let mut m = self.clone();
        for w in &mut m.weights {
            for v in w.iter_mut() {
                *v = *v * lambda;
            }
        }
        for b in &mut m.biases {
            *b = *b * lambda;
        }
        m
    }

    pub fn expect_kind(&self, expected: ModelKind) -> Result<(), LearnError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(LearnError::WrongModelKind {
                expected,
                found: self.kind,
            })
        }
    }

    /// A warning message if the model was trained under a different configuration.
    pub fn fingerprint_mismatch(&self, config: &ConfigFingerprint) -> Option<String> {
        match &self.fingerprint {
            Some(fp) if &fp.config != config => Some(format!(
                "model trained on {:?} used with {:?}",
                fp.config, config
            )),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::UnsupportedVersion(self.format_version));
        }
        let n = self.kind.num_classes();
        if self.weights.len() != n
            || self.biases.len() != n
            || self.classes.len() != n
            || self.predictable.len() != n
        {
            return Err(LearnError::MalformedModel(format!(
                "{:?} model needs {n} classes, weights/biases/classes/predictable have {}/{}/{}/{}",
                self.kind,
                self.weights.len(),
                self.biases.len(),
                self.classes.len(),
                self.predictable.len()
            )));
        }
        let finite = self
            .weights
            .iter()
            .flatten()
            .chain(self.biases.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(LearnError::MalformedModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Index of the largest `Some` value; first index wins ties. `None` entries
/// and NaN are skipped, as is −∞.
pub fn argmax<T: Scalar>(values: impl IntoIterator<Item = Option<T>>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let Some(v) = v else { continue };
        if v.is_nan() || v == T::neg_infinity() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
