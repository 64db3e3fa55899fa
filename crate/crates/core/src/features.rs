//! Inverse distance transform over the belief, and the 3×3 local templates
//! that the classifiers consume.

use serde::{Deserialize, Serialize};

use crate::grid::{Board, GridCell, GridError};
use crate::hypothesis::{BeliefError, HypothesisSet, OccupancyMap};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    /// `Σ M(c') / (1 + d∞(c, c'))`: denser hypothesis mass scores higher.
    #[default]
    Accumulated,
    /// `1 / (1 + d∞(c, support))`: only the nearest covered cell matters.
    MinDistance,
}

/// Per-cell scores in `(0, 1]`, row-major, with maximum exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap<T> {
    rows: usize,
    cols: usize,
    scores: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn from_belief(h: &HypothesisSet, variant: FeatureVariant) -> Result<Self, BeliefError> {
        idt_feature_map(&h.occupancy::<T>()?, variant)
    }

    /// Rebuilds a map from stored row-major scores (e.g. a demonstration record).
    pub fn from_scores(board: Board, scores: Vec<T>) -> Option<Self> {
        (scores.len() == board.len()).then_some(Self {
            rows: board.rows,
            cols: board.cols,
            scores,
        })
    }

    pub fn board(&self) -> Board {
        Board {
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<T> {
        self.scores
    }

    pub fn at(&self, cell: GridCell) -> T {
        self.scores[cell.row * self.cols + cell.col]
    }

    pub fn get(&self, cell: GridCell) -> Option<T> {
        self.board().contains(cell).then(|| self.at(cell))
    }

    pub fn transposed(&self) -> Self {
        let tb = self.board().transposed();
        Self {
            rows: tb.rows,
            cols: tb.cols,
            scores: tb.cells().map(|c| self.at(c.transposed())).collect(),
        }
    }
}

/// Unnormalized transform of an occupancy map.
pub fn raw_idt<T: Scalar>(occ: &OccupancyMap<T>, variant: FeatureVariant) -> Vec<T> {
    let board = occ.board();
    let m = occ.values();
    let support: Vec<(GridCell, T)> = board
        .cells()
        .zip(m.iter().copied())
        .filter(|(_, v)| *v > T::zero())
        .collect();
    board
        .cells()
        .map(|c| match variant {
            FeatureVariant::Accumulated => support
                .iter()
                .map(|&(s, v)| v / (T::one() + T::of_usize(c.chebyshev(s))))
                .sum(),
            FeatureVariant::MinDistance => support
                .iter()
                .map(|&(s, _)| c.chebyshev(s))
                .min()
                .map(|d| T::one() / (T::one() + T::of_usize(d)))
                .unwrap_or_else(T::zero),
        })
        .collect()
}

/// Divides by the maximum. Fails if there is no positive entry.
pub fn normalize<T: Scalar>(raw: &[T]) -> Result<Vec<T>, BeliefError> {
    let max = raw.iter().copied().fold(T::zero(), T::max);
    if max <= T::zero() || !max.is_finite() {
        return Err(BeliefError::BeliefCollapse);
    }
    Ok(raw.iter().map(|&v| v / max).collect())
}

pub fn idt_feature_map<T: Scalar>(
    occ: &OccupancyMap<T>,
    variant: FeatureVariant,
) -> Result<FeatureMap<T>, BeliefError> {
    let board = occ.board();
    let scores = normalize(&raw_idt(occ, variant))?;
    Ok(FeatureMap {
        rows: board.rows,
        cols: board.cols,
        scores,
    })
}

/// Row-major 3×3 window of scores; off-board positions are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Template3x3<T> {
    pub values: [T; 9],
}

impl<T: Scalar> Template3x3<T> {
    pub const CENTER: usize = 4;

    pub fn new(values: [T; 9]) -> Self {
        Self { values }
    }

    pub fn center(&self) -> T {
        self.values[Self::CENTER]
    }

    pub fn dot(&self, w: &[T; 9]) -> T {
        self.values
            .iter()
            .zip(w.iter())
            .fold(T::zero(), |acc, (&x, &wi)| acc + x * wi)
    }
}

pub fn extract_template<T: Scalar>(
    fm: &FeatureMap<T>,
    cell: GridCell,
) -> Result<Template3x3<T>, GridError> {
    let board = fm.board();
    if !board.contains(cell) {
        return Err(GridError::OutOfBounds(cell));
    }
    let mut values = [T::zero(); 9];
    for (i, v) in values.iter_mut().enumerate() {
        let (dr, dc) = ((i / 3) as isize - 1, (i % 3) as isize - 1);
        if let Some(score) = cell.shifted(dr, dc).and_then(|c| fm.get(c)) {
            *v = score;
        }
    }
    Ok(Template3x3 { values })
}
