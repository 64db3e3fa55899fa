//! Exact belief maintenance: the set of poses consistent with every observation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    enumerate_poses, neighborhood_count, shape_cells, Board, GridCell, GridError, OpenOutcome,
    Orientation, Pose, ShapeTemplate,
};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeliefError {
    #[error("hypothesis set is empty; the observation stream is inconsistent")]
    BeliefCollapse,
    #[error("a mine observation cannot be filtered; the episode has ended")]
    MineObservation,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefConfig {
    pub orientations: Vec<Orientation>,
    /// Collapse poses with identical cell sets, keeping the first in order.
    pub dedupe_by_cells: bool,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            orientations: vec![Orientation::R0],
            dedupe_by_cells: true,
        }
    }
}

/// True iff no observed cell is a shape cell of `pose` and every observed
/// count matches the number of shape cells around it.
pub fn is_consistent(
    board: &Board,
    template: &ShapeTemplate,
    pose: &Pose,
    observations: impl IntoIterator<Item = (GridCell, u8)>,
) -> bool {
    let cells = shape_cells(template, pose);
    observations.into_iter().all(|(cell, count)| {
        !cells.contains(&cell) && neighborhood_count(board, cell, |c| cells.contains(&c)) == count
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisSet {
    board: Board,
    template: ShapeTemplate,
    poses: Vec<Pose>,
    generation: u64,
}

impl HypothesisSet {
    /// Every pose the template can take on the board.
    pub fn universe(
        board: Board,
        template: ShapeTemplate,
        cfg: &BeliefConfig,
    ) -> Result<Self, BeliefError> {
        let mut poses = enumerate_poses(&board, &template, &cfg.orientations)?;
        if cfg.dedupe_by_cells {
            let mut seen = HashSet::new();
            poses.retain(|p| seen.insert(shape_cells(&template, p)));
        }
        Ok(Self {
            board,
            template,
            poses,
            generation: 0,
        })
    }

    /// The universe filtered by all observations at once.
    ///
    /// This is the reference construction that incremental filtering must agree with.
    pub fn build(
        opened: &BTreeMap<GridCell, u8>,
        template: ShapeTemplate,
        board: Board,
        cfg: &BeliefConfig,
    ) -> Result<Self, BeliefError> {
        let mut set = Self::universe(board, template, cfg)?;
        let (b, t) = (set.board, set.template.clone());
        set.poses
            .retain(|p| is_consistent(&b, &t, p, opened.iter().map(|(c, k)| (*c, *k))));
        Ok(set)
    }

    /// Keeps the poses consistent with one new observation.
    pub fn filter(&self, cell: GridCell, outcome: OpenOutcome) -> Result<Self, BeliefError> {
        let count = outcome.count().ok_or(BeliefError::MineObservation)?;
        let poses: Vec<Pose> = self
            .poses
            .iter()
            .filter(|p| is_consistent(&self.board, &self.template, p, [(cell, count)]))
            .copied()
            .collect();
        if poses.is_empty() {
            return Err(BeliefError::BeliefCollapse);
        }
        Ok(Self {
            board: self.board,
            template: self.template.clone(),
            poses,
            generation: self.generation + 1,
        })
    }

    /// Builds a set from explicit poses (deduplicated, order kept).
    pub fn from_poses(board: Board, template: ShapeTemplate, poses: Vec<Pose>) -> Self {
        let mut seen = HashSet::new();
        let poses = poses.into_iter().filter(|p| seen.insert(*p)).collect();
        Self {
            board,
            template,
            poses,
            generation: 0,
        }
    }

    pub fn board(&self) -> Board {
        self.board
    }

    pub fn template(&self) -> &ShapeTemplate {
        &self.template
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        self.poses.contains(pose)
    }

    /// How many hypotheses cover each cell, row-major.
    pub fn coverage_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.board.len()];
        for p in &self.poses {
            for c in shape_cells(&self.template, p) {
                counts[self.board.index(c)] += 1;
            }
        }
        counts
    }

    /// Fraction of hypotheses covering each cell.
    pub fn occupancy<T: Scalar>(&self) -> Result<OccupancyMap<T>, BeliefError> {
        if self.poses.is_empty() {
            return Err(BeliefError::BeliefCollapse);
        }
        let n = T::of_usize(self.poses.len());
        Ok(OccupancyMap {
            board: self.board,
            values: self
                .coverage_counts()
                .into_iter()
                .map(|k| T::of_usize(k) / n)
                .collect(),
        })
    }
}

/// Per-cell fraction of hypotheses that cover the cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap<T> {
    board: Board,
    values: Vec<T>,
}

impl<T: Scalar> OccupancyMap<T> {
    pub fn from_values(board: Board, values: Vec<T>) -> Option<Self> {
        (values.len() == board.len()).then_some(Self { board, values })
    }

    pub fn board(&self) -> Board {
        self.board
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn at(&self, cell: GridCell) -> T {
        self.values[self.board.index(cell)]
    }

    pub fn transposed(&self) -> Self {
        let tb = self.board.transposed();
        let values = tb
            .cells()
            .map(|c| self.values[self.board.index(c.transposed())])
            .collect();
        Self { board: tb, values }
    }
}
