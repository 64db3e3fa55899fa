//! Boards, hidden shapes, observations and the episode lifecycle.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("invalid shape template: {0}")]
    InvalidTemplate(String),
    #[error("board {rows}x{cols} is too small (both sides must be at least 3)")]
    BoardTooSmall { rows: usize, cols: usize },
    #[error("no pose of the template fits the board")]
    EmptyUniverse,
    #[error("pose {0} does not fit the board")]
    InvalidPose(Pose),
    #[error("every cell of the board is a shape cell")]
    NoSafeCell,
    #[error("cell {0} is outside the board")]
    OutOfBounds(GridCell),
    #[error("cell {0} is already opened")]
    AlreadyOpened(GridCell),
    #[error("episode is over ({0:?})")]
    EpisodeOver(EpisodeStatus),
}

/// A board coordinate. Serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

impl GridCell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn chebyshev(self, other: GridCell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    /// Shifts the cell, returning `None` if either coordinate would go negative.
    pub fn shifted(self, dr: isize, dc: isize) -> Option<GridCell> {
        Some(GridCell {
            row: self.row.checked_add_signed(dr)?,
            col: self.col.checked_add_signed(dc)?,
        })
    }

    pub fn transposed(self) -> GridCell {
        GridCell::new(self.col, self.row)
    }
}

impl From<(usize, usize)> for GridCell {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

impl From<GridCell> for (usize, usize) {
    fn from(c: GridCell) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// The eight neighbor directions, in the global class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::N => (-1, 0),
            Direction::NE => (-1, 1),
            Direction::E => (0, 1),
            Direction::SE => (1, 1),
            Direction::S => (1, 0),
            Direction::SW => (1, -1),
            Direction::W => (0, -1),
            Direction::NW => (-1, -1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    /// Direction from `from` to an 8-adjacent `to`, if they are adjacent.
    pub fn between(from: GridCell, to: GridCell) -> Option<Direction> {
        let dr = to.row as isize - from.row as isize;
        let dc = to.col as isize - from.col as isize;
        Self::ALL.into_iter().find(|d| d.delta() == (dr, dc))
    }
}

/// Action label: 0–7 are [`Direction`]s, 8 is the terminal action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActionClass(u8);

impl ActionClass {
    pub const TERMINAL: ActionClass = ActionClass(8);

    pub fn new(value: u8) -> Option<Self> {
        (value <= 8).then_some(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_terminal(self) -> bool {
        self.0 == 8
    }

    pub fn direction(self) -> Option<Direction> {
        Direction::from_index(self.0 as usize)
    }
}

impl From<Direction> for ActionClass {
    fn from(d: Direction) -> Self {
        Self(d as u8)
    }
}

impl TryFrom<u8> for ActionClass {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ActionClass::new(v).ok_or_else(|| format!("action class {v} out of range 0..=8"))
    }
}

impl From<ActionClass> for u8 {
    fn from(a: ActionClass) -> u8 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    pub rows: usize,
    pub cols: usize,
}

impl Board {
    pub fn new(rows: usize, cols: usize) -> Result<Self, GridError> {
        if rows < 3 || cols < 3 {
            return Err(GridError::BoardTooSmall { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: GridCell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Row-major index. The cell must be on the board.
    #[inline]
    pub fn index(&self, cell: GridCell) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> GridCell {
        GridCell::new(index / self.cols, index % self.cols)
    }

    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    pub fn neighbor(&self, cell: GridCell, dir: Direction) -> Option<GridCell> {
        let (dr, dc) = dir.delta();
        cell.shifted(dr, dc).filter(|c| self.contains(*c))
    }

    /// In-bounds 8-neighbors in direction order.
    pub fn neighbors(&self, cell: GridCell) -> impl Iterator<Item = GridCell> + '_ {
        Direction::ALL
            .into_iter()
            .filter_map(move |d| self.neighbor(cell, d))
    }

    pub fn transposed(&self) -> Board {
        Board {
            rows: self.cols,
            cols: self.rows,
        }
    }
}

/// Rotation of a shape, clockwise in 90° steps.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u16", into = "u16")]
pub enum Orientation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::R0,
        Orientation::R90,
        Orientation::R180,
        Orientation::R270,
    ];

    pub fn degrees(self) -> u16 {
        90 * self as u16
    }

    pub fn from_degrees(deg: u16) -> Option<Self> {
        match deg {
            0 => Some(Self::R0),
            90 => Some(Self::R90),
            180 => Some(Self::R180),
            270 => Some(Self::R270),
            _ => None,
        }
    }

    fn quarter_turns(self) -> usize {
        self as usize
    }
}

impl TryFrom<u16> for Orientation {
    type Error = String;

    fn try_from(v: u16) -> Result<Self, Self::Error> {
        Orientation::from_degrees(v).ok_or_else(|| format!("orientation {v} is not 0/90/180/270"))
    }
}

impl From<Orientation> for u16 {
    fn from(o: Orientation) -> u16 {
        o.degrees()
    }
}

/// A hidden shape: offsets relative to a `(0, 0)` anchor, normalized so the
/// minimum row and column offsets are both zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct ShapeTemplate {
    name: String,
    offsets: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct TemplateRepr {
    name: String,
    offsets: Vec<(i64, i64)>,
}

impl TryFrom<TemplateRepr> for ShapeTemplate {
    type Error = GridError;

    fn try_from(r: TemplateRepr) -> Result<Self, Self::Error> {
        ShapeTemplate::new(r.name, r.offsets)
    }
}

impl From<ShapeTemplate> for TemplateRepr {
    fn from(t: ShapeTemplate) -> Self {
        TemplateRepr {
            name: t.name,
            offsets: t
                .offsets
                .into_iter()
                .map(|(r, c)| (r as i64, c as i64))
                .collect(),
        }
    }
}

impl ShapeTemplate {
    pub fn new(
        name: impl Into<String>,
        offsets: impl IntoIterator<Item = (i64, i64)>,
    ) -> Result<Self, GridError> {
        let name = name.into();
        if name.trim().is_empty() || name.chars().any(char::is_whitespace) {
            return Err(GridError::InvalidTemplate(format!(
                "name {name:?} must be a non-empty identifier"
            )));
        }
        let raw: Vec<(i64, i64)> = offsets.into_iter().collect();
        let min_r = raw
            .iter()
            .map(|o| o.0)
            .min()
            .ok_or_else(|| GridError::InvalidTemplate("no shape cells".into()))?;
        let min_c = raw.iter().map(|o| o.1).min().unwrap_or(0);
        let mut offsets: Vec<(usize, usize)> = raw
            .iter()
            .map(|&(r, c)| ((r - min_r) as usize, (c - min_c) as usize))
            .collect();
        offsets.sort_unstable();
        let n = offsets.len();
        offsets.dedup();
        if offsets.len() != n {
            return Err(GridError::InvalidTemplate("duplicate offsets".into()));
        }
        Ok(Self { name, offsets })
    }

    /// The default H-structure: two full columns joined by a center cell.
    pub fn h3() -> Self {
        Self::new(
            "H3",
            [(0, 0), (1, 0), (2, 0), (1, 1), (0, 2), (1, 2), (2, 2)],
        )
        .expect("H3 is a valid template")
    }

    /// Looks up a built-in template by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "H3" => Some(Self::h3()),
            _ => None,
        }
    }

    /// Parses the text format: a name line followed by rows of `#` and `.`.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim().is_empty());
        let name = lines
            .next()
            .ok_or_else(|| GridError::InvalidTemplate("empty template file".into()))?
            .trim();
        let mut offsets = Vec::new();
        for (r, line) in lines.enumerate() {
            for (c, ch) in line.trim_start().chars().enumerate() {
                match ch {
                    '#' => offsets.push((r as i64, c as i64)),
                    '.' => {}
                    other => {
                        return Err(GridError::InvalidTemplate(format!(
                            "unexpected character {other:?} at row {r}"
                        )))
                    }
                }
            }
        }
        Self::new(name, offsets)
    }

    pub fn to_text(&self) -> String {
        let (h, w) = self.extent(Orientation::R0);
        let mut out = format!("{}\n", self.name);
        for r in 0..h {
            for c in 0..w {
                out.push(if self.offsets.contains(&(r, c)) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offsets after rotation, re-normalized and sorted.
    pub fn rotated(&self, orientation: Orientation) -> Vec<(usize, usize)> {
        let mut cur = self.offsets.clone();
        for _ in 0..orientation.quarter_turns() {
            let max_r = cur.iter().map(|o| o.0).max().unwrap_or(0);
            cur = cur.iter().map(|&(r, c)| (c, max_r - r)).collect();
            let min_r = cur.iter().map(|o| o.0).min().unwrap_or(0);
            let min_c = cur.iter().map(|o| o.1).min().unwrap_or(0);
            for o in &mut cur {
                o.0 -= min_r;
                o.1 -= min_c;
            }
        }
        cur.sort_unstable();
        cur
    }

    /// Bounding box `(height, width)` in the given orientation.
    pub fn extent(&self, orientation: Orientation) -> (usize, usize) {
        let (h, w) = self
            .offsets
            .iter()
            .fold((0, 0), |(h, w), &(r, c)| (h.max(r + 1), w.max(c + 1)));
        if orientation.quarter_turns() % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// The template mirrored across the main diagonal.
    pub fn transposed(&self) -> ShapeTemplate {
        ShapeTemplate {
            name: format!("{}_T", self.name),
            offsets: {
                let mut o: Vec<_> = self.offsets.iter().map(|&(r, c)| (c, r)).collect();
                o.sort_unstable();
                o
            },
        }
    }
}

/// Placement of a template on a board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "r")]
    pub row: usize,
    #[serde(rename = "c")]
    pub col: usize,
    #[serde(rename = "orient", default)]
    pub orientation: Orientation,
}

impl Pose {
    pub const fn new(row: usize, col: usize, orientation: Orientation) -> Self {
        Self {
            row,
            col,
            orientation,
        }
    }

    pub const fn at(row: usize, col: usize) -> Self {
        Self::new(row, col, Orientation::R0)
    }

    pub fn anchor(&self) -> GridCell {
        GridCell::new(self.row, self.col)
    }

    pub fn fits(&self, board: &Board, template: &ShapeTemplate) -> bool {
        let (h, w) = template.extent(self.orientation);
        self.row + h <= board.rows && self.col + w <= board.cols
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})@{}", self.row, self.col, self.orientation.degrees())
    }
}

/// Cells covered by `template` placed at `pose`, sorted row-major.
pub fn shape_cells(template: &ShapeTemplate, pose: &Pose) -> Vec<GridCell> {
    template
        .rotated(pose.orientation)
        .into_iter()
        .map(|(dr, dc)| GridCell::new(pose.row + dr, pose.col + dc))
        .collect()
}

/// Every in-bounds pose, orientation-major then row-major by anchor.
pub fn enumerate_poses(
    board: &Board,
    template: &ShapeTemplate,
    orientations: &[Orientation],
) -> Result<Vec<Pose>, GridError> {
    let mut orients = orientations.to_vec();
    orients.sort_unstable();
    orients.dedup();
    let mut poses = Vec::new();
    for o in orients {
        let (h, w) = template.extent(o);
        if h > board.rows || w > board.cols {
            continue;
        }
        for row in 0..=board.rows - h {
            for col in 0..=board.cols - w {
                poses.push(Pose::new(row, col, o));
            }
        }
    }
    if poses.is_empty() {
        return Err(GridError::EmptyUniverse);
    }
    Ok(poses)
}

/// Number of in-bounds 8-neighbors of `cell` for which `is_member` holds.
pub fn neighborhood_count(board: &Board, cell: GridCell, is_member: impl Fn(GridCell) -> bool) -> u8 {
    board.neighbors(cell).filter(|c| is_member(*c)).count() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpenOutcome {
    Mine,
    Count(u8),
}

impl OpenOutcome {
    pub fn count(self) -> Option<u8> {
        match self {
            OpenOutcome::Count(k) => Some(k),
            OpenOutcome::Mine => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Success,
    FailedMine,
    FailedStalled,
    /// The binary neighbor agent scored no neighbor as actionable.
    FailedNotActionable,
    /// An unmasked classifier chose an opened or off-board target.
    FailedIllegalMove,
    FailedStepCap,
}

impl EpisodeStatus {
    pub fn is_running(self) -> bool {
        self == EpisodeStatus::Running
    }

    pub fn is_failure(self) -> bool {
        !matches!(self, EpisodeStatus::Running | EpisodeStatus::Success)
    }
}

/// Ground truth plus everything observed so far in one episode.
///
/// `ground_truth` and [`EpisodeState::is_mine`] are simulator internals; only
/// the oracle expert is allowed to look at them.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    board: Board,
    template: ShapeTemplate,
    ground_truth: Pose,
    mines: Vec<bool>,
    opened: BTreeMap<GridCell, u8>,
    open_order: Vec<GridCell>,
    agent_cell: GridCell,
    steps: usize,
    status: EpisodeStatus,
    mine_hit: Option<GridCell>,
}

impl EpisodeState {
    /// Starts an episode by revealing one uniformly random safe cell.
    /// The reveal is free: `steps` stays at zero.
    pub fn init(
        board: Board,
        template: ShapeTemplate,
        ground_truth: Pose,
        rng_seed: u64,
    ) -> Result<Self, GridError> {
        if !ground_truth.fits(&board, &template) {
            return Err(GridError::InvalidPose(ground_truth));
        }
        let mut mines = vec![false; board.len()];
        for c in shape_cells(&template, &ground_truth) {
            mines[board.index(c)] = true;
        }
        if mines.iter().all(|&m| m) {
            return Err(GridError::NoSafeCell);
        }
        let mut rng = seed::rng(rng_seed);
        let start = loop {
            let idx = rng.gen_range(0..board.len());
            if !mines[idx] {
                break board.cell_at(idx);
            }
        };
        let mut state = Self {
            board,
            template,
            ground_truth,
            mines,
            opened: BTreeMap::new(),
            open_order: Vec::new(),
            agent_cell: start,
            steps: 0,
            status: EpisodeStatus::Running,
            mine_hit: None,
        };
        let k = state.true_count(start);
        state.opened.insert(start, k);
        state.open_order.push(start);
        Ok(state)
    }

    /// Opens a cell. Caller errors leave the state untouched.
    pub fn open_cell(&mut self, cell: GridCell) -> Result<OpenOutcome, GridError> {
        if !self.status.is_running() {
            return Err(GridError::EpisodeOver(self.status));
        }
        if !self.board.contains(cell) {
            return Err(GridError::OutOfBounds(cell));
        }
        if self.opened.contains_key(&cell) {
            return Err(GridError::AlreadyOpened(cell));
        }
        self.steps += 1;
        if self.mines[self.board.index(cell)] {
            self.status = EpisodeStatus::FailedMine;
            self.mine_hit = Some(cell);
            return Ok(OpenOutcome::Mine);
        }
        let k = self.true_count(cell);
        self.opened.insert(cell, k);
        self.open_order.push(cell);
        self.agent_cell = cell;
        Ok(OpenOutcome::Count(k))
    }

    /// Ends a running episode. Status never leaves a terminal value.
    pub fn finish(&mut self, status: EpisodeStatus) -> Result<(), GridError> {
        if !self.status.is_running() {
            return Err(GridError::EpisodeOver(self.status));
        }
        if status.is_running() {
            return Ok(());
        }
        self.status = status;
        Ok(())
    }

    fn true_count(&self, cell: GridCell) -> u8 {
        neighborhood_count(&self.board, cell, |c| self.mines[self.board.index(c)])
    }

    pub fn board(&self) -> Board {
        self.board
    }

    pub fn template(&self) -> &ShapeTemplate {
        &self.template
    }

    pub fn ground_truth(&self) -> Pose {
        self.ground_truth
    }

    pub fn is_mine(&self, cell: GridCell) -> bool {
        self.board.contains(cell) && self.mines[self.board.index(cell)]
    }

    /// What opening `cell` would reveal, without opening it.
    pub fn peek(&self, cell: GridCell) -> OpenOutcome {
        if self.is_mine(cell) {
            OpenOutcome::Mine
        } else {
            OpenOutcome::Count(self.true_count(cell))
        }
    }

    pub fn opened(&self) -> &BTreeMap<GridCell, u8> {
        &self.opened
    }

    pub fn is_opened(&self, cell: GridCell) -> bool {
        self.opened.contains_key(&cell)
    }

    /// Opened cells in the order they were revealed, initial cell first.
    pub fn open_order(&self) -> &[GridCell] {
        &self.open_order
    }

    pub fn initial_cell(&self) -> GridCell {
        self.open_order[0]
    }

    pub fn agent_cell(&self) -> GridCell {
        self.agent_cell
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn mine_hit(&self) -> Option<GridCell> {
        self.mine_hit
    }

    /// In-bounds, unopened 8-neighbors of the agent as `(direction, cell)`.
    pub fn legal_neighbors(&self) -> impl Iterator<Item = (Direction, GridCell)> + '_ {
        Direction::ALL.into_iter().filter_map(move |d| {
            self.board
                .neighbor(self.agent_cell, d)
                .filter(|c| !self.is_opened(*c))
                .map(|c| (d, c))
        })
    }

    /// Unopened cells with at least one opened 8-neighbor, row-major.
    pub fn frontier(&self) -> Vec<GridCell> {
        frontier(&self.board, &self.opened)
    }
}

/// Unopened cells adjacent to an opened cell, row-major.
pub fn frontier<V>(board: &Board, opened: &BTreeMap<GridCell, V>) -> Vec<GridCell> {
    board
        .cells()
        .filter(|c| !opened.contains_key(c))
        .filter(|c| board.neighbors(*c).any(|n| opened.contains_key(&n)))
        .collect()
}
