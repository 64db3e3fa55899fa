//! Episode driver, transcripts, demonstration recording and the paired-seed
//! evaluation protocol.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, AgentKind, Decision};
use crate::features::{extract_template, FeatureMap, FeatureVariant};
use crate::grid::{
    ActionClass, Board, EpisodeState, EpisodeStatus, GridCell, GridError, OpenOutcome, Orientation,
    Pose, ShapeTemplate,
};
use crate::hypothesis::{BeliefConfig, BeliefError, HypothesisSet};
use crate::learning::{
    write_demo_header, write_demo_steps, ConfigFingerprint, DemoSource, DemoStep, Demonstration,
    LearnError, LinearModel,
};
use crate::{seed, Scalar};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("agent emitted the terminal action with {0} hypotheses left")]
    PrematureTerminal(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything that defines the game an agent plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardConfig {
    pub rows: usize,
    pub cols: usize,
    pub template: ShapeTemplate,
    pub orientations: Vec<Orientation>,
    pub dedupe_by_cells: bool,
    pub feature_variant: FeatureVariant,
    /// Defaults to `rows × cols`.
    pub step_cap: Option<usize>,
    /// Skip opened and off-board classes when the multiclass agent decides.
    pub mc_masking: bool,
}

impl Default for BoardConfig {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            template: ShapeTemplate::h3(),
            orientations: vec![Orientation::R0],
            dedupe_by_cells: true,
            feature_variant: FeatureVariant::Accumulated,
            step_cap: None,
            mc_masking: true,
        }
    }
}

impl BoardConfig {
    pub fn board(&self) -> Result<Board, GridError> {
        Board::new(self.rows, self.cols)
    }

    pub fn belief(&self) -> BeliefConfig {
        BeliefConfig {
            orientations: self.orientations.clone(),
            dedupe_by_cells: self.dedupe_by_cells,
        }
    }

    pub fn step_cap(&self) -> usize {
        self.step_cap.unwrap_or(self.rows * self.cols)
    }

    pub fn universe(&self) -> Result<HypothesisSet, HarnessError> {
        Ok(HypothesisSet::universe(
            self.board()?,
            self.template.clone(),
            &self.belief(),
        )?)
    }

    pub fn fingerprint(&self) -> ConfigFingerprint {
        let mut orientations = self.orientations.clone();
        orientations.sort_unstable();
        orientations.dedup();
        ConfigFingerprint {
            rows: self.rows,
            cols: self.cols,
            template: self.template.name().to_string(),
            orientations,
            feature_variant: self.feature_variant,
        }
    }
}

/// Which agent to run, and where its model lives. Deserializes from either
/// `{kind, model}` or the `kind=path` string form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AgentSpecRepr")]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl AgentSpec {
    pub fn new(kind: AgentKind, model: Option<PathBuf>) -> Self {
        Self { kind, model }
    }

    /// Parses `kind` or `kind=path/to/model.json`.
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let (kind, model) = match s.split_once('=') {
            Some((k, p)) => (k, Some(PathBuf::from(p))),
            None => (s, None),
        };
        let kind = kind.trim().parse().map_err(HarnessError::Config)?;
        Ok(Self { kind, model })
    }

    pub fn load<T: Scalar>(&self, cfg: &BoardConfig) -> Result<Agent<T>, HarnessError> {
        let model = match (&self.model, self.kind.model_kind()) {
            (Some(path), Some(_)) => {
                let m = LinearModel::<T>::load(path)?;
                if let Some(msg) = m.fingerprint_mismatch(&cfg.fingerprint()) {
                    log::warn!("{}: {msg}", path.display());
                }
                Some(m)
            }
            _ => None,
        };
        Ok(Agent::new(self.kind, model)?.with_masking(cfg.mc_masking))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AgentSpecRepr {
    Short(String),
    Full {
        kind: AgentKind,
        #[serde(default)]
        model: Option<PathBuf>,
    },
}

impl TryFrom<AgentSpecRepr> for AgentSpec {
    type Error = HarnessError;

    fn try_from(r: AgentSpecRepr) -> Result<Self, HarnessError> {
        match r {
            AgentSpecRepr::Short(s) => AgentSpec::parse(&s),
            AgentSpecRepr::Full { kind, model } => Ok(AgentSpec { kind, model }),
        }
    }
}

/// One move of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TranscriptEntry<T> {
    pub agent_cell: GridCell,
    pub action: Option<ActionClass>,
    pub target: Option<GridCell>,
    pub outcome: Option<OpenOutcome>,
    /// Belief size after applying the move.
    pub hyp_count: usize,
    /// Feature map the decision was made on, row-major.
    pub feature: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpisodeResult<T> {
    pub status: EpisodeStatus,
    pub steps: usize,
    pub reward: u8,
    pub initial_cell: GridCell,
    pub initial_hyp_count: usize,
    pub transcript: Vec<TranscriptEntry<T>>,
    /// Agent error text for failures that are not mine hits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl<T> EpisodeResult<T> {
    pub fn final_hyp_count(&self) -> usize {
        self.transcript
            .last()
            .map_or(self.initial_hyp_count, |e| e.hyp_count)
    }
}

/// What an observer sees right before a move is applied.
pub struct StepView<'a, T> {
    pub state: &'a EpisodeState,
    pub belief: &'a HypothesisSet,
    pub features: &'a FeatureMap<T>,
    pub decision: &'a Decision<T>,
}

pub fn failure_status(err: &AgentError) -> Option<EpisodeStatus> {
    match err {
        AgentError::Stalled | AgentError::EmptyFrontier => Some(EpisodeStatus::FailedStalled),
        AgentError::NotActionable { .. } => Some(EpisodeStatus::FailedNotActionable),
        AgentError::IllegalMove { .. } => Some(EpisodeStatus::FailedIllegalMove),
        _ => None,
    }
}

pub fn run_episode<T: Scalar>(
    agent: &Agent<T>,
    cfg: &BoardConfig,
    ground_truth: Pose,
    seed: u64,
) -> Result<EpisodeResult<T>, HarnessError> {
    run_episode_observed(agent, cfg, ground_truth, seed, |_| {})
}

/// Runs one episode to a terminal status, calling `observe` before each open.
pub fn run_episode_observed<T: Scalar>(
    agent: &Agent<T>,
    cfg: &BoardConfig,
    ground_truth: Pose,
    seed: u64,
    mut observe: impl FnMut(&StepView<'_, T>),
) -> Result<EpisodeResult<T>, HarnessError> {
    let board = cfg.board()?;
    let mut state = EpisodeState::init(board, cfg.template.clone(), ground_truth, seed)?;
    let mut belief = HypothesisSet::build(state.opened(), cfg.template.clone(), board, &cfg.belief())?;
    let initial_hyp_count = belief.len();
    let cap = cfg.step_cap();
    let mut transcript = Vec::new();
    let mut failure = None;

    while state.status().is_running() {
        let features = FeatureMap::<T>::from_belief(&belief, cfg.feature_variant)?;
        let decision = match agent.decide(&state, &belief, &features) {
            Ok(d) => d,
            Err(e) => {
                let status = failure_status(&e).ok_or_else(|| HarnessError::Agent(e.clone()))?;
                failure = Some(e.to_string());
                state.finish(status)?;
                break;
            }
        };
        if decision.is_terminal() {
            if belief.len() != 1 {
                return Err(HarnessError::PrematureTerminal(belief.len()));
            }
            transcript.push(TranscriptEntry {
                agent_cell: state.agent_cell(),
                action: decision.action,
                target: None,
                outcome: None,
                hyp_count: 1,
                feature: features.into_scores(),
            });
            state.finish(EpisodeStatus::Success)?;
            break;
        }
        if state.steps() >= cap {
            state.finish(EpisodeStatus::FailedStepCap)?;
            break;
        }
        observe(&StepView {
            state: &state,
            belief: &belief,
            features: &features,
            decision: &decision,
        });
        let from = state.agent_cell();
        let target = decision.target.ok_or(HarnessError::PrematureTerminal(belief.len()))?;
        let outcome = state.open_cell(target)?;
        if let OpenOutcome::Count(_) = outcome {
            belief = belief.filter(target, outcome)?;
        }
        transcript.push(TranscriptEntry {
            agent_cell: from,
            action: decision.action,
            target: Some(target),
            outcome: Some(outcome),
            hyp_count: belief.len(),
            feature: features.into_scores(),
        });
    }

    let status = state.status();
    Ok(EpisodeResult {
        status,
        steps: state.steps(),
        reward: u8::from(status == EpisodeStatus::Success),
        initial_cell: state.initial_cell(),
        initial_hyp_count,
        transcript,
        failure,
    })
}

// ---------------------------------------------------------------------------
// transcripts

pub const TRANSCRIPT_FORMAT_VERSION: u32 = 1;

/// First line of a transcript file: enough to re-simulate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptManifest {
    pub format_version: u32,
    pub config: BoardConfig,
    pub agent: AgentSpec,
    pub ground_truth: Pose,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
enum TranscriptLine<T> {
    Manifest(TranscriptManifest),
    Step {
        index: usize,
        #[serde(flatten)]
        entry: TranscriptEntry<T>,
    },
    Result {
        status: EpisodeStatus,
        steps: usize,
        reward: u8,
        initial_cell: GridCell,
        initial_hyp_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
}

pub fn write_transcript<T: Scalar, W: Write>(
    w: &mut W,
    manifest: &TranscriptManifest,
    result: &EpisodeResult<T>,
) -> Result<(), HarnessError> {
    let mut line = |l: &TranscriptLine<T>| -> Result<(), HarnessError> {
        serde_json::to_writer(&mut *w, l)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&TranscriptLine::Manifest(manifest.clone()))?;
    for (index, entry) in result.transcript.iter().enumerate() {
        line(&TranscriptLine::Step {
            index,
            entry: entry.clone(),
        })?;
    }
    line(&TranscriptLine::Result {
        status: result.status,
        steps: result.steps,
        reward: result.reward,
        initial_cell: result.initial_cell,
        initial_hyp_count: result.initial_hyp_count,
        failure: result.failure.clone(),
    })
}

pub fn read_transcript<T: Scalar, R: BufRead>(
    r: R,
) -> Result<(TranscriptManifest, EpisodeResult<T>), HarnessError> {
    let mut manifest = None;
    let mut entries = Vec::new();
    let mut result = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine<T> = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Transcript(format!("line {}: {e}", i + 1)))?;
        match parsed {
            TranscriptLine::Manifest(m) => manifest = Some(m),
            TranscriptLine::Step { entry, .. } => entries.push(entry),
            TranscriptLine::Result {
                status,
                steps,
                reward,
                initial_cell,
                initial_hyp_count,
                failure,
            } => {
                result = Some(EpisodeResult {
                    status,
                    steps,
                    reward,
                    initial_cell,
                    initial_hyp_count,
                    transcript: Vec::new(),
                    failure,
                })
            }
        }
    }
    let manifest = manifest.ok_or_else(|| HarnessError::Transcript("missing manifest".into()))?;
    let mut result = result.ok_or_else(|| HarnessError::Transcript("missing result".into()))?;
    result.transcript = entries;
    Ok((manifest, result))
}

/// Re-simulates a transcript file; `Ok(true)` iff it reproduces byte for byte.
pub fn replay_transcript(path: impl AsRef<Path>) -> Result<bool, HarnessError> {
    let original = fs::read(path.as_ref())?;
    let (manifest, _) = read_transcript::<f64, _>(&original[..])?;
    let agent = manifest.agent.load::<f64>(&manifest.config)?;
    let result = run_episode(&agent, &manifest.config, manifest.ground_truth, manifest.seed)?;
    let mut again = Vec::new();
    write_transcript(&mut again, &manifest, &result)?;
    Ok(again == original)
}

// ---------------------------------------------------------------------------
// demonstration corpus

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub episodes: usize,
    pub written: usize,
    pub discarded_stalled: usize,
    pub discarded_other: usize,
    pub steps_written: usize,
}

/// Samples a pose uniformly from the (deduplicated) universe.
pub fn sample_pose(universe: &HypothesisSet, seed: u64) -> Pose {
    let mut rng = seed::rng(seed);
    universe.poses()[rng.gen_range(0..universe.len())]
}

/// Runs one oracle episode and captures its steps as a demonstration.
pub fn oracle_demonstration<T: Scalar>(
    cfg: &BoardConfig,
    ground_truth: Pose,
    seed: u64,
    episode_id: u64,
) -> Result<(EpisodeResult<T>, Demonstration<T>), HarnessError> {
    let mut steps = Vec::new();
    let result = run_episode_observed(&Agent::Oracle, cfg, ground_truth, seed, |v| {
        let Some(target) = v.decision.target else { return };
        let agent_cell = v.state.agent_cell();
        let template = extract_template(v.features, agent_cell).expect("agent cell on board");
        steps.push(DemoStep {
            step: steps.len(),
            template,
            action: v.decision.action,
            agent_cell,
            chosen_cell: target,
            feature: v.features.scores().to_vec(),
            opened: v.state.opened().keys().copied().collect(),
        });
    })?;
    Ok((
        result,
        Demonstration {
            episode_id,
            source: DemoSource::Oracle,
            fingerprint: cfg.fingerprint(),
            steps,
        },
    ))
}

/// Writes `n` seeded oracle episodes, keeping only the successful ones.
pub fn record_demo_corpus<W: Write>(
    n_episodes: usize,
    cfg: &BoardConfig,
    master_seed: u64,
    out: &mut W,
) -> Result<CorpusStats, HarnessError> {
    let universe = cfg.universe()?;
    write_demo_header(out, &cfg.fingerprint())?;
    let mut stats = CorpusStats::default();
    for i in 0..n_episodes as u64 {
        let pose = sample_pose(&universe, seed::derive(master_seed, seed::DEMO_STREAM, i, 0));
        let init = seed::derive(master_seed, seed::DEMO_STREAM, i, 1);
        let (result, demo) = oracle_demonstration::<f64>(cfg, pose, init, i)?;
        stats.episodes += 1;
        match result.status {
            EpisodeStatus::Success => {
                stats.written += 1;
                stats.steps_written += demo.steps.len();
                write_demo_steps(out, &demo)?;
            }
            EpisodeStatus::FailedStalled => stats.discarded_stalled += 1,
            _ => stats.discarded_other += 1,
        }
    }
    log::info!(
        "demo corpus: {} episodes, {} written, {} stalled, {} other failures",
        stats.episodes,
        stats.written,
        stats.discarded_stalled,
        stats.discarded_other
    );
    Ok(stats)
}

// ---------------------------------------------------------------------------
// protocol

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub board: BoardConfig,
    pub n_poses: usize,
    pub n_inits_per_pose: usize,
    pub master_seed: u64,
    pub agents: Vec<AgentSpec>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            board: BoardConfig::default(),
            n_poses: 10,
            n_inits_per_pose: 10,
            master_seed: 0,
            agents: Vec::new(),
        }
    }
}

/// One (pose, initialization) pair; shared by every agent in a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub pose_index: usize,
    pub init_index: usize,
    pub pose: Pose,
    pub seed: u64,
}

/// The paired trial list derived from the master seed.
pub fn protocol_trials(cfg: &ProtocolConfig) -> Result<Vec<Trial>, HarnessError> {
    let universe = cfg.board.universe()?;
    let mut rng = seed::rng(seed::derive(cfg.master_seed, seed::POSE_STREAM, 0, 0));
    let poses: Vec<Pose> = if cfg.n_poses <= universe.len() {
        index::sample(&mut rng, universe.len(), cfg.n_poses)
            .into_iter()
            .map(|i| universe.poses()[i])
            .collect()
    } else {
        (0..cfg.n_poses)
            .map(|_| universe.poses()[rng.gen_range(0..universe.len())])
            .collect()
    };
    let mut trials = Vec::with_capacity(cfg.n_poses * cfg.n_inits_per_pose);
    for (pi, pose) in poses.into_iter().enumerate() {
        for ii in 0..cfg.n_inits_per_pose {
            trials.push(Trial {
                pose_index: pi,
                init_index: ii,
                pose,
                seed: seed::derive(cfg.master_seed, seed::INIT_STREAM, pi as u64, ii as u64),
            });
        }
    }
    Ok(trials)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub mine: usize,
    pub stalled: usize,
    pub not_actionable: usize,
    pub illegal_move: usize,
    pub step_cap: usize,
    /// Episodes that raised a harness error.
    pub error: usize,
}

impl FailureCounts {
    pub fn total(&self) -> usize {
        self.mine + self.stalled + self.not_actionable + self.illegal_move + self.step_cap + self.error
    }

    fn add(&mut self, status: Option<EpisodeStatus>) {
        match status {
            Some(EpisodeStatus::FailedMine) => self.mine += 1,
            Some(EpisodeStatus::FailedStalled) => self.stalled += 1,
            Some(EpisodeStatus::FailedNotActionable) => self.not_actionable += 1,
            Some(EpisodeStatus::FailedIllegalMove) => self.illegal_move += 1,
            Some(EpisodeStatus::FailedStepCap) => self.step_cap += 1,
            Some(EpisodeStatus::Success | EpisodeStatus::Running) => {}
            None => self.error += 1,
        }
    }
}

/// Raw outcome of one protocol episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub agent: usize,
    pub pose_index: usize,
    pub init_index: usize,
    pub seed: u64,
    /// `None` when the episode raised an error.
    pub status: Option<EpisodeStatus>,
    pub steps: usize,
    pub reward: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub pose_index: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_steps: Option<f64>,
    pub failure_kinds: FailureCounts,
}

impl CellReport {
    /// Aggregates episode logs for one agent and pose; mean is over successes.
    pub fn from_logs<'a>(pose_index: usize, logs: impl IntoIterator<Item = &'a EpisodeLog>) -> Self {
        let mut successes = 0;
        let mut total_steps = 0;
        let mut kinds = FailureCounts::default();
        for l in logs {
            if l.status == Some(EpisodeStatus::Success) {
                successes += 1;
                total_steps += l.steps;
            } else {
                kinds.add(l.status);
            }
        }
        Self {
            pose_index,
            successes,
            failures: kinds.total(),
            mean_steps: (successes > 0).then(|| total_steps as f64 / successes as f64),
            failure_kinds: kinds,
        }
    }

    /// Table cell: `mean`, `mean;failures`, or `-;failures` with no successes.
    pub fn cell_text(&self) -> String {
        match (self.mean_steps, self.failures) {
            (Some(m), 0) => format!("{m:.1}"),
            (Some(m), f) => format!("{m:.1};{f}"),
            (None, f) => format!("-;{f}"),
        }
    }
}

/// Agents × poses matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub agents: Vec<String>,
    pub poses: Vec<Pose>,
    pub n_inits: usize,
    /// `cells[agent][pose]`.
    pub cells: Vec<Vec<CellReport>>,
    /// Lowest-mean agent per pose (earlier agent on ties); `None` if no agent succeeded.
    pub best: Vec<Option<usize>>,
    pub episodes: Vec<EpisodeLog>,
}

/// Lowest mean among agents with a mean; the earlier agent row wins ties.
pub fn best_agent(column: &[&CellReport]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in column.iter().enumerate() {
        if let Some(m) = c.mean_steps {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i)
}

impl Report {
    pub fn from_logs(agents: Vec<String>, poses: Vec<Pose>, n_inits: usize, episodes: Vec<EpisodeLog>) -> Self {
        let cells: Vec<Vec<CellReport>> = (0..agents.len())
            .map(|a| {
                (0..poses.len())
                    .map(|p| {
                        CellReport::from_logs(
                            p,
                            episodes.iter().filter(|l| l.agent == a && l.pose_index == p),
                        )
                    })
                    .collect()
            })
            .collect();
        let best = (0..poses.len())
            .map(|p| best_agent(&cells.iter().map(|row| &row[p]).collect::<Vec<_>>()))
            .collect();
        Self {
            agents,
            poses,
            n_inits,
            cells,
            best,
            episodes,
        }
    }

    pub fn successes(&self, agent: usize) -> usize {
        self.cells[agent].iter().map(|c| c.successes).sum()
    }

    pub fn failure_kinds(&self, agent: usize) -> FailureCounts {
        self.cells[agent].iter().fold(FailureCounts::default(), |mut acc, c| {
            let k = c.failure_kinds;
            acc.mine += k.mine;
            acc.stalled += k.stalled;
            acc.not_actionable += k.not_actionable;
            acc.illegal_move += k.illegal_move;
            acc.step_cap += k.step_cap;
            acc.error += k.error;
            acc
        })
    }

    /// Mean steps over all successful episodes of an agent.
    pub fn mean_steps(&self, agent: usize) -> Option<f64> {
        let (n, s) = self
            .episodes
            .iter()
            .filter(|l| l.agent == agent && l.status == Some(EpisodeStatus::Success))
            .fold((0usize, 0usize), |(n, s), l| (n + 1, s + l.steps));
        (n > 0).then(|| s as f64 / n as f64)
    }

    /// Aligned text table; `*` marks the best agent for each pose.
    pub fn render_table(&self) -> String {
        let header: Vec<String> = std::iter::once("Agent".to_string())
            .chain((1..=self.poses.len()).map(|i| format!("Trial {i}")))
            .collect();
        let mut rows = vec![header];
        for (a, name) in self.agents.iter().enumerate() {
            let mut row = vec![name.clone()];
            for (p, cell) in self.cells[a].iter().enumerate() {
                let mut t = cell.cell_text();
                if self.best[p] == Some(a) {
                    t.push('*');
                }
                row.push(t);
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            let _ = writeln!(out, "| {} |", line.join(" | "));
            if i == 0 {
                let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "|-{}-|", sep.join("-|-"));
            }
        }
        let _ = writeln!(
            out,
            "cells: mean actions over successful trials;failed trials (of {}). * best per pose.",
            self.n_inits
        );
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "agent,pose,pose_r,pose_c,pose_orient,mean_steps,successes,failures,mine,stalled,not_actionable,illegal_move,step_cap,error,best,cell\n",
        );
        for (a, name) in self.agents.iter().enumerate() {
            for (p, c) in self.cells[a].iter().enumerate() {
                let pose = self.poses[p];
                let k = c.failure_kinds;
                let _ = writeln!(
                    out,
                    "{name},{p},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    pose.row,
                    pose.col,
                    pose.orientation.degrees(),
                    c.mean_steps.map(|m| format!("{m:.4}")).unwrap_or_default(),
                    c.successes,
                    c.failures,
                    k.mine,
                    k.stalled,
                    k.not_actionable,
                    k.illegal_move,
                    k.step_cap,
                    k.error,
                    u8::from(self.best[p] == Some(a)),
                    c.cell_text()
                );
            }
        }
        out
    }
}

/// Line-up entry: display name plus a loaded agent.
pub type NamedAgent<T> = (String, Agent<T>);

pub fn load_agents<T: Scalar>(cfg: &ProtocolConfig) -> Result<Vec<NamedAgent<T>>, HarnessError> {
    cfg.agents
        .iter()
        .map(|spec| Ok((spec.kind.to_string(), spec.load(&cfg.board)?)))
        .collect()
}

/// Runs every agent on the same trials. Episode errors are recorded as
/// failures and never abort the protocol.
pub fn run_protocol<T: Scalar>(
    cfg: &ProtocolConfig,
    agents: &[NamedAgent<T>],
) -> Result<Report, HarnessError> {
    let trials = protocol_trials(cfg)?;
    let jobs: Vec<(usize, Trial)> = (0..agents.len())
        .flat_map(|a| trials.iter().map(move |t| (a, *t)))
        .collect();
    let episodes: Vec<EpisodeLog> = jobs
        .par_iter()
        .map(|&(a, t)| match run_episode(&agents[a].1, &cfg.board, t.pose, t.seed) {
            Ok(r) => EpisodeLog {
                agent: a,
                pose_index: t.pose_index,
                init_index: t.init_index,
                seed: t.seed,
                status: Some(r.status),
                steps: r.steps,
                reward: r.reward,
                error: None,
            },
            Err(e) => {
                log::error!("agent {} pose {} init {}: {e}", agents[a].0, t.pose_index, t.init_index);
                EpisodeLog {
                    agent: a,
                    pose_index: t.pose_index,
                    init_index: t.init_index,
                    seed: t.seed,
                    status: None,
                    steps: 0,
                    reward: 0,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let mut poses = vec![Pose::at(0, 0); cfg.n_poses];
    for t in &trials {
        poses[t.pose_index] = t.pose;
    }
    Ok(Report::from_logs(
        agents.iter().map(|(n, _)| n.clone()).collect(),
        poses,
        cfg.n_inits_per_pose,
        episodes,
    ))
}

/// Machine-readable record of a protocol run: configuration, every seed, raw logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ProtocolConfig,
    pub trials: Vec<Trial>,
    pub report: Report,
}

pub fn run_manifest(cfg: &ProtocolConfig, report: &Report) -> Result<RunManifest, HarnessError> {
    Ok(RunManifest {
        config: cfg.clone(),
        trials: protocol_trials(cfg)?,
        report: report.clone(),
    })
}

// ---------------------------------------------------------------------------
// configuration file

/// On-disk protocol configuration (TOML). Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub rows: usize,
    pub cols: usize,
    /// Built-in template name; ignored when `template_file` is set.
    pub template: String,
    pub template_file: Option<PathBuf>,
    /// Degrees: any of 0, 90, 180, 270.
    pub orientations: Vec<u16>,
    pub dedupe_by_cells: bool,
    pub feature_variant: FeatureVariant,
    pub step_cap: Option<usize>,
    pub mc_masking: bool,
    pub n_poses: usize,
    pub n_inits_per_pose: usize,
    pub master_seed: u64,
    pub agents: Vec<AgentSpec>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            rows: p.board.rows,
            cols: p.board.cols,
            template: "H3".into(),
            template_file: None,
            orientations: vec![0],
            dedupe_by_cells: p.board.dedupe_by_cells,
            feature_variant: p.board.feature_variant,
            step_cap: None,
            mc_masking: true,
            n_poses: p.n_poses,
            n_inits_per_pose: p.n_inits_per_pose,
            master_seed: p.master_seed,
            agents: Vec::new(),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_protocol(&self) -> Result<ProtocolConfig, HarnessError> {
        let template = match &self.template_file {
            Some(path) => ShapeTemplate::parse(&fs::read_to_string(path)?)?,
            None => ShapeTemplate::builtin(&self.template)
                .ok_or_else(|| HarnessError::Config(format!("unknown template {:?}", self.template)))?,
        };
        let orientations = self
            .orientations
            .iter()
            .map(|&d| {
                Orientation::from_degrees(d)
                    .ok_or_else(|| HarnessError::Config(format!("orientation {d} is not 0/90/180/270")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if orientations.is_empty() {
            return Err(HarnessError::Config("at least one orientation is required".into()));
        }
        let board = BoardConfig {
            rows: self.rows,
            cols: self.cols,
            template,
            orientations,
            dedupe_by_cells: self.dedupe_by_cells,
            feature_variant: self.feature_variant,
            step_cap: self.step_cap,
            mc_masking: self.mc_masking,
        };
        board.universe()?;
        Ok(ProtocolConfig {
            board,
            n_poses: self.n_poses,
            n_inits_per_pose: self.n_inits_per_pose,
            master_seed: self.master_seed,
            agents: self.agents.clone(),
        })
    }
}
