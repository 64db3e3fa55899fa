//! One interactive game: episode state, belief, feature map and the pending
//! demonstration, kept in step with each other.

use std::time::{SystemTime, UNIX_EPOCH};

use hypsearch::agents::{Agent, AgentError, Decision};
use hypsearch::features::{extract_template, FeatureMap, FeatureVariant};
use hypsearch::grid::{
    ActionClass, Direction, EpisodeState, EpisodeStatus, GridCell, GridError, OpenOutcome,
    Orientation, Pose, ShapeTemplate,
};
use hypsearch::harness::{failure_status, sample_pose, BoardConfig};
use hypsearch::learning::{DemoSource, DemoStep, Demonstration};
use hypsearch::{seed, HypothesisSet};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// A person chooses every cell; moves are recorded as demonstrations.
    #[default]
    HumanDemo,
    /// Moves come from `agent-step` only.
    AgentWatch,
}

/// Body of `POST /sessions`. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub rows: usize,
    pub cols: usize,
    pub template: String,
    pub orientations: Vec<u16>,
    pub feature_variant: FeatureVariant,
    pub step_cap: Option<usize>,
    pub mode: Mode,
    /// Hidden pose; sampled from `seed` when absent.
    pub pose: Option<Pose>,
    pub seed: Option<u64>,
    /// Include the hidden pose in every state view.
    pub debug: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let b = BoardConfig::default();
        Self {
            rows: b.rows,
            cols: b.cols,
            template: b.template.name().to_string(),
            orientations: vec![0],
            feature_variant: b.feature_variant,
            step_cap: None,
            mode: Mode::default(),
            pose: None,
            seed: None,
            debug: false,
        }
    }
}

impl SessionConfig {
    pub fn board_config(&self) -> Result<BoardConfig, ServiceError> {
        let template = ShapeTemplate::builtin(&self.template)
            .ok_or_else(|| ServiceError::Invalid(format!("unknown template {:?}", self.template)))?;
        let orientations = self
            .orientations
            .iter()
            .map(|&d| {
                Orientation::from_degrees(d)
                    .ok_or_else(|| ServiceError::Invalid(format!("orientation {d} is not 0/90/180/270")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if orientations.is_empty() {
            return Err(ServiceError::Invalid("at least one orientation is required".into()));
        }
        Ok(BoardConfig {
            rows: self.rows,
            cols: self.cols,
            template,
            orientations,
            feature_variant: self.feature_variant,
            step_cap: self.step_cap,
            ..BoardConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenedCell {
    pub r: usize,
    pub c: usize,
    pub count: u8,
}

/// Everything a client may see. A pure function of the observations, so two
/// games with different hidden poses but equal observations look the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub status: EpisodeStatus,
    pub mode: Mode,
    pub rows: usize,
    pub cols: usize,
    pub opened: Vec<OpenedCell>,
    pub agent: GridCell,
    pub hyp_count: usize,
    pub hypotheses: Vec<Pose>,
    pub feature: Vec<f64>,
    pub steps: usize,
    /// The mine that ended the game, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mine: Option<GridCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Pose>,
}

/// Why an agent could not move; the episode ends with `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFailure {
    pub status: EpisodeStatus,
    pub error: String,
    pub message: String,
    /// Per-direction scores, when the agent produced them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub decision: Option<Decision<f64>>,
    pub outcome: Option<OpenOutcome>,
    pub failure: Option<AgentFailure>,
}

pub struct Session {
    id: String,
    episode_id: u64,
    mode: Mode,
    debug: bool,
    cfg: BoardConfig,
    state: EpisodeState,
    belief: HypothesisSet,
    features: FeatureMap<f64>,
    demo: Vec<DemoStep<f64>>,
    finalized: bool,
    created_ms: u64,
    updated_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn grid_error(e: GridError) -> ServiceError {
    match e {
        GridError::AlreadyOpened(c) => ServiceError::AlreadyOpened(c),
        GridError::EpisodeOver(s) => ServiceError::EpisodeOver(s),
        other => ServiceError::Invalid(other.to_string()),
    }
}

impl Session {
    pub fn create(id: String, episode_id: u64, config: &SessionConfig, fallback_seed: u64) -> Result<Self, ServiceError> {
        let cfg = config.board_config()?;
        let universe = cfg.universe().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let master = config.seed.unwrap_or(fallback_seed);
        let pose = match config.pose {
            Some(p) => {
                if !cfg.orientations.contains(&p.orientation) {
                    return Err(ServiceError::Invalid(format!(
                        "pose orientation {} is not enabled",
                        p.orientation.degrees()
                    )));
                }
                p
            }
            None => sample_pose(&universe, seed::derive(master, seed::POSE_STREAM, 0, 0)),
        };
        let board = cfg.board().map_err(grid_error)?;
        let state = EpisodeState::init(board, cfg.template.clone(), pose, seed::derive(master, seed::INIT_STREAM, 0, 0))
            .map_err(grid_error)?;
        let belief = HypothesisSet::build(state.opened(), cfg.template.clone(), board, &cfg.belief())
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let features = FeatureMap::from_belief(&belief, cfg.feature_variant)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let now = now_ms();
        let mut s = Self {
            id,
            episode_id,
            mode: config.mode,
            debug: config.debug,
            cfg,
            state,
            belief,
            features,
            demo: Vec::new(),
            finalized: false,
            created_ms: now,
            updated_ms: now,
        };
        s.settle()?;
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &BoardConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn belief(&self) -> &HypothesisSet {
        &self.belief
    }

    pub fn features(&self) -> &FeatureMap<f64> {
        &self.features
    }

    pub fn created_ms(&self) -> u64 {
        self.created_ms
    }

    pub fn updated_ms(&self) -> u64 {
        self.updated_ms
    }

    pub fn view(&self) -> StateView {
        StateView {
            status: self.state.status(),
            mode: self.mode,
            rows: self.cfg.rows,
            cols: self.cfg.cols,
            opened: self
                .state
                .opened()
                .iter()
                .map(|(c, &count)| OpenedCell { r: c.row, c: c.col, count })
                .collect(),
            agent: self.state.agent_cell(),
            hyp_count: self.belief.len(),
            hypotheses: self.belief.poses().to_vec(),
            feature: self.features.scores().to_vec(),
            steps: self.state.steps(),
            mine: self.state.mine_hit(),
            ground_truth: self.debug.then(|| self.state.ground_truth()),
        }
    }

    /// The human move: any unopened cell on the board.
    pub fn open(&mut self, cell: GridCell) -> Result<OpenOutcome, ServiceError> {
        if self.mode != Mode::HumanDemo {
            return Err(ServiceError::WrongMode("cells are opened by agent-step in agent-watch mode".into()));
        }
        if !self.state.status().is_running() {
            return Err(ServiceError::EpisodeOver(self.state.status()));
        }
        if !self.state.board().contains(cell) {
            return Err(ServiceError::Invalid(format!("cell {cell} is off the board")));
        }
        if self.state.is_opened(cell) {
            return Err(ServiceError::AlreadyOpened(cell));
        }
        let agent_cell = self.state.agent_cell();
        let step = DemoStep {
            step: self.demo.len(),
            template: extract_template(&self.features, agent_cell).map_err(grid_error)?,
            action: Direction::between(agent_cell, cell).map(ActionClass::from),
            agent_cell,
            chosen_cell: cell,
            feature: self.features.scores().to_vec(),
            opened: self.state.opened().keys().copied().collect(),
        };
        let outcome = self.apply(cell)?;
        self.demo.push(step);
        Ok(outcome)
    }

    /// One decision by `agent`, applied to the game.
    pub fn agent_step(&mut self, agent: &Agent<f64>) -> Result<StepOutcome, ServiceError> {
        if self.mode != Mode::AgentWatch {
            return Err(ServiceError::WrongMode("agent-step needs an agent-watch session".into()));
        }
        if !self.state.status().is_running() {
            return Err(ServiceError::EpisodeOver(self.state.status()));
        }
        let decision = match agent.decide(&self.state, &self.belief, &self.features) {
            Ok(d) => d,
            Err(e) => {
                let Some(status) = failure_status(&e) else {
                    return Err(match e {
                        AgentError::Belief(b) => ServiceError::Internal(b.to_string()),
                        other => ServiceError::Invalid(other.to_string()),
                    });
                };
                let scores = match &e {
                    AgentError::NotActionable { scores } => Some(scores.clone()),
                    _ => None,
                };
                self.finish(status)?;
                return Ok(StepOutcome {
                    decision: None,
                    outcome: None,
                    failure: Some(AgentFailure {
                        status,
                        error: error_code(&e).into(),
                        message: e.to_string(),
                        scores,
                    }),
                });
            }
        };
        let Some(target) = decision.target else {
            self.finish(EpisodeStatus::Success)?;
            return Ok(StepOutcome { decision: Some(decision), outcome: None, failure: None });
        };
        if self.state.steps() >= self.cfg.step_cap() {
            self.finish(EpisodeStatus::FailedStepCap)?;
            return Ok(StepOutcome { decision: Some(decision), outcome: None, failure: None });
        }
        let outcome = self.apply(target)?;
        Ok(StepOutcome { decision: Some(decision), outcome: Some(outcome), failure: None })
    }

    /// Takes the recorded demonstration once the human game is over.
    pub fn take_demonstration(&mut self) -> Result<(EpisodeStatus, Demonstration<f64>), ServiceError> {
        if self.mode != Mode::HumanDemo {
            return Err(ServiceError::WrongMode("only human-demo sessions record demonstrations".into()));
        }
        if self.state.status().is_running() {
            return Err(ServiceError::StillRunning);
        }
        if self.finalized {
            return Err(ServiceError::AlreadyFinalized);
        }
        self.finalized = true;
        Ok((
            self.state.status(),
            Demonstration {
                episode_id: self.episode_id,
                source: DemoSource::Human,
                fingerprint: self.cfg.fingerprint(),
                steps: std::mem::take(&mut self.demo),
            },
        ))
    }

    fn apply(&mut self, cell: GridCell) -> Result<OpenOutcome, ServiceError> {
        let outcome = self.state.open_cell(cell).map_err(grid_error)?;
        if let OpenOutcome::Count(_) = outcome {
            let belief = self
                .belief
                .filter(cell, outcome)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            let features = FeatureMap::from_belief(&belief, self.cfg.feature_variant)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            self.belief = belief;
            self.features = features;
        }
        self.settle()?;
        self.updated_ms = now_ms();
        Ok(outcome)
    }

    /// Ends the game when the belief has resolved or the step cap is reached.
    /// Agent-watch games wait for the agent's terminal action instead.
    fn settle(&mut self) -> Result<(), ServiceError> {
        if !self.state.status().is_running() || self.mode != Mode::HumanDemo {
            return Ok(());
        }
        if self.belief.len() == 1 {
            self.finish(EpisodeStatus::Success)?;
        } else if self.state.steps() >= self.cfg.step_cap() {
            self.finish(EpisodeStatus::FailedStepCap)?;
        }
        Ok(())
    }

    fn finish(&mut self, status: EpisodeStatus) -> Result<(), ServiceError> {
        self.state.finish(status).map_err(grid_error)?;
        self.updated_ms = now_ms();
        Ok(())
    }
}

fn error_code(e: &AgentError) -> &'static str {
    match e {
        AgentError::Stalled => "stalled",
        AgentError::NotActionable { .. } => "not_actionable",
        AgentError::IllegalMove { .. } => "illegal_move",
        AgentError::EmptyFrontier => "empty_frontier",
        _ => "agent_error",
    }
}
