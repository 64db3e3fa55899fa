//! Action selection: the oracle expert, the heuristic player and the three
//! learned agents.
//!
//! Every agent answers with the terminal action as soon as the belief holds a
//! single pose, before looking at anything else.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{extract_template, FeatureMap};
use crate::grid::{ActionClass, Direction, EpisodeState, GridCell};
use crate::hypothesis::{BeliefError, HypothesisSet};
use crate::learning::{argmax, LinearModel, ModelKind};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "oracle")]
    Oracle,
    /// Greedy ascent on the feature map (HP).
    #[serde(rename = "hp")]
    Heuristic,
    /// One-vs-all direction classifier (MC).
    #[serde(rename = "mc")]
    Multiclass,
    /// Binary actionable classifier over the whole frontier (BE).
    #[serde(rename = "be")]
    BinaryAnywhere,
    /// Binary actionable classifier over the 8-neighborhood (B8).
    #[serde(rename = "b8")]
    BinaryNeighbors,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Oracle,
        AgentKind::Heuristic,
        AgentKind::Multiclass,
        AgentKind::BinaryAnywhere,
        AgentKind::BinaryNeighbors,
    ];

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            AgentKind::Oracle | AgentKind::Heuristic => None,
            AgentKind::Multiclass => Some(ModelKind::Multiclass8),
            AgentKind::BinaryAnywhere | AgentKind::BinaryNeighbors => Some(ModelKind::Binary),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            AgentKind::Oracle => "oracle",
            AgentKind::Heuristic => "hp",
            AgentKind::Multiclass => "mc",
            AgentKind::BinaryAnywhere => "be",
            AgentKind::BinaryNeighbors => "b8",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Oracle => f.write_str("Oracle"),
            other => f.write_str(&other.short_name().to_uppercase()),
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        AgentKind::ALL
            .into_iter()
            .find(|k| k.short_name() == lower)
            .ok_or_else(|| format!("unknown agent {s:?} (expected oracle, hp, mc, be or b8)"))
    }
}

/// One agent move.
///
/// `action` is the terminal class iff `target` is `None`; it is `None` for a
/// move to a cell that is not 8-adjacent to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Decision<T> {
    pub action: Option<ActionClass>,
    pub target: Option<GridCell>,
    /// Diagnostics: per-direction scores (`None` where a class was not scored).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<Option<T>>>,
}

impl<T: Scalar> Decision<T> {
    pub fn terminal() -> Self {
        Self {
            action: Some(ActionClass::TERMINAL),
            target: None,
            scores: None,
        }
    }

    fn open(from: GridCell, target: GridCell, scores: Option<Vec<Option<T>>>) -> Self {
        Self {
            action: Direction::between(from, target).map(ActionClass::from),
            target: Some(target),
            scores,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.action.is_some_and(ActionClass::is_terminal)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no legal move")]
    Stalled,
    #[error("no neighbor classified as actionable")]
    NotActionable { scores: Vec<Option<f64>> },
    #[error("classifier chose an illegal move {action:?}")]
    IllegalMove { action: ActionClass },
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error("belief already resolved; the terminal action is due")]
    AlreadyResolved,
    #[error("agent {0} needs a model")]
    MissingModel(AgentKind),
    #[error("agent {agent} needs a {expected:?} model, got {found:?}")]
    WrongModelKind {
        agent: AgentKind,
        expected: ModelKind,
        found: ModelKind,
    },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// True iff the belief holds exactly one pose.
pub fn check_terminal(h: &HypothesisSet) -> Result<bool, BeliefError> {
    if h.is_empty() {
        return Err(BeliefError::BeliefCollapse);
    }
    Ok(h.len() == 1)
}

/// Safe neighbor whose observation leaves the fewest hypotheses.
///
/// Uses the ground truth to avoid mines; this is the demonstration source, not
/// a fair player.
pub fn oracle_expert_action<T: Scalar>(
    state: &EpisodeState,
    h: &HypothesisSet,
) -> Result<Decision<T>, AgentError> {
    if h.len() <= 1 {
        return Err(if h.is_empty() {
            BeliefError::BeliefCollapse.into()
        } else {
            AgentError::AlreadyResolved
        });
    }
    let mut sizes: Vec<Option<T>> = vec![None; 8];
    let mut best: Option<(usize, GridCell)> = None;
    for (d, c) in state.legal_neighbors() {
        if state.is_mine(c) {
            continue;
        }
        let n = h.filter(c, state.peek(c))?.len();
        sizes[d.index()] = Some(T::of_usize(n));
        if best.is_none_or(|(m, _)| n < m) {
            best = Some((n, c));
        }
    }
    let (_, target) = best.ok_or(AgentError::Stalled)?;
    Ok(Decision::open(state.agent_cell(), target, Some(sizes)))
}

/// Highest-scoring unopened neighbor. Knows nothing about mines.
pub fn heuristic_action<T: Scalar>(
    state: &EpisodeState,
    fm: &FeatureMap<T>,
) -> Result<Decision<T>, AgentError> {
    let mut scores: Vec<Option<T>> = vec![None; 8];
    for (d, c) in state.legal_neighbors() {
        scores[d.index()] = Some(fm.at(c));
    }
    let k = argmax(scores.iter().copied()).ok_or(AgentError::Stalled)?;
    let target = state
        .board()
        .neighbor(state.agent_cell(), Direction::ALL[k])
        .ok_or(AgentError::Stalled)?;
    Ok(Decision::open(state.agent_cell(), target, Some(scores)))
}

/// Multiclass direction classifier on the template at the agent.
///
/// With `masking`, classes pointing off the board or at opened cells are
/// skipped; without it, such a choice is an [`AgentError::IllegalMove`].
pub fn mc_action<T: Scalar>(
    model: &LinearModel<T>,
    state: &EpisodeState,
    fm: &FeatureMap<T>,
    masking: bool,
) -> Result<Decision<T>, AgentError> {
    expect(model, AgentKind::Multiclass)?;
    let agent = state.agent_cell();
    let template = extract_template(fm, agent).map_err(BeliefError::from)?;
    let raw = model.scores(&template);
    let targets: Vec<Option<GridCell>> = Direction::ALL
        .iter()
        .map(|&d| {
            state
                .board()
                .neighbor(agent, d)
                .filter(|c| !state.is_opened(*c))
        })
        .collect();
    let candidates = raw
        .iter()
        .zip(&targets)
        .map(|(&s, t)| (!masking || t.is_some()).then_some(s));
    let k = argmax(candidates).ok_or(AgentError::Stalled)?;
    let target = targets[k].ok_or(AgentError::IllegalMove {
        action: ActionClass::from(Direction::ALL[k]),
    })?;
    let scores = raw
        .into_iter()
        .map(|s| (s != T::neg_infinity()).then_some(s))
        .collect();
    Ok(Decision::open(agent, target, Some(scores)))
}

/// Binary classifier applied to the template centered at each legal neighbor.
pub fn b8_action<T: Scalar>(
    model: &LinearModel<T>,
    state: &EpisodeState,
    fm: &FeatureMap<T>,
) -> Result<Decision<T>, AgentError> {
    expect(model, AgentKind::BinaryNeighbors)?;
    let mut scores: Vec<Option<T>> = vec![None; 8];
    let mut any_legal = false;
    for (d, c) in state.legal_neighbors() {
        let t = extract_template(fm, c).map_err(BeliefError::from)?;
        scores[d.index()] = Some(model.score(0, &t));
        any_legal = true;
    }
    if !any_legal {
        return Err(AgentError::Stalled);
    }
    let positive = scores.iter().map(|s| s.filter(|v| *v > T::zero()));
    match argmax(positive) {
        Some(k) => {
            let target = state
                .board()
                .neighbor(state.agent_cell(), Direction::ALL[k])
                .ok_or(AgentError::Stalled)?;
            Ok(Decision::open(state.agent_cell(), target, Some(scores)))
        }
        None => Err(AgentError::NotActionable {
            scores: scores.iter().map(|s| s.map(Scalar::as_f64)).collect(),
        }),
    }
}

/// Binary classifier over every frontier cell. Falls back to the best score
/// when nothing is classified positive, so it only stops on an empty frontier.
pub fn be_action<T: Scalar>(
    model: &LinearModel<T>,
    state: &EpisodeState,
    fm: &FeatureMap<T>,
) -> Result<Decision<T>, AgentError> {
    expect(model, AgentKind::BinaryAnywhere)?;
    let frontier = state.frontier();
    if frontier.is_empty() {
        return Err(AgentError::EmptyFrontier);
    }
    let mut scored = Vec::with_capacity(frontier.len());
    for c in frontier {
        let t = extract_template(fm, c).map_err(BeliefError::from)?;
        scored.push((c, model.score(0, &t)));
    }
    let k = argmax(scored.iter().map(|&(_, s)| Some(s)))
        .unwrap_or(0);
    Ok(Decision::open(state.agent_cell(), scored[k].0, None))
}

fn expect<T: Scalar>(model: &LinearModel<T>, agent: AgentKind) -> Result<(), AgentError> {
    let expected = agent.model_kind().expect("learned agent");
    if model.kind != expected {
        return Err(AgentError::WrongModelKind {
            agent,
            expected,
            found: model.kind,
        });
    }
    Ok(())
}

/// A ready-to-run policy.
#[derive(Debug, Clone)]
pub enum Agent<T> {
    Oracle,
    Heuristic,
    Multiclass { model: LinearModel<T>, masking: bool },
    BinaryAnywhere(LinearModel<T>),
    BinaryNeighbors(LinearModel<T>),
}

impl<T: Scalar> Agent<T> {
    /// Pairs an agent kind with its model, checking the model kind.
    pub fn new(kind: AgentKind, model: Option<LinearModel<T>>) -> Result<Self, AgentError> {
        if let (Some(expected), Some(m)) = (kind.model_kind(), model.as_ref()) {
            if m.kind != expected {
                return Err(AgentError::WrongModelKind {
                    agent: kind,
                    expected,
                    found: m.kind,
                });
            }
        }
        let need = || model.clone().ok_or(AgentError::MissingModel(kind));
        Ok(match kind {
            AgentKind::Oracle => Agent::Oracle,
            AgentKind::Heuristic => Agent::Heuristic,
            AgentKind::Multiclass => Agent::Multiclass {
                model: need()?,
                masking: true,
            },
            AgentKind::BinaryAnywhere => Agent::BinaryAnywhere(need()?),
            AgentKind::BinaryNeighbors => Agent::BinaryNeighbors(need()?),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Oracle => AgentKind::Oracle,
            Agent::Heuristic => AgentKind::Heuristic,
            Agent::Multiclass { .. } => AgentKind::Multiclass,
            Agent::BinaryAnywhere(_) => AgentKind::BinaryAnywhere,
            Agent::BinaryNeighbors(_) => AgentKind::BinaryNeighbors,
        }
    }

    pub fn model(&self) -> Option<&LinearModel<T>> {
        match self {
            Agent::Oracle | Agent::Heuristic => None,
            Agent::Multiclass { model, .. } => Some(model),
            Agent::BinaryAnywhere(m) | Agent::BinaryNeighbors(m) => Some(m),
        }
    }

    pub fn with_masking(self, on: bool) -> Self {
        match self {
            Agent::Multiclass { model, .. } => Agent::Multiclass { model, masking: on },
            other => other,
        }
    }

    pub fn decide(
        &self,
        state: &EpisodeState,
        h: &HypothesisSet,
        fm: &FeatureMap<T>,
    ) -> Result<Decision<T>, AgentError> {
        if check_terminal(h)? {
            return Ok(Decision::terminal());
        }
        match self {
            Agent::Oracle => oracle_expert_action(state, h),
            Agent::Heuristic => heuristic_action(state, fm),
            Agent::Multiclass { model, masking } => mc_action(model, state, fm, *masking),
            Agent::BinaryAnywhere(m) => be_action(m, state, fm),
            Agent::BinaryNeighbors(m) => b8_action(m, state, fm),
        }
    }
}
