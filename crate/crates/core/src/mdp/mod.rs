//! Finite MDPs with named states and actions, trajectories, and stationary
//! policies.
//!
//! Identifiers are strings at the boundary and dense indices inside. Index
//! order is declaration order, so everything built from the same input is
//! laid out identically.

mod evaluate;
mod grid;
mod reach;
mod simulate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use evaluate::{policy_occupancy, policy_reach_probability, EvaluationError};
pub use grid::{GridError, GridSpec};
pub use reach::{
    max_reach_probability, max_reach_probability_to, min_steps, reachability_report,
    zero_reach_states, ReachabilityReport, StepCount, ZeroReach,
};
pub use simulate::{most_likely_trajectory, simulate};

/// Row sums within this distance of 1 are renormalized; anything further is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("row ({state}, {action}) sums to {sum}, not 1")]
    NonStochasticRow { state: String, action: String, sum: f64 },
    #[error("row ({state}, {action}) has negative probability {p} toward {next}")]
    NegativeProbability { state: String, action: String, next: String, p: f64 },
    #[error("goal {0} is not absorbing")]
    NonAbsorbingGoal(String),
    #[error("true goal {0} is not one of the goals")]
    UnknownTrueGoal(String),
    #[error("goal set is empty")]
    EmptyGoalSet,
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("duplicate identifier {0}")]
    Duplicate(String),
    #[error("no states or no actions declared")]
    Empty,
}

impl MdpError {
    pub fn code(&self) -> &'static str {
        match self {
            MdpError::NonStochasticRow { .. } => "non_stochastic_row",
            MdpError::NegativeProbability { .. } => "negative_probability",
            MdpError::NonAbsorbingGoal(_) => "non_absorbing_goal",
            MdpError::UnknownTrueGoal(_) => "unknown_true_goal",
            MdpError::EmptyGoalSet => "empty_goal_set",
            MdpError::UnknownState(_) => "unknown_state",
            MdpError::UnknownAction(_) => "unknown_action",
            MdpError::Duplicate(_) => "duplicate_identifier",
            MdpError::Empty => "empty_mdp",
        }
    }
}

/// One `(state, action)` row of an unvalidated MDP description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawTransition {
    pub state: String,
    pub action: String,
    /// `(successor, probability)` pairs. Repeated successors are summed.
    pub next: Vec<(String, f64)>,
}

/// Unvalidated MDP description, as read from JSON or assembled in code.
///
/// Goal states without any listed row are made absorbing automatically.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawMdp {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial_state: String,
    pub transitions: Vec<RawTransition>,
    pub goals: Vec<String>,
    pub true_goal: String,
}

impl RawMdp {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        actions: impl IntoIterator<Item = S>,
        initial_state: impl Into<String>,
    ) -> Self {
        RawMdp {
            states: states.into_iter().map(Into::into).collect(),
            actions: actions.into_iter().map(Into::into).collect(),
            initial_state: initial_state.into(),
            ..Default::default()
        }
    }

    pub fn transition(mut self, state: &str, action: &str, next: &[(&str, f64)]) -> Self {
        self.transitions.push(RawTransition {
            state: state.to_owned(),
            action: action.to_owned(),
            next: next.iter().map(|(s, p)| ((*s).to_owned(), *p)).collect(),
        });
        self
    }

    pub fn goals<S: Into<String>>(mut self, goals: impl IntoIterator<Item = S>, true_goal: &str) -> Self {
        self.goals = goals.into_iter().map(Into::into).collect();
        self.true_goal = true_goal.to_owned();
        self
    }
}

/// A validated finite MDP with an initial state, a goal set and a true goal.
#[derive(Debug, Clone)]
pub struct Mdp<T> {
    states: Vec<String>,
    actions: Vec<String>,
    state_index: HashMap<String, usize>,
    action_index: HashMap<String, usize>,
    initial: usize,
    /// `rows[s * |A| + a]`: sparse successor distribution sorted by successor index.
    rows: Vec<Vec<(usize, T)>>,
    goals: Vec<usize>,
    goal_position: Vec<Option<usize>>,
    true_goal: usize,
}

fn index_names(names: &[String]) -> Result<HashMap<String, usize>, MdpError> {
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(MdpError::Duplicate(n.clone()));
        }
    }
    Ok(map)
}

/// Validates a raw description into an [`Mdp`].
pub fn validate_mdp<T: Scalar>(raw: &RawMdp) -> Result<Mdp<T>, MdpError> {
    if raw.states.is_empty() || raw.actions.is_empty() {
        return Err(MdpError::Empty);
    }
    let state_index = index_names(&raw.states)?;
    let action_index = index_names(&raw.actions)?;
    let lookup_state = |s: &str| {
        state_index
            .get(s)
            .copied()
            .ok_or_else(|| MdpError::UnknownState(s.to_owned()))
    };
    let initial = lookup_state(&raw.initial_state)?;
    if raw.goals.is_empty() {
        return Err(MdpError::EmptyGoalSet);
    }
    let mut goals = Vec::with_capacity(raw.goals.len());
    let mut goal_position = vec![None; raw.states.len()];
    for g in &raw.goals {
        let gi = lookup_state(g)?;
        if goal_position[gi].is_some() {
            return Err(MdpError::Duplicate(g.clone()));
        }
        goal_position[gi] = Some(goals.len());
        goals.push(gi);
    }
    let true_goal = match state_index.get(&raw.true_goal) {
        Some(&i) if goal_position[i].is_some() => i,
        _ => return Err(MdpError::UnknownTrueGoal(raw.true_goal.clone())),
    };

    let n_a = raw.actions.len();
    let mut dense: Vec<Option<Vec<(usize, f64)>>> = vec![None; raw.states.len() * n_a];
    for t in &raw.transitions {
        let s = lookup_state(&t.state)?;
        let a = *action_index
            .get(&t.action)
            .ok_or_else(|| MdpError::UnknownAction(t.action.clone()))?;
        let row = dense[s * n_a + a].get_or_insert_with(Vec::new);
        for (next, p) in &t.next {
            let ni = lookup_state(next)?;
            if *p < 0.0 || !p.is_finite() {
                return Err(MdpError::NegativeProbability {
                    state: t.state.clone(),
                    action: t.action.clone(),
                    next: next.clone(),
                    p: *p,
                });
            }
            row.push((ni, *p));
        }
    }

    let mut rows = Vec::with_capacity(dense.len());
    for (idx, row) in dense.into_iter().enumerate() {
        let (s, a) = (idx / n_a, idx % n_a);
        let row = match row {
            Some(r) => r,
            None if goal_position[s].is_some() => vec![(s, 1.0)],
            None => Vec::new(),
        };
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        let mut sorted = row;
        sorted.sort_by_key(|e| e.0);
        for (ni, p) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == ni => last.1 += p,
                _ => merged.push((ni, p)),
            }
        }
        merged.retain(|e| e.1 > 0.0);
        let sum: f64 = merged.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MdpError::NonStochasticRow {
                state: raw.states[s].clone(),
                action: raw.actions[a].clone(),
                sum,
            });
        }
        if goal_position[s].is_some() && !(merged.len() == 1 && merged[0].0 == s) {
            return Err(MdpError::NonAbsorbingGoal(raw.states[s].clone()));
        }
        rows.push(merged.into_iter().map(|(ni, p)| (ni, T::lit(p / sum))).collect());
    }

    Ok(Mdp {
        states: raw.states.clone(),
        actions: raw.actions.clone(),
        state_index,
        action_index,
        initial,
        rows,
        goals,
        goal_position,
        true_goal,
    })
}

impl<T: Scalar> Mdp<T> {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn action_id(&self, name: &str) -> Option<usize> {
        self.action_index.get(name).copied()
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    /// Goal states in declaration order.
    pub fn goals(&self) -> &[usize] {
        &self.goals
    }

    pub fn true_goal(&self) -> usize {
        self.true_goal
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goal_position[s].is_some()
    }

    /// Position of `s` in [`Mdp::goals`], if it is a goal.
    pub fn goal_position(&self, s: usize) -> Option<usize> {
        self.goal_position[s]
    }

    /// Position of the true goal in [`Mdp::goals`].
    pub fn true_goal_position(&self) -> usize {
        self.goal_position[self.true_goal].expect("true goal is a goal")
    }

    /// Sparse successor distribution of `(s, a)`, sorted by successor index.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, T)] {
        &self.rows[s * self.actions.len() + a]
    }

    pub fn probability(&self, s: usize, a: usize, next: usize) -> T {
        let row = self.successors(s, a);
        row.binary_search_by_key(&next, |e| e.0)
            .map(|i| row[i].1)
            .unwrap_or_else(|_| T::zero())
    }

    /// Successor states of `s` in the graph of the MDP (union over actions), ascending.
    pub fn graph_successors(&self, s: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.n_actions())
            .flat_map(|a| self.successors(s, a).iter().map(|e| e.0))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Reverse adjacency of the graph of the MDP.
    pub fn graph_predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.n_states()];
        for s in 0..self.n_states() {
            for next in self.graph_successors(s) {
                pred[next].push(s);
            }
        }
        pred
    }

    /// Converts the probabilities to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Mdp<U> {
        Mdp {
            states: self.states.clone(),
            actions: self.actions.clone(),
            state_index: self.state_index.clone(),
            action_index: self.action_index.clone(),
            initial: self.initial,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&(s, p)| (s, U::lit(p.as_f64()))).collect())
                .collect(),
            goals: self.goals.clone(),
            goal_position: self.goal_position.clone(),
            true_goal: self.true_goal,
        }
    }

    /// Same MDP with a different initial state.
    pub fn with_initial_state(&self, s: usize) -> Self {
        let mut out = self.clone();
        out.initial = s;
        out
    }

    /// Same MDP with a different true goal; `goal` must already be a goal.
    pub fn with_true_goal(&self, goal: usize) -> Result<Self, MdpError> {
        if !self.is_goal(goal) {
            return Err(MdpError::UnknownTrueGoal(self.states[goal].clone()));
        }
        let mut out = self.clone();
        out.true_goal = goal;
        Ok(out)
    }

    pub fn to_raw(&self) -> RawMdp {
        let mut transitions = Vec::with_capacity(self.rows.len());
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                transitions.push(RawTransition {
                    state: self.states[s].clone(),
                    action: self.actions[a].clone(),
                    next: self
                        .successors(s, a)
                        .iter()
                        .map(|&(n, p)| (self.states[n].clone(), p.as_f64()))
                        .collect(),
                });
            }
        }
        RawMdp {
            states: self.states.clone(),
            actions: self.actions.clone(),
            initial_state: self.states[self.initial].clone(),
            transitions,
            goals: self.goals.iter().map(|&g| self.states[g].clone()).collect(),
            true_goal: self.states[self.true_goal].clone(),
        }
    }
}

/// A finite sequence of visited states and the actions taken between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// Visited states; always one longer than `actions`.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// Simulation stopped at the step cap before entering a goal.
    pub max_steps_exceeded: bool,
}

impl Trajectory {
    pub fn start(state: usize) -> Self {
        Trajectory {
            states: vec![state],
            actions: Vec::new(),
            max_steps_exceeded: false,
        }
    }

    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("trajectory has a state")
    }

    /// Checks that every step has positive transition probability.
    pub fn is_consistent_with<T: Scalar>(&self, mdp: &Mdp<T>) -> bool {
        self.states.len() == self.actions.len() + 1
            && self
                .actions
                .iter()
                .enumerate()
                .all(|(t, &a)| mdp.probability(self.states[t], a, self.states[t + 1]) > T::zero())
    }

    pub fn to_json<T: Scalar>(&self, mdp: &Mdp<T>) -> serde_json::Value {
        serde_json::json!({
            "states": self.states.iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>(),
            "actions": self.actions.iter().map(|&a| mdp.action_name(a)).collect::<Vec<_>>(),
            "length": self.len(),
            "max_steps_exceeded": self.max_steps_exceeded,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy row for state {state} sums to {sum}")]
    RowSum { state: String, sum: f64 },
    #[error("policy has negative or non-finite entry at ({state}, {action})")]
    BadEntry { state: String, action: String },
    #[error("policy shape {got} does not match |S|·|A| = {expected}")]
    Shape { expected: usize, got: usize },
    #[error("policy mentions unknown state or action {0}")]
    Unknown(String),
}

/// A Markovian stationary randomized policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy<T> {
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> StationaryPolicy<T> {
    /// Validates a dense `|S|×|A|` row-major probability table.
    pub fn from_table(mdp: &Mdp<T>, probs: Vec<T>) -> Result<Self, PolicyError> {
        let expected = mdp.n_states() * mdp.n_actions();
        if probs.len() != expected {
            return Err(PolicyError::Shape { expected, got: probs.len() });
        }
        let n_a = mdp.n_actions();
        for s in 0..mdp.n_states() {
            let row = &probs[s * n_a..(s + 1) * n_a];
            if let Some(a) = row.iter().position(|p| !p.is_finite() || *p < T::zero()) {
                return Err(PolicyError::BadEntry {
                    state: mdp.state_name(s).to_owned(),
                    action: mdp.action_name(a).to_owned(),
                });
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > T::tol(1e-9) {
                return Err(PolicyError::RowSum {
                    state: mdp.state_name(s).to_owned(),
                    sum: sum.as_f64(),
                });
            }
        }
        Ok(StationaryPolicy { n_actions: n_a, probs })
    }

    pub fn uniform(mdp: &Mdp<T>) -> Self {
        let p = T::one() / T::from_count(mdp.n_actions());
        StationaryPolicy {
            n_actions: mdp.n_actions(),
            probs: vec![p; mdp.n_states() * mdp.n_actions()],
        }
    }

    /// Picks `choice(s)` with probability 1 in each state.
    pub fn deterministic(mdp: &Mdp<T>, choice: impl Fn(usize) -> usize) -> Self {
        let n_a = mdp.n_actions();
        let mut probs = vec![T::zero(); mdp.n_states() * n_a];
        for s in 0..mdp.n_states() {
            probs[s * n_a + choice(s)] = T::one();
        }
        StationaryPolicy { n_actions: n_a, probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions.max(1)
    }

    /// Nested `{"state": {"action": prob}}` map.
    pub fn to_json_map(&self, mdp: &Mdp<T>) -> serde_json::Map<String, serde_json::Value> {
        let mut pi = serde_json::Map::new();
        for s in 0..mdp.n_states() {
            let mut row = serde_json::Map::new();
            for a in 0..mdp.n_actions() {
                row.insert(
                    mdp.action_name(a).to_owned(),
                    crate::io::fixed_json(self.prob(s, a).as_f64()),
                );
            }
            pi.insert(mdp.state_name(s).to_owned(), serde_json::Value::Object(row));
        }
        pi
    }

    /// Reads a nested `{"state": {"action": prob}}` map; missing entries are 0.
    pub fn from_json_map(
        mdp: &Mdp<T>,
        pi: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Self, PolicyError> {
        let n_a = mdp.n_actions();
        let mut probs = vec![T::zero(); mdp.n_states() * n_a];
        for (state, row) in pi {
            let s = mdp
                .state_id(state)
                .ok_or_else(|| PolicyError::Unknown(state.clone()))?;
            let row = row
                .as_object()
                .ok_or_else(|| PolicyError::Unknown(state.clone()))?;
            for (action, p) in row {
                let a = mdp
                    .action_id(action)
                    .ok_or_else(|| PolicyError::Unknown(action.clone()))?;
                let p = p.as_f64().ok_or_else(|| PolicyError::BadEntry {
                    state: state.clone(),
                    action: action.clone(),
                })?;
                probs[s * n_a + a] = T::lit(p);
            }
        }
        Self::from_table(mdp, probs)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// `G1 – m – G2`, start `m`, true goal `G1`.
    pub fn chain3() -> RawMdp {
        RawMdp::new(["G1", "m", "G2"], ["L", "R"], "m")
            .transition("m", "L", &[("G1", 1.0)])
            .transition("m", "R", &[("G2", 1.0)])
            .goals(["G1", "G2"], "G1")
    }

    /// `G1 – a – m – b – G2`, start `m`, true goal `G1`.
    pub fn chain5() -> RawMdp {
        RawMdp::new(["G1", "a", "m", "b", "G2"], ["L", "R"], "m")
            .transition("a", "L", &[("G1", 1.0)])
            .transition("a", "R", &[("m", 1.0)])
            .transition("m", "L", &[("a", 1.0)])
            .transition("m", "R", &[("b", 1.0)])
            .transition("b", "L", &[("m", 1.0)])
            .transition("b", "R", &[("G2", 1.0)])
            .goals(["G1", "G2"], "G1")
    }
}
