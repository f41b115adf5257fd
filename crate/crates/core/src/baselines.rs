//! Reference trajectories: the plain shortest path to the true goal and the
//! decoy detour (shortest path to the decoy nearest the true goal, then on to
//! the true goal).
//!
//! Both work on the transition graph. The detour legs pass through goal
//! states, which the MDP makes absorbing, so for the detour every goal is
//! given the reverse of its incoming edges as outgoing edges. On grids that
//! is exactly the set of neighbouring cells.

use std::collections::VecDeque;

use thiserror::Error;

use crate::deception::DeceptionCostTable;
use crate::mdp::Mdp;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("true goal {0} is not reachable from the initial state")]
    Unreachable(String),
    #[error("no decoy goal besides the true goal")]
    NoDecoy,
    #[error("no path from {0} to {1}")]
    UnreachableLeg(String, String),
}

impl BaselineError {
    pub fn code(&self) -> &'static str {
        match self {
            BaselineError::Unreachable(_) => "unreachable",
            BaselineError::NoDecoy => "no_decoy",
            BaselineError::UnreachableLeg(..) => "unreachable_leg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Shortest,
    Dpp,
    /// DPP detour that stops one step short of the decoy.
    DppTurnback,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Shortest => "shortest",
            Generator::Dpp => "dpp",
            Generator::DppTurnback => "dpp-turnback",
        }
    }
}

/// A deterministic state sequence ending in the true goal.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTrajectory {
    pub states: Vec<usize>,
    /// Action taken at each step; `None` where the step leaves a goal state
    /// (no MDP action does that).
    pub actions: Vec<Option<usize>>,
    pub generator: Generator,
    pub decoy_used: Option<usize>,
}

impl BaselineTrajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Same layout as a simulated trajectory plus the generator fields.
    pub fn to_json<T: Scalar>(&self, mdp: &Mdp<T>) -> serde_json::Value {
        serde_json::json!({
            "states": self.states.iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>(),
            "actions": self.actions.iter().map(|a| a.map(|a| mdp.action_name(a))).collect::<Vec<_>>(),
            "length": self.len(),
            "max_steps_exceeded": false,
            "generator": self.generator.name(),
            "decoy_used": self.decoy_used.map(|g| mdp.state_name(g)),
        })
    }

    /// `Σ_t g(s_t, a_t)` over the steps taken, counting every visit the way
    /// an occupancy measure would. Steps out of a goal cost nothing.
    pub fn deception_cost<T: Scalar>(&self, g: &DeceptionCostTable<T>) -> T {
        self.actions
            .iter()
            .zip(&self.states)
            .map(|(a, &s)| a.map_or(T::zero(), |a| g.get(s, a)))
            .sum()
    }
}

/// Outgoing edges as `(next, action)` in tie-break order: actions by name,
/// then successors by index. Goals optionally get reversed incoming edges.
fn edges<T: Scalar>(mdp: &Mdp<T>, pass_through_goals: bool) -> Vec<Vec<(usize, Option<usize>)>> {
    let mut by_name: Vec<usize> = (0..mdp.n_actions()).collect();
    by_name.sort_by(|&a, &b| mdp.action_name(a).cmp(mdp.action_name(b)));
    let mut out: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); mdp.n_states()];
    for s in 0..mdp.n_states() {
        if mdp.is_goal(s) {
            continue;
        }
        for &a in &by_name {
            for &(next, p) in mdp.successors(s, a) {
                if p > T::zero() && next != s && !out[s].iter().any(|e| e.0 == next) {
                    out[s].push((next, Some(a)));
                }
            }
        }
    }
    if pass_through_goals {
        let preds = mdp.graph_predecessors();
        for &goal in mdp.goals() {
            for &p in &preds[goal] {
                if p != goal && !out[goal].iter().any(|e| e.0 == p) {
                    out[goal].push((p, None));
                }
            }
        }
    }
    out
}

fn distances_to(edges: &[Vec<(usize, Option<usize>)>], target: usize) -> Vec<Option<usize>> {
    let mut reverse = vec![Vec::new(); edges.len()];
    for (s, list) in edges.iter().enumerate() {
        for &(n, _) in list {
            reverse[n].push(s);
        }
    }
    let mut dist = vec![None; edges.len()];
    dist[target] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap();
        for &p in &reverse[s] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Walks greedily down the distance field, taking the first edge in
/// tie-break order that gets one step closer.
fn walk(
    edges: &[Vec<(usize, Option<usize>)>],
    dist: &[Option<usize>],
    from: usize,
) -> Option<(Vec<usize>, Vec<Option<usize>>)> {
    let mut d = dist[from]?;
    let (mut states, mut actions) = (vec![from], Vec::new());
    let mut s = from;
    while d > 0 {
        let &(next, a) = edges[s].iter().find(|e| dist[e.0] == Some(d - 1))?;
        states.push(next);
        actions.push(a);
        s = next;
        d -= 1;
    }
    Some((states, actions))
}

/// Unit-weight shortest path from `s1` to `G★` on the transition graph.
pub fn shortest_path_trajectory<T: Scalar>(mdp: &Mdp<T>) -> Result<BaselineTrajectory, BaselineError> {
    let e = edges(mdp, false);
    let dist = distances_to(&e, mdp.true_goal());
    let (states, actions) = walk(&e, &dist, mdp.initial_state())
        .ok_or_else(|| BaselineError::Unreachable(mdp.state_name(mdp.true_goal()).to_owned()))?;
    Ok(BaselineTrajectory { states, actions, generator: Generator::Shortest, decoy_used: None })
}

/// The decoy closest to `G★` on the pass-through graph; ties go to the
/// lexicographically smaller state name.
fn closest_decoy<T: Scalar>(
    mdp: &Mdp<T>,
    to_goal: &[Option<usize>],
) -> Result<usize, BaselineError> {
    let g_star = mdp.true_goal();
    let decoy = mdp
        .goals()
        .iter()
        .copied()
        .filter(|&g| g != g_star)
        .filter_map(|g| to_goal[g].map(|d| (d, mdp.state_name(g), g)))
        .min()
        .map(|(_, _, g)| g);
    match decoy {
        Some(d) => Ok(d),
        None if mdp.goals().len() < 2 => Err(BaselineError::NoDecoy),
        None => {
            let first = mdp.goals().iter().copied().find(|&g| g != g_star).unwrap();
            Err(BaselineError::UnreachableLeg(
                mdp.state_name(first).to_owned(),
                mdp.state_name(g_star).to_owned(),
            ))
        }
    }
}

/// Shortest path to the decoy closest to `G★`, then shortest path on to `G★`.
/// Decoy ties go to the lexicographically smaller state name.
///
/// The path walks through the decoy even though the MDP makes it absorbing,
/// so it is a reference trajectory rather than something a policy can do.
pub fn dpp_trajectory<T: Scalar>(mdp: &Mdp<T>) -> Result<BaselineTrajectory, BaselineError> {
    let e = edges(mdp, true);
    let to_goal = distances_to(&e, mdp.true_goal());
    let decoy = closest_decoy(mdp, &to_goal)?;
    let name = |s: usize| mdp.state_name(s).to_owned();
    let (mut states, mut actions) = walk(&e, &distances_to(&e, decoy), mdp.initial_state())
        .ok_or_else(|| BaselineError::UnreachableLeg(name(mdp.initial_state()), name(decoy)))?;
    let (rest_s, rest_a) = walk(&e, &to_goal, decoy).expect("decoy has a finite distance");
    states.extend_from_slice(&rest_s[1..]);
    actions.extend(rest_a);
    Ok(BaselineTrajectory { states, actions, generator: Generator::Dpp, decoy_used: Some(decoy) })
}

/// The detour a policy can actually follow: the same decoy as
/// [`dpp_trajectory`], approached along a shortest path that turns back at
/// the last state before it, then a shortest path to `G★` that enters no goal
/// on the way. Every step is an MDP action.
pub fn dpp_turnback_trajectory<T: Scalar>(mdp: &Mdp<T>) -> Result<BaselineTrajectory, BaselineError> {
    let decoy = closest_decoy(mdp, &distances_to(&edges(mdp, true), mdp.true_goal()))?;
    let e = edges(mdp, false);
    let name = |s: usize| mdp.state_name(s).to_owned();
    let (mut states, mut actions) = walk(&e, &distances_to(&e, decoy), mdp.initial_state())
        .ok_or_else(|| BaselineError::UnreachableLeg(name(mdp.initial_state()), name(decoy)))?;
    states.pop();
    actions.pop();
    let turn = *states.last().expect("the approach starts at s1");
    let (rest_s, rest_a) = walk(&e, &distances_to(&e, mdp.true_goal()), turn)
        .ok_or_else(|| BaselineError::UnreachableLeg(name(turn), name(mdp.true_goal())))?;
    states.extend_from_slice(&rest_s[1..]);
    actions.extend(rest_a);
    Ok(BaselineTrajectory { states, actions, generator: Generator::DppTurnback, decoy_used: Some(decoy) })
}
