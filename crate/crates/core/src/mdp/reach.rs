use std::collections::VecDeque;

use serde::Serialize;

use super::Mdp;
use crate::linalg::solve_dense;
use crate::scalar::Scalar;

/// Max-norm change at which the maximal-reachability iteration stops.
pub const RMAX_TOLERANCE: f64 = 1e-10;
const RMAX_MAX_ITERATIONS: usize = 1_000_000;

/// Breadth-first step count; `Unreachable` plays the role of ∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum StepCount {
    Finite(usize),
    Unreachable,
}

impl StepCount {
    pub fn finite(self) -> Option<usize> {
        match self {
            StepCount::Finite(n) => Some(n),
            StepCount::Unreachable => None,
        }
    }

    /// `base^steps`, with `base^∞ = 0` for `base < 1` and `1` for `base = 1`.
    pub fn discount<T: Scalar>(self, base: T) -> T {
        match self {
            StepCount::Finite(n) => base.powi(n as i32),
            StepCount::Unreachable if base >= T::one() => T::one(),
            StepCount::Unreachable => T::zero(),
        }
    }
}

/// Minimum number of steps from the initial state to every state in the
/// graph of the MDP (edge `s → s'` iff some action moves `s` to `s'`).
pub fn min_steps<T: Scalar>(mdp: &Mdp<T>) -> Vec<StepCount> {
    let mut dist = vec![StepCount::Unreachable; mdp.n_states()];
    let mut queue = VecDeque::new();
    dist[mdp.initial_state()] = StepCount::Finite(0);
    queue.push_back(mdp.initial_state());
    while let Some(s) = queue.pop_front() {
        let d = dist[s].finite().expect("queued states are reached");
        for next in mdp.graph_successors(s) {
            if dist[next] == StepCount::Unreachable {
                dist[next] = StepCount::Finite(d + 1);
                queue.push_back(next);
            }
        }
    }
    dist
}

/// States from which some state of `targets` is reachable in the graph.
pub(crate) fn can_reach<T: Scalar>(mdp: &Mdp<T>, targets: &[usize]) -> Vec<bool> {
    let pred = mdp.graph_predecessors();
    let mut seen = vec![false; mdp.n_states()];
    let mut stack: Vec<usize> = targets.to_vec();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &pred[s] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// Partition of the non-goal states by whether a goal is reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroReach {
    /// States with no path to any goal, ascending.
    pub zero: Vec<usize>,
    /// Non-goal states with a path to some goal, ascending.
    pub remaining: Vec<usize>,
}

pub fn zero_reach_states<T: Scalar>(mdp: &Mdp<T>) -> ZeroReach {
    let reach = can_reach(mdp, mdp.goals());
    let mut zero = Vec::new();
    let mut remaining = Vec::new();
    for s in 0..mdp.n_states() {
        if !reach[s] {
            zero.push(s);
        } else if !mdp.is_goal(s) {
            remaining.push(s);
        }
    }
    ZeroReach { zero, remaining }
}

/// Maximum probability, over all policies, of eventually reaching `target`.
pub fn max_reach_probability<T: Scalar>(mdp: &Mdp<T>, target: usize) -> Vec<T> {
    max_reach_probability_to(mdp, &[target])
}

/// Maximum probability of eventually reaching any state of `targets`.
///
/// Value iteration from below, starting at 0 with the targets pinned to 1
/// and states without a graph path to the targets pinned to 0. A small
/// per-sweep change does not bound the error when the iteration contracts
/// slowly, so on moderate state counts the greedy policy is then evaluated
/// exactly and the iteration resumes from the better of the two values.
/// Both are lower bounds on the optimum, so their maximum is too.
pub fn max_reach_probability_to<T: Scalar>(mdp: &Mdp<T>, targets: &[usize]) -> Vec<T> {
    let n = mdp.n_states();
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t] = true;
    }
    let reach = can_reach(mdp, targets);
    let free: Vec<usize> = (0..n).filter(|&s| reach[s] && !is_target[s]).collect();
    let mut v: Vec<T> = (0..n)
        .map(|s| if is_target[s] { T::one() } else { T::zero() })
        .collect();
    sweep_until_settled(mdp, &free, &mut v);
    if free.len() <= POLISH_MAX_STATES {
        for _ in 0..POLISH_ROUNDS {
            let Some(exact) = evaluate_greedy(mdp, &free, &v, targets) else { break };
            let mut improved = false;
            for &s in &free {
                if exact[s] > v[s] {
                    v[s] = exact[s];
                    improved = true;
                }
            }
            if !improved {
                break;
            }
            sweep_until_settled(mdp, &free, &mut v);
        }
    }
    v
}

const POLISH_MAX_STATES: usize = 600;
const POLISH_ROUNDS: usize = 4;
const GREEDY_TIE: f64 = 1e-7;

fn backup<T: Scalar>(mdp: &Mdp<T>, v: &[T], s: usize, a: usize) -> T {
    mdp.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum()
}

fn sweep_until_settled<T: Scalar>(mdp: &Mdp<T>, free: &[usize], v: &mut Vec<T>) {
    let tol = T::tol(RMAX_TOLERANCE);
    let mut next = v.clone();
    for _ in 0..RMAX_MAX_ITERATIONS {
        let mut change = T::zero();
        for &s in free {
            let best = (0..mdp.n_actions())
                .map(|a| backup(mdp, v, s, a))
                .fold(T::zero(), T::max)
                .min(T::one());
            change = change.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(v, &mut next);
        if change <= tol {
            break;
        }
    }
}

/// Exact reach probabilities of a policy that is greedy for `v`. Among the
/// near-optimal actions each state takes one that moves into the set of
/// states already settled, grown backward from the targets, so the policy
/// cannot trap mass in a cycle. `None` when that set misses some state or
/// the system is singular.
fn evaluate_greedy<T: Scalar>(mdp: &Mdp<T>, free: &[usize], v: &[T], targets: &[usize]) -> Option<Vec<T>> {
    let n = mdp.n_states();
    let m = free.len();
    let mut row_of = vec![usize::MAX; n];
    for (i, &s) in free.iter().enumerate() {
        row_of[s] = i;
    }
    let near_optimal: Vec<Vec<usize>> = free
        .iter()
        .map(|&s| {
            let values: Vec<T> = (0..mdp.n_actions()).map(|a| backup(mdp, v, s, a)).collect();
            let best = values.iter().copied().fold(T::zero(), T::max);
            (0..mdp.n_actions()).filter(|&a| values[a] >= best - T::tol(GREEDY_TIE)).collect()
        })
        .collect();
    let mut settled = vec![false; n];
    for &t in targets {
        settled[t] = true;
    }
    let mut choice = vec![usize::MAX; m];
    let mut grew = true;
    while grew {
        grew = false;
        for (i, &s) in free.iter().enumerate() {
            if choice[i] != usize::MAX {
                continue;
            }
            let hit = near_optimal[i]
                .iter()
                .copied()
                .find(|&a| mdp.successors(s, a).iter().any(|&(t, _)| settled[t]));
            if let Some(a) = hit {
                choice[i] = a;
                settled[s] = true;
                grew = true;
            }
        }
    }
    if choice.contains(&usize::MAX) {
        return None;
    }
    let mut a_mat = vec![T::zero(); m * m];
    let mut b = vec![T::zero(); m];
    for (i, &s) in free.iter().enumerate() {
        a_mat[i * m + i] = T::one();
        for &(t, p) in mdp.successors(s, choice[i]) {
            if row_of[t] != usize::MAX {
                a_mat[i * m + row_of[t]] -= p;
            } else {
                // outside `free` the value is pinned: 1 on targets, 0 elsewhere
                b[i] += p * v[t];
            }
        }
    }
    let x = solve_dense(a_mat, b)?;
    if x.iter().any(|p| !p.is_finite() || *p < -T::tol(GREEDY_TIE) || *p > T::one() + T::tol(GREEDY_TIE)) {
        return None;
    }
    let mut out = v.to_vec();
    for (i, &s) in free.iter().enumerate() {
        out[s] = x[i].max(T::zero()).min(T::one());
    }
    Some(out)
}

/// Reachability quantities of an MDP with respect to one target.
#[derive(Debug, Clone)]
pub struct ReachabilityReport<T> {
    pub rmax: Vec<T>,
    pub t_min: Vec<StepCount>,
    pub s_zero: Vec<usize>,
}

pub fn reachability_report<T: Scalar>(mdp: &Mdp<T>, target: usize) -> ReachabilityReport<T> {
    ReachabilityReport {
        rmax: max_reach_probability(mdp, target),
        t_min: min_steps(mdp),
        s_zero: zero_reach_states(mdp).zero,
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{validate_mdp, RawMdp};
    use super::*;

    #[test]
    fn chain_steps() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        assert_eq!(
            min_steps(&mdp),
            vec![StepCount::Finite(1), StepCount::Finite(0), StepCount::Finite(1)]
        );
        let mdp = validate_mdp::<f64>(&chain5()).unwrap();
        let t = min_steps(&mdp);
        assert_eq!(t[3], StepCount::Finite(1));
        assert_eq!(t[4], StepCount::Finite(2));
    }

    fn chain_with_sink() -> RawMdp {
        RawMdp::new(["G1", "m", "G2", "z"], ["L", "R"], "m")
            .transition("m", "L", &[("G1", 1.0)])
            .transition("m", "R", &[("G2", 1.0)])
            .transition("z", "L", &[("z", 1.0)])
            .transition("z", "R", &[("z", 1.0)])
            .goals(["G1", "G2"], "G1")
    }

    #[test]
    fn isolated_state_is_unreachable_and_zero() {
        let mdp = validate_mdp::<f64>(&chain_with_sink()).unwrap();
        assert_eq!(min_steps(&mdp)[3], StepCount::Unreachable);
        let zr = zero_reach_states(&mdp);
        assert_eq!(zr.zero, vec![3]);
        assert_eq!(zr.remaining, vec![1]);
        assert_eq!(max_reach_probability(&mdp, 0)[3], 0.0);
    }

    #[test]
    fn chain_zero_set_empty() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        let zr = zero_reach_states(&mdp);
        assert!(zr.zero.is_empty());
        assert_eq!(zr.remaining, vec![1]);
    }

    #[test]
    fn rmax_deterministic_chain() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        let r = max_reach_probability(&mdp, 0);
        assert_eq!(r[1], 1.0);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[2], 0.0);
    }

    #[test]
    fn rmax_single_lossy_action() {
        // One action: 0.3 to G1, 0.7 into a dead end.
        let raw = RawMdp::new(["s", "G1", "G2", "dead"], ["go"], "s")
            .transition("s", "go", &[("G1", 0.3), ("dead", 0.7)])
            .transition("dead", "go", &[("dead", 1.0)])
            .goals(["G1", "G2"], "G1");
        let mdp = validate_mdp::<f64>(&raw).unwrap();
        let r = max_reach_probability(&mdp, 1);
        assert!((r[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn discount_of_unreachable() {
        assert_eq!(StepCount::Unreachable.discount(0.9f64), 0.0);
        assert_eq!(StepCount::Unreachable.discount(1.0f64), 1.0);
        assert_eq!(StepCount::Finite(2).discount(0.5f64), 0.25);
    }
}
