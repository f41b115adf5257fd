//! Exact evaluation of a fixed stationary policy by linear systems.

use thiserror::Error;

use super::{Mdp, StationaryPolicy};
use crate::linalg::solve_dense;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvaluationError {
    #[error("policy keeps positive probability forever in non-goal state {0}")]
    NotTransient(String),
    #[error("policy evaluation system is singular")]
    Singular,
}

fn policy_successors<T: Scalar>(mdp: &Mdp<T>, pi: &StationaryPolicy<T>, s: usize) -> Vec<(usize, T)> {
    let mut out: Vec<(usize, T)> = Vec::new();
    for a in 0..mdp.n_actions() {
        let pa = pi.prob(s, a);
        if pa <= T::zero() {
            continue;
        }
        for &(next, p) in mdp.successors(s, a) {
            match out.iter_mut().find(|e| e.0 == next) {
                Some(e) => e.1 += pa * p,
                None => out.push((next, pa * p)),
            }
        }
    }
    out
}

fn reachable_from<T: Scalar>(mdp: &Mdp<T>, pi: &StationaryPolicy<T>, stop: &[bool]) -> Vec<usize> {
    let mut seen = vec![false; mdp.n_states()];
    let mut order = Vec::new();
    let mut stack = vec![mdp.initial_state()];
    seen[mdp.initial_state()] = true;
    while let Some(s) = stack.pop() {
        order.push(s);
        if stop[s] {
            continue;
        }
        for (next, _) in policy_successors(mdp, pi, s) {
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    order.sort_unstable();
    order
}

/// Probability that `pi`, started in the initial state, ever enters `targets`.
pub fn policy_reach_probability<T: Scalar>(
    mdp: &Mdp<T>,
    pi: &StationaryPolicy<T>,
    targets: &[usize],
) -> T {
    let n = mdp.n_states();
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t] = true;
    }
    if is_target[mdp.initial_state()] {
        return T::one();
    }
    let reach = reachable_from(mdp, pi, &is_target);
    let succ: Vec<Vec<(usize, T)>> = (0..n)
        .map(|s| if reach.binary_search(&s).is_ok() { policy_successors(mdp, pi, s) } else { Vec::new() })
        .collect();
    // States of `reach` that can hit a target along policy edges.
    let mut hits = is_target.clone();
    loop {
        let mut grew = false;
        for &s in &reach {
            if !hits[s] && succ[s].iter().any(|&(t, _)| hits[t]) {
                hits[s] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let free: Vec<usize> = reach.iter().copied().filter(|&s| hits[s] && !is_target[s]).collect();
    if !hits[mdp.initial_state()] {
        return T::zero();
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in free.iter().enumerate() {
        pos[s] = i;
    }
    let m = free.len();
    let mut a = vec![T::zero(); m * m];
    let mut b = vec![T::zero(); m];
    for (i, &s) in free.iter().enumerate() {
        a[i * m + i] += T::one();
        for &(t, p) in &succ[s] {
            if is_target[t] {
                b[i] += p;
            } else if pos[t] != usize::MAX {
                a[i * m + pos[t]] -= p;
            }
        }
    }
    let h = solve_dense(a, b).expect("hitting system restricted to target-reaching states is nonsingular");
    h[pos[mdp.initial_state()]].max(T::zero()).min(T::one())
}

/// Expected number of visits to each `(s, a)` before absorption in a goal,
/// as a dense `|S|×|A|` table. Fails if the policy can stay forever in
/// non-goal states.
pub fn policy_occupancy<T: Scalar>(
    mdp: &Mdp<T>,
    pi: &StationaryPolicy<T>,
) -> Result<Vec<T>, EvaluationError> {
    let n = mdp.n_states();
    let n_a = mdp.n_actions();
    let mut out = vec![T::zero(); n * n_a];
    if mdp.is_goal(mdp.initial_state()) {
        return Ok(out);
    }
    let is_goal: Vec<bool> = (0..n).map(|s| mdp.is_goal(s)).collect();
    let transient: Vec<usize> = reachable_from(mdp, pi, &is_goal)
        .into_iter()
        .filter(|&s| !is_goal[s])
        .collect();
    let succ: Vec<Vec<(usize, T)>> = (0..n)
        .map(|s| if is_goal[s] { Vec::new() } else { policy_successors(mdp, pi, s) })
        .collect();
    let mut exits = is_goal.clone();
    loop {
        let mut grew = false;
        for &s in &transient {
            if !exits[s] && succ[s].iter().any(|&(t, _)| exits[t]) {
                exits[s] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    if let Some(&s) = transient.iter().find(|&&s| !exits[s]) {
        return Err(EvaluationError::NotTransient(mdp.state_name(s).to_owned()));
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in transient.iter().enumerate() {
        pos[s] = i;
    }
    let m = transient.len();
    // y = β + Qᵀ y
    let mut a = vec![T::zero(); m * m];
    let mut b = vec![T::zero(); m];
    b[pos[mdp.initial_state()]] = T::one();
    for (i, &s) in transient.iter().enumerate() {
        a[i * m + i] += T::one();
        for &(t, p) in &succ[s] {
            if pos[t] != usize::MAX {
                a[pos[t] * m + i] -= p;
            }
        }
    }
    let y = solve_dense(a, b).ok_or(EvaluationError::Singular)?;
    for (i, &s) in transient.iter().enumerate() {
        for act in 0..n_a {
            out[s * n_a + act] = y[i].max(T::zero()) * pi.prob(s, act);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{validate_mdp, RawMdp};
    use super::*;

    #[test]
    fn uniform_on_chain5_reaches_each_end_half() {
        let mdp = validate_mdp::<f64>(&chain5()).unwrap();
        let pi = StationaryPolicy::uniform(&mdp);
        let p = policy_reach_probability(&mdp, &pi, &[0]);
        assert!((p - 0.5).abs() < 1e-12);
        let occ = policy_occupancy(&mdp, &pi).unwrap();
        // symmetric walk from the middle: 2 expected visits to m, 1.5 to a and b
        let visits_m: f64 = occ[4] + occ[5];
        assert!((visits_m - 2.0).abs() < 1e-12, "{visits_m}");
    }

    #[test]
    fn trapped_policy_is_not_transient() {
        let raw = RawMdp::new(["G", "m", "z"], ["a"], "m")
            .transition("m", "a", &[("z", 0.5), ("G", 0.5)])
            .transition("z", "a", &[("z", 1.0)])
            .goals(["G"], "G");
        let mdp = validate_mdp::<f64>(&raw).unwrap();
        let pi = StationaryPolicy::uniform(&mdp);
        assert!(matches!(policy_occupancy(&mdp, &pi), Err(EvaluationError::NotTransient(_))));
        assert!((policy_reach_probability(&mdp, &pi, &[0]) - 0.5).abs() < 1e-15);
    }
}
