//! Shared helpers for the integration suites: fixture loading, seeded random
//! MDPs and independent reference implementations that do not call into the
//! library's solvers.

#![allow(dead_code)]

use std::path::PathBuf;

use ddm_core::mdp::{validate_mdp, GridSpec, Mdp, RawMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn grid(name: &str) -> Mdp<f64> {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    GridSpec::from_json(&text).unwrap().build().unwrap()
}

pub fn chain3() -> Mdp<f64> {
    validate_mdp(
        &RawMdp::new(["G1", "m", "G2"], ["L", "R"], "m")
            .transition("m", "L", &[("G1", 1.0)])
            .transition("m", "R", &[("G2", 1.0)])
            .goals(["G1", "G2"], "G1"),
    )
    .unwrap()
}

pub fn chain5() -> Mdp<f64> {
    validate_mdp(
        &RawMdp::new(["G1", "a", "m", "b", "G2"], ["L", "R"], "m")
            .transition("a", "L", &[("G1", 1.0)])
            .transition("a", "R", &[("m", 1.0)])
            .transition("m", "L", &[("a", 1.0)])
            .transition("m", "R", &[("b", 1.0)])
            .transition("b", "L", &[("m", 1.0)])
            .transition("b", "R", &[("G2", 1.0)])
            .goals(["G1", "G2"], "G1"),
    )
    .unwrap()
}

/// A random MDP with states `s0..s{n-1}`; the last `n_goals` are goals, `s0`
/// is the start and the first goal is the true goal. Every non-goal row has
/// one to three successors with probabilities of at least 0.05.
pub fn random_raw(seed: u64, n_states: usize, n_actions: usize, n_goals: usize) -> RawMdp {
    assert!(n_goals < n_states);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (0..n_actions).map(|i| format!("a{i}")).collect();
    let goals: Vec<String> = states[n_states - n_goals..].to_vec();
    let mut raw = RawMdp::new(states.clone(), actions.clone(), "s0");
    for s in 0..n_states - n_goals {
        for a in &actions {
            let k = rng.gen_range(1..=3);
            let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let next: Vec<(&str, f64)> = weights
                .iter()
                .map(|&w| (states[rng.gen_range(0..n_states)].as_str(), w))
                .collect();
            raw = raw.transition(&states[s], a, &next);
        }
    }
    let true_goal = goals[0].clone();
    raw.goals(goals, &true_goal)
}

pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, n_goals: usize) -> Mdp<f64> {
    validate_mdp(&random_raw(seed, n_states, n_actions, n_goals)).unwrap()
}

/// Reference soft value iteration with the same update and stopping rule as
/// the observer model, written against plain nested vectors.
pub struct SoftOracle {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

pub fn soft_oracle(
    mdp: &Mdp<f64>,
    goal: usize,
    cost: f64,
    alpha: f64,
    gamma: f64,
    penalty: f64,
    tolerance: f64,
) -> SoftOracle {
    let n = mdp.n_states();
    let n_a = mdp.n_actions();
    let p: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|s| (0..n_a).map(|a| (0..n).map(|t| mdp.probability(s, a, t)).collect()).collect())
        .collect();
    let mut v: Vec<f64> = (0..n).map(|s| if s == goal { 0.0 } else { -penalty }).collect();
    let mut q = vec![vec![0.0; n_a]; n];
    for _ in 0..1_000_000 {
        for s in 0..n {
            for a in 0..n_a {
                let mut future = 0.0;
                for t in 0..n {
                    future += p[s][a][t] * v[t];
                }
                q[s][a] = -cost + gamma * future;
            }
        }
        let new: Vec<f64> = (0..n)
            .map(|s| {
                if s == goal {
                    return 0.0;
                }
                if mdp.is_goal(s) {
                    return -penalty;
                }
                let m = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + alpha * q[s].iter().map(|x| ((x - m) / alpha).exp()).sum::<f64>().ln()
            })
            .collect();
        let change: f64 = v.iter().zip(&new).map(|(a, b)| (a - b).abs()).sum();
        v = new;
        if change <= tolerance {
            break;
        }
    }
    SoftOracle { v, q }
}

/// Posterior over goals from per-goal oracle values, uniform prior,
/// exponent `(V(sT) − V(s1))/alpha`.
pub fn posterior_oracle(values: &[Vec<f64>], alpha: f64, s1: usize, st: usize) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|v| (v[st] - v[s1]) / alpha).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Reach probability of `target` under a deterministic policy, by iterating
/// the fixed-policy recursion to a fixpoint.
pub fn reach_under(mdp: &Mdp<f64>, choice: &[usize], target: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let mut r = vec![0.0; n];
    r[target] = 1.0;
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for s in 0..n {
            if mdp.is_goal(s) {
                continue;
            }
            let v: f64 = mdp.successors(s, choice[s]).iter().map(|&(t, p)| p * r[t]).sum();
            change = change.max((v - r[s]).abs());
            r[s] = v;
        }
        if change < 1e-15 {
            break;
        }
    }
    r
}

/// Maximum reach probability by enumerating every deterministic policy.
pub fn brute_force_rmax(mdp: &Mdp<f64>, target: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let n_a = mdp.n_actions();
    let mut best = vec![0.0f64; n];
    let total = n_a.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let choice: Vec<usize> = (0..n)
            .map(|_| {
                let a = c % n_a;
                c /= n_a;
                a
            })
            .collect();
        let r = reach_under(mdp, &choice, target);
        for s in 0..n {
            best[s] = best[s].max(r[s]);
        }
    }
    best
}

/// Minimizes `c·x` over `{x ≥ 0, A x (≤|=|≥) b}` by enumerating vertices of a
/// small bounded polytope. Rows are `(coeffs, kind, rhs)` with kind −1 for
/// `≤`, 0 for `=`, +1 for `≥`. Returns `None` when no vertex is feasible.
pub fn brute_force_lp(c: &[f64], rows: &[(Vec<f64>, i8, f64)]) -> Option<f64> {
    let n = c.len();
    // every candidate active set: n hyperplanes among the rows and bounds
    let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let m = planes.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<f64> = idx.iter().flat_map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = gauss(a, b, n) {
            let feasible = x.iter().all(|&v| v >= -1e-9)
                && rows.iter().all(|(a, kind, b)| {
                    let lhs: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
                    match kind {
                        -1 => lhs <= b + 1e-9,
                        0 => (lhs - b).abs() <= 1e-9,
                        _ => lhs >= b - 1e-9,
                    }
                });
            if feasible {
                let obj: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for t in k + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gauss(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-10 {
            return None;
        }
        for k in 0..n {
            a.swap(piv * n + k, col * n + k);
        }
        b.swap(piv, col);
        for r in 0..n {
            if r != col {
                let f = a[r * n + col] / a[col * n + col];
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i * n + i]).collect())
}
