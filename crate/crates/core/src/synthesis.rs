//! Occupancy-measure programs for deceptive policies.
//!
//! The first program minimizes expected deception cost subject to flow
//! balance on the non-goal states that can still reach a goal and a reach
//! constraint on the target set. The second keeps that optimal cost fixed and
//! minimizes total expected occupancy, which removes idle visits to
//! zero-cost states. The policy is read off the second solution by
//! row-normalizing the occupancy.

use thiserror::Error;

use crate::deception::{build_cost, DeceptionCostTable, DeceptionError, DeceptionSpec};
use crate::lp::{
    solve_lp, ConstraintKind, LinearConstraint, LpError, LpProblem, LpSolution, LpStatus,
    FEASIBILITY_TOLERANCE,
};
use crate::mdp::{max_reach_probability, max_reach_probability_to, min_steps, zero_reach_states, Mdp, StationaryPolicy};
use crate::observer::{ObserverError, ObserverModel, ObserverParams};
use crate::scalar::Scalar;

/// Half-width of the cost window used when pinning `v★` exactly is infeasible.
pub const PIN_RELAXATION: f64 = 1e-9;

/// An action preserves maximal reachability when its one-step backup of
/// `R_max` is within this distance of the state's own value.
pub const PRESERVING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("initial state {0} is a goal or cannot reach any goal")]
    InitialStateNotInSr(String),
    #[error("reach target {target:e} is unattainable (best achievable {achievable:e})")]
    Infeasible { target: f64, achievable: f64 },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Deception(#[from] DeceptionError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

impl SynthesisError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthesisError::InitialStateNotInSr(_) => "initial_state_not_in_sr",
            SynthesisError::Infeasible { .. } => "infeasible",
            SynthesisError::Unbounded => "unbounded",
            SynthesisError::Lp(e) => e.code(),
            SynthesisError::Deception(e) => e.code(),
            SynthesisError::Observer(e) => e.code(),
        }
    }
}

/// How the reach row is imposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReachMode<T> {
    /// `Σ x·r = value`
    Equality(T),
    /// `Σ x·r ≥ value`
    AtLeast(T),
}

impl<T: Scalar> ReachMode<T> {
    pub fn value(self) -> T {
        match self {
            ReachMode::Equality(v) | ReachMode::AtLeast(v) => v,
        }
    }
}

/// Builds the first program: variables over `S_r × A` (minus pure self-loops),
/// one balance row per state of `S_r`, then the reach row toward `targets`
/// (always the last row).
pub fn build_primary_lp<T: Scalar>(
    mdp: &Mdp<T>,
    g: &DeceptionCostTable<T>,
    reach: ReachMode<T>,
    targets: &[usize],
) -> Result<LpProblem<T>, SynthesisError> {
    let all = vec![true; mdp.n_states() * mdp.n_actions()];
    build_primary_lp_over(mdp, g, reach, targets, &all)
}

/// Dense `|S|×|A|` mask of the actions whose backup of the maximal reach
/// probabilities `r` matches the state's own value.
///
/// For any balanced occupancy `x`, `R_max(s1) − Σ x·r` equals
/// `Σ x(s,a)·(R_max(s) − Σ_s' P(s,a,s') R_max(s'))`, a sum of nonnegative
/// terms. Occupancies that reach with maximal probability therefore put no
/// mass on other actions, and dropping them loses no feasible point.
pub fn reach_preserving_actions<T: Scalar>(mdp: &Mdp<T>, r: &[T]) -> Vec<bool> {
    let tol = T::tol(PRESERVING_TOLERANCE);
    let n_a = mdp.n_actions();
    let mut mask = vec![true; mdp.n_states() * n_a];
    for s in 0..mdp.n_states() {
        for a in 0..n_a {
            let backup: T = mdp.successors(s, a).iter().map(|&(t, p)| p * r[t]).sum();
            mask[s * n_a + a] = backup >= r[s] - tol;
        }
    }
    mask
}

/// [`build_primary_lp`] with variables only for the actions allowed by the
/// dense `|S|×|A|` mask.
pub fn build_primary_lp_over<T: Scalar>(
    mdp: &Mdp<T>,
    g: &DeceptionCostTable<T>,
    reach: ReachMode<T>,
    targets: &[usize],
    allowed: &[bool],
) -> Result<LpProblem<T>, SynthesisError> {
    let remaining = zero_reach_states(mdp).remaining;
    let s1 = mdp.initial_state();
    if remaining.binary_search(&s1).is_err() {
        return Err(SynthesisError::InitialStateNotInSr(mdp.state_name(s1).to_owned()));
    }
    let n_a = mdp.n_actions();
    let mut row_of = vec![usize::MAX; mdp.n_states()];
    for (i, &s) in remaining.iter().enumerate() {
        row_of[s] = i;
    }
    let mut is_target = vec![false; mdp.n_states()];
    for &t in targets {
        is_target[t] = true;
    }

    let mut labels = Vec::with_capacity(remaining.len() * n_a);
    let mut objective = Vec::with_capacity(remaining.len() * n_a);
    let mut balance: Vec<LinearConstraint<T>> = remaining
        .iter()
        .map(|&s| LinearConstraint {
            coeffs: Vec::new(),
            rhs: if s == s1 { T::one() } else { T::zero() },
            kind: ConstraintKind::Eq,
            label: format!("balance[{}]", mdp.state_name(s)),
        })
        .collect();
    let mut reach_coeffs = Vec::new();
    for (i, &s) in remaining.iter().enumerate() {
        for a in 0..n_a {
            // a pure self-loop moves no flow and only adds an empty column
            if !allowed[s * n_a + a] || matches!(mdp.successors(s, a), [(next, _)] if *next == s) {
                continue;
            }
            let j = labels.len();
            labels.push((s, a));
            objective.push(g.get(s, a));
            // outflow of s, inflow of each successor in S_r
            let mut self_loop = T::zero();
            let mut r = T::zero();
            for &(next, p) in mdp.successors(s, a) {
                if next == s {
                    self_loop += p;
                } else if row_of[next] != usize::MAX {
                    balance[row_of[next]].coeffs.push((j, -p));
                }
                if is_target[next] {
                    r += p;
                }
            }
            let out = T::one() - self_loop;
            if out != T::zero() {
                balance[i].coeffs.push((j, out));
            }
            if r != T::zero() {
                reach_coeffs.push((j, r));
            }
        }
    }
    let (kind, rhs) = match reach {
        ReachMode::Equality(v) => (ConstraintKind::Eq, v),
        ReachMode::AtLeast(v) => (ConstraintKind::Ge, v),
    };
    balance.push(LinearConstraint { coeffs: reach_coeffs, rhs, kind, label: "reach".into() });
    Ok(LpProblem { labels, objective, constraints: balance })
}

/// The second program: total occupancy under the first program's rows plus
/// `g·x = v★` (or `|g·x − v★| ≤ relax` when `relax` is positive).
pub fn build_secondary_lp<T: Scalar>(primary: &LpProblem<T>, v_star: T, relax: T) -> LpProblem<T> {
    let mut out = primary.clone();
    let coeffs: Vec<(usize, T)> = primary
        .objective
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != T::zero())
        .map(|(j, c)| (j, *c))
        .collect();
    if relax > T::zero() {
        out.constraints.push(LinearConstraint {
            coeffs: coeffs.clone(),
            rhs: v_star + relax,
            kind: ConstraintKind::Le,
            label: "deception-cost-upper".into(),
        });
        out.constraints.push(LinearConstraint {
            coeffs,
            rhs: v_star - relax,
            kind: ConstraintKind::Ge,
            label: "deception-cost-lower".into(),
        });
    } else {
        out.constraints.push(LinearConstraint {
            coeffs,
            rhs: v_star,
            kind: ConstraintKind::Eq,
            label: "deception-cost".into(),
        });
    }
    out.objective = vec![T::one(); primary.n_vars()];
    out
}

/// Dense `|S|×|A|` occupancy table from an LP solution.
pub fn occupancy_table<T: Scalar>(problem: &LpProblem<T>, solution: &LpSolution<T>, mdp: &Mdp<T>) -> Vec<T> {
    let n_a = mdp.n_actions();
    let mut x = vec![T::zero(); mdp.n_states() * n_a];
    for (j, &(s, a)) in problem.labels.iter().enumerate() {
        x[s * n_a + a] = solution.x[j];
    }
    x
}

/// `π(s,a) = x(s,a) / Σ_a' x(s,a')` where the state has positive occupancy,
/// uniform elsewhere.
pub fn extract_policy<T: Scalar>(mdp: &Mdp<T>, occupancy: &[T]) -> StationaryPolicy<T> {
    let n_a = mdp.n_actions();
    let uniform = T::one() / T::from_count(n_a);
    let mut probs = vec![T::zero(); mdp.n_states() * n_a];
    for s in 0..mdp.n_states() {
        let row = &occupancy[s * n_a..(s + 1) * n_a];
        let total: T = row.iter().map(|v| v.max(T::zero())).sum();
        let out = &mut probs[s * n_a..(s + 1) * n_a];
        if total > T::zero() {
            for (p, v) in out.iter_mut().zip(row) {
                *p = v.max(T::zero()) / total;
            }
        } else {
            out.fill(uniform);
        }
    }
    StationaryPolicy::from_table(mdp, probs).expect("normalized rows")
}

#[derive(Debug, Clone)]
pub struct SynthesisResult<T> {
    pub policy: StationaryPolicy<T>,
    /// Optimal expected deception cost of the first program.
    pub v_star: T,
    /// Total expected occupancy of the second program.
    pub total_occupancy: T,
    /// `Σ x·r` of the second program's solution.
    pub reach_probability: T,
    /// Dense `|S|×|A|` occupancy of the second program.
    pub occupancy: Vec<T>,
    /// Dense `|S|×|A|` occupancy of the first program.
    pub primary_occupancy: Vec<T>,
    /// Deception cost of the second program's occupancy.
    pub secondary_cost: T,
    pub primary: LpProblem<T>,
    /// Whether the cost pin had to be relaxed to a window.
    pub relaxed_pin: bool,
}

impl<T: Scalar> SynthesisResult<T> {
    /// Policy export object.
    pub fn to_json(&self, mdp: &Mdp<T>) -> serde_json::Value {
        use crate::io::fixed_json;
        serde_json::json!({
            "states": mdp.state_names(),
            "actions": mdp.action_names(),
            "pi": self.policy.to_json_map(mdp),
            "v_star": fixed_json(self.v_star.as_f64()),
            "reach_probability": fixed_json(self.reach_probability.as_f64()),
        })
    }
}

fn status_error<T: Scalar>(status: &LpStatus, target: T, achievable: T) -> SynthesisError {
    match status {
        LpStatus::Unbounded => SynthesisError::Unbounded,
        _ => SynthesisError::Infeasible { target: target.as_f64(), achievable: achievable.as_f64() },
    }
}

/// Both programs for a given cost table and reach requirement.
///
/// `achievable` is only used to annotate an infeasibility error.
pub fn synthesize_with_cost<T: Scalar>(
    mdp: &Mdp<T>,
    g: &DeceptionCostTable<T>,
    reach: ReachMode<T>,
    targets: &[usize],
    achievable: impl Fn() -> T,
) -> Result<SynthesisResult<T>, SynthesisError> {
    // with an equality at the maximum only reach-preserving actions can carry
    // flow; keeping the others would leave a near-singular optimal face
    let mut allowed = vec![true; mdp.n_states() * mdp.n_actions()];
    let mut pruned = false;
    if let ReachMode::Equality(v) = reach {
        let r = max_reach_probability_to(mdp, targets);
        if v >= r[mdp.initial_state()] - T::tol(PRESERVING_TOLERANCE) {
            allowed = reach_preserving_actions(mdp, &r);
            pruned = true;
        }
    }
    let mut primary = build_primary_lp_over(mdp, g, reach, targets, &allowed)?;
    if pruned {
        // the reach equality is implied up to PRESERVING_TOLERANCE per unit of
        // occupancy; a loose lower bound keeps it from pinning a near-singular basis
        let row = primary.constraints.last_mut().expect("reach row");
        row.kind = ConstraintKind::Ge;
        row.rhs -= T::tol(FEASIBILITY_TOLERANCE);
    }
    let first = solve_lp(&primary)?;
    if !first.is_optimal() {
        return Err(status_error(&first.status, reach.value(), achievable()));
    }
    let v_star = first.objective_value;
    log::debug!("first program: v* = {v_star:e}");

    let mut relaxed_pin = false;
    let mut second = solve_lp(&build_secondary_lp(&primary, v_star, T::zero()));
    let pinned_ok = matches!(&second, Ok(s) if s.is_optimal());
    if !pinned_ok {
        log::info!("pinned-cost program failed; retrying with a ±{PIN_RELAXATION:e} window");
        relaxed_pin = true;
        second = solve_lp(&build_secondary_lp(&primary, v_star, T::lit(PIN_RELAXATION)));
    }
    let second = second?;
    if !second.is_optimal() {
        return Err(status_error(&second.status, reach.value(), achievable()));
    }
    let reach_row = primary.constraints.last().expect("reach row");
    let occupancy = occupancy_table(&primary, &second, mdp);
    Ok(SynthesisResult {
        policy: extract_policy(mdp, &occupancy),
        v_star,
        total_occupancy: second.objective_value,
        reach_probability: reach_row.eval(&second.x),
        primary_occupancy: occupancy_table(&primary, &first, mdp),
        secondary_cost: primary.objective_value(&second.x),
        occupancy,
        primary,
        relaxed_pin,
    })
}

/// Full pipeline on a base MDP: step counts, observer model, deception cost,
/// maximal reach probability of the true goal, then both programs.
pub fn synthesize<T: Scalar>(
    mdp: &Mdp<T>,
    observer: &ObserverParams<T>,
    spec: &DeceptionSpec<T>,
) -> Result<(SynthesisResult<T>, DeceptionCostTable<T>), SynthesisError> {
    let t_min = min_steps(mdp);
    let model = ObserverModel::fit_converged(mdp, observer.clone())?;
    let g = build_cost(mdp, &model, spec, &t_min)?;
    let rmax = max_reach_probability(mdp, mdp.true_goal())[mdp.initial_state()];
    let result = synthesize_with_cost(mdp, &g, ReachMode::Equality(rmax), &[mdp.true_goal()], || rmax)?;
    Ok((result, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deception::DeceptionMode;
    use crate::mdp::fixtures::{chain3, chain5};
    use crate::mdp::{validate_mdp, RawMdp};
    use crate::observer::Preset;

    fn cost(mdp: &Mdp<f64>, per_state: &[f64]) -> DeceptionCostTable<f64> {
        let n_a = mdp.n_actions();
        DeceptionCostTable {
            g: per_state.iter().flat_map(|&c| std::iter::repeat(c).take(n_a)).collect(),
            n_actions: n_a,
            spec: DeceptionSpec::new(DeceptionMode::Exaggeration, 1.0),
        }
    }

    #[test]
    fn chain3_program_by_hand() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        let g = cost(&mdp, &[0.0, 0.7, 0.0]);
        let p = build_primary_lp(&mdp, &g, ReachMode::Equality(1.0), &[0]).unwrap();
        assert_eq!(p.labels, vec![(1, 0), (1, 1)]);
        assert_eq!(p.constraints.len(), 2);
        assert_eq!(p.constraints[0].coeffs, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(p.constraints[0].rhs, 1.0);
        assert_eq!(p.constraints[1].coeffs, vec![(0, 1.0)]);
        assert_eq!(p.constraints[1].rhs, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert!((s.objective_value - 0.7).abs() < 1e-15);

        let p2 = build_secondary_lp(&p, s.objective_value, 0.0);
        let last = p2.constraints.last().unwrap();
        assert_eq!(last.coeffs, vec![(0, 0.7), (1, 0.7)]);
        let s2 = solve_lp(&p2).unwrap();
        assert!((s2.x[0] - 1.0).abs() < 1e-12 && s2.x[1].abs() < 1e-12);
    }

    #[test]
    fn zero_reach_state_gets_no_variables() {
        let raw = RawMdp::new(["G1", "m", "G2", "z"], ["L", "R"], "m")
            .transition("m", "L", &[("G1", 1.0)])
            .transition("m", "R", &[("z", 1.0)])
            .transition("z", "L", &[("z", 1.0)])
            .transition("z", "R", &[("z", 1.0)])
            .goals(["G1", "G2"], "G1");
        let mdp = validate_mdp::<f64>(&raw).unwrap();
        let p = build_primary_lp(&mdp, &cost(&mdp, &[0.0; 4]), ReachMode::Equality(1.0), &[0]).unwrap();
        assert!(p.labels.iter().all(|&(s, _)| s == 1));
        assert_eq!(p.constraints.len(), 2);
    }

    #[test]
    fn at_least_mode_uses_ge_row() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        let p = build_primary_lp(&mdp, &cost(&mdp, &[0.0, 1.0, 0.0]), ReachMode::AtLeast(0.8), &[0]).unwrap();
        let last = p.constraints.last().unwrap();
        assert_eq!(last.kind, ConstraintKind::Ge);
        assert_eq!(last.rhs, 0.8);
        assert_eq!(p.constraints.iter().filter(|c| c.label == "reach").count(), 1);
    }

    #[test]
    fn initial_goal_rejected() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap().with_initial_state(0);
        assert!(matches!(
            build_primary_lp(&mdp, &cost(&mdp, &[0.0; 3]), ReachMode::Equality(1.0), &[0]),
            Err(SynthesisError::InitialStateNotInSr(_))
        ));
    }

    #[test]
    fn over_demanding_reach_is_infeasible() {
        let raw = RawMdp::new(["s", "G1", "G2", "dead"], ["go"], "s")
            .transition("s", "go", &[("G1", 0.3), ("dead", 0.7)])
            .transition("dead", "go", &[("dead", 1.0)])
            .goals(["G1", "G2"], "G1");
        let mdp = validate_mdp::<f64>(&raw).unwrap();
        let g = cost(&mdp, &[1.0, 0.0, 0.0, 0.0]);
        let err = synthesize_with_cost(&mdp, &g, ReachMode::Equality(1.0), &[1], || 0.3).unwrap_err();
        assert_eq!(err, SynthesisError::Infeasible { target: 1.0, achievable: 0.3 });
    }

    #[test]
    fn extraction_rules() {
        let mdp = validate_mdp::<f64>(&chain5()).unwrap();
        let mut occ = vec![0.0; 10];
        occ[2 * 2] = 0.2;
        occ[2 * 2 + 1] = 0.6;
        let pi = extract_policy(&mdp, &occ);
        assert!((pi.prob(2, 0) - 0.25).abs() < 1e-15);
        assert!((pi.prob(2, 1) - 0.75).abs() < 1e-15);
        assert_eq!(pi.row(1), &[0.5, 0.5]);
        assert_eq!(pi.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn chain3_pipeline() {
        let mdp = validate_mdp::<f64>(&chain3()).unwrap();
        let preset = Preset::Study1Ddm;
        let spec = DeceptionSpec::new(DeceptionMode::Exaggeration, preset.gamma_a());
        let (res, _) = synthesize(&mdp, &preset.observer_params(&mdp), &spec).unwrap();
        assert_eq!(res.policy.prob(1, 0), 1.0);
        assert!((res.reach_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_program_trims_zero_cost_loop() {
        // m can idle in a zero-cost loop z before going to G1
        let raw = RawMdp::new(["G1", "m", "z", "G2"], ["go", "loop"], "m")
            .transition("m", "go", &[("G1", 1.0)])
            .transition("m", "loop", &[("z", 1.0)])
            .transition("z", "go", &[("m", 1.0)])
            .transition("z", "loop", &[("z", 1.0)])
            .goals(["G1", "G2"], "G1");
        let mdp = validate_mdp::<f64>(&raw).unwrap();
        let g = cost(&mdp, &[0.0, 0.0, 0.0, 0.0]);
        let res = synthesize_with_cost(&mdp, &g, ReachMode::Equality(1.0), &[0], || 1.0).unwrap();
        assert_eq!(res.v_star, 0.0);
        // a looping feasible point m→z→m→G1 has total occupancy 3
        assert!((res.total_occupancy - 1.0).abs() < 1e-12);
        assert_eq!(res.policy.prob(1, 0), 1.0);
    }
}
