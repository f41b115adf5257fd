//! Maximum-entropy observer: per-goal soft value iteration, the
//! entropy-regularized policy it expects, and goal posteriors that depend
//! only on the start and current state.

use std::str::FromStr;

use thiserror::Error;

use crate::mdp::{Mdp, StationaryPolicy, Trajectory};
use crate::scalar::{soft_maximum, Scalar};

/// Default stopping threshold on `Σ_s |V^t(s) − V^{t−1}(s)|`.
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-4;
/// Value every non-goal state starts from.
pub const DEFAULT_INIT_PENALTY: f64 = 1e6;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("invalid observer parameters: {0}")]
    InvalidParams(String),
    #[error("state {0} is not a goal")]
    NotAGoal(String),
    #[error("soft value iteration for goal {goal} did not converge in {iterations} iterations")]
    NonConvergence { goal: String, iterations: usize },
    #[error("posterior at state {state} (step {step:?}) has no finite weight under any goal")]
    DegenerateNormalizer { state: String, step: Option<usize> },
}

impl ObserverError {
    pub fn code(&self) -> &'static str {
        match self {
            ObserverError::InvalidParams(_) => "invalid_params",
            ObserverError::NotAGoal(_) => "not_a_goal",
            ObserverError::NonConvergence { .. } => "non_convergence",
            ObserverError::DegenerateNormalizer { .. } => "degenerate_normalizer",
        }
    }
}

/// Parameters of the observer's prediction model.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverParams<T> {
    /// Dense `|S|×|A|` nonnegative cost the observer attributes to each move.
    pub cost: Vec<T>,
    /// Efficiency: smaller values mean the observer expects near-optimal moves.
    pub alpha: T,
    pub gamma_o: T,
    /// Prior over goals, in the MDP's goal order.
    pub prior: Vec<T>,
    pub vi_tolerance: T,
    pub init_penalty: T,
    pub max_iterations: usize,
    /// Divide the value difference by `alpha` in the posterior exponent.
    /// Off reproduces the unscaled exponent `V(sT) − V(s1)`.
    pub scaled_posterior: bool,
}

impl<T: Scalar> ObserverParams<T> {
    /// Constant cost `c`, uniform prior, default tolerances.
    pub fn new(mdp: &Mdp<T>, cost: T, alpha: T, gamma_o: T) -> Self {
        let k = mdp.goals().len();
        ObserverParams {
            cost: vec![cost; mdp.n_states() * mdp.n_actions()],
            alpha,
            gamma_o,
            prior: vec![T::one() / T::from_count(k.max(1)); k],
            vi_tolerance: T::lit(DEFAULT_VI_TOLERANCE),
            init_penalty: T::lit(DEFAULT_INIT_PENALTY),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            scaled_posterior: true,
        }
    }

    pub fn validate(&self, mdp: &Mdp<T>) -> Result<(), ObserverError> {
        let bad = |m: &str| Err(ObserverError::InvalidParams(m.to_owned()));
        if self.cost.len() != mdp.n_states() * mdp.n_actions() {
            return bad("cost table shape does not match the MDP");
        }
        if self.cost.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return bad("costs must be finite and nonnegative");
        }
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return bad("alpha must be positive");
        }
        if !(self.gamma_o > T::zero() && self.gamma_o < T::one()) {
            return bad("gamma_o must lie in (0, 1)");
        }
        if self.prior.len() != mdp.goals().len() {
            return bad("prior length differs from the number of goals");
        }
        if self.prior.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return bad("prior entries must be nonnegative");
        }
        let total: T = self.prior.iter().copied().sum();
        if (total - T::one()).abs() > T::tol(1e-12) {
            return bad("prior must sum to 1");
        }
        if !(self.vi_tolerance >= T::zero()) || !(self.init_penalty > T::zero()) {
            return bad("tolerance must be nonnegative and the initial penalty positive");
        }
        Ok(())
    }

    /// The same model with the cost divided by `alpha` and `alpha = 1`.
    ///
    /// The initial penalty and the stopping tolerance are divided as well, so
    /// every soft value iterate of the result is the original's divided by
    /// `alpha` and both runs stop at the same iteration.
    pub fn absorb_alpha(&self) -> Self {
        let mut out = self.clone();
        out.cost = self.cost.iter().map(|&c| c / self.alpha).collect();
        out.init_penalty = self.init_penalty / self.alpha;
        out.vi_tolerance = self.vi_tolerance / self.alpha;
        out.alpha = T::one();
        out
    }
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Shortest-path-like baseline: α = 20, γ_a = γ_o = 0.95, c ≡ 1.
    Study1Baseline,
    /// α = 0.5, γ_a = γ_o = 0.95, c ≡ 1.
    Study1Ddm,
    /// α = 1, γ_a = 0.9, γ_o = 0.95, c ≡ 20.
    Study2Ddm,
    /// Road-network setting: α = 1, γ_a = 1, γ_o = 0.95, c ≡ 5.
    NetworkDdm,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Study1Baseline,
        Preset::Study1Ddm,
        Preset::Study2Ddm,
        Preset::NetworkDdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Study1Baseline => "study1-baseline",
            Preset::Study1Ddm => "study1-ddm",
            Preset::Study2Ddm => "study2-ddm",
            Preset::NetworkDdm => "network-ddm",
        }
    }

    /// `(alpha, gamma_o, gamma_a, cost)`.
    pub fn values(self) -> (f64, f64, f64, f64) {
        match self {
            Preset::Study1Baseline => (20.0, 0.95, 0.95, 1.0),
            Preset::Study1Ddm => (0.5, 0.95, 0.95, 1.0),
            Preset::Study2Ddm => (1.0, 0.95, 0.9, 20.0),
            Preset::NetworkDdm => (1.0, 0.95, 1.0, 5.0),
        }
    }

    pub fn gamma_a<T: Scalar>(self) -> T {
        T::lit(self.values().2)
    }

    pub fn observer_params<T: Scalar>(self, mdp: &Mdp<T>) -> ObserverParams<T> {
        let (alpha, gamma_o, _, cost) = self.values();
        ObserverParams::new(mdp, T::lit(cost), T::lit(alpha), T::lit(gamma_o))
    }
}

impl FromStr for Preset {
    type Err = ObserverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ObserverError::InvalidParams(format!("unknown preset {s}")))
    }
}

/// Soft values of one goal model.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftValueTable<T> {
    pub goal: usize,
    pub v: Vec<T>,
    /// Dense `|S|×|A|`.
    pub q: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ_s |V^t(s) − V^{t−1}(s)|` after each iteration.
    pub residuals: Vec<T>,
}

impl<T: Scalar> SoftValueTable<T> {
    pub fn require_converged<S: Scalar>(self, mdp: &Mdp<S>) -> Result<Self, ObserverError> {
        if self.converged {
            Ok(self)
        } else {
            Err(ObserverError::NonConvergence {
                goal: mdp.state_name(self.goal).to_owned(),
                iterations: self.iterations,
            })
        }
    }
}

/// Soft value iteration toward `goal`:
/// `Q(s,a) = −c(s,a) + γ_o Σ P(s,a,s') V(s')`, `V(s) = α log Σ_a e^{Q(s,a)/α}`,
/// with `V(goal)` pinned at 0 and every other state started at `−C`. The
/// other goals are absorbing terminals for this model and stay at `−C`.
///
/// A table is always returned; `converged` is false when the iteration cap
/// was hit first.
pub fn softmax_value_iteration<T: Scalar>(
    mdp: &Mdp<T>,
    goal: usize,
    params: &ObserverParams<T>,
) -> Result<SoftValueTable<T>, ObserverError> {
    params.validate(mdp)?;
    if !mdp.is_goal(goal) {
        return Err(ObserverError::NotAGoal(mdp.state_name(goal).to_owned()));
    }
    let n = mdp.n_states();
    let n_a = mdp.n_actions();
    let mut v: Vec<T> = (0..n)
        .map(|s| if s == goal { T::zero() } else { -params.init_penalty })
        .collect();
    let mut q = vec![T::zero(); n * n_a];
    let mut next = v.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        for s in 0..n {
            for a in 0..n_a {
                let future: T = mdp.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                q[s * n_a + a] = -params.cost[s * n_a + a] + params.gamma_o * future;
            }
            next[s] = if s == goal {
                T::zero()
            } else if mdp.is_goal(s) {
                -params.init_penalty
            } else {
                soft_maximum(q[s * n_a..(s + 1) * n_a].iter().copied(), params.alpha)
            };
        }
        let residual: T = v.iter().zip(&next).map(|(a, b)| (*a - *b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        residuals.push(residual);
        if residual <= params.vi_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "soft value iteration toward {} stopped after {iterations} iterations",
            mdp.state_name(goal)
        );
    }
    Ok(SoftValueTable { goal, v, q, iterations, converged, residuals })
}

/// The entropy-regularized policy `π̄(s,a) = exp((Q(s,a) − V(s))/α)`.
/// Goal rows are uniform.
pub fn expected_policy<T: Scalar>(
    mdp: &Mdp<T>,
    table: &SoftValueTable<T>,
    params: &ObserverParams<T>,
) -> StationaryPolicy<T> {
    let n_a = mdp.n_actions();
    let uniform = T::one() / T::from_count(n_a);
    let mut probs = vec![T::zero(); mdp.n_states() * n_a];
    for s in 0..mdp.n_states() {
        let row = &mut probs[s * n_a..(s + 1) * n_a];
        if mdp.is_goal(s) {
            row.fill(uniform);
            continue;
        }
        for (a, p) in row.iter_mut().enumerate() {
            *p = ((table.q[s * n_a + a] - table.v[s]) / params.alpha).exp();
        }
        // the softmax identity makes this ~1 already; absorb rounding
        let total: T = row.iter().copied().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    StationaryPolicy::from_table(mdp, probs).expect("softmax rows are distributions")
}

/// Observer's belief over goals, in the MDP's goal order.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPosterior<T> {
    pub probabilities: Vec<T>,
}

impl<T: Scalar> GoalPosterior<T> {
    /// Highest-probability goal position; ties go to the earlier goal.
    pub fn argmax(&self) -> usize {
        self.ranked()[0]
    }

    /// Runner-up goal position, if there are at least two goals.
    pub fn second_argmax(&self) -> Option<usize> {
        self.ranked().get(1).copied()
    }

    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        // stable sort keeps declaration order among ties
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .partial_cmp(&self.probabilities[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }
}

/// Per-goal soft value tables plus the parameters that produced them.
#[derive(Debug, Clone)]
pub struct ObserverModel<T> {
    pub params: ObserverParams<T>,
    /// One table per goal, in goal order.
    pub tables: Vec<SoftValueTable<T>>,
}

impl<T: Scalar> ObserverModel<T> {
    /// Runs soft value iteration once per goal.
    pub fn fit(mdp: &Mdp<T>, params: ObserverParams<T>) -> Result<Self, ObserverError> {
        let tables = mdp
            .goals()
            .iter()
            .map(|&g| softmax_value_iteration(mdp, g, &params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ObserverModel { params, tables })
    }

    /// Like [`ObserverModel::fit`] but fails if any goal model hit the iteration cap.
    pub fn fit_converged(mdp: &Mdp<T>, params: ObserverParams<T>) -> Result<Self, ObserverError> {
        let model = Self::fit(mdp, params)?;
        for t in &model.tables {
            t.clone().require_converged(mdp)?;
        }
        Ok(model)
    }

    pub fn expected_policies(&self, mdp: &Mdp<T>) -> Vec<StationaryPolicy<T>> {
        self.tables
            .iter()
            .map(|t| expected_policy(mdp, t, &self.params))
            .collect()
    }

    /// `Pr(G | s1, sT) ∝ exp(k·(V_G(sT) − V_G(s1))) Pr(G)` with `k = 1/α`
    /// (or `k = 1` when `scaled_posterior` is off), evaluated in log space.
    pub fn predict(&self, s1: usize, s_t: usize) -> Option<GoalPosterior<T>> {
        let scale = if self.params.scaled_posterior {
            T::one() / self.params.alpha
        } else {
            T::one()
        };
        let logw: Vec<T> = self
            .tables
            .iter()
            .zip(&self.params.prior)
            .map(|(t, &p)| scale * (t.v[s_t] - t.v[s1]) + p.ln())
            .collect();
        let max = logw
            .iter()
            .copied()
            .filter(|w| !w.is_nan())
            .fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return None;
        }
        let w: Vec<T> = logw
            .iter()
            .map(|&l| if l.is_nan() { T::zero() } else { (l - max).exp() })
            .collect();
        let total: T = w.iter().copied().sum();
        Some(GoalPosterior {
            probabilities: w.into_iter().map(|x| x / total).collect(),
        })
    }
}

/// Posterior at `s_t` for an agent that started in `s1`.
pub fn predict_goals<T: Scalar>(
    mdp: &Mdp<T>,
    model: &ObserverModel<T>,
    s1: usize,
    s_t: usize,
) -> Result<GoalPosterior<T>, ObserverError> {
    model
        .predict(s1, s_t)
        .ok_or_else(|| ObserverError::DegenerateNormalizer {
            state: mdp.state_name(s_t).to_owned(),
            step: None,
        })
}

/// One posterior per visited state, anchored at the trajectory's first state.
pub fn posterior_along_trajectory<T: Scalar>(
    mdp: &Mdp<T>,
    model: &ObserverModel<T>,
    trajectory: &Trajectory,
) -> Result<Vec<GoalPosterior<T>>, ObserverError> {
    let s1 = trajectory.states[0];
    trajectory
        .states
        .iter()
        .enumerate()
        .map(|(step, &s)| {
            model.predict(s1, s).ok_or_else(|| ObserverError::DegenerateNormalizer {
                state: mdp.state_name(s).to_owned(),
                step: Some(step),
            })
        })
        .collect()
}
