//! Deception costs `g(s,a) = γ_a^{T_min(s)} f(s)` for exaggeration and ambiguity.

use std::str::FromStr;

use thiserror::Error;

use crate::mdp::{Mdp, StepCount};
use crate::observer::{GoalPosterior, ObserverError, ObserverModel};
use crate::scalar::Scalar;

pub const DEFAULT_CLIP_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeceptionError {
    #[error("exaggeration needs at least one decoy goal")]
    SingleGoal,
    #[error("invalid deception spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

impl DeceptionError {
    pub fn code(&self) -> &'static str {
        match self {
            DeceptionError::SingleGoal => "single_goal",
            DeceptionError::InvalidSpec(_) => "invalid_spec",
            DeceptionError::Observer(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeceptionMode {
    Exaggeration,
    Ambiguity,
}

impl DeceptionMode {
    pub fn name(self) -> &'static str {
        match self {
            DeceptionMode::Exaggeration => "exaggeration",
            DeceptionMode::Ambiguity => "ambiguity",
        }
    }
}

impl FromStr for DeceptionMode {
    type Err = DeceptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exaggeration" | "exaggerate" => Ok(DeceptionMode::Exaggeration),
            "ambiguity" | "ambiguous" => Ok(DeceptionMode::Ambiguity),
            _ => Err(DeceptionError::InvalidSpec(format!("unknown mode {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeceptionSpec<T> {
    pub mode: DeceptionMode,
    pub gamma_a: T,
    /// Costs at or below this are set to exactly zero.
    pub clip_threshold: T,
}

impl<T: Scalar> DeceptionSpec<T> {
    pub fn new(mode: DeceptionMode, gamma_a: T) -> Self {
        DeceptionSpec { mode, gamma_a, clip_threshold: T::lit(DEFAULT_CLIP_THRESHOLD) }
    }

    pub fn validate(&self) -> Result<(), DeceptionError> {
        if !(self.gamma_a > T::zero() && self.gamma_a <= T::one()) {
            return Err(DeceptionError::InvalidSpec("gamma_a must lie in (0, 1]".into()));
        }
        if !(self.clip_threshold >= T::zero()) {
            return Err(DeceptionError::InvalidSpec("clip threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `1 + Pr(G★) − max_{decoy} Pr(decoy)`; lies in `[0, 2]`.
/// `true_goal` is a position in the posterior's goal order.
pub fn exaggeration_f<T: Scalar>(posterior: &GoalPosterior<T>, true_goal: usize) -> Result<T, DeceptionError> {
    let best_decoy = posterior
        .probabilities
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != true_goal)
        .map(|(_, &p)| p)
        .reduce(T::max)
        .ok_or(DeceptionError::SingleGoal)?;
    Ok(T::one() + posterior.probabilities[true_goal] - best_decoy)
}

/// `Σ_G Σ_G' |Pr(G) − Pr(G')|` over ordered pairs; zero iff the posterior is uniform.
pub fn ambiguity_f<T: Scalar>(posterior: &GoalPosterior<T>) -> T {
    let p = &posterior.probabilities;
    p.iter()
        .flat_map(|&a| p.iter().map(move |&b| (a - b).abs()))
        .sum()
}

/// Per state-action deception cost, constant across actions at each state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeceptionCostTable<T> {
    /// Dense `|S|×|A|`.
    pub g: Vec<T>,
    pub n_actions: usize,
    pub spec: DeceptionSpec<T>,
}

impl<T: Scalar> DeceptionCostTable<T> {
    pub fn get(&self, s: usize, a: usize) -> T {
        self.g[s * self.n_actions + a]
    }

    /// Cost of a state (the same for every action).
    pub fn state_cost(&self, s: usize) -> T {
        self.g[s * self.n_actions]
    }

    /// `state,action,g` rows with a header line.
    pub fn to_csv(&self, mdp: &Mdp<T>) -> String {
        let mut out = String::from("state,action,g\n");
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    mdp.state_name(s),
                    mdp.action_name(a),
                    crate::io::fmt_fixed(self.get(s, a).as_f64())
                ));
            }
        }
        out
    }
}

/// The deception function value at one posterior.
pub fn deception_f<T: Scalar>(
    mode: DeceptionMode,
    posterior: &GoalPosterior<T>,
    true_goal: usize,
) -> Result<T, DeceptionError> {
    match mode {
        DeceptionMode::Exaggeration => exaggeration_f(posterior, true_goal),
        DeceptionMode::Ambiguity => Ok(ambiguity_f(posterior)),
    }
}

/// Builds `g` from the observer's posteriors anchored at the MDP's initial state.
/// Goals and states with infinite `t_min` get zero.
pub fn build_cost<T: Scalar>(
    mdp: &Mdp<T>,
    model: &ObserverModel<T>,
    spec: &DeceptionSpec<T>,
    t_min: &[StepCount],
) -> Result<DeceptionCostTable<T>, DeceptionError> {
    spec.validate()?;
    if spec.mode == DeceptionMode::Exaggeration && mdp.goals().len() < 2 {
        return Err(DeceptionError::SingleGoal);
    }
    let n_a = mdp.n_actions();
    let s1 = mdp.initial_state();
    let true_goal = mdp.true_goal_position();
    let mut g = vec![T::zero(); mdp.n_states() * n_a];
    for s in 0..mdp.n_states() {
        if mdp.is_goal(s) {
            continue;
        }
        let Some(steps) = t_min[s].finite() else {
            continue;
        };
        let posterior = model.predict(s1, s).ok_or_else(|| ObserverError::DegenerateNormalizer {
            state: mdp.state_name(s).to_owned(),
            step: None,
        })?;
        let f = deception_f(spec.mode, &posterior, true_goal)?;
        let mut value = StepCount::Finite(steps).discount(spec.gamma_a) * f;
        if value <= spec.clip_threshold {
            value = T::zero();
        }
        g[s * n_a..(s + 1) * n_a].fill(value);
    }
    Ok(DeceptionCostTable { g, n_actions: n_a, spec: *spec })
}
