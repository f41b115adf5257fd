//! Deceptive goal-reaching policies for Markov decision processes.
//!
//! An observer predicts the agent's goal with a maximum-entropy model; the
//! agent turns those predictions into a per-state deception cost
//! (exaggeration or ambiguity) and solves a pair of occupancy-measure linear
//! programs for a globally optimal stationary policy that still reaches its
//! true goal with maximal probability. A time-augmented product construction
//! adds chance constraints on arrival time for road networks with random
//! travel times.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are the concrete types the CLI uses.

pub mod baselines;
pub mod deception;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod observer;
pub mod product;
pub mod scalar;
pub mod synthesis;

pub use scalar::Scalar;

pub type Mdp64 = mdp::Mdp<f64>;
pub type Mdp32 = mdp::Mdp<f32>;
pub type Policy64 = mdp::StationaryPolicy<f64>;
pub type ObserverParams64 = observer::ObserverParams<f64>;
pub type ObserverModel64 = observer::ObserverModel<f64>;
pub type GoalPosterior64 = observer::GoalPosterior<f64>;
pub type DeceptionSpec64 = deception::DeceptionSpec<f64>;
pub type DeceptionCostTable64 = deception::DeceptionCostTable<f64>;
pub type LpProblem64 = lp::LpProblem<f64>;
pub type SynthesisResult64 = synthesis::SynthesisResult<f64>;
pub type ProductMdp64 = product::ProductMdp<f64>;
