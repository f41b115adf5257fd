use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mdp, StationaryPolicy, Trajectory};
use crate::scalar::Scalar;

fn sample<T: Scalar>(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = (usize, T)>) -> usize {
    let u = T::lit(rng.gen::<f64>());
    let mut acc = T::zero();
    let mut last = 0;
    for (i, w) in weights {
        if w <= T::zero() {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum
    last
}

/// Samples one trajectory from the initial state.
///
/// Stops on entering a goal or after `max_steps` steps, in which case
/// `max_steps_exceeded` is set. Identical seeds give identical trajectories.
pub fn simulate<T: Scalar>(
    mdp: &Mdp<T>,
    policy: &StationaryPolicy<T>,
    seed: u64,
    max_steps: usize,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::start(mdp.initial_state());
    let mut s = mdp.initial_state();
    while !mdp.is_goal(s) {
        if traj.len() >= max_steps {
            traj.max_steps_exceeded = true;
            break;
        }
        let a = sample(&mut rng, policy.row(s).iter().copied().enumerate());
        let next = sample(&mut rng, mdp.successors(s, a).iter().copied());
        traj.actions.push(a);
        traj.states.push(next);
        s = next;
    }
    traj
}

/// The mode path: at each state the most probable action, then its most
/// probable successor (lowest index on ties). Stops at a goal, at `max_steps`,
/// or when a state repeats (flagged as exceeded).
pub fn most_likely_trajectory<T: Scalar>(
    mdp: &Mdp<T>,
    policy: &StationaryPolicy<T>,
    max_steps: usize,
) -> Trajectory {
    fn first_max<T: Scalar>(items: impl Iterator<Item = (usize, T)>) -> usize {
        let mut best: Option<(usize, T)> = None;
        for (i, w) in items {
            if best.map_or(true, |(_, b)| w > b) {
                best = Some((i, w));
            }
        }
        best.map_or(0, |(i, _)| i)
    }
    let mut traj = Trajectory::start(mdp.initial_state());
    let mut seen = vec![false; mdp.n_states()];
    let mut s = mdp.initial_state();
    seen[s] = true;
    while !mdp.is_goal(s) {
        if traj.len() >= max_steps {
            traj.max_steps_exceeded = true;
            break;
        }
        let a = first_max(policy.row(s).iter().copied().enumerate());
        let next = first_max(mdp.successors(s, a).iter().copied());
        traj.actions.push(a);
        traj.states.push(next);
        if seen[next] && !mdp.is_goal(next) {
            traj.max_steps_exceeded = true;
            break;
        }
        seen[next] = true;
        s = next;
    }
    traj
}
