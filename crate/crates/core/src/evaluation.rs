//! Goal-prediction measurements along trajectories, at fractional prefixes.

use crate::mdp::Mdp;
use crate::observer::{predict_goals, GoalPosterior, ObserverError, ObserverModel};
use crate::scalar::Scalar;

/// Fractions used by default in reports.
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

/// Observer's view after one truncated prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEntry<T> {
    pub fraction: f64,
    pub prefix_len: usize,
    pub endpoint: usize,
    pub posterior: GoalPosterior<T>,
    /// Goal positions in the MDP's goal order.
    pub argmax: usize,
    pub second_argmax: Option<usize>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport<T> {
    pub entries: Vec<SegmentEntry<T>>,
}

/// `max(1, ⌈f·L⌉)` capped at `L`. The small slack keeps products such as
/// `0.9 · 20` from rounding up past the intended integer.
pub fn prefix_length(fraction: f64, length: usize) -> usize {
    if length == 0 {
        return 0;
    }
    let raw = (fraction * length as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(length)
}

/// Posterior at the end of each prefix of `states`, anchored at `states[0]`.
pub fn evaluate_segments<T: Scalar>(
    mdp: &Mdp<T>,
    model: &ObserverModel<T>,
    states: &[usize],
    fractions: &[f64],
) -> Result<SegmentReport<T>, ObserverError> {
    let length = states.len().saturating_sub(1);
    let s1 = states[0];
    let true_goal = mdp.true_goal_position();
    let entries = fractions
        .iter()
        .map(|&fraction| {
            let prefix_len = prefix_length(fraction, length);
            let endpoint = states[prefix_len];
            let posterior = predict_goals(mdp, model, s1, endpoint)?;
            let argmax = posterior.argmax();
            Ok(SegmentEntry {
                fraction,
                prefix_len,
                endpoint,
                second_argmax: posterior.second_argmax(),
                correct: argmax == true_goal,
                argmax,
                posterior,
            })
        })
        .collect::<Result<Vec<_>, ObserverError>>()?;
    Ok(SegmentReport { entries })
}

impl<T: Scalar> SegmentReport<T> {
    /// `fraction,prefix_len,argmax,second_argmax,correct,posterior_true,posterior_argmax`
    pub fn to_csv(&self, mdp: &Mdp<T>) -> String {
        use crate::io::fmt_fixed;
        let goal = |pos: usize| mdp.state_name(mdp.goals()[pos]).to_owned();
        let tg = mdp.true_goal_position();
        let mut out =
            String::from("fraction,prefix_len,argmax,second_argmax,correct,posterior_true,posterior_argmax\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.fraction,
                e.prefix_len,
                goal(e.argmax),
                e.second_argmax.map(goal).unwrap_or_default(),
                e.correct,
                fmt_fixed(e.posterior.probabilities[tg].as_f64()),
                fmt_fixed(e.posterior.probabilities[e.argmax].as_f64()),
            ));
        }
        out
    }
}

/// Aggregate over many trajectories: per fraction, the share of wrong
/// argmax predictions and the mean posterior of the true goal.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub fractions: Vec<f64>,
    pub incorrect_rate: Vec<f64>,
    pub mean_posterior_true: Vec<f64>,
    pub n_trajectories: usize,
}

pub fn summarize<T: Scalar>(mdp: &Mdp<T>, reports: &[SegmentReport<T>]) -> SegmentSummary {
    let fractions: Vec<f64> = reports
        .first()
        .map(|r| r.entries.iter().map(|e| e.fraction).collect())
        .unwrap_or_default();
    let n = reports.len().max(1) as f64;
    let tg = mdp.true_goal_position();
    let mut incorrect_rate = vec![0.0; fractions.len()];
    let mut mean_posterior_true = vec![0.0; fractions.len()];
    for r in reports {
        for (i, e) in r.entries.iter().enumerate() {
            if !e.correct {
                incorrect_rate[i] += 1.0 / n;
            }
            mean_posterior_true[i] += e.posterior.probabilities[tg].as_f64() / n;
        }
    }
    SegmentSummary { fractions, incorrect_rate, mean_posterior_true, n_trajectories: reports.len() }
}

impl SegmentSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,n,incorrect_rate,mean_posterior_true\n");
        for i in 0..self.fractions.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.fractions[i],
                self.n_trajectories,
                crate::io::fmt_fixed(self.incorrect_rate[i]),
                crate::io::fmt_fixed(self.mean_posterior_true[i]),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::chain5;
    use crate::mdp::validate_mdp;
    use crate::observer::ObserverParams;

    #[test]
    fn prefix_arithmetic() {
        let got: Vec<_> = DEFAULT_FRACTIONS.iter().map(|&f| prefix_length(f, 20)).collect();
        assert_eq!(got, [5, 10, 15, 18]);
        assert_eq!(prefix_length(0.25, 1), 1);
        assert_eq!(prefix_length(1.0, 7), 7);
    }

    #[test]
    fn full_trajectory_ends_at_true_goal() {
        let mdp = validate_mdp::<f64>(&chain5()).unwrap();
        let params = ObserverParams::new(&mdp, 1.0, 1.0, 0.9);
        let model = ObserverModel::fit_converged(&mdp, params).unwrap();
        let id = |n: &str| mdp.state_id(n).unwrap();
        let states = [id("m"), id("a"), id("G1")];
        let r = evaluate_segments(&mdp, &model, &states, &[0.25, 1.0]).unwrap();
        assert_eq!(r.entries[0].prefix_len, 1);
        assert_eq!(r.entries[0].endpoint, id("a"));
        assert!(r.entries[1].correct);
        assert_eq!(r.entries[1].argmax, mdp.true_goal_position());
        let csv = r.to_csv(&mdp);
        assert!(csv.starts_with("fraction,prefix_len,argmax"));
        assert_eq!(csv.lines().count(), 3);
    }
}
