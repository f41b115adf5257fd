//! Time-augmented product MDPs for road networks with random travel times.
//!
//! Edge speeds are lognormal (fit by moments); the implied travel time is
//! lognormal too and is bucketed into 30-second intervals up to a budget of
//! `t_max` minutes, with one extra overflow bucket. Product states are
//! `(node, bucket)` pairs; bucket 0 is the departure time of the initial
//! state and bucket `2·t_max + 1` is the absorbing "late" layer.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::deception::DeceptionCostTable;
use crate::mdp::{
    max_reach_probability_to, validate_mdp, Mdp, MdpError, RawMdp, RawTransition, StationaryPolicy,
    Trajectory,
};
use crate::scalar::Scalar;
use crate::synthesis::{synthesize_with_cost, ReachMode, SynthesisError, SynthesisResult};

pub const BUCKET_SECONDS: f64 = 30.0;
/// Bucket mass below this is dropped before renormalizing.
pub const FLUSH_BELOW: f64 = 1e-12;
pub const NETWORK_HEADER: [&str; 5] = ["from", "to", "mean_speed_mps", "var_speed", "length_m"];

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("edge {from}->{to} has nonpositive speed or length")]
    DegenerateEdge { from: String, to: String },
    #[error("time budget must be at least one minute")]
    BadBudget,
    #[error("no travel-time distribution for edge {0}->{1}")]
    MissingEdgeDistribution(String, String),
    #[error("base MDP action ({0}, {1}) is not deterministic")]
    NonDeterministicBase(String, String),
    #[error("true goal cannot be reached within the budget from the initial state")]
    GoalLayerUnreachable,
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("network file: {0}")]
    Csv(#[from] csv::Error),
    #[error("network file: {0}")]
    Format(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

impl ProductError {
    pub fn code(&self) -> &'static str {
        match self {
            ProductError::DegenerateEdge { .. } => "degenerate_edge",
            ProductError::BadBudget => "bad_budget",
            ProductError::MissingEdgeDistribution(..) => "missing_edge_distribution",
            ProductError::NonDeterministicBase(..) => "non_deterministic_base",
            ProductError::GoalLayerUnreachable => "goal_layer_unreachable",
            ProductError::BadThreshold(_) => "bad_threshold",
            ProductError::Csv(_) | ProductError::Format(_) => "bad_network_file",
            ProductError::Mdp(e) => e.code(),
            ProductError::Synthesis(e) => e.code(),
        }
    }
}

/// A directed road segment with speed statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelEdge<T> {
    pub from: String,
    pub to: String,
    /// m/s
    pub mean_speed: T,
    /// (m/s)²
    pub var_speed: T,
    /// m
    pub length: T,
}

/// Travel-time distribution over buckets `1..=2·t_max+1`; entry `k − 1`
/// holds the probability of bucket `k`, the last entry the overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketedDistribution<T> {
    pub probabilities: Vec<T>,
}

impl<T: Scalar> BucketedDistribution<T> {
    /// Probability of bucket `k` (1-based).
    pub fn bucket(&self, k: usize) -> T {
        self.probabilities[k - 1]
    }

    pub fn point_mass(bucket: usize, t_max: usize) -> Self {
        let mut probabilities = vec![T::zero(); 2 * t_max + 1];
        probabilities[bucket.min(2 * t_max + 1) - 1] = T::one();
        BucketedDistribution { probabilities }
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Buckets the travel time `length / speed` with lognormal speed.
///
/// With `σ² = ln(1 + var/mean²)` and `μ = ln(mean) − σ²/2`, the travel time
/// is lognormal with log-mean `ln(length) − μ` and log-sd `σ`. Bucket `k`
/// covers `(30(k−1), 30k]` seconds.
pub fn discretize_travel_time<T: Scalar>(
    edge: &TravelEdge<T>,
    t_max: usize,
) -> Result<BucketedDistribution<T>, ProductError> {
    if t_max == 0 {
        return Err(ProductError::BadBudget);
    }
    let (mean, var, len) = (edge.mean_speed.as_f64(), edge.var_speed.as_f64(), edge.length.as_f64());
    if !(mean > 0.0 && len > 0.0 && var >= 0.0 && mean.is_finite() && len.is_finite() && var.is_finite()) {
        return Err(ProductError::DegenerateEdge { from: edge.from.clone(), to: edge.to.clone() });
    }
    let n = 2 * t_max + 1;
    let sigma2 = (1.0 + var / (mean * mean)).ln();
    if sigma2 <= 0.0 {
        let seconds = len / mean;
        let k = ((seconds / BUCKET_SECONDS).ceil() as usize).max(1);
        return Ok(BucketedDistribution::point_mass(k, t_max));
    }
    let sigma = sigma2.sqrt();
    let log_mean = len.ln() - (mean.ln() - sigma2 / 2.0);
    let cdf = |seconds: f64| {
        if seconds <= 0.0 {
            0.0
        } else {
            standard_normal_cdf((seconds.ln() - log_mean) / sigma)
        }
    };
    let mut probs: Vec<f64> = (1..n)
        .map(|k| cdf(BUCKET_SECONDS * k as f64) - cdf(BUCKET_SECONDS * (k - 1) as f64))
        .collect();
    probs.push(1.0 - cdf(BUCKET_SECONDS * (n - 1) as f64));
    for p in probs.iter_mut() {
        if *p < FLUSH_BELOW {
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    Ok(BucketedDistribution {
        probabilities: probs.into_iter().map(|p| T::lit(p / total)).collect(),
    })
}

/// A directed road network read from CSV.
#[derive(Debug, Clone)]
pub struct TravelNetwork<T> {
    pub edges: Vec<TravelEdge<T>>,
    /// Node ids in order of first appearance.
    pub nodes: Vec<String>,
}

impl<T: Scalar> TravelNetwork<T> {
    pub fn new(edges: Vec<TravelEdge<T>>) -> Self {
        let mut nodes: Vec<String> = Vec::new();
        for e in &edges {
            for n in [&e.from, &e.to] {
                if !nodes.contains(n) {
                    nodes.push(n.clone());
                }
            }
        }
        TravelNetwork { edges, nodes }
    }

    /// Parses `from,to,mean_speed_mps,var_speed,length_m` rows.
    pub fn from_csv(text: &str) -> Result<Self, ProductError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if header != NETWORK_HEADER {
            return Err(ProductError::Format(format!("expected header {}", NETWORK_HEADER.join(","))));
        }
        let mut edges = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<T, ProductError> {
                rec[i]
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| ProductError::Format(format!("bad number {:?}", &rec[i])))
            };
            edges.push(TravelEdge {
                from: rec[0].to_owned(),
                to: rec[1].to_owned(),
                mean_speed: num(2)?,
                var_speed: num(3)?,
                length: num(4)?,
            });
        }
        Ok(Self::new(edges))
    }

    /// Deterministic base MDP: action `eK` follows the K-th outgoing edge of a
    /// node (file order); nodes with fewer edges stay put on the extra
    /// actions. Goals are absorbing.
    pub fn to_mdp(&self, start: &str, goals: &[String], true_goal: &str) -> Result<Mdp<T>, ProductError> {
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in &self.edges {
            let list = out.entry(e.from.as_str()).or_default();
            if list.contains(&e.to.as_str()) {
                return Err(ProductError::Format(format!("duplicate edge {}->{}", e.from, e.to)));
            }
            list.push(&e.to);
        }
        let degree = self
            .nodes
            .iter()
            .filter(|n| !goals.contains(n))
            .map(|n| out.get(n.as_str()).map_or(0, Vec::len))
            .max()
            .unwrap_or(0)
            .max(1);
        let actions: Vec<String> = (0..degree).map(|k| format!("e{k}")).collect();
        let mut transitions = Vec::new();
        for n in &self.nodes {
            if goals.contains(n) {
                continue;
            }
            let targets = out.get(n.as_str()).cloned().unwrap_or_default();
            for (k, a) in actions.iter().enumerate() {
                let to = targets.get(k).copied().unwrap_or(n.as_str());
                transitions.push(RawTransition { state: n.clone(), action: a.clone(), next: vec![(to.to_owned(), 1.0)] });
            }
        }
        let raw = RawMdp {
            states: self.nodes.clone(),
            actions,
            initial_state: start.to_owned(),
            transitions,
            goals: goals.to_vec(),
            true_goal: true_goal.to_owned(),
        };
        Ok(validate_mdp(&raw)?)
    }

    /// Bucketed distributions keyed by base state indices of `mdp`.
    pub fn discretize(
        &self,
        mdp: &Mdp<T>,
        t_max: usize,
    ) -> Result<HashMap<(usize, usize), BucketedDistribution<T>>, ProductError> {
        let mut out = HashMap::new();
        for e in &self.edges {
            let (Some(a), Some(b)) = (mdp.state_id(&e.from), mdp.state_id(&e.to)) else {
                return Err(ProductError::Format(format!("edge {}->{} not in the MDP", e.from, e.to)));
            };
            out.insert((a, b), discretize_travel_time(e, t_max)?);
        }
        Ok(out)
    }
}

/// Base MDP crossed with elapsed-time buckets.
#[derive(Debug, Clone)]
pub struct ProductMdp<T> {
    /// Product MDP over the states reachable from `(s1, 0)`, ordered by
    /// bucket then base index. Its goals are every `(goal, t)` with
    /// `t ≤ 2·t_max`.
    pub mdp: Mdp<T>,
    pub base_state: Vec<usize>,
    pub bucket: Vec<usize>,
    pub t_max: usize,
    /// `(G★, t)` states with `t ≤ 2·t_max`: arriving on time.
    pub goal_layer: Vec<usize>,
}

impl<T: Scalar> ProductMdp<T> {
    pub fn overflow_bucket(&self) -> usize {
        2 * self.t_max + 1
    }

    /// Maps a product trajectory onto base states (actions are shared).
    pub fn project(&self, traj: &Trajectory) -> Trajectory {
        Trajectory {
            states: traj.states.iter().map(|&s| self.base_state[s]).collect(),
            actions: traj.actions.clone(),
            max_steps_exceeded: traj.max_steps_exceeded,
        }
    }

    /// Expected number of visits to each base state under a product occupancy table.
    pub fn base_visits(&self, occupancy: &[T], n_base: usize) -> Vec<T> {
        let n_a = self.mdp.n_actions();
        let mut visits = vec![T::zero(); n_base];
        for s in 0..self.mdp.n_states() {
            let total: T = occupancy[s * n_a..(s + 1) * n_a].iter().copied().sum();
            visits[self.base_state[s]] += total;
        }
        visits
    }

    /// Probability that `policy` reaches the true goal within the budget.
    pub fn on_time_probability(&self, policy: &StationaryPolicy<T>) -> T {
        crate::mdp::policy_reach_probability(&self.mdp, policy, &self.goal_layer)
    }

    /// Best on-time probability over all policies.
    pub fn max_on_time_probability(&self) -> T {
        max_reach_probability_to(&self.mdp, &self.goal_layer)[self.mdp.initial_state()]
    }
}

/// Builds the product over states reachable from `(s1, 0)`.
///
/// From `(s, t)`, an action toward `s' ≠ s` lands in `(s', t + k)` with
/// probability `F(k)` when `t + k ≤ 2·t_max`; all later mass goes to
/// `(s', 2·t_max + 1)`. Self-loops keep the time coordinate. Goal and
/// overflow states are absorbing.
pub fn build_product<T: Scalar>(
    base: &Mdp<T>,
    distributions: &HashMap<(usize, usize), BucketedDistribution<T>>,
    t_max: usize,
) -> Result<ProductMdp<T>, ProductError> {
    if t_max == 0 {
        return Err(ProductError::BadBudget);
    }
    let late = 2 * t_max + 1;
    let n_a = base.n_actions();
    let mut step = vec![0usize; base.n_states() * n_a];
    for s in 0..base.n_states() {
        for a in 0..n_a {
            match base.successors(s, a) {
                [(next, _)] => step[s * n_a + a] = *next,
                _ => {
                    return Err(ProductError::NonDeterministicBase(
                        base.state_name(s).to_owned(),
                        base.action_name(a).to_owned(),
                    ))
                }
            }
        }
    }
    let absorbing = |s: usize, t: usize| t == late || base.is_goal(s);

    // (s, t) -> per-action successor lists
    type Row<T> = Vec<((usize, usize), T)>;
    let mut rows: HashMap<(usize, usize), Vec<Row<T>>> = HashMap::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut stack = vec![(base.initial_state(), 0usize)];
    seen.insert((base.initial_state(), 0));
    while let Some((s, t)) = stack.pop() {
        if absorbing(s, t) {
            continue;
        }
        let mut per_action = Vec::with_capacity(n_a);
        for a in 0..n_a {
            let next = step[s * n_a + a];
            let mut row: Row<T> = Vec::new();
            if next == s {
                row.push(((s, t), T::one()));
            } else {
                let dist = distributions.get(&(s, next)).ok_or_else(|| {
                    ProductError::MissingEdgeDistribution(
                        base.state_name(s).to_owned(),
                        base.state_name(next).to_owned(),
                    )
                })?;
                if dist.probabilities.len() != late {
                    return Err(ProductError::Format(format!(
                        "distribution for {}->{} has {} buckets, expected {late}",
                        base.state_name(s),
                        base.state_name(next),
                        dist.probabilities.len()
                    )));
                }
                let mut overflow = T::zero();
                for (idx, &p) in dist.probabilities.iter().enumerate() {
                    if p <= T::zero() {
                        continue;
                    }
                    let arrive = t + idx + 1;
                    if arrive <= 2 * t_max {
                        row.push(((next, arrive), p));
                    } else {
                        overflow += p;
                    }
                }
                if overflow > T::zero() {
                    row.push(((next, late), overflow));
                }
            }
            for &(key, _) in &row {
                if seen.insert(key) {
                    stack.push(key);
                }
            }
            per_action.push(row);
        }
        rows.insert((s, t), per_action);
    }

    let mut order: Vec<(usize, usize)> = seen.into_iter().collect();
    order.sort_by_key(|&(s, t)| (t, s));
    let name = |(s, t): (usize, usize)| format!("{}@{}", base.state_name(s), t);
    let mut transitions = Vec::new();
    for &key in &order {
        if let Some(per_action) = rows.get(&key) {
            for (a, row) in per_action.iter().enumerate() {
                transitions.push(RawTransition {
                    state: name(key),
                    action: base.action_name(a).to_owned(),
                    next: normalized(row.iter().map(|&(k, p)| (name(k), p.as_f64())).collect()),
                });
            }
        } else {
            for a in 0..n_a {
                transitions.push(RawTransition {
                    state: name(key),
                    action: base.action_name(a).to_owned(),
                    next: vec![(name(key), 1.0)],
                });
            }
        }
    }
    let goals: Vec<(usize, usize)> = order
        .iter()
        .copied()
        .filter(|&(s, t)| base.is_goal(s) && t < late)
        .collect();
    let on_time: Vec<(usize, usize)> = goals.iter().copied().filter(|&(s, _)| s == base.true_goal()).collect();
    let Some(&first_on_time) = on_time.first() else {
        return Err(ProductError::GoalLayerUnreachable);
    };
    let raw = RawMdp {
        states: order.iter().map(|&k| name(k)).collect(),
        actions: base.action_names().to_vec(),
        initial_state: name((base.initial_state(), 0)),
        transitions,
        goals: goals.iter().map(|&k| name(k)).collect(),
        true_goal: name(first_on_time),
    };
    let mdp: Mdp<T> = validate_mdp(&raw)?;
    let index: HashMap<(usize, usize), usize> = order.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    Ok(ProductMdp {
        base_state: order.iter().map(|k| k.0).collect(),
        bucket: order.iter().map(|k| k.1).collect(),
        goal_layer: on_time.iter().map(|k| index[k]).collect(),
        t_max,
        mdp,
    })
}

// Distributions stored in f32 may sum to 1 only within single precision.
fn normalized(mut row: Vec<(String, f64)>) -> Vec<(String, f64)> {
    let total: f64 = row.iter().map(|(_, p)| p).sum();
    for (_, p) in row.iter_mut() {
        *p /= total;
    }
    row
}

/// Lifts a base cost table onto the product: `g((s,t),a) = g(s,a)`.
pub fn lift_cost<T: Scalar>(product: &ProductMdp<T>, base_g: &DeceptionCostTable<T>) -> DeceptionCostTable<T> {
    let n_a = product.mdp.n_actions();
    let mut g = vec![T::zero(); product.mdp.n_states() * n_a];
    for s in 0..product.mdp.n_states() {
        for a in 0..n_a {
            g[s * n_a + a] = base_g.get(product.base_state[s], a);
        }
    }
    DeceptionCostTable { g, n_actions: n_a, spec: base_g.spec }
}

/// Deceptive synthesis on the product with `Σ_k Pr(reach (G★, k)) ≥ threshold`
/// over the on-time goal layer.
pub fn synthesize_time_constrained<T: Scalar>(
    product: &ProductMdp<T>,
    base_g: &DeceptionCostTable<T>,
    threshold: T,
) -> Result<SynthesisResult<T>, ProductError> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(ProductError::BadThreshold(threshold.as_f64()));
    }
    let g = lift_cost(product, base_g);
    Ok(synthesize_with_cost(
        &product.mdp,
        &g,
        ReachMode::AtLeast(threshold),
        &product.goal_layer,
        || product.max_on_time_probability(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{validate_mdp, RawMdp};

    fn edge(mean: f64, var: f64, len: f64) -> TravelEdge<f64> {
        TravelEdge { from: "a".into(), to: "b".into(), mean_speed: mean, var_speed: var, length: len }
    }

    #[test]
    fn zero_variance_is_a_point_mass() {
        // 450 m at 10 m/s = 45 s → bucket (30, 60]
        let d = discretize_travel_time(&edge(10.0, 0.0, 450.0), 5).unwrap();
        assert_eq!(d.probabilities.len(), 11);
        assert_eq!(d.bucket(2), 1.0);
        assert_eq!(d.probabilities.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn buckets_sum_to_one() {
        for (m, v, l) in [(8.0, 4.0, 1200.0), (3.0, 9.0, 5000.0), (15.0, 0.5, 300.0)] {
            let d = discretize_travel_time(&edge(m, v, l), 10).unwrap();
            assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.probabilities.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn overflow_is_the_complement() {
        let e = edge(5.0, 6.0, 3000.0);
        let t_max = 10;
        let d = discretize_travel_time(&e, t_max).unwrap();
        let s2 = (1.0f64 + 6.0 / 25.0).ln();
        let mu = 5f64.ln() - s2 / 2.0;
        let z = ((600.0f64).ln() - (3000f64.ln() - mu)) / s2.sqrt();
        let tail = 1.0 - standard_normal_cdf(z);
        assert!((d.bucket(21) - tail).abs() < 1e-12);
    }

    #[test]
    fn degenerate_edges_rejected() {
        assert!(matches!(
            discretize_travel_time(&edge(0.0, 1.0, 100.0), 5),
            Err(ProductError::DegenerateEdge { .. })
        ));
        assert!(matches!(
            discretize_travel_time(&edge(1.0, 1.0, -1.0), 5),
            Err(ProductError::DegenerateEdge { .. })
        ));
    }

    fn line() -> Mdp<f64> {
        let raw = RawMdp::new(["s", "m", "G", "D"], ["go"], "s")
            .transition("s", "go", &[("m", 1.0)])
            .transition("m", "go", &[("G", 1.0)])
            .goals(["G", "D"], "G");
        validate_mdp(&raw).unwrap()
    }

    #[test]
    fn deterministic_lift() {
        let base = line();
        let t_max = 3;
        let mut d = HashMap::new();
        d.insert((0, 1), BucketedDistribution::point_mass(1, t_max));
        d.insert((1, 2), BucketedDistribution::point_mass(1, t_max));
        let p = build_product(&base, &d, t_max).unwrap();
        let s = p.mdp.state_id("s@0").unwrap();
        let m = p.mdp.state_id("m@1").unwrap();
        assert_eq!(p.mdp.successors(s, 0), &[(m, 1.0)]);
        assert_eq!(p.goal_layer, vec![p.mdp.state_id("G@2").unwrap()]);
    }

    #[test]
    fn overflow_aggregation_near_the_deadline() {
        let base = line();
        let t_max = 3; // buckets 1..=6 on time, 7 late
        let mut f = vec![0.0; 7];
        f[0] = 0.5;
        f[2] = 0.5;
        let mut d = HashMap::new();
        d.insert((0, 1), BucketedDistribution::point_mass(5, t_max)); // arrive at m@5
        d.insert((1, 2), BucketedDistribution { probabilities: f });
        let p = build_product(&base, &d, t_max).unwrap();
        let m5 = p.mdp.state_id("m@5").unwrap();
        let g6 = p.mdp.state_id("G@6").unwrap();
        let g7 = p.mdp.state_id("G@7").unwrap();
        assert_eq!(p.mdp.probability(m5, 0, g6), 0.5);
        assert_eq!(p.mdp.probability(m5, 0, g7), 0.5);
        assert!(p.goal_layer.contains(&g6) && !p.goal_layer.contains(&g7));
        assert!(!p.mdp.is_goal(g7));
        for s in 0..p.mdp.n_states() {
            let next = p.mdp.successors(s, 0);
            assert!(next.iter().all(|&(n, _)| p.bucket[n] >= p.bucket[s]));
        }
    }

    #[test]
    fn missing_distribution_reported() {
        let base = line();
        let mut d = HashMap::new();
        d.insert((0, 1), BucketedDistribution::point_mass(1, 2));
        assert!(matches!(
            build_product(&base, &d, 2),
            Err(ProductError::MissingEdgeDistribution(ref a, ref b)) if a == "m" && b == "G"
        ));
    }

    #[test]
    fn network_csv() {
        let net = TravelNetwork::<f64>::from_csv(
            "from,to,mean_speed_mps,var_speed,length_m\nA,B,10,1,600\nA,C,10,1,600\nB,C,5,0,300\n",
        )
        .unwrap();
        assert_eq!(net.nodes, vec!["A", "B", "C"]);
        let mdp = net.to_mdp("A", &["C".into(), "B".into()], "C").unwrap();
        assert_eq!(mdp.action_names(), &["e0", "e1"]);
        assert!(TravelNetwork::<f64>::from_csv("a,b\n1,2\n").is_err());
    }
}
