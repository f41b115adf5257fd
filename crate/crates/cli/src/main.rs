//! `ddm`: synthesize, simulate and evaluate deceptive policies from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ddm_core::baselines::{dpp_trajectory, dpp_turnback_trajectory, shortest_path_trajectory, BaselineError};
use ddm_core::deception::{build_cost, DeceptionError, DeceptionMode, DeceptionSpec};
use ddm_core::evaluation::{evaluate_segments, summarize, SegmentReport, DEFAULT_FRACTIONS};
use ddm_core::io::{fixed_json, fmt_fixed};
use ddm_core::lp::LpError;
use ddm_core::mdp::{
    max_reach_probability, min_steps, most_likely_trajectory, policy_reach_probability, simulate,
    EvaluationError, GridError, GridSpec, MdpError, PolicyError, StationaryPolicy,
};
use ddm_core::observer::{ObserverError, ObserverModel, ObserverParams, Preset};
use ddm_core::product::{build_product, synthesize_time_constrained, ProductError, TravelNetwork};
use ddm_core::synthesis::{synthesize, SynthesisError};
use ddm_core::{Mdp64, Policy64};

#[derive(Parser)]
#[command(name = "ddm", version, about = "Deceptive decision-making policy synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve both occupancy programs; writes policy.json, cost.csv, summary.json.
    Synth(RunArgs),
    /// Roll out a policy; writes trajectories.json.
    Simulate(RunArgs),
    /// Observer posterior at every state; writes posteriors.csv.
    Predict(RunArgs),
    /// Goal predictions on trajectory prefixes; writes segments.csv and segment_summary.csv.
    Eval(RunArgs),
    /// Time-constrained synthesis on a road network; writes product_policy.json and summary.json.
    ProductSynth(RunArgs),
    /// Shortest-path and decoy-detour trajectories; writes shortest.json, dpp.json and dpp_turnback.json.
    Baseline(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Policy,
    Shortest,
    Dpp,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Grid-world JSON.
    #[arg(long, conflicts_with = "network")]
    grid: Option<PathBuf>,
    /// Road network CSV (`from,to,mean_speed_mps,var_speed,length_m`).
    #[arg(long)]
    network: Option<PathBuf>,
    /// Start node (network only).
    #[arg(long)]
    start: Option<String>,
    /// Goal node, repeatable (network only).
    #[arg(long = "goal")]
    goals: Vec<String>,
    /// True goal node (network only).
    #[arg(long)]
    true_goal: Option<String>,
    /// study1-baseline, study1-ddm, study2-ddm or network-ddm.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma_a: Option<f64>,
    #[arg(long)]
    gamma_o: Option<f64>,
    /// Constant observer step cost.
    #[arg(long)]
    cost: Option<f64>,
    /// exaggeration (exaggerate) or ambiguity (ambiguous).
    #[arg(long, default_value = "exaggeration")]
    mode: String,
    /// Time budget in minutes.
    #[arg(long)]
    tmax: Option<usize>,
    /// Minimum on-time probability.
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    rollouts: u64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    /// Policy JSON from `synth` (otherwise synthesized on the fly).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Trajectories to evaluate.
    #[arg(long, value_enum, default_value = "policy")]
    source: Source,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
    fractions: Vec<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Error surfaced as JSON on stderr.
#[derive(Debug)]
struct Failure {
    module: &'static str,
    code: String,
    message: String,
    details: Value,
}

impl Failure {
    fn new(module: &'static str, code: &str, message: impl Into<String>) -> Self {
        Failure { module, code: code.to_owned(), message: message.into(), details: Value::Null }
    }

    fn to_json(&self) -> Value {
        let mut v = json!({"error": {"module": self.module, "code": self.code, "message": self.message}});
        if !self.details.is_null() {
            v["error"]["details"] = self.details.clone();
        }
        v
    }
}

impl From<MdpError> for Failure {
    fn from(e: MdpError) -> Self {
        Failure::new("mdp-core", e.code(), e.to_string())
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        Failure::new("mdp-core", e.code(), e.to_string())
    }
}

impl From<PolicyError> for Failure {
    fn from(e: PolicyError) -> Self {
        Failure::new("mdp-core", "invalid_policy", e.to_string())
    }
}

impl From<EvaluationError> for Failure {
    fn from(e: EvaluationError) -> Self {
        Failure::new("mdp-core", "evaluation_failed", e.to_string())
    }
}

impl From<ObserverError> for Failure {
    fn from(e: ObserverError) -> Self {
        Failure::new("observer", e.code(), e.to_string())
    }
}

impl From<DeceptionError> for Failure {
    fn from(e: DeceptionError) -> Self {
        match e {
            DeceptionError::Observer(o) => o.into(),
            e => Failure::new("deception-cost", e.code(), e.to_string()),
        }
    }
}

impl From<LpError> for Failure {
    fn from(e: LpError) -> Self {
        Failure::new("lp-synthesis", e.code(), e.to_string())
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Observer(o) => o.into(),
            SynthesisError::Deception(d) => d.into(),
            SynthesisError::Infeasible { target, achievable } => {
                let mut f = Failure::new("lp-synthesis", "infeasible", e.to_string());
                f.details = json!({"target": fixed_json(target), "achievable": fixed_json(achievable)});
                f
            }
            e => Failure::new("lp-synthesis", e.code(), e.to_string()),
        }
    }
}

impl From<ProductError> for Failure {
    fn from(e: ProductError) -> Self {
        match e {
            ProductError::Mdp(m) => m.into(),
            ProductError::Synthesis(s) => {
                let mut f: Failure = s.into();
                if f.code == "infeasible" {
                    f.module = "product-mdp";
                }
                f
            }
            e => Failure::new("product-mdp", e.code(), e.to_string()),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        Failure::new("baselines", e.code(), e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::new("cli", "io_error", format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::new("cli", "io_error", format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::new("cli", "io_error", format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Loaded problem plus the network it came from, if any.
struct Problem {
    mdp: Mdp64,
    network: Option<TravelNetwork<f64>>,
}

fn load_problem(args: &RunArgs) -> CliResult<Problem> {
    match (&args.grid, &args.network) {
        (Some(path), None) => {
            let spec = GridSpec::from_json(&read(path)?)?;
            Ok(Problem { mdp: spec.build()?, network: None })
        }
        (None, Some(path)) => {
            let network = TravelNetwork::<f64>::from_csv(&read(path)?)?;
            let missing = |flag: &str| Failure::new("cli", "bad_argument", format!("--network needs {flag}"));
            let start = args.start.as_deref().ok_or_else(|| missing("--start"))?;
            let true_goal = args.true_goal.as_deref().ok_or_else(|| missing("--true-goal"))?;
            if args.goals.is_empty() {
                return Err(missing("--goal"));
            }
            let mdp = network.to_mdp(start, &args.goals, true_goal)?;
            Ok(Problem { mdp, network: Some(network) })
        }
        _ => Err(Failure::new("cli", "bad_argument", "exactly one of --grid or --network is required")),
    }
}

/// Resolved numeric settings.
struct Settings {
    preset: Preset,
    observer: ObserverParams<f64>,
    spec: DeceptionSpec<f64>,
}

fn settings(args: &RunArgs, mdp: &Mdp64, default_preset: Preset) -> CliResult<Settings> {
    let preset = match &args.preset {
        Some(name) => name.parse::<Preset>()?,
        None => default_preset,
    };
    let (alpha, gamma_o, gamma_a, cost) = preset.values();
    let observer = ObserverParams::new(
        mdp,
        args.cost.unwrap_or(cost),
        args.alpha.unwrap_or(alpha),
        args.gamma_o.unwrap_or(gamma_o),
    );
    observer.validate(mdp)?;
    let mode: DeceptionMode = args
        .mode
        .parse()
        .map_err(|e: DeceptionError| Failure::new("deception-cost", e.code(), e.to_string()))?;
    let spec = DeceptionSpec::new(mode, args.gamma_a.unwrap_or(gamma_a));
    spec.validate()?;
    Ok(Settings { preset, observer, spec })
}

fn settings_json(s: &Settings) -> Value {
    json!({
        "preset": s.preset.name(),
        "mode": s.spec.mode.name(),
        "alpha": fixed_json(s.observer.alpha),
        "gamma_o": fixed_json(s.observer.gamma_o),
        "gamma_a": fixed_json(s.spec.gamma_a),
        "cost": fixed_json(s.observer.cost.first().copied().unwrap_or(0.0)),
    })
}

fn obtain_policy(args: &RunArgs, mdp: &Mdp64) -> CliResult<Policy64> {
    if let Some(path) = &args.policy {
        let v: Value = serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::new("cli", "bad_policy_file", e.to_string()))?;
        let pi = v
            .get("pi")
            .and_then(Value::as_object)
            .ok_or_else(|| Failure::new("cli", "bad_policy_file", "missing \"pi\" object"))?;
        return Ok(StationaryPolicy::from_json_map(mdp, pi)?);
    }
    let s = settings(args, mdp, Preset::Study1Ddm)?;
    Ok(synthesize(mdp, &s.observer, &s.spec)?.0.policy)
}

fn cmd_synth(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, .. } = load_problem(args)?;
    let s = settings(args, &mdp, Preset::Study1Ddm)?;
    let (result, g) = synthesize(&mdp, &s.observer, &s.spec)?;
    let rmax = max_reach_probability(&mdp, mdp.true_goal())[mdp.initial_state()];
    let path = most_likely_trajectory(&mdp, &result.policy, args.max_steps);
    let t_min = min_steps(&mdp)[mdp.true_goal()].finite();
    write(&args.out, "policy.json", &pretty(&result.to_json(&mdp)))?;
    write(&args.out, "cost.csv", &g.to_csv(&mdp))?;
    let summary = json!({
        "command": "synth",
        "settings": settings_json(&s),
        "v_star": fixed_json(result.v_star),
        "reach_probability": fixed_json(result.reach_probability),
        "rmax": fixed_json(rmax),
        "total_occupancy": fixed_json(result.total_occupancy),
        "relaxed_pin": result.relaxed_pin,
        "t_min_true_goal": t_min,
        "most_likely_trajectory": path.to_json(&mdp),
    });
    write(&args.out, "summary.json", &pretty(&summary))?;
    Ok(summary)
}

fn cmd_simulate(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, .. } = load_problem(args)?;
    let policy = obtain_policy(args, &mdp)?;
    let mut trajectories = Vec::new();
    let mut hits = 0u64;
    for k in 0..args.rollouts {
        let t = simulate(&mdp, &policy, args.seed.wrapping_add(k), args.max_steps);
        hits += u64::from(t.last_state() == mdp.true_goal());
        trajectories.push(t.to_json(&mdp));
    }
    write(&args.out, "trajectories.json", &pretty(&Value::Array(trajectories)))?;
    Ok(json!({
        "command": "simulate",
        "rollouts": args.rollouts,
        "seed": args.seed,
        "reach_frequency": fixed_json(hits as f64 / args.rollouts.max(1) as f64),
        "exact_reach_probability": fixed_json(policy_reach_probability(&mdp, &policy, &[mdp.true_goal()])),
    }))
}

fn fit_observer(args: &RunArgs, mdp: &Mdp64) -> CliResult<(Settings, ObserverModel<f64>)> {
    let s = settings(args, mdp, Preset::Study1Ddm)?;
    let model = ObserverModel::fit_converged(mdp, s.observer.clone())?;
    Ok((s, model))
}

fn cmd_predict(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, .. } = load_problem(args)?;
    let (s, model) = fit_observer(args, &mdp)?;
    let s1 = mdp.initial_state();
    let mut csv = String::from("state");
    for &g in mdp.goals() {
        csv.push(',');
        csv.push_str(mdp.state_name(g));
    }
    csv.push('\n');
    for st in 0..mdp.n_states() {
        csv.push_str(mdp.state_name(st));
        let post = ddm_core::observer::predict_goals(&mdp, &model, s1, st)?;
        for p in &post.probabilities {
            csv.push(',');
            csv.push_str(&fmt_fixed(*p));
        }
        csv.push('\n');
    }
    write(&args.out, "posteriors.csv", &csv)?;
    Ok(json!({"command": "predict", "settings": settings_json(&s), "states": mdp.n_states()}))
}

fn cmd_eval(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, .. } = load_problem(args)?;
    if args.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Failure::new("cli", "bad_argument", "fractions must lie in (0, 1]"));
    }
    let (s, model) = fit_observer(args, &mdp)?;
    let runs: Vec<Vec<usize>> = match args.source {
        Source::Policy => {
            let policy = obtain_policy(args, &mdp)?;
            (0..args.rollouts)
                .map(|k| simulate(&mdp, &policy, args.seed.wrapping_add(k), args.max_steps).states)
                .collect()
        }
        Source::Shortest => vec![shortest_path_trajectory(&mdp)?.states],
        Source::Dpp => vec![dpp_trajectory(&mdp)?.states],
    };
    let reports: Vec<SegmentReport<f64>> = runs
        .iter()
        .map(|states| evaluate_segments(&mdp, &model, states, &args.fractions))
        .collect::<Result<_, _>>()?;
    let mut csv = String::new();
    for (k, r) in reports.iter().enumerate() {
        for (i, line) in r.to_csv(&mdp).lines().enumerate() {
            if i == 0 {
                if k == 0 {
                    csv.push_str("rollout,");
                    csv.push_str(line);
                    csv.push('\n');
                }
                continue;
            }
            csv.push_str(&format!("{k},{line}\n"));
        }
    }
    write(&args.out, "segments.csv", &csv)?;
    let summary = summarize(&mdp, &reports);
    write(&args.out, "segment_summary.csv", &summary.to_csv())?;
    Ok(json!({
        "command": "eval",
        "settings": settings_json(&s),
        "trajectories": reports.len(),
        "incorrect_rate": summary.incorrect_rate.iter().map(|&x| fixed_json(x)).collect::<Vec<_>>(),
        "fractions": summary.fractions,
    }))
}

fn cmd_product_synth(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, network } = load_problem(args)?;
    let network = network.ok_or_else(|| Failure::new("cli", "bad_argument", "product-synth needs --network"))?;
    let t_max = args.tmax.ok_or_else(|| Failure::new("cli", "bad_argument", "product-synth needs --tmax"))?;
    let s = settings(args, &mdp, Preset::NetworkDdm)?;
    let model = ObserverModel::fit_converged(&mdp, s.observer.clone())?;
    let g = build_cost(&mdp, &model, &s.spec, &min_steps(&mdp))?;
    let product = build_product(&mdp, &network.discretize(&mdp, t_max)?, t_max)?;
    log::info!("product MDP: {} states", product.mdp.n_states());
    let result = synthesize_time_constrained(&product, &g, args.threshold)?;
    let on_time = product.on_time_probability(&result.policy);
    let visits = product.base_visits(&result.occupancy, mdp.n_states());
    let route = product.project(&most_likely_trajectory(&product.mdp, &result.policy, args.max_steps));
    write(&args.out, "product_policy.json", &pretty(&result.to_json(&product.mdp)))?;
    let mut visit_map = serde_json::Map::new();
    for (s, v) in visits.iter().enumerate() {
        visit_map.insert(mdp.state_name(s).to_owned(), fixed_json(*v));
    }
    let summary = json!({
        "command": "product-synth",
        "settings": settings_json(&s),
        "t_max": t_max,
        "threshold": fixed_json(args.threshold),
        "product_states": product.mdp.n_states(),
        "v_star": fixed_json(result.v_star),
        "on_time_probability": fixed_json(on_time),
        "max_on_time_probability": fixed_json(product.max_on_time_probability()),
        "expected_visits": visit_map,
        "most_likely_route": route.to_json(&mdp),
    });
    write(&args.out, "summary.json", &pretty(&summary))?;
    Ok(summary)
}

fn cmd_baseline(args: &RunArgs) -> CliResult<Value> {
    let Problem { mdp, .. } = load_problem(args)?;
    let shortest = shortest_path_trajectory(&mdp)?;
    let dpp = dpp_trajectory(&mdp)?;
    write(&args.out, "shortest.json", &pretty(&shortest.to_json(&mdp)))?;
    write(&args.out, "dpp.json", &pretty(&dpp.to_json(&mdp)))?;
    let turnback = dpp_turnback_trajectory(&mdp)?;
    write(&args.out, "dpp_turnback.json", &pretty(&turnback.to_json(&mdp)))?;
    Ok(json!({
        "command": "baseline",
        "shortest_length": shortest.len(),
        "dpp_length": dpp.len(),
        "dpp_turnback_length": turnback.len(),
        "decoy": dpp.decoy_used.map(|g| mdp.state_name(g)),
    }))
}

fn run(cli: &Cli) -> CliResult<Value> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ProductSynth(a) => cmd_product_synth(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDM_LOG", "error")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{}", pretty(&summary));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::FAILURE
        }
    }
}
