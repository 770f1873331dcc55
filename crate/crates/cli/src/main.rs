//! `vsc`: consistency analysis of record replication in a road segment.
//!
//! Subcommands: `steady` and `transient` sweep the analytic solvers into
//! CSV grids, `simulate` cross-checks the analytic curve against the
//! stochastic simulator, `validate` runs the model self-checks for one
//! scenario. Exit codes: 0 success, 1 check/solver failure, 2 usage or
//! configuration error.

mod output;
mod ranges;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use output::{emit, write_comparison_csv, write_consistency_csv, RunManifest};
use ranges::{apply_override, parse_counts, time_grid};
use vsc_core::{
    build_rate_matrix, epidemic_rate, estimate_vs_analytic,
    final_value_check, initial_distribution, steady_state, steady_state_from,
    steady_state_power_iteration, sweep_steady, sweep_transient, transient_distribution,
    truncated_poisson_weights, validate_generator, InitialOccupancy, Scenario, StateSpace,
    DEFAULT_TRUNCATION_TOL,
};

#[derive(Parser)]
#[command(
    name = "vsc",
    version,
    about = "Consistency analysis of record replication across vehicles in a road segment"
)]
struct Cli {
    /// Worker threads for sweeps and simulations (default: $VSC_JOBS, then
    /// all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary consistency over an (n, target) grid
    Steady(SteadyArgs),
    /// Consistency over time for one or more targets
    Transient(TransientArgs),
    /// Monte Carlo estimate against the analytic curve
    Simulate(SimulateArgs),
    /// Model self-checks for one scenario
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON)
    #[arg(long)]
    scenario: PathBuf,

    /// Override a scenario field, e.g. --set n_vehicles=20 or
    /// --set options.initial_j=stationary (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SteadyArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Populations to sweep: `lo:hi[:step]`, comma list, or single value
    /// (default: the scenario's n_vehicles)
    #[arg(long)]
    n: Option<String>,

    /// Targets to sweep (default: 1 to the scenario's n_vehicles)
    #[arg(long)]
    targets: Option<String>,
}

#[derive(Args)]
struct TransientArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Populations to sweep (default: the scenario's n_vehicles)
    #[arg(long)]
    n: Option<String>,

    /// Targets to sweep (default: 1 to the scenario's n_vehicles)
    #[arg(long)]
    targets: Option<String>,

    /// End of the time grid in seconds
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,

    /// Time grid step in seconds
    #[arg(long, default_value_t = 0.1)]
    step: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Consistency target
    #[arg(long)]
    target: u32,

    /// End of the time grid in seconds
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,

    /// Time grid step in seconds
    #[arg(long, default_value_t = 1.0)]
    step: f64,

    /// Number of simulation runs
    #[arg(long, default_value_t = 10_000)]
    runs: u64,

    /// Seed for the run streams
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Runs for the reduced stochastic cross-check
    #[arg(long, default_value_t = 2_000)]
    runs: u64,

    /// Seed for the stochastic cross-check
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Also cross-check the stationary solve against power iteration
    #[arg(long)]
    power_iteration: bool,

    /// Dump the generator as `row col rate` triples to this path
    #[arg(long, value_name = "PATH")]
    dump_generator: Option<PathBuf>,
}

enum AppError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Solver or check failure: exit 1.
    Runtime(String),
}

fn classify(e: vsc_core::Error) -> AppError {
    fn is_usage(e: &vsc_core::Error) -> bool {
        use vsc_core::Error::*;
        match e {
            Config { .. } | Io { .. } | Parse(..) => true,
            SweepCell { source, .. } => is_usage(source),
            _ => false,
        }
    }
    if is_usage(&e) {
        AppError::Usage(e.to_string())
    } else {
        AppError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.or_else(|| {
        std::env::var("VSC_JOBS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(jobs) = jobs {
        // ignore failure: the pool may already be initialized in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, AppError> {
    match command {
        Command::Steady(args) => cmd_steady(args),
        Command::Transient(args) => cmd_transient(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn load_scenario(common: &CommonArgs) -> Result<Scenario, AppError> {
    let path = &common.scenario;
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))?;
    for assignment in &common.set {
        apply_override(&mut doc, assignment).map_err(AppError::Usage)?;
    }
    let scenario = Scenario::from_json_value(doc).map_err(classify)?;
    for warning in scenario.warnings() {
        eprintln!("[WARN] {warning}");
    }
    Ok(scenario)
}

fn counts_arg(spec: &Option<String>, default: &str, what: &str) -> Result<(String, Vec<u32>), AppError> {
    let spec = spec.clone().unwrap_or_else(|| default.to_string());
    let values = parse_counts(&spec)
        .map_err(|e| AppError::Usage(format!("--{what}: {e}")))?;
    if values.iter().any(|&v| v < 1) {
        return Err(AppError::Usage(format!("--{what}: values must be ≥ 1")));
    }
    Ok((spec, values))
}

fn grid_args(horizon: f64, step: f64) -> Result<Vec<f64>, AppError> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(AppError::Usage("--horizon must be nonnegative".into()));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(AppError::Usage("--step must be positive".into()));
    }
    if horizon > 0.0 && step > horizon {
        return Err(AppError::Usage("--step must not exceed --horizon".into()));
    }
    Ok(time_grid(horizon, step))
}

fn out_label(out: &Option<PathBuf>) -> String {
    out.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "stdout".to_string())
}

fn cmd_steady(args: SteadyArgs) -> Result<ExitCode, AppError> {
    let scenario = load_scenario(&args.common)?;
    let n_default = scenario.params.max_vehicles().to_string();
    let (n_spec, n_range) = counts_arg(&args.n, &n_default, "n")?;
    let t_default = format!("1:{}", scenario.params.max_vehicles());
    let (t_spec, t_range) = counts_arg(&args.targets, &t_default, "targets")?;

    let started = Instant::now();
    let table = sweep_steady(&scenario.params, &scenario.options, &n_range, &t_range)
        .map_err(classify)?;
    let manifest = RunManifest {
        command: "steady".into(),
        scenario: args.common.scenario.display().to_string(),
        args: vec![format!("--n {n_spec}"), format!("--targets {t_spec}")],
        overrides: args.common.set.clone(),
        out: out_label(&args.common.out),
        elapsed_ms: started.elapsed().as_millis(),
    };
    emit(args.common.out.as_deref(), |w| {
        write_consistency_csv(w, &manifest, &table)
    })
    .map_err(|e| AppError::Runtime(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_transient(args: TransientArgs) -> Result<ExitCode, AppError> {
    let scenario = load_scenario(&args.common)?;
    let n_default = scenario.params.max_vehicles().to_string();
    let (n_spec, n_range) = counts_arg(&args.n, &n_default, "n")?;
    let t_default = format!("1:{}", scenario.params.max_vehicles());
    let (t_spec, t_range) = counts_arg(&args.targets, &t_default, "targets")?;
    let times = grid_args(args.horizon, args.step)?;

    let started = Instant::now();
    let table = sweep_transient(
        &scenario.params,
        &scenario.options,
        &n_range,
        &t_range,
        &times,
    )
    .map_err(classify)?;
    let manifest = RunManifest {
        command: "transient".into(),
        scenario: args.common.scenario.display().to_string(),
        args: vec![
            format!("--n {n_spec}"),
            format!("--targets {t_spec}"),
            format!("--horizon {}", args.horizon),
            format!("--step {}", args.step),
        ],
        overrides: args.common.set.clone(),
        out: out_label(&args.common.out),
        elapsed_ms: started.elapsed().as_millis(),
    };
    emit(args.common.out.as_deref(), |w| {
        write_consistency_csv(w, &manifest, &table)
    })
    .map_err(|e| AppError::Runtime(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, AppError> {
    let scenario = load_scenario(&args.common)?;
    if args.target < 1 {
        return Err(AppError::Usage("--target must be ≥ 1".into()));
    }
    let times = grid_args(args.horizon, args.step)?;

    let started = Instant::now();
    let report = estimate_vs_analytic(
        &scenario.params,
        &scenario.options,
        args.target,
        &times,
        args.runs,
        args.seed,
    )
    .map_err(classify)?;
    if report.flagged > 0 {
        eprintln!(
            "[WARN] {} grid cells deviate by more than 4 standard errors",
            report.flagged
        );
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        scenario: args.common.scenario.display().to_string(),
        args: vec![
            format!("--target {}", args.target),
            format!("--horizon {}", args.horizon),
            format!("--step {}", args.step),
            format!("--runs {}", args.runs),
            format!("--seed {}", args.seed),
        ],
        overrides: args.common.set.clone(),
        out: out_label(&args.common.out),
        elapsed_ms: started.elapsed().as_millis(),
    };
    let name = scenario.params.name().to_string();
    let n = scenario.params.max_vehicles();
    emit(args.common.out.as_deref(), |w| {
        write_comparison_csv(w, &manifest, &name, n, &report)
    })
    .map_err(|e| AppError::Runtime(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

struct Reporter {
    failures: usize,
}

impl Reporter {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {detail}");
        if !pass {
            self.failures += 1;
        }
    }

    fn skip(&mut self, name: &str, reason: &str) {
        println!("[SKIP] {name}: {reason}");
    }

    fn info(&mut self, name: &str, detail: String) {
        println!("[INFO] {name}: {detail}");
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, AppError> {
    let scenario = load_scenario(&args.common)?;
    let params = &scenario.params;
    let options = &scenario.options;
    let n = params.max_vehicles();

    let space = StateSpace::enumerate(n).map_err(classify)?;
    let m = build_rate_matrix(params, options, &space).map_err(classify)?;
    let x0 = initial_distribution(&space, params, options).map_err(classify)?;
    let mut r = Reporter { failures: 0 };

    if let Some(path) = &args.dump_generator {
        let mut file = std::io::BufWriter::new(
            std::fs::File::create(path)
                .map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))?,
        );
        m.write_triples(&mut file)
            .map_err(|e| AppError::Runtime(e.to_string()))?;
        r.info("generator dump", path.display().to_string());
    }

    // generator structure
    let residual = m.max_row_sum_residual();
    let residual_limit = 1e-12 * m.inf_norm();
    r.check(
        "generator row sums",
        residual <= residual_limit,
        format!("max residual {residual:.3e} (limit {residual_limit:.3e})"),
    );
    let negatives = m.negative_off_diagonals();
    r.check(
        "generator rate signs",
        negatives == 0,
        format!("{negatives} negative off-diagonal entries"),
    );

    // delivery outflow identity: Σ_{k≥1} rate = (1 - pmf(0)) / D
    let mut worst_outflow = 0.0f64;
    for &(i, j) in space.states() {
        if i == 0 && !options.source_always_transmits {
            continue;
        }
        let gap = j - i;
        let total: f64 = (1..=gap).map(|k| epidemic_rate(i, j, k, params)).sum();
        let n_lo = (params.n_ave().floor() as u32).min(gap);
        let n_hi = (params.n_ave().ceil() as u32).min(gap);
        let pmf0 = params.p1() * params.p_fail().powi(n_lo as i32)
            + (1.0 - params.p1()) * params.p_fail().powi(n_hi as i32);
        let expect = (1.0 - pmf0) / params.refresh_period_s();
        worst_outflow = worst_outflow.max((total - expect).abs());
    }
    r.check(
        "delivery outflow identity",
        worst_outflow < 1e-12,
        format!("max deviation {worst_outflow:.3e}"),
    );

    // reachability and class structure from the configured start
    let j0 = match options.initial_j {
        InitialOccupancy::Fixed(j) => j,
        InitialOccupancy::Stationary => n,
    };
    let start = space
        .index_of(options.initial_i.min(j0), j0)
        .expect("start state in range");
    let diag = validate_generator(&m, &space, start);
    if diag.unreachable_states.is_empty() {
        r.info("reachability", format!("all {} states reachable", space.len()));
    } else {
        let (si, sj) = space.state_at(start);
        println!(
            "[WARN] reachability: {} of {} states unreachable from ({si},{sj})",
            diag.unreachable_states.len(),
            space.len()
        );
    }
    r.info(
        "recurrent classes",
        format!(
            "{}{}",
            diag.recurrent_class_count,
            if diag.unique_recurrent_class { "" } else { " (stationary distribution not unique)" }
        ),
    );

    // transient normalization
    let sol = transient_distribution(&m, &x0, &[1.0, 5.0, 30.0], DEFAULT_TRUNCATION_TOL)
        .map_err(classify)?;
    let worst_mass = sol
        .distributions
        .iter()
        .map(|d| (d.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    r.check(
        "transient normalization",
        worst_mass < DEFAULT_TRUNCATION_TOL + 1e-9,
        format!("max |Σ - 1| = {worst_mass:.3e}"),
    );

    // stationary distribution and its occupancy marginal
    let steady = match steady_state(&m) {
        Ok(s) => Ok(s),
        Err(vsc_core::Error::NonUniqueStationary { .. }) => steady_state_from(&m, start),
        Err(e) => Err(e),
    }
    .map_err(classify)?;
    let mut marginal = vec![0.0f64; n as usize + 1];
    for (idx, &(_, j)) in space.states().iter().enumerate() {
        marginal[j as usize] += steady.distribution.probabilities()[idx];
    }
    let weights = truncated_poisson_weights(n);
    let worst_marginal = marginal
        .iter()
        .zip(&weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.check(
        "occupancy marginal is truncated Poisson",
        worst_marginal < 1e-10,
        format!("max deviation {worst_marginal:.3e}"),
    );

    // long-horizon agreement between the transient and stationary solvers
    if !options.source_always_transmits && options.initial_i >= 1 {
        r.skip(
            "long-horizon limit",
            "record extinction from this start is exponentially slow; \
             a finite-horizon comparison is not meaningful",
        );
    } else {
        let horizon = (20.0 / params.departure_rate()).max(60.0);
        let gap = final_value_check(&m, &x0, horizon).map_err(classify)?;
        r.check(
            "long-horizon limit",
            gap < 1e-6,
            format!("‖X({horizon:.0}s) - π‖∞ = {gap:.3e}"),
        );
    }

    // reduced stochastic cross-check
    let t_target = 3.min(n).max(1);
    let times = time_grid(24.0, 3.0);
    let report = estimate_vs_analytic(params, options, t_target, &times, args.runs, args.seed)
        .map_err(classify)?;
    r.check(
        "stochastic cross-check",
        report.flagged == 0,
        format!(
            "t_target={t_target}, {} runs, max |p̂ - p| = {:.4}, {} cells beyond 4σ",
            args.runs, report.max_abs_gap, report.flagged
        ),
    );

    if args.power_iteration {
        let power = steady_state_power_iteration(&m, 1e-13, 5_000_000).map_err(classify)?;
        let worst = power
            .probabilities()
            .iter()
            .zip(steady.distribution.probabilities())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.check(
            "power-iteration agreement",
            worst < 1e-8,
            format!("max deviation {worst:.3e}"),
        );
    }

    if r.failures == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} check(s) failed", r.failures);
        Ok(ExitCode::from(1))
    }
}
