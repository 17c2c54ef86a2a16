use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cvarvi::bounds::{exponential_bound, BoundInputs, FormulaId};
use cvarvi::harness::{self, ExperimentConfig};
use cvarvi::routing::{path_cost_field, sample_path_kappa, solve_cwe, RoutingGame, SolveMethod};
use cvarvi::vi::VectorField;
use cvarvi::{cvar_discrete, empirical_cvar, empirical_cvar_lp, DiscreteDistribution, Execution, RiskLevel, SampleBatch};

mod bounds_config;

use bounds_config::BoundsFile;

/// CVaR estimation, CVaR-based traffic equilibria and their sample-size bounds.
#[derive(Parser)]
#[command(name = "cvarvi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical CVaR of a CSV sample file (header `value`, one draw per line).
    Estimate {
        /// Tail probability in (0, 1).
        #[arg(long)]
        alpha: f64,
        /// Estimator to use.
        #[arg(long, value_enum, default_value_t = Estimator::Order)]
        method: Estimator,
        /// Sample file; `-` reads standard input.
        samples: PathBuf,
    },
    /// Solve one equilibrium and print path flows and CVaR path costs as CSV.
    Solve {
        /// Experiment or game config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Solver; defaults to the config's method.
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Use an empirical CVaR from this many fresh draws instead of the
        /// reference batch.
        #[arg(long)]
        samples: Option<usize>,
        /// Seed of the fresh draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a uniform exponential bound and the sample size it implies.
    Bounds(Box<BoundsArgs>),
    /// Run the Monte Carlo study and write CSV results.
    Experiment {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; 1 runs sequentially, 0 uses all cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (overrides the config and $CVARVI_OUTPUT_DIR).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the number of replications per sample size.
        #[arg(long)]
        replications: Option<usize>,
        /// Also write per-replication wall times to timings.csv.
        #[arg(long)]
        timings: bool,
    },
    /// Compare experiment results with the routing bound.
    Compare {
        /// Experiment config (TOML) the results came from.
        #[arg(long)]
        config: PathBuf,
        /// Accuracy radius on the equilibrium flows.
        #[arg(long)]
        epsilon: f64,
        /// Accuracy of the path costs that guarantees `epsilon`.
        #[arg(long)]
        delta: f64,
        /// results.csv to read; defaults to the config's output directory.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    /// Order-statistic closed form.
    Order,
    /// Direct minimization of the scalar program over the sample atoms.
    Scalar,
    /// Linear-program form with a duality certificate.
    Lp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Extragradient,
    Lemke,
    Qp,
}

impl From<Method> for SolveMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Extragradient => SolveMethod::Extragradient,
            Method::Lemke => SolveMethod::Lemke,
            Method::Qp => SolveMethod::Qp,
        }
    }
}

#[derive(clap::Args)]
struct BoundsArgs {
    /// Bound to evaluate: general, separable or routing.
    #[arg(long)]
    formula: Option<String>,
    /// Bounds config (TOML); flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Take n, the cost range, Lipschitz constant and OD shape from this
    /// experiment config.
    #[arg(long)]
    game: Option<PathBuf>,
    /// Decision dimension.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Lipschitz constant M of the cost in the decision.
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Diameter of the feasible set.
    #[arg(long)]
    diam: Option<f64>,
    /// Lower end of the cost range.
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<f64>,
    /// Upper end of the cost range.
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<f64>,
    /// Target accuracy of the solution set.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Map accuracy delta(epsilon) guaranteeing `epsilon`.
    #[arg(long)]
    delta: Option<f64>,
    /// Strong monotonicity modulus (separable bound only).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    f_max: Option<f64>,
    #[arg(long)]
    g_rge: Option<f64>,
    /// Paths per OD pair, comma separated.
    #[arg(long, value_delimiter = ',')]
    paths_per_od: Option<Vec<usize>>,
    /// Demand per OD pair, comma separated.
    #[arg(long, value_delimiter = ',')]
    demands: Option<Vec<f64>>,
    /// Failure probability for the sample-size planner.
    #[arg(long)]
    zeta: Option<f64>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<cvarvi::Error> for Failure {
    fn from(e: cvarvi::Error) -> Self {
        match e {
            cvarvi::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `cvarvi --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Estimate { alpha, method, samples } => estimate(alpha, method, &samples),
        Command::Solve {
            config,
            method,
            samples,
            seed,
        } => solve(&config, method, samples, seed),
        Command::Bounds(args) => bounds(*args),
        Command::Experiment {
            config,
            jobs,
            output_dir,
            replications,
            timings,
        } => experiment(&config, jobs, output_dir, replications, timings),
        Command::Compare {
            config,
            epsilon,
            delta,
            results,
        } => compare(&config, epsilon, delta, results),
    }
}

fn risk_level(alpha: f64) -> Result<RiskLevel, Failure> {
    RiskLevel::new(alpha).map_err(|e| Failure::Usage(e.to_string()))
}

fn estimate(alpha: f64, method: Estimator, samples: &Path) -> Result<(), Failure> {
    let alpha = risk_level(alpha)?;
    let tag = samples.display().to_string();
    let batch = if samples == Path::new("-") {
        SampleBatch::read_csv(io::stdin().lock(), 0, &tag)?
    } else {
        let file = File::open(samples).map_err(|e| Failure::Runtime(format!("cannot open {tag}: {e}")))?;
        SampleBatch::read_csv(BufReader::new(file), 0, &tag)?
    };
    let est = match method {
        Estimator::Order => empirical_cvar(&batch, alpha)?,
        Estimator::Scalar => cvar_discrete(&DiscreteDistribution::uniform_over(&batch), alpha)?,
        Estimator::Lp => empirical_cvar_lp(&batch, alpha)?,
    };
    eprintln!("{} samples, alpha = {alpha}", batch.len());
    println!("cvar,t_star");
    println!("{:?},{:?}", est.value, est.t_star);
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn solve(config: &Path, method: Option<Method>, samples: Option<usize>, seed: u64) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let method = method.map_or(cfg.method, SolveMethod::from);
    let game = RoutingGame::from_config(&cfg.game)?;
    let kappa = match samples {
        Some(n) => sample_path_kappa(&game, n, seed)?,
        None => harness::reference_solution(&game, &cfg, Execution::Parallel)?.kappa,
    };
    let sol = solve_cwe(&game, &kappa, method)?;
    let costs = path_cost_field(&game, &kappa)?.eval(&sol.x_star);
    eprintln!(
        "{method}: {} paths, residual {:e}, {} iterations",
        game.paths.len(),
        sol.residual,
        sol.iterations
    );
    let mut out = io::stdout().lock();
    writeln!(out, "path,origin,destination,flow,cvar_cost")?;
    for (p, path) in game.paths.paths().iter().enumerate() {
        let od = &game.ods[path.od];
        writeln!(
            out,
            "{p},{},{},{:?},{:?}",
            od.origin, od.destination, sol.x_star[p], costs[p]
        )?;
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<(), Failure> {
    let mut file = match &args.config {
        Some(p) => BoundsFile::load(p).map_err(Failure::Usage)?,
        None => BoundsFile::default(),
    };
    file.apply_flags(&args);
    let formula: FormulaId = file
        .formula
        .as_deref()
        .ok_or_else(|| Failure::Usage("--formula is required".into()))?
        .parse()
        .map_err(|e: cvarvi::Error| Failure::Usage(e.to_string()))?;
    let inputs = match &file.game {
        Some(path) => {
            let cfg = load_config(path)?;
            let game = RoutingGame::from_config(&cfg.game)?;
            let epsilon = file.require_epsilon()?;
            let mut inputs = BoundInputs::from_game(&game, epsilon, file.delta)?;
            inputs.sigma = file.sigma;
            inputs.f_max = file.f_max;
            inputs.g_rge = file.g_rge;
            inputs
        }
        None => file.to_inputs()?,
    };
    let mut report = exponential_bound(&inputs, formula)?;
    if let Some(zeta) = file.zeta {
        report = report.with_confidence(zeta)?;
    }
    eprintln!(
        "{formula} bound: P(accurate) >= 1 - gamma exp(-beta N), gamma = {}",
        report.gamma
    );
    println!("formula,gamma,ln_gamma,beta,n_samples");
    println!(
        "{formula},{:?},{:?},{:?},{}",
        report.gamma.value(),
        report.gamma.ln(),
        report.beta,
        report.n_samples.map(|n| n.to_string()).unwrap_or_default()
    );
    Ok(())
}

fn experiment(
    config: &Path,
    jobs: Option<usize>,
    output_dir: Option<PathBuf>,
    replications: Option<usize>,
    timings: bool,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    cfg.record_timings |= timings;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let game = RoutingGame::from_config(&cfg.game)?;
    let outcome = harness::run_experiment(&cfg, Execution::from_jobs(jobs))?;
    let files = harness::write_outputs(&cfg, &game, &outcome)?;
    for &n in &cfg.sample_sizes {
        let d = outcome.distances(n);
        eprintln!(
            "N = {n}: {} ok, median distance {:.6}",
            d.len(),
            harness::quantile(&d, 0.5)
        );
    }
    eprintln!("{} failed of {} replications", outcome.failures(), outcome.rows.len());
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    outcome.check_failures()?;
    Ok(())
}

fn compare(config: &Path, epsilon: f64, delta: f64, results: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let path = results.unwrap_or_else(|| cfg.output_dir.join("results.csv"));
    let rows = harness::read_results(&path)?;
    let game = RoutingGame::from_config(&cfg.game)?;
    let by_n: Vec<(usize, Vec<f64>)> = cfg
        .sample_sizes
        .iter()
        .map(|&n| {
            let d = rows.iter().filter(|r| r.0 == n && r.1).map(|r| r.2).collect();
            (n, d)
        })
        .filter(|(_, d): &(usize, Vec<f64>)| !d.is_empty())
        .collect();
    let (report, table) = harness::compare_bounds(&game, &by_n, epsilon, delta)?;
    eprintln!(
        "routing bound: ln gamma = {:.4}, beta = {:e}",
        report.gamma.ln(),
        report.beta
    );
    print!("{}", harness::comparison_csv(&table));
    if let Some(bad) = table.iter().find(|r| !r.consistent) {
        return Err(Failure::Runtime(format!(
            "empirical frequency {:.4} at N = {} falls below the bound {:.4} by more than 3 standard errors",
            bad.empirical, bad.n, bad.theoretical
        )));
    }
    Ok(())
}
