use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::substream_seed;
use crate::routing::{sample_path_kappa, solve_cwe, true_path_kappa, RoutingGame, SolveMethod};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub n: usize,
    pub replication: usize,
    pub status: ReplicationStatus,
    /// `|h^N - h*|`; NaN when the solve failed.
    pub distance: f64,
    pub residual: f64,
    pub wall_time: Duration,
}

impl ReplicationResult {
    pub fn is_ok(&self) -> bool {
        self.status == ReplicationStatus::Ok
    }
}

/// The reference equilibrium every replication is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub kappa: Vec<f64>,
    pub h_star: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reference: Reference,
    /// Sorted by `(n, replication)`.
    pub rows: Vec<ReplicationResult>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures() as f64 / self.rows.len().max(1) as f64
    }

    /// Sorted distances of the successful replications at sample size `n`.
    pub fn distances(&self, n: usize) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n == n && r.is_ok())
            .map(|r| r.distance)
            .collect();
        d.sort_by(f64::total_cmp);
        d
    }

    /// Error when more than [`MAX_FAILURE_RATE`] of the replications failed.
    pub fn check_failures(&self) -> Result<()> {
        if self.failure_rate() > MAX_FAILURE_RATE {
            let first = self.rows.iter().find_map(|r| match &r.status {
                ReplicationStatus::Failed(m) => Some(m.as_str()),
                ReplicationStatus::Ok => None,
            });
            return Err(Error::NotConverged(format!(
                "{} of {} replications failed (first: {})",
                self.failures(),
                self.rows.len(),
                first.unwrap_or("")
            )));
        }
        Ok(())
    }
}

/// Reference path CVaRs and the equilibrium they induce.
pub fn reference_solution(
    game: &RoutingGame,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<Reference> {
    let r = &cfg.game.reference;
    let kappa = true_path_kappa(game, r.samples, r.seed, cfg.cache_dir.as_deref(), exec)?;
    let h_star = solve_cwe(game, &kappa, cfg.method)?.x_star;
    Ok(Reference { kappa, h_star })
}

/// One replication: fresh noise from substream `(master, n, r)`, empirical
/// path CVaRs, equilibrium, distance to `h_star`.
pub fn run_replication(
    game: &RoutingGame,
    h_star: &[f64],
    method: SolveMethod,
    master_seed: u64,
    n: usize,
    replication: usize,
) -> ReplicationResult {
    let start = Instant::now();
    let seed = substream_seed(master_seed, &[n as u64, replication as u64]);
    let solved = sample_path_kappa(game, n, seed).and_then(|k| solve_cwe(game, &k, method));
    let (status, distance, residual) = match solved {
        Ok(sol) => (ReplicationStatus::Ok, euclidean(&sol.x_star, h_star), sol.residual),
        Err(e) => (ReplicationStatus::Failed(e.to_string()), f64::NAN, f64::NAN),
    };
    ReplicationResult {
        n,
        replication,
        status,
        distance,
        residual,
        wall_time: start.elapsed(),
    }
}

/// Runs every `(N, replication)` pair of the protocol. Replication failures
/// are recorded, not raised; see [`ExperimentOutcome::check_failures`].
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let game = RoutingGame::from_config(&cfg.game)?;
    let reference = reference_solution(&game, cfg, exec)?;
    let reps = cfg.replications;
    let jobs: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let rows = map_indexed(jobs.len(), exec, |i| {
        let (n, r) = jobs[i];
        run_replication(&game, &reference.h_star, cfg.method, cfg.master_seed, n, r)
    });
    Ok(ExperimentOutcome { reference, rows })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Empirical `q`-quantile of sorted data: the `ceil(q R)`-th smallest value.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn results_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("n,replication,status,distance,residual\n");
    for r in &outcome.rows {
        let status = if r.is_ok() { "ok" } else { "failed" };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            r.replication,
            status,
            fmt_value(r.distance),
            fmt_value(r.residual)
        );
    }
    out
}

/// Sorted distances with empirical CDF values `k/R` over successful runs.
pub fn cdf_csv(sorted: &[f64]) -> String {
    let mut out = String::from("distance,cdf\n");
    let r = sorted.len();
    for (k, d) in sorted.iter().enumerate() {
        let _ = writeln!(out, "{d:?},{:?}", (k + 1) as f64 / r as f64);
    }
    out
}

pub fn summary_csv(outcome: &ExperimentOutcome, sample_sizes: &[usize]) -> String {
    let mut out = String::from("n,replications,failures,p10,median,p90,mean\n");
    for &n in sample_sizes {
        let d = outcome.distances(n);
        let total = outcome.rows.iter().filter(|r| r.n == n).count();
        let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
        let _ = writeln!(
            out,
            "{n},{total},{},{},{},{},{}",
            total - d.len(),
            fmt_value(quantile(&d, 0.1)),
            fmt_value(quantile(&d, 0.5)),
            fmt_value(quantile(&d, 0.9)),
            fmt_value(mean)
        );
    }
    out
}

pub fn reference_csv(game: &RoutingGame, reference: &Reference) -> String {
    let mut out = String::from("path,origin,destination,kappa,h_star\n");
    for (p, path) in game.paths.paths().iter().enumerate() {
        let od = &game.ods[path.od];
        let _ = writeln!(
            out,
            "{p},{},{},{:?},{:?}",
            od.origin, od.destination, reference.kappa[p], reference.h_star[p]
        );
    }
    out
}

fn timings_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("n,replication,wall_time_s\n");
    for r in &outcome.rows {
        let _ = writeln!(out, "{},{},{}", r.n, r.replication, r.wall_time.as_secs_f64());
    }
    out
}

/// Writes `results.csv`, `cdf_<N>.csv`, `summary.csv`, `reference.csv` and,
/// when enabled, `timings.csv`. Returns the files written.
pub fn write_outputs(cfg: &ExperimentConfig, game: &RoutingGame, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut files = vec![
        ("results.csv".to_string(), results_csv(outcome)),
        ("summary.csv".to_string(), summary_csv(outcome, &cfg.sample_sizes)),
        ("reference.csv".to_string(), reference_csv(game, &outcome.reference)),
    ];
    for &n in &cfg.sample_sizes {
        files.push((format!("cdf_{n}.csv"), cdf_csv(&outcome.distances(n))));
    }
    if cfg.record_timings {
        files.push(("timings.csv".to_string(), timings_csv(outcome)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads the `(n, status, distance)` columns of a `results.csv`.
pub fn read_results(path: &Path) -> Result<Vec<(usize, bool, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "n,replication,status,distance,residual" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header n,replication,status,distance,residual".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse { line: i + 1, message: m.into() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let n = f[0].parse().map_err(|_| bad("bad n"))?;
        let ok = f[2] == "ok";
        let d = if ok { f[3].parse().map_err(|_| bad("bad distance"))? } else { f64::NAN };
        out.push((n, ok, d));
    }
    Ok(out)
}
