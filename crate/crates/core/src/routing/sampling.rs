//! Edge-noise sampling and empirical path CVaRs.
//!
//! Costs are affine in flow with additive noise, so a path's CVaR splits into
//! its deterministic part plus `kappa_p = CVaR[sum_{e in p} u_e]`. Noise is
//! drawn once per batch and reused for every flow.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use rand::Rng;

use super::game::{EdgeUncertainty, RoutingGame};
use crate::cvar::{empirical_cvar, SampleBatch};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::stream;

/// Draws per RNG substream. Batches are cut into chunks of this size, chunk
/// `c` seeded from `(seed, c)`, so results do not depend on thread count.
const CHUNK: usize = 1 << 16;

/// Default size of the reference batch for the true path CVaRs.
pub const REFERENCE_SAMPLES: usize = 1_000_000;
/// Default seed of the reference batch.
pub const REFERENCE_SEED: u64 = 42;

/// Per-path noise sums `(Q^T u)^j` for `j < n`, laid out path-major.
pub fn draw_path_sums(game: &RoutingGame, n: usize, seed: u64, exec: Execution) -> Vec<Vec<f64>> {
    let random = game.random_edges();
    let p = game.paths.len();
    // Position of each path edge in the per-draw noise vector.
    let slots: Vec<Vec<usize>> = game
        .paths
        .paths()
        .iter()
        .map(|path| {
            path.edges
                .iter()
                .filter_map(|e| random.iter().position(|r| r == e))
                .collect()
        })
        .collect();
    let ranges: Vec<(f64, f64)> = random
        .iter()
        .map(|&e| match game.uncertainty[e] {
            EdgeUncertainty::Uniform { lo, hi } => (lo, hi - lo),
            EdgeUncertainty::Deterministic => (0.0, 0.0),
        })
        .collect();

    let n_chunks = n.div_ceil(CHUNK);
    let chunks = map_indexed(n_chunks, exec, |c| {
        let len = CHUNK.min(n - c * CHUNK);
        let mut rng = stream(seed, &[c as u64]);
        let mut u = vec![0.0; random.len()];
        let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(len); p];
        for _ in 0..len {
            for (slot, &(lo, width)) in u.iter_mut().zip(&ranges) {
                *slot = lo + width * rng.random::<f64>();
            }
            for (sums, path_slots) in out.iter_mut().zip(&slots) {
                sums.push(path_slots.iter().map(|&s| u[s]).sum());
            }
        }
        out
    });
    let mut sums = vec![Vec::with_capacity(n); p];
    for chunk in chunks {
        for (dst, src) in sums.iter_mut().zip(chunk) {
            dst.extend(src);
        }
    }
    sums
}

/// Empirical CVaR of every path's noise sum over `n` fresh draws.
pub fn sample_path_kappa(game: &RoutingGame, n: usize, seed: u64) -> Result<Vec<f64>> {
    sample_path_kappa_with(game, n, seed, Execution::Sequential)
}

pub fn sample_path_kappa_with(game: &RoutingGame, n: usize, seed: u64, exec: Execution) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let sums = draw_path_sums(game, n, seed, exec);
    let per_path = map_indexed(sums.len(), exec, |p| {
        let batch = SampleBatch::new(sums[p].clone(), seed, "path noise sum")?;
        Ok(empirical_cvar(&batch, game.alpha)?.value)
    });
    per_path.into_iter().collect()
}

/// Reference path CVaRs from a single large fixed-seed batch. When
/// `cache_dir` is given the vector is stored there, keyed by a fingerprint of
/// the game and the batch parameters, and reused on later calls.
pub fn true_path_kappa(
    game: &RoutingGame,
    n_ref: usize,
    seed_ref: u64,
    cache_dir: Option<&FsPath>,
    exec: Execution,
) -> Result<Vec<f64>> {
    if n_ref < 100_000 {
        return Err(Error::InvalidArgument(format!(
            "reference batch needs at least 100000 samples, got {n_ref}"
        )));
    }
    let key = fingerprint(game, n_ref, seed_ref);
    let file = cache_dir.map(|d| cache_file(d, key));
    if let Some(f) = &file {
        if let Some(k) = read_cache(f, key, game.paths.len()) {
            return Ok(k);
        }
    }
    let kappa = sample_path_kappa_with(game, n_ref, seed_ref, exec)?;
    if let Some(f) = &file {
        write_cache(f, key, n_ref, seed_ref, game, &kappa)?;
    }
    Ok(kappa)
}

fn cache_file(dir: &FsPath, key: u64) -> PathBuf {
    dir.join(format!("kappa_ref_{key:016x}.txt"))
}

fn fingerprint(game: &RoutingGame, n_ref: usize, seed_ref: u64) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(n_ref as u64);
    eat(seed_ref);
    eat(game.alpha.value().to_bits());
    for u in &game.uncertainty {
        eat(u.lower().to_bits());
        eat(u.upper().to_bits());
    }
    for path in game.paths.paths() {
        eat(path.edges.len() as u64);
        for &e in &path.edges {
            eat(e as u64);
        }
    }
    h
}

fn read_cache(file: &FsPath, key: u64, n_paths: usize) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(file).ok()?;
    let mut lines = text.lines();
    let header = lines.next()?;
    if header != format!("# kappa_ref fingerprint {key:016x}") {
        return None;
    }
    let values: Vec<f64> = lines
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().parse().ok())
        .collect::<Option<_>>()?;
    (values.len() == n_paths).then_some(values)
}

fn write_cache(file: &FsPath, key: u64, n_ref: usize, seed_ref: u64, game: &RoutingGame, kappa: &[f64]) -> Result<()> {
    if let Some(dir) = file.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    let _ = writeln!(out, "# kappa_ref fingerprint {key:016x}");
    let _ = writeln!(out, "# samples {n_ref} seed {seed_ref} alpha {} paths {}", game.alpha, kappa.len());
    for k in kappa {
        let _ = writeln!(out, "{k:?}");
    }
    std::fs::write(file, out)?;
    Ok(())
}
