use std::fmt::Write as _;

use crate::bounds::{exponential_bound_routing, BoundInputs, BoundReport};
use crate::error::{Error, Result};
use crate::routing::RoutingGame;

/// Empirical accuracy frequency next to the theoretical lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundComparison {
    pub n: usize,
    pub replications: usize,
    /// Share of runs with distance at most epsilon.
    pub empirical: f64,
    pub std_error: f64,
    /// `1 - gamma exp(-beta N)`, clipped at zero.
    pub theoretical: f64,
    /// `empirical >= theoretical - 3 std_error`.
    pub consistent: bool,
}

/// Share of `distances` at most `epsilon`, with its binomial standard error.
pub fn empirical_frequency(distances: &[f64], epsilon: f64) -> (f64, f64) {
    let r = distances.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = distances.iter().filter(|&&d| d <= epsilon).count() as f64 / r as f64;
    (p, (p * (1.0 - p) / r as f64).sqrt())
}

/// Compares per-N success frequencies against `report`'s bound.
pub fn compare_frequencies(by_n: &[(usize, Vec<f64>)], epsilon: f64, report: &BoundReport) -> Vec<BoundComparison> {
    by_n.iter()
        .map(|(n, d)| {
            let (empirical, std_error) = empirical_frequency(d, epsilon);
            let theoretical = report.success_probability(*n);
            BoundComparison {
                n: *n,
                replications: d.len(),
                empirical,
                std_error,
                theoretical,
                consistent: empirical >= theoretical - 3.0 * std_error,
            }
        })
        .collect()
}

/// Routing-bound comparison for experiment distances grouped by `N`.
pub fn compare_bounds(
    game: &RoutingGame,
    by_n: &[(usize, Vec<f64>)],
    epsilon: f64,
    delta_eps: f64,
) -> Result<(BoundReport, Vec<BoundComparison>)> {
    if by_n.is_empty() {
        return Err(Error::InvalidArgument("no experiment results to compare".into()));
    }
    let inputs = BoundInputs::from_game(game, epsilon, Some(delta_eps))?;
    let report = exponential_bound_routing(&inputs)?;
    let rows = compare_frequencies(by_n, epsilon, &report);
    Ok((report, rows))
}

pub fn comparison_csv(rows: &[BoundComparison]) -> String {
    let mut out = String::from("n,replications,empirical,std_error,theoretical,consistent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{}",
            r.n, r.replications, r.empirical, r.std_error, r.theoretical, r.consistent
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{FormulaId, LogMagnitude};

    fn report(ln_gamma: f64, beta: f64) -> BoundReport {
        BoundReport {
            formula: FormulaId::Separable,
            gamma: LogMagnitude::from_ln(ln_gamma),
            beta,
            n_samples: None,
        }
    }

    #[test]
    fn huge_epsilon_gives_frequency_one() {
        let (p, se) = empirical_frequency(&[0.1, 0.4, 3.0], 1e9);
        assert_eq!((p, se), (1.0, 0.0));
    }

    #[test]
    fn vacuous_bound_is_clipped_and_dominated() {
        let rows = compare_frequencies(&[(10, vec![5.0, 6.0])], 1.0, &report(50.0, 1e-3));
        assert_eq!(rows[0].theoretical, 0.0);
        assert_eq!(rows[0].empirical, 0.0);
        assert!(rows[0].consistent);
    }

    #[test]
    fn tight_bound_flags_inconsistency() {
        let rows = compare_frequencies(&[(10_000, vec![5.0; 100])], 1.0, &report(0.0, 1.0));
        assert_eq!(rows[0].theoretical, 1.0);
        assert!(!rows[0].consistent);
    }
}
