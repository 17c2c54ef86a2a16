use std::fmt;
use std::str::FromStr;

use super::game::{path_cost_field, RoutingGame};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::lcp::{assemble_lcp, solve_lcp_lemke, solve_lcp_qp, AffineLcp, QpOptions};
use crate::vi::{extragradient_solve, natural_residual, ExtragradientOptions, VectorField, ViSolution};

/// Tolerance of the equilibrium certificate on path costs.
pub const WARDROP_TOL: f64 = 1e-5;
/// Flows above this count as used paths in the certificate.
pub const USED_FLOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    Extragradient,
    #[default]
    Lemke,
    Qp,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Extragradient => "extragradient",
            SolveMethod::Lemke => "lemke",
            SolveMethod::Qp => "qp",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extragradient" => Ok(SolveMethod::Extragradient),
            "lemke" => Ok(SolveMethod::Lemke),
            "qp" => Ok(SolveMethod::Qp),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected extragradient, lemke or qp)"
            ))),
        }
    }
}

/// Worst breach of the equilibrium conditions at `h`: the largest amount by
/// which a used path's cost exceeds its OD minimum, combined with the largest
/// demand or sign violation.
pub fn wardrop_violation(game: &RoutingGame, costs: &[f64], h: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in 0..game.ods.len() {
        let r = game.paths.od_range(w);
        let min_cost = r.clone().map(|p| costs[p]).fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for p in r {
            total += h[p];
            worst = worst.max(-h[p]);
            if h[p] > USED_FLOW {
                worst = worst.max(costs[p] - min_cost);
            }
        }
        worst = worst.max((total - game.ods[w].demand).abs());
    }
    worst
}

/// CVaR-based Wardrop equilibrium for path offsets `kappa`.
///
/// The returned flow solves `VI(H, G_kappa)`, and its equilibrium certificate
/// is checked at [`WARDROP_TOL`] before it is handed back.
///
/// Path flows are generally not unique: any two equilibria share edge flows
/// on congested edges, but paths whose incidence columns are linearly
/// dependent can trade flow. Every method therefore returns the
/// minimum-norm equilibrium (see [`min_norm_equilibrium`]), which makes the
/// result independent of the solver and of its starting point.
pub fn solve_cwe(game: &RoutingGame, kappa: &[f64], method: SolveMethod) -> Result<ViSolution> {
    match method {
        SolveMethod::Extragradient => solve_cwe_extragradient(game, kappa, &ExtragradientOptions::default()),
        SolveMethod::Lemke | SolveMethod::Qp => {
            let lcp = assemble_lcp(game, kappa)?;
            let raw = if method == SolveMethod::Lemke {
                solve_lcp_lemke(&lcp, 50 * lcp.dim() + 100)?
            } else {
                solve_lcp_qp(&lcp, &QpOptions::default())?
            };
            if !raw.feasible {
                return Err(Error::NotConverged(format!(
                    "{method} returned an infeasible point (gap {:e})",
                    raw.complementarity_gap
                )));
            }
            let h = clean_flow(game, raw.flows(game.paths.len()));
            finish(game, kappa, method, h, raw.work)
        }
    }
}

/// [`solve_cwe`] by extragradient with explicit options, e.g. a custom start.
pub fn solve_cwe_extragradient(game: &RoutingGame, kappa: &[f64], opts: &ExtragradientOptions) -> Result<ViSolution> {
    let field = path_cost_field(game, kappa)?;
    let set = game.feasible_set()?;
    let s = extragradient_solve(&set, &field, opts)?;
    if !s.converged {
        return Err(Error::NotConverged(format!(
            "extragradient residual {:e} after {} iterations",
            s.residual, s.iterations
        )));
    }
    finish(game, kappa, SolveMethod::Extragradient, s.x_star, s.iterations)
}

/// Selects the minimum-norm equilibrium and checks its certificate.
fn finish(game: &RoutingGame, kappa: &[f64], method: SolveMethod, h: Vec<f64>, iterations: usize) -> Result<ViSolution> {
    let field = path_cost_field(game, kappa)?;
    let set = game.feasible_set()?;
    let x_star = min_norm_equilibrium(game, &field.eval(&h), &h)?;
    let residual = natural_residual(&set, &field, &x_star)?;
    let costs = field.eval(&x_star);
    let breach = wardrop_violation(game, &costs, &x_star);
    if breach > WARDROP_TOL {
        return Err(Error::NotConverged(format!(
            "{method} flow violates the equilibrium conditions by {breach:e}"
        )));
    }
    Ok(ViSolution {
        x_star,
        residual,
        iterations,
        converged: true,
    })
}

/// Minimum-norm point of the equilibrium set that contains `h0`.
///
/// With `costs = G(h0)`, the set is every feasible `h` supported on the
/// cheapest paths of each OD with the same flow as `h0` on every edge of
/// positive slope. Writing `h = h0 + N z` with `N` an orthonormal basis of the
/// kernel of those equality constraints, the problem becomes the least
/// distance program `min |z + N^T h0|` subject to `h0 + N z >= 0`, solved via
/// its dual LCP with `M = N N^T`. That LCP is positive semidefinite and
/// feasible at `z = 0`, so Lemke's method always terminates with a solution.
pub fn min_norm_equilibrium(game: &RoutingGame, costs: &[f64], h0: &[f64]) -> Result<Vec<f64>> {
    let scale = 1.0 + costs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut active = Vec::new();
    for w in 0..game.ods.len() {
        let r = game.paths.od_range(w);
        let min_cost = r.clone().map(|p| costs[p]).fold(f64::INFINITY, f64::min);
        active.extend(r.filter(|&p| costs[p] <= min_cost + 1e-9 * scale));
    }
    let mut h = clean_flow(game, h0);
    for (p, v) in h.iter_mut().enumerate() {
        if active.binary_search(&p).is_err() {
            *v = 0.0;
        }
    }
    let h = clean_flow(game, &h);
    let n = active.len();

    // Equality rows: OD membership, then incidence on edges with positive slope.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for w in 0..game.ods.len() {
        let r = game.paths.od_range(w);
        rows.push(active.iter().map(|p| f64::from(r.contains(p))).collect());
    }
    let paths = game.paths.paths();
    for (e, edge) in game.network.edges.iter().enumerate() {
        if edge.slope() > 0.0 {
            let row: Vec<f64> = active.iter().map(|&p| f64::from(paths[p].edges.contains(&e))).collect();
            if row.iter().any(|&v| v != 0.0) {
                rows.push(row);
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let kernel: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * top.max(1.0)).collect();
    if kernel.is_empty() {
        return Ok(h);
    }
    let basis = DMatrix::from_fn(n, kernel.len(), |i, j| eig.eigenvectors[(i, kernel[j])]);

    let h_act = DVector::from_iterator(n, active.iter().map(|&p| h[p]));
    let proj = &basis * (basis.transpose() * &h_act);
    // Least distance program: min |y| s.t. N y >= g with g = N N^T h0 - h0.
    let g = &proj - &h_act;
    let lcp = AffineLcp::new(&basis * basis.transpose(), -g)?;
    let sol = solve_lcp_lemke(&lcp, 50 * n + 100)?;
    let mu = DVector::from_column_slice(&sol.x);
    let h_new = &h_act - &proj + &basis * (basis.transpose() * mu);

    let mut out = vec![0.0; h.len()];
    for (k, &p) in active.iter().enumerate() {
        out[p] = h_new[k];
    }
    Ok(clean_flow(game, &out))
}

/// Clips pivoting round-off so the flow lies in the feasible set.
fn clean_flow(game: &RoutingGame, h: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
    for w in 0..game.ods.len() {
        let r = game.paths.od_range(w);
        let total: f64 = out[r.clone()].iter().sum();
        if total > 0.0 {
            let scale = game.ods[w].demand / total;
            out[r].iter_mut().for_each(|v| *v *= scale);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::RiskLevel;
    use crate::routing::game::EdgeUncertainty;
    use crate::routing::network::{Edge, Network};
    use crate::routing::paths::{OdPair, PathSet};

    /// Two parallel single-edge paths with costs `1 + h1` and `1 + 2 h2`.
    fn toy() -> RoutingGame {
        let e = |b| Edge { tail: 1, head: 2, free_flow_time: 1.0, capacity: 1.0, congestion_coeff: b };
        let net = Network::new(2, vec![e(1.0), e(2.0)]).unwrap();
        let ods = vec![OdPair { origin: 1, destination: 2, demand: 1.0 }];
        let paths = PathSet::from_edge_lists(&net, &ods, vec![vec![vec![0], vec![1]]]).unwrap();
        RoutingGame::new(net, ods, paths, vec![EdgeUncertainty::Deterministic; 2], RiskLevel::new(0.05).unwrap())
            .unwrap()
    }

    #[test]
    fn toy_equilibrium_all_methods() {
        let g = toy();
        for m in [SolveMethod::Extragradient, SolveMethod::Lemke, SolveMethod::Qp] {
            let s = solve_cwe(&g, &[0.0, 0.0], m).unwrap();
            assert!((s.x_star[0] - 2.0 / 3.0).abs() < 1e-8, "{m}: {:?}", s.x_star);
            assert!((s.x_star[1] - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dominated_path_gets_no_flow() {
        let g = toy();
        for m in [SolveMethod::Extragradient, SolveMethod::Lemke, SolveMethod::Qp] {
            let s = solve_cwe(&g, &[0.0, 10.0], m).unwrap();
            assert!((s.x_star[0] - 1.0).abs() < 1e-12 && s.x_star[1].abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [SolveMethod::Extragradient, SolveMethod::Lemke, SolveMethod::Qp] {
            assert_eq!(m.to_string().parse::<SolveMethod>().unwrap(), m);
        }
        assert!("simplex".parse::<SolveMethod>().is_err());
    }

    #[test]
    fn violation_detects_unused_cheaper_path() {
        let g = toy();
        assert_eq!(wardrop_violation(&g, &[1.0, 2.0], &[1.0, 0.0]), 0.0);
        assert_eq!(wardrop_violation(&g, &[1.0, 2.0], &[0.5, 0.5]), 1.0);
    }
}
