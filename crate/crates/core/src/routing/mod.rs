//! Stochastic traffic routing: networks, paths, CVaR path costs and
//! equilibrium solves.

pub mod game;
pub mod network;
pub mod paths;
pub mod sampling;
pub mod solve;

pub use game::{path_cost_field, uncertainty_near_nodes, EdgeUncertainty, GameConfig, OdConfig, ReferenceConfig, RoutingGame};
pub use network::{parse_tntp, Edge, Network};
pub use paths::{k_shortest_paths, OdPair, Path, PathSet};
pub use sampling::{draw_path_sums, sample_path_kappa, sample_path_kappa_with, true_path_kappa};
pub use solve::{min_norm_equilibrium, solve_cwe, solve_cwe_extragradient, wardrop_violation, SolveMethod, WARDROP_TOL};
