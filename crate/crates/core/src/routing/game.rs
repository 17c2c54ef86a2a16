use std::path::{Path as FsPath, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::network::{parse_tntp, Network};
use super::paths::{OdPair, PathSet};
use crate::cvar::RiskLevel;
use crate::error::{Error, Result};
use crate::vi::{AffineField, FeasibleSet, SimplexBlock};

/// Additive noise on an edge's travel time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeUncertainty {
    Deterministic,
    /// `u_e ~ U[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl EdgeUncertainty {
    pub fn is_random(&self) -> bool {
        matches!(self, EdgeUncertainty::Uniform { lo, hi } if hi > lo)
    }

    pub fn upper(&self) -> f64 {
        match *self {
            EdgeUncertainty::Deterministic => 0.0,
            EdgeUncertainty::Uniform { hi, .. } => hi,
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            EdgeUncertainty::Deterministic => 0.0,
            EdgeUncertainty::Uniform { lo, .. } => lo,
        }
    }
}

/// `U[0, fraction * t_e]` on every edge with an endpoint in `nodes`,
/// deterministic elsewhere.
pub fn uncertainty_near_nodes(net: &Network, nodes: &[usize], fraction: f64) -> Vec<EdgeUncertainty> {
    net.edges
        .iter()
        .map(|e| {
            if fraction > 0.0 && nodes.iter().any(|&v| e.touches(v)) {
                EdgeUncertainty::Uniform {
                    lo: 0.0,
                    hi: fraction * e.free_flow_time,
                }
            } else {
                EdgeUncertainty::Deterministic
            }
        })
        .collect()
}

/// Routing game with affine edge costs, additive independent edge noise and
/// CVaR path costs. Immutable once built.
#[derive(Debug, Clone)]
pub struct RoutingGame {
    pub network: Network,
    pub ods: Vec<OdPair>,
    pub paths: PathSet,
    pub uncertainty: Vec<EdgeUncertainty>,
    pub alpha: RiskLevel,
    path_matrix: DMatrix<f64>,
    free_flow: DVector<f64>,
    base_field: AffineField,
}

impl RoutingGame {
    pub fn new(
        network: Network,
        ods: Vec<OdPair>,
        paths: PathSet,
        uncertainty: Vec<EdgeUncertainty>,
        alpha: RiskLevel,
    ) -> Result<Self> {
        if uncertainty.len() != network.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: network.edges.len(),
                got: uncertainty.len(),
            });
        }
        for u in &uncertainty {
            if let EdgeUncertainty::Uniform { lo, hi } = *u {
                if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(Error::InvalidArgument(format!("edge noise range [{lo}, {hi}]")));
                }
            }
        }
        if paths.n_ods() != ods.len() {
            return Err(Error::DimensionMismatch {
                expected: ods.len(),
                got: paths.n_ods(),
            });
        }
        for od in &ods {
            if !(od.demand >= 0.0 && od.demand.is_finite()) {
                return Err(Error::InvalidArgument(format!("demand {} must be finite and >= 0", od.demand)));
            }
        }
        let q = paths.edge_incidence();
        let slopes = DVector::from_iterator(network.edges.len(), network.edges.iter().map(|e| e.slope()));
        let rq = DMatrix::from_fn(q.nrows(), q.ncols(), |e, p| slopes[e] * q[(e, p)]);
        let path_matrix = q.transpose() * rq;
        let t = DVector::from_iterator(network.edges.len(), network.edges.iter().map(|e| e.free_flow_time));
        let free_flow = q.transpose() * t;
        let base_field = AffineField::new(path_matrix.clone(), free_flow.clone())?;
        Ok(RoutingGame {
            network,
            ods,
            paths,
            uncertainty,
            alpha,
            path_matrix,
            free_flow,
            base_field,
        })
    }

    /// Loads the network, enumerates paths and assigns edge noise per `cfg`.
    pub fn from_config(cfg: &GameConfig) -> Result<Self> {
        let file = std::fs::File::open(&cfg.network).map_err(|e| {
            Error::Config(format!("cannot open network {}: {e}", cfg.network.display()))
        })?;
        let network = parse_tntp(std::io::BufReader::new(file))?.with_congestion(cfg.congestion_coeff)?;
        let ods: Vec<OdPair> = cfg
            .od
            .iter()
            .map(|o| OdPair {
                origin: o.origin,
                destination: o.destination,
                demand: o.demand,
            })
            .collect();
        let paths = PathSet::enumerate(&network, &ods, cfg.paths_per_od)?;
        let uncertainty = uncertainty_near_nodes(&network, &cfg.uncertain_nodes, cfg.noise_fraction);
        RoutingGame::new(network, ods, paths, uncertainty, RiskLevel::new(cfg.alpha)?)
    }

    /// `Q^T R Q` with `R = diag(b_e t_e / c_e)`.
    pub fn path_cost_matrix(&self) -> &DMatrix<f64> {
        &self.path_matrix
    }

    /// `Q^T t`.
    pub fn free_flow_path_costs(&self) -> DVector<f64> {
        self.free_flow.clone()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.ods.iter().map(|o| o.demand).collect()
    }

    /// The feasible flow polytope as a product of scaled simplices.
    pub fn feasible_set(&self) -> Result<FeasibleSet> {
        FeasibleSet::simplex_product(
            (0..self.ods.len())
                .map(|w| SimplexBlock {
                    dim: self.paths.od_range(w).len(),
                    demand: self.ods[w].demand,
                })
                .collect(),
        )
    }

    /// Indices of edges carrying random noise.
    pub fn random_edges(&self) -> Vec<usize> {
        (0..self.uncertainty.len())
            .filter(|&e| self.uncertainty[e].is_random())
            .collect()
    }

    /// Range `[lo, hi]` containing every realised path cost over the feasible
    /// flows, and a Lipschitz constant of path costs in `h` (Euclidean norm).
    pub fn cost_range_and_lipschitz(&self) -> (f64, f64, f64) {
        let p = self.paths.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut lip: f64 = 0.0;
        for i in 0..p {
            let path = &self.paths.paths()[i];
            let noise_lo: f64 = path.edges.iter().map(|&e| self.uncertainty[e].lower()).sum();
            let noise_hi: f64 = path.edges.iter().map(|&e| self.uncertainty[e].upper()).sum();
            let congestion: f64 = (0..self.ods.len())
                .map(|w| {
                    let r = self.paths.od_range(w);
                    let worst = r.map(|j| self.path_matrix[(i, j)]).fold(0.0, f64::max);
                    worst * self.ods[w].demand
                })
                .sum();
            lo = lo.min(self.free_flow[i] + noise_lo);
            hi = hi.max(self.free_flow[i] + noise_hi + congestion);
            lip = lip.max(self.path_matrix.row(i).norm());
        }
        (lo, hi, lip)
    }

    pub(crate) fn base_field(&self) -> &AffineField {
        &self.base_field
    }
}

/// Affine path-cost map `h -> Q^T R Q h + Q^T t + kappa`.
pub fn path_cost_field(game: &RoutingGame, kappa: &[f64]) -> Result<AffineField> {
    if kappa.len() != game.paths.len() {
        return Err(Error::DimensionMismatch {
            expected: game.paths.len(),
            got: kappa.len(),
        });
    }
    game.base_field()
        .with_offset(&game.free_flow + DVector::from_column_slice(kappa))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdConfig {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "default_ref_samples")]
    pub samples: usize,
    #[serde(default = "default_ref_seed")]
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            samples: default_ref_samples(),
            seed: default_ref_seed(),
        }
    }
}

fn default_ref_samples() -> usize {
    1_000_000
}
fn default_ref_seed() -> u64 {
    42
}
fn default_alpha() -> f64 {
    0.05
}
fn default_k() -> usize {
    10
}
fn default_b() -> f64 {
    100.0
}
fn default_fraction() -> f64 {
    0.5
}

/// Game section of a TOML config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// TNTP network file; relative paths resolve against the config file.
    pub network: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub paths_per_od: usize,
    #[serde(default = "default_b")]
    pub congestion_coeff: f64,
    #[serde(default)]
    pub uncertain_nodes: Vec<usize>,
    #[serde(default = "default_fraction")]
    pub noise_fraction: f64,
    pub od: Vec<OdConfig>,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

impl GameConfig {
    pub fn resolve_paths(&mut self, base: &FsPath) {
        if self.network.is_relative() {
            self.network = base.join(&self.network);
        }
    }
}
