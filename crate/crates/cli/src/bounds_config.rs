//! Key-value schema of `cvarvi bounds --config`.
//!
//! ```toml
//! formula = "general"      # general | separable | routing
//! n = 1                    # decision dimension
//! alpha = 0.5
//! lipschitz = 1.0          # M
//! diam = 1.0               # diameter of the feasible set
//! ell = 0.0                # cost range lower end
//! upper = 1.0              # cost range upper end
//! epsilon = 0.1
//! delta = 0.1              # delta(epsilon)
//! zeta = 0.05              # optional: report N(zeta, epsilon)
//! sigma = 2.0              # optional, separable
//! f_max = 1.0              # optional, separable
//! g_rge = 1.0              # optional, separable
//! paths_per_od = [10, 10]  # routing
//! demands = [300.0, 600.0] # routing
//! game = "siouxfalls.toml" # optional: routing constants from a game
//! ```

use std::path::{Path, PathBuf};

use cvarvi::bounds::{BoundInputs, RoutingShape};
use cvarvi::RiskLevel;
use serde::Deserialize;

use crate::{BoundsArgs, Failure};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub formula: Option<String>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub lipschitz: Option<f64>,
    pub diam: Option<f64>,
    pub ell: Option<f64>,
    pub upper: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub zeta: Option<f64>,
    pub sigma: Option<f64>,
    pub f_max: Option<f64>,
    pub g_rge: Option<f64>,
    pub paths_per_od: Option<Vec<usize>>,
    pub demands: Option<Vec<f64>>,
    pub game: Option<PathBuf>,
}

impl BoundsFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut file: BoundsFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(g) = &file.game {
            if g.is_relative() {
                file.game = Some(path.parent().unwrap_or(Path::new(".")).join(g));
            }
        }
        Ok(file)
    }

    pub fn apply_flags(&mut self, a: &BoundsArgs) {
        macro_rules! take {
            ($($f:ident => $g:ident),*) => { $( if a.$g.is_some() { self.$f = a.$g.clone(); } )* };
        }
        take!(formula => formula, n => n, alpha => alpha, lipschitz => lipschitz, diam => diam,
              ell => ell, upper => upper, epsilon => epsilon, delta => delta, zeta => zeta,
              sigma => sigma, f_max => f_max, g_rge => g_rge, paths_per_od => paths_per_od,
              demands => demands, game => game);
    }

    pub fn require_epsilon(&self) -> Result<f64, Failure> {
        self.epsilon.ok_or_else(|| Failure::Usage("epsilon is required".into()))
    }

    pub fn to_inputs(&self) -> Result<BoundInputs, Failure> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::Usage(format!("{name} is required")));
        let alpha = RiskLevel::new(need(self.alpha, "alpha")?).map_err(|e| Failure::Usage(e.to_string()))?;
        let routing = match (&self.paths_per_od, &self.demands) {
            (Some(p), Some(d)) if p.len() == d.len() => Some(RoutingShape {
                paths_per_od: p.clone(),
                demands: d.clone(),
            }),
            (Some(_), Some(_)) => {
                return Err(Failure::Usage("paths_per_od and demands differ in length".into()));
            }
            (Some(p), None) => Some(RoutingShape {
                paths_per_od: p.clone(),
                demands: vec![1.0; p.len()],
            }),
            _ => None,
        };
        let n = self
            .n
            .or_else(|| routing.as_ref().map(RoutingShape::total_paths))
            .ok_or_else(|| Failure::Usage("n is required".into()))?;
        Ok(BoundInputs {
            n,
            alpha,
            m_lip: self.lipschitz.unwrap_or(1.0),
            diam_x: self.diam.unwrap_or(1.0),
            ell: self.ell.unwrap_or(0.0),
            big_l: self.upper.unwrap_or(1.0),
            epsilon: self.require_epsilon()?,
            delta_eps: self.delta,
            sigma: self.sigma,
            f_max: self.f_max,
            g_rge: self.g_rge,
            routing,
        })
    }
}
