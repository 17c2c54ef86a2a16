//! Explicit constants of the exponential convergence bounds: covering
//! numbers, `gamma`/`beta` pairs, sample-size planners and set deviations.
//!
//! Every bound has the form `P(accurate) >= 1 - gamma * exp(-beta * N)`.
//! `gamma` grows combinatorially, so it is carried in log-space and exact
//! counts use big integers.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::cvar::RiskLevel;
use crate::error::{Error, Result};
use crate::routing::RoutingGame;

/// A positive quantity stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogMagnitude {
    ln: f64,
}

impl LogMagnitude {
    pub fn from_ln(ln: f64) -> Self {
        LogMagnitude { ln }
    }

    pub fn from_value(v: f64) -> Self {
        LogMagnitude { ln: v.ln() }
    }

    pub fn from_biguint(v: &BigUint) -> Self {
        LogMagnitude { ln: ln_biguint(v) }
    }

    pub fn ln(&self) -> f64 {
        self.ln
    }

    /// The value itself, or `f64::INFINITY` when it does not fit a double.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    /// Smallest integer at least the value, saturating at `u64::MAX`.
    pub fn ceil_count(&self) -> u64 {
        let v = self.value().ceil();
        if v >= u64::MAX as f64 {
            u64::MAX
        } else {
            v as u64
        }
    }
}

impl fmt::Display for LogMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.value();
        if v.is_finite() {
            write!(f, "{v}")
        } else {
            write!(f, "exp({})", self.ln)
        }
    }
}

fn ln_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.to_f64().map_or(f64::INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let top = (v >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * LN_2
}

/// `ln(ceil(n/2)!) - ln(2 pi^{n/2})`: the log of `1/vol(B)` with the unit
/// ball volume replaced by its lower bound `2 pi^{n/2} / ceil(n/2)!`.
fn ln_inv_ball_volume(n: usize) -> f64 {
    let k = n.div_ceil(2);
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    ln_fact - (2.0_f64.ln() + 0.5 * n as f64 * PI.ln())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Probability bound `6 exp(-alpha eps^2 N / (11 (L - ell)^2))` on a single
/// empirical CVaR missing its target by more than `eps`, clipped to `[0, 1]`.
pub fn pointwise_deviation_bound(ell: f64, big_l: f64, alpha: RiskLevel, epsilon: f64, n: usize) -> Result<f64> {
    if !(big_l > ell) {
        return Err(Error::InvalidArgument(format!(
            "support [{ell}, {big_l}] is degenerate"
        )));
    }
    check_positive("epsilon", epsilon)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let range = big_l - ell;
    let raw = 6.0 * (-alpha.value() * epsilon * epsilon * n as f64 / (11.0 * range * range)).exp();
    Ok(raw.min(1.0))
}

/// Volume-ratio bound `(3/eps)^n vol(X)/vol(B)` for a convex set.
pub fn covering_number_convex(n: usize, vol_x: f64, vol_b: f64, epsilon: f64) -> Result<LogMagnitude> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    check_positive("vol_x", vol_x)?;
    check_positive("vol_b", vol_b)?;
    check_positive("epsilon", epsilon)?;
    Ok(LogMagnitude::from_ln(
        n as f64 * (3.0 / epsilon).ln() + vol_x.ln() - vol_b.ln(),
    ))
}

/// `(3 diam/eps)^n ceil(n/2)! / (2 pi^{n/2})` for a compact set, `eps <= diam/2`.
pub fn covering_number_compact(n: usize, diam_x: f64, epsilon: f64) -> Result<LogMagnitude> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    check_positive("diam_x", diam_x)?;
    check_positive("epsilon", epsilon)?;
    if epsilon > diam_x / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} exceeds diam/2 = {}",
            diam_x / 2.0
        )));
    }
    Ok(LogMagnitude::from_ln(
        n as f64 * (3.0 * diam_x / epsilon).ln() + ln_inv_ball_volume(n),
    ))
}

/// Exact binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut r = BigUint::one();
    for i in 1..=k {
        r *= n - k + i;
        r /= i;
    }
    r
}

/// Lattice resolution `K = ceil(sqrt(n) d / eps)` of the simplex cover.
pub fn simplex_resolution(n: usize, d: f64, epsilon: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    check_positive("d", d)?;
    check_positive("epsilon", epsilon)?;
    let k = ((n as f64).sqrt() * d / epsilon).ceil();
    if k > 1e15 {
        return Err(Error::InvalidArgument(format!("lattice resolution {k} is too large")));
    }
    Ok((k as u64).max(1))
}

/// Covering-number bound `C(n + K - 1, K - 1)` for the simplex
/// `{x >= 0 : sum x = d}` in `R^n`, with `K = ceil(sqrt(n) d / eps)`.
///
/// This is the published count. The lattice it is derived from actually has
/// [`simplex_lattice_size`] points, which agrees only when `n == K`.
pub fn covering_number_simplex(n: usize, d: f64, epsilon: f64) -> Result<BigUint> {
    let k = simplex_resolution(n, d, epsilon)?;
    Ok(binomial(n as u64 + k - 1, k - 1))
}

/// Number of points `C(n + K - 1, n - 1)` of [`simplex_lattice`].
pub fn simplex_lattice_size(n: usize, k: u64) -> BigUint {
    binomial(n as u64 + k - 1, n as u64 - 1)
}

/// Resolution `K_w = ceil(|W| sqrt(|P_w|) d_w / eps)` of each OD block.
pub fn flow_resolutions(ods: &[(usize, f64)], epsilon: f64) -> Result<Vec<u64>> {
    if ods.is_empty() {
        return Err(Error::InvalidArgument("at least one OD pair is required".into()));
    }
    let w = ods.len() as f64;
    ods.iter()
        .map(|&(paths, demand)| simplex_resolution(paths, demand, epsilon / w))
        .collect()
}

/// Product over OD pairs of the simplex cover sizes at radius `eps/|W|`.
/// `ods` lists `(|P_w|, d_w)`.
pub fn covering_number_flow_polytope(ods: &[(usize, f64)], epsilon: f64) -> Result<BigUint> {
    let ks = flow_resolutions(ods, epsilon)?;
    Ok(ods
        .iter()
        .zip(ks)
        .map(|(&(paths, _), k)| binomial(paths as u64 + k - 1, k - 1))
        .product())
}

/// All points `d (i_1, ..., i_n)/K` with nonnegative integers summing to `K`,
/// in lexicographic order of the index vectors.
pub fn simplex_lattice(n: usize, d: f64, k: u64) -> Vec<Vec<f64>> {
    fn fill(pos: usize, left: u64, idx: &mut Vec<u64>, d: f64, k: u64, out: &mut Vec<Vec<f64>>) {
        let n = idx.len();
        if pos + 1 == n {
            idx[pos] = left;
            out.push(idx.iter().map(|&i| d * i as f64 / k as f64).collect());
            return;
        }
        for i in 0..=left {
            idx[pos] = i;
            fill(pos + 1, left - i, idx, d, k, out);
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        fill(0, k, &mut vec![0; n], d, k, &mut out);
    }
    out
}

/// Lattice point assigned to `x` by the covering argument: round every
/// coordinate down to the grid `d/K`, then raise the `delta` coordinates with
/// the largest remainders by one step, where `delta` is the number of steps
/// needed to restore the sum. The result lies between the rounded-down and
/// rounded-up vectors, hence within `sqrt(n) d/K` of `x`.
pub fn simplex_cover_point(x: &[f64], d: f64, k: u64) -> Vec<f64> {
    let step = d / k as f64;
    let mut idx: Vec<u64> = x
        .iter()
        .map(|&v| ((v / step).floor().max(0.0) as u64).min(k))
        .collect();
    let used: u64 = idx.iter().sum();
    let delta = k.saturating_sub(used) as usize;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let rem = |j: usize| x[j] - idx[j] as f64 * step;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &j in order.iter().take(delta) {
        idx[j] += 1;
    }
    idx.iter().map(|&i| i as f64 * step).collect()
}

/// Cover point of a flow vector built block by block from the per-OD
/// lattices. `ods` lists `(|P_w|, d_w)` in path order.
pub fn flow_cover_point(h: &[f64], ods: &[(usize, f64)], epsilon: f64) -> Result<Vec<f64>> {
    let ks = flow_resolutions(ods, epsilon)?;
    let total: usize = ods.iter().map(|o| o.0).sum();
    if h.len() != total {
        return Err(Error::DimensionMismatch { expected: total, got: h.len() });
    }
    let mut out = Vec::with_capacity(total);
    let mut start = 0;
    for (&(paths, demand), k) in ods.iter().zip(ks) {
        out.extend(simplex_cover_point(&h[start..start + paths], demand, k));
        start += paths;
    }
    Ok(out)
}

/// Which uniform bound a report comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaId {
    General,
    Separable,
    Routing,
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormulaId::General => "general",
            FormulaId::Separable => "separable",
            FormulaId::Routing => "routing",
        })
    }
}

impl FromStr for FormulaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(FormulaId::General),
            "separable" => Ok(FormulaId::Separable),
            "routing" => Ok(FormulaId::Routing),
            other => Err(Error::InvalidArgument(format!(
                "unknown formula {other:?} (expected general, separable or routing)"
            ))),
        }
    }
}

/// Path counts and demands per OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingShape {
    pub paths_per_od: Vec<usize>,
    pub demands: Vec<f64>,
}

impl RoutingShape {
    pub fn total_paths(&self) -> usize {
        self.paths_per_od.iter().sum()
    }

    pub fn ods(&self) -> Vec<(usize, f64)> {
        self.paths_per_od.iter().copied().zip(self.demands.iter().copied()).collect()
    }
}

/// Problem constants shared by the bound calculators.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Decision dimension.
    pub n: usize,
    pub alpha: RiskLevel,
    /// Lipschitz constant of the cost in the decision.
    pub m_lip: f64,
    pub diam_x: f64,
    /// Cost range `[ell, big_l]`.
    pub ell: f64,
    pub big_l: f64,
    /// Target accuracy of the solution set.
    pub epsilon: f64,
    /// Accuracy of the map that guarantees `epsilon` on the solutions. Only
    /// the strongly monotone separable case can derive it (as `sigma * eps`).
    pub delta_eps: Option<f64>,
    pub sigma: Option<f64>,
    pub f_max: Option<f64>,
    pub g_rge: Option<f64>,
    pub routing: Option<RoutingShape>,
}

impl BoundInputs {
    /// Constants of a routing game: `n = |P|`, the cost range and the
    /// Lipschitz constant of the path costs, and the diameter of `H`.
    pub fn from_game(game: &RoutingGame, epsilon: f64, delta_eps: Option<f64>) -> Result<Self> {
        let (ell, big_l, m_lip) = game.cost_range_and_lipschitz();
        let demands = game.demands();
        let diam_x = (2.0 * demands.iter().map(|d| d * d).sum::<f64>()).sqrt();
        Ok(BoundInputs {
            n: game.paths.len(),
            alpha: game.alpha,
            m_lip,
            diam_x,
            ell,
            big_l,
            epsilon,
            delta_eps,
            sigma: None,
            f_max: None,
            g_rge: None,
            routing: Some(RoutingShape {
                paths_per_od: game.paths.paths_per_od(),
                demands,
            }),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        check_positive("epsilon", self.epsilon)?;
        if !(self.big_l > self.ell) {
            return Err(Error::InvalidArgument(format!(
                "cost range [{}, {}] is degenerate",
                self.ell, self.big_l
            )));
        }
        Ok(())
    }

    fn delta(&self) -> Result<f64> {
        let d = self
            .delta_eps
            .ok_or_else(|| Error::InvalidArgument("delta(epsilon) is required for this bound".into()))?;
        check_positive("delta_eps", d)?;
        Ok(d)
    }

    fn range_sq(&self) -> f64 {
        (self.big_l - self.ell).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub formula: FormulaId,
    pub gamma: LogMagnitude,
    pub beta: f64,
    /// `ceil(ln(gamma/zeta)/beta)` once a confidence level is attached.
    pub n_samples: Option<u64>,
}

impl BoundReport {
    /// Lower bound `1 - gamma exp(-beta N)` on the success probability,
    /// clipped at zero.
    pub fn success_probability(&self, n: usize) -> f64 {
        let ln_fail = self.gamma.ln() - self.beta * n as f64;
        (1.0 - ln_fail.exp()).max(0.0)
    }

    pub fn with_confidence(mut self, zeta: f64) -> Result<Self> {
        self.n_samples = Some(sample_size(self.gamma, self.beta, zeta)?);
        Ok(self)
    }
}

/// Uniform bound for a general `n`-dimensional problem, with `gamma` and
/// `beta` evaluated at `delta(eps)`:
/// `gamma = 6n (12 M diam/(delta alpha))^n ceil(n/2)!/(2 pi^{n/2})`,
/// `beta = alpha delta^2 / (44 n (L - ell)^2)`.
pub fn exponential_bound_general(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    check_positive("m_lip", inputs.m_lip)?;
    check_positive("diam_x", inputs.diam_x)?;
    let delta = inputs.delta()?;
    if delta >= inputs.diam_x / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "delta(epsilon) = {delta} must be below diam/2 = {}",
            inputs.diam_x / 2.0
        )));
    }
    let n = inputs.n as f64;
    let a = inputs.alpha.value();
    let ln_gamma = (6.0 * n).ln()
        + n * (12.0 * inputs.m_lip * inputs.diam_x / (delta * a)).ln()
        + ln_inv_ball_volume(inputs.n);
    Ok(BoundReport {
        formula: FormulaId::General,
        gamma: LogMagnitude::from_ln(ln_gamma),
        beta: a * delta * delta / (44.0 * n * inputs.range_sq()),
        n_samples: None,
    })
}

/// Uniform bound for separable costs `f(x) g(u) + h(x)`:
/// `gamma = 6n`, `beta = alpha delta^2 / (11 n (f_max g_rge)^2)`.
pub fn exponential_bound_separable(inputs: &BoundInputs) -> Result<BoundReport> {
    if inputs.n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    check_positive("epsilon", inputs.epsilon)?;
    let f_max = inputs
        .f_max
        .ok_or_else(|| Error::InvalidArgument("f_max is required for the separable bound".into()))?;
    let g_rge = inputs
        .g_rge
        .ok_or_else(|| Error::InvalidArgument("g_rge is required for the separable bound".into()))?;
    check_positive("f_max * g_rge", f_max * g_rge)?;
    let delta = match (inputs.delta_eps, inputs.sigma) {
        (Some(d), _) => d,
        (None, Some(sigma)) => delta_strongly_monotone_inverse(sigma, inputs.epsilon)?,
        (None, None) => return Err(Error::InvalidArgument("need delta_eps or sigma".into())),
    };
    check_positive("delta_eps", delta)?;
    let n = inputs.n as f64;
    let a = inputs.alpha.value();
    Ok(BoundReport {
        formula: FormulaId::Separable,
        gamma: LogMagnitude::from_value(6.0 * n),
        beta: a * delta * delta / (11.0 * n * (f_max * g_rge).powi(2)),
        n_samples: None,
    })
}

/// Uniform bound for the routing game:
/// `gamma = 6|P| prod_w ceil(4 M |W| sqrt|P_w| / (delta alpha))`,
/// `beta = alpha delta^2 / (44 |P| (L - ell)^2)`.
pub fn exponential_bound_routing(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    check_positive("m_lip", inputs.m_lip)?;
    let shape = inputs
        .routing
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("routing shape is required for the routing bound".into()))?;
    if shape.paths_per_od.is_empty() || shape.paths_per_od.contains(&0) {
        return Err(Error::InvalidArgument("every OD pair needs at least one path".into()));
    }
    let delta = inputs.delta()?;
    let a = inputs.alpha.value();
    let w = shape.paths_per_od.len() as f64;
    let p = shape.total_paths() as f64;
    let mut ln_gamma = (6.0 * p).ln();
    for &pw in &shape.paths_per_od {
        let factor = (4.0 * inputs.m_lip * w * (pw as f64).sqrt() / (delta * a)).ceil();
        ln_gamma += factor.max(1.0).ln();
    }
    Ok(BoundReport {
        formula: FormulaId::Routing,
        gamma: LogMagnitude::from_ln(ln_gamma),
        beta: a * delta * delta / (44.0 * p * inputs.range_sq()),
        n_samples: None,
    })
}

pub fn exponential_bound(inputs: &BoundInputs, formula: FormulaId) -> Result<BoundReport> {
    match formula {
        FormulaId::General => exponential_bound_general(inputs),
        FormulaId::Separable => exponential_bound_separable(inputs),
        FormulaId::Routing => exponential_bound_routing(inputs),
    }
}

/// `ceil(ln(gamma/zeta) / beta)`, at least 1.
pub fn sample_size(gamma: LogMagnitude, beta: f64, zeta: f64) -> Result<u64> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence zeta must lie in (0, 1), got {zeta}")));
    }
    check_positive("beta", beta)?;
    let n = ((gamma.ln() - zeta.ln()) / beta).ceil();
    if n.is_nan() || n > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("required sample size {n:e} overflows")));
    }
    Ok((n.max(1.0)) as u64)
}

/// Samples needed for `P(D(S^N, S) <= eps) >= 1 - zeta` under `formula`.
pub fn sample_size_general(inputs: &BoundInputs, formula: FormulaId, zeta: f64) -> Result<u64> {
    let r = exponential_bound(inputs, formula)?;
    sample_size(r.gamma, r.beta, zeta)
}

/// Solution-set deviation `sup_dev / sigma` implied by a map deviation
/// `sup_dev` when the map is `sigma`-strongly monotone.
pub fn delta_strongly_monotone(sigma: f64, sup_dev: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    if !(sup_dev >= 0.0) {
        return Err(Error::InvalidArgument(format!("deviation must be >= 0, got {sup_dev}")));
    }
    Ok(sup_dev / sigma)
}

/// Map accuracy `sigma * eps` that guarantees solution accuracy `eps`.
pub fn delta_strongly_monotone_inverse(sigma: f64, epsilon: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("epsilon", epsilon)?;
    Ok(sigma * epsilon)
}

/// One-sided deviation `max_{a in A} min_{s in S} |a - s|`.
pub fn set_deviation(a: &[Vec<f64>], s: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || s.is_empty() {
        return Err(Error::InvalidArgument("set deviation needs nonempty sets".into()));
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(s).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    Ok(a.iter()
        .map(|x| s.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn alpha(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn base() -> BoundInputs {
        BoundInputs {
            n: 1,
            alpha: alpha(0.5),
            m_lip: 1.0,
            diam_x: 1.0,
            ell: 0.0,
            big_l: 1.0,
            epsilon: 0.1,
            delta_eps: Some(0.1),
            sigma: None,
            f_max: None,
            g_rge: None,
            routing: None,
        }
    }

    #[test]
    fn pointwise_examples() {
        let b = pointwise_deviation_bound(0.0, 1.0, alpha(0.05), 0.5, 1).unwrap();
        assert_eq!(b, 1.0);
        let b = pointwise_deviation_bound(0.0, 1.0, alpha(0.05), 0.5, 1_000_000).unwrap();
        assert!(b < 1e-300);
        assert!(pointwise_deviation_bound(1.0, 1.0, alpha(0.05), 0.5, 10).is_err());
        assert!(pointwise_deviation_bound(0.0, 1.0, alpha(0.05), 0.5, 0).is_err());
    }

    #[test]
    fn convex_and_compact_covers() {
        assert!(rel(covering_number_convex(1, 2.0, 2.0, 3.0).unwrap().value(), 1.0) < 1e-12);
        assert!(rel(covering_number_convex(2, 5.0, 5.0, 1.5).unwrap().value(), 4.0) < 1e-12);
        let c = covering_number_compact(2, 1.0, 0.5).unwrap().value();
        assert!(rel(c, 36.0 / (2.0 * PI)) < 1e-12);
        let c = covering_number_compact(1, 1.0, 0.5).unwrap().value();
        assert!(rel(c, 6.0 / (2.0 * PI.sqrt())) < 1e-12);
        assert!(covering_number_compact(1, 1.0, 0.51).is_err());
    }

    #[test]
    fn simplex_cover_counts() {
        assert_eq!(covering_number_simplex(2, 1.0, 0.71).unwrap(), BigUint::from(3u32));
        assert_eq!(covering_number_simplex(2, 1.0, 2f64.sqrt()).unwrap(), BigUint::from(1u32));
        assert_eq!(covering_number_simplex(3, 1.0, 1.0).unwrap(), BigUint::from(4u32));
    }

    #[test]
    fn flow_polytope_counts() {
        assert_eq!(covering_number_flow_polytope(&[(2, 1.0)], 0.71).unwrap(), BigUint::from(3u32));
        // |W| = 2 halves the radius: K_w = ceil(2 sqrt2 / 1.42) = 2 each.
        assert_eq!(covering_number_flow_polytope(&[(2, 1.0), (2, 1.0)], 1.42).unwrap(), BigUint::from(9u32));
        assert_eq!(covering_number_flow_polytope(&[(3, 1.0), (5, 2.0)], 1e9).unwrap(), BigUint::one());
    }

    #[test]
    fn big_counts_stay_finite_in_log_space() {
        let c = covering_number_flow_polytope(&[(40, 300.0), (40, 600.0), (40, 200.0)], 1e-3).unwrap();
        let ln = LogMagnitude::from_biguint(&c);
        assert!(ln.ln().is_finite() && ln.ln() > 700.0);
        assert_eq!(ln.value(), f64::INFINITY);
        let exact = LogMagnitude::from_biguint(&binomial(60, 30));
        assert!(rel(exact.value(), 118264581564861424.0) < 1e-12);
    }

    #[test]
    fn lattice_matches_binomial_and_covers() {
        for n in 1..=4 {
            for k in 1..=6u64 {
                let pts = simplex_lattice(n, 2.0, k);
                assert_eq!(BigUint::from(pts.len()), simplex_lattice_size(n, k));
            }
        }
        let x = [0.33, 0.27, 1.4];
        let c = simplex_cover_point(&x, 2.0, 4);
        assert!((c.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let dist: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist <= 3f64.sqrt() * 2.0 / 4.0);
    }

    #[test]
    fn published_count_matches_lattice_only_on_the_diagonal() {
        assert_eq!(simplex_lattice_size(3, 2), BigUint::from(6u32));
        assert_eq!(binomial(4, 1), BigUint::from(4u32));
        for n in 1..=4usize {
            assert_eq!(simplex_lattice_size(n, n as u64), binomial(2 * n as u64 - 1, n as u64 - 1));
        }
    }

    #[test]
    fn general_example() {
        let r = exponential_bound_general(&base()).unwrap();
        assert!(rel(r.gamma.value(), 6.0 * 240.0 / (2.0 * PI.sqrt())) < 1e-12);
        assert!(rel(r.beta, 0.5 * 0.01 / 44.0) < 1e-12);
        let mut half = base();
        half.alpha = alpha(0.25);
        let h = exponential_bound_general(&half).unwrap();
        assert!(rel(h.gamma.value(), 2.0 * r.gamma.value()) < 1e-12);
        let mut wide = base();
        wide.delta_eps = Some(0.5);
        assert!(exponential_bound_general(&wide).is_err());
    }

    #[test]
    fn separable_example() {
        let inputs = BoundInputs {
            alpha: alpha(0.05),
            f_max: Some(1.0),
            g_rge: Some(1.0),
            diam_x: 1e6,
            ..base()
        };
        let r = exponential_bound_separable(&inputs).unwrap();
        assert_eq!(r.gamma.value(), 6.0);
        assert!(rel(r.beta, 0.05 * 0.01 / 11.0) < 1e-12);
        let sm = BoundInputs {
            delta_eps: None,
            sigma: Some(2.0),
            ..inputs
        };
        let r2 = exponential_bound_separable(&sm).unwrap();
        assert!(rel(r2.beta, 0.05 * 0.04 / 11.0) < 1e-12);
    }

    #[test]
    fn routing_example() {
        let inputs = BoundInputs {
            epsilon: 8.0,
            delta_eps: Some(8.0),
            routing: Some(RoutingShape {
                paths_per_od: vec![1],
                demands: vec![1.0],
            }),
            ..base()
        };
        let r = exponential_bound_routing(&inputs).unwrap();
        assert!(rel(r.gamma.value(), 6.0) < 1e-12);
        assert!(rel(r.beta, 0.5 * 64.0 / 44.0) < 1e-12);
    }

    #[test]
    fn sample_size_examples() {
        let g = LogMagnitude::from_value(6.0);
        assert_eq!(sample_size(g, 1e-4, 0.05).unwrap(), 47875);
        assert_eq!(sample_size(g, 1e-4, 0.999).unwrap(), 17928);
        assert_eq!(sample_size(LogMagnitude::from_value(0.5), 1.0, 0.5).unwrap(), 1);
        let a = sample_size(g, 1e-3, 0.1).unwrap();
        let b = sample_size(g, 1e-3, 0.05).unwrap();
        assert!((b - a) as f64 - LN_2 / 1e-3 <= 1.0);
        assert!(sample_size(g, 1e-4, 1.0).is_err());
    }

    #[test]
    fn strongly_monotone_delta() {
        assert_eq!(delta_strongly_monotone(2.0, 0.1).unwrap(), 0.05);
        assert_eq!(delta_strongly_monotone(1.0, 0.3).unwrap(), 0.3);
        assert!(delta_strongly_monotone(0.0, 0.3).is_err());
    }

    #[test]
    fn set_deviation_examples() {
        let a = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let s = vec![vec![0.0, 0.0]];
        assert_eq!(set_deviation(&a, &a).unwrap(), 0.0);
        assert_eq!(set_deviation(&a, &s).unwrap(), 2.0);
        assert_eq!(set_deviation(&s, &a).unwrap(), 0.0);
        assert!(set_deviation(&[], &s).is_err());
    }
}
