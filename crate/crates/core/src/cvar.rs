//! Conditional value-at-risk of scalar costs.
//!
//! For a cost `V` and risk level `alpha`, CVaR is the optimal value of
//!
//! ```text
//!     inf_t  t + E[(V - t)_+] / alpha
//! ```
//!
//! which is the mean of the worst `alpha`-fraction of outcomes. All estimators
//! here solve the program exactly on finite supports by sorting; the minimizing
//! `t` reported is always the left end of the optimizer interval (the VaR).

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Risk level `alpha` in the open interval (0, 1). Smaller is more risk-averse.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(RiskLevel(alpha))
        } else {
            Err(Error::InvalidRiskLevel(alpha))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// I.i.d. draws of a scalar cost together with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    pub seed: u64,
    pub source_tag: String,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, seed: u64, source_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index, value });
        }
        Ok(SampleBatch {
            values,
            seed,
            source_tag: source_tag.into(),
        })
    }

    /// Batch with no provenance, for values that did not come from a generator.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0, "literal")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes the batch as CSV: a `value` header followed by one value per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "value")?;
        for v in &self.values {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    /// Reads the CSV layout produced by [`SampleBatch::write_csv`]. Blank lines
    /// are skipped; the header is optional.
    pub fn read_csv<R: BufRead>(input: R, seed: u64, source_tag: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let field = line.trim();
            if field.is_empty() || (i == 0 && field.eq_ignore_ascii_case("value")) {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        Self::new(values, seed, source_tag)
    }
}

/// Which route produced a [`CvarEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvarMethod {
    OrderStatistic,
    ScalarMinimization,
    LinearProgram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarEstimate {
    pub value: f64,
    /// Left endpoint of the minimizer interval of the inf-over-t program.
    pub t_star: f64,
    pub method: CvarMethod,
}

/// Finite-support law given as `(value, probability)` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let mut total = 0.0;
        for &(v, p) in &atoms {
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!("non-finite atom {v}")));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidDistribution(format!("bad probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(DiscreteDistribution { atoms })
    }

    /// Empirical law of a batch: every draw gets mass `1/N`.
    pub fn uniform_over(batch: &SampleBatch) -> Self {
        let p = 1.0 / batch.len() as f64;
        DiscreteDistribution {
            atoms: batch.values().iter().map(|&v| (v, p)).collect(),
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }
}

fn sorted_descending(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// The objective `t + sum_j w_j (v_j - t)_+ / alpha`.
pub(crate) fn cvar_objective(t: f64, atoms: impl Iterator<Item = (f64, f64)>, alpha: f64) -> f64 {
    t + atoms.map(|(v, w)| w * (v - t).max(0.0)).sum::<f64>() / alpha
}

/// Empirical CVaR of a sample batch via the order-statistic closed form.
///
/// With the draws sorted in decreasing order and `k = floor(N alpha)`, the
/// minimizer of the empirical program is the `(k+1)`-th largest draw; the value
/// is the objective evaluated there, which equals the mean of the top `k`
/// draws plus the fractional share `N alpha - k` of the next one.
pub fn empirical_cvar(samples: &SampleBatch, alpha: RiskLevel) -> Result<CvarEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len();
    let sorted = sorted_descending(samples.values());
    let k = tail_count(n, alpha.value());
    let t_star = sorted[k];
    let tail: f64 = sorted[..k].iter().map(|v| v - t_star).sum();
    let value = t_star + tail / (n as f64 * alpha.value());
    Ok(CvarEstimate {
        value,
        t_star,
        method: CvarMethod::OrderStatistic,
    })
}

/// `floor(N alpha)`, always strictly less than `N` since `alpha < 1`.
fn tail_count(n: usize, alpha: f64) -> usize {
    ((n as f64 * alpha).floor() as usize).min(n - 1)
}

/// Exact CVaR of a finite-support random variable.
pub fn cvar_discrete(dist: &DiscreteDistribution, alpha: RiskLevel) -> Result<CvarEstimate> {
    let a = alpha.value();
    let mut atoms: Vec<(f64, f64)> = dist.atoms().to_vec();
    atoms.sort_unstable_by(|x, y| y.0.total_cmp(&x.0));

    // Left end of the minimizer set is the smallest t with P(V > t) <= alpha.
    // Walking atoms in decreasing order, the mass strictly above atom i is the
    // running sum before it (exactly so at the first copy of a tied value).
    let mut above = 0.0;
    let mut t_star = atoms[0].0;
    for &(v, p) in &atoms {
        if above > a {
            break;
        }
        t_star = v;
        above += p;
    }
    let value = cvar_objective(t_star, atoms.iter().copied(), a);
    Ok(CvarEstimate {
        value,
        t_star,
        method: CvarMethod::ScalarMinimization,
    })
}

/// CVaR of the uniform law on `[lo, hi]`: the mean of its upper `alpha` tail.
pub fn cvar_uniform_interval(lo: f64, hi: f64, alpha: RiskLevel) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "uniform interval needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    Ok(hi - alpha.value() * (hi - lo) / 2.0)
}

/// Empirical CVaR as the linear program
///
/// ```text
///     min  t + (1/(N alpha)) sum_j y_j
///     s.t. y_j >= v_j - t,  y_j >= 0
/// ```
///
/// solved exactly through its dual `max sum_j lambda_j v_j` over
/// `sum_j lambda_j = 1, 0 <= lambda_j <= 1/(N alpha)`, whose optimum is a
/// greedy fill of the largest draws. The primal point is rebuilt from the
/// dual's fractional index and both are checked for feasibility and zero gap.
pub fn empirical_cvar_lp(samples: &SampleBatch, alpha: RiskLevel) -> Result<CvarEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len();
    let cap = 1.0 / (n as f64 * alpha.value());
    let mut order: Vec<usize> = (0..n).collect();
    let v = samples.values();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));

    // Dual: greedy fill of capacity `cap` on the largest draws until unit mass.
    let mut lambda = vec![0.0; n];
    let mut remaining = 1.0;
    let mut pivot = order[n - 1];
    for &j in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = cap.min(remaining);
        lambda[j] = take;
        remaining -= take;
        pivot = j;
        if take < cap {
            break;
        }
    }
    // A draw filled to capacity is only "strictly above" t when the fill
    // continued past it; the partially filled (or last) draw fixes t.
    let t = v[pivot];
    let y: Vec<f64> = v.iter().map(|&x| (x - t).max(0.0)).collect();
    let primal = t + cap * y.iter().sum::<f64>();
    let dual: f64 = lambda.iter().zip(v).map(|(l, x)| l * x).sum();

    let scale = 1.0 + primal.abs().max(dual.abs());
    let dual_mass: f64 = lambda.iter().sum();
    debug_assert!(y.iter().zip(v).all(|(yj, x)| *yj >= x - t && *yj >= 0.0));
    debug_assert!(lambda.iter().all(|&l| (0.0..=cap * (1.0 + 1e-12)).contains(&l)));
    if (dual_mass - 1.0).abs() > 1e-9 || (primal - dual).abs() > 1e-9 * scale {
        return Err(Error::NotConverged(format!(
            "linear program certificate failed: primal {primal}, dual {dual}, mass {dual_mass}"
        )));
    }
    Ok(CvarEstimate {
        value: primal,
        t_star: t,
        method: CvarMethod::LinearProgram,
    })
}

/// Bounds on the inf-over-t minimizers and on the integrand when the cost
/// lives in `[lo, hi]`: returns `([lo, hi], [lo, lo + (hi - lo)/alpha])`.
pub fn optimizer_bounds(lo: f64, hi: f64, alpha: RiskLevel) -> Result<([f64; 2], [f64; 2])> {
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "inverted cost range [{lo}, {hi}]"
        )));
    }
    Ok(([lo, hi], [lo, lo + (hi - lo) / alpha.value()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn batch(v: &[f64]) -> SampleBatch {
        SampleBatch::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn risk_level_rejects_boundary() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.0).is_err());
        assert!(RiskLevel::new(f64::NAN).is_err());
        assert!(RiskLevel::new(0.3).is_ok());
    }

    #[test]
    fn empty_and_nonfinite_batches_rejected() {
        assert_eq!(SampleBatch::from_values(vec![]), Err(Error::EmptySamples));
        assert!(matches!(
            SampleBatch::from_values(vec![1.0, f64::INFINITY]),
            Err(Error::NonFiniteSample { index: 1, .. })
        ));
    }

    #[test]
    fn constant_batch() {
        for a in [0.01, 0.3, 0.99] {
            let est = empirical_cvar(&batch(&[2.5; 17]), alpha(a)).unwrap();
            assert_eq!(est.value, 2.5);
            assert_eq!(est.t_star, 2.5);
        }
    }

    #[test]
    fn small_alpha_gives_maximum() {
        let est = empirical_cvar(&batch(&[1.0, 2.0, 3.0, 4.0]), alpha(0.25)).unwrap();
        assert_eq!(est.value, 4.0);
    }

    #[test]
    fn half_tail_of_four_values() {
        // t-grid oracle on [1, 4]: minimum 3.5 attained on [2, 3].
        let est = empirical_cvar(&batch(&[1.0, 2.0, 3.0, 4.0]), alpha(0.5)).unwrap();
        assert!((est.value - 3.5).abs() < 1e-12);
        assert_eq!(est.t_star, 2.0);
    }

    #[test]
    fn discrete_examples() {
        let d = DiscreteDistribution::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((cvar_discrete(&d, alpha(0.999999)).unwrap().value - 0.5).abs() < 1e-5);

        let d = DiscreteDistribution::new(vec![(0.0, 0.9), (10.0, 0.1)]).unwrap();
        assert!((cvar_discrete(&d, alpha(0.1)).unwrap().value - 10.0).abs() < 1e-12);
        assert!((cvar_discrete(&d, alpha(0.2)).unwrap().value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_rejects_bad_mass() {
        assert!(DiscreteDistribution::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(DiscreteDistribution::new(vec![(0.0, -0.1), (1.0, 1.1)]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn discrete_matches_empirical_on_uniform_atoms() {
        let b = batch(&[3.0, -1.0, 7.5, 7.5, 0.25, 2.0, 9.0]);
        for a in [0.05, 0.1428, 0.2857142857142857, 0.5, 0.9] {
            let e = empirical_cvar(&b, alpha(a)).unwrap();
            let d = cvar_discrete(&DiscreteDistribution::uniform_over(&b), alpha(a)).unwrap();
            assert!((e.value - d.value).abs() <= 1e-12 * (1.0 + e.value.abs()), "{a}");
        }
    }

    #[test]
    fn uniform_interval() {
        assert!((cvar_uniform_interval(0.0, 1.0, alpha(0.999999)).unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(cvar_uniform_interval(0.0, 1.0, alpha(0.5)).unwrap(), 0.75);
        assert!((cvar_uniform_interval(2.0, 2.000001, alpha(0.3)).unwrap() - 2.0).abs() < 1e-5);
        assert!(cvar_uniform_interval(1.0, 1.0, alpha(0.3)).is_err());
    }

    #[test]
    fn lp_examples() {
        assert_eq!(empirical_cvar_lp(&batch(&[5.0]), alpha(0.4)).unwrap().value, 5.0);
        let v = empirical_cvar_lp(&batch(&[1.0, 2.0, 3.0, 4.0]), alpha(0.5)).unwrap();
        assert!((v.value - 3.5).abs() < 1e-12);
        let v = empirical_cvar_lp(&batch(&[0.0, 0.0, 0.0, 1.0]), alpha(0.75)).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn optimizer_bound_examples() {
        assert_eq!(optimizer_bounds(0.0, 1.0, alpha(0.5)).unwrap(), ([0.0, 1.0], [0.0, 2.0]));
        assert_eq!(optimizer_bounds(3.0, 3.0, alpha(0.7)).unwrap(), ([3.0, 3.0], [3.0, 3.0]));
        assert_eq!(optimizer_bounds(-1.0, 1.0, alpha(0.25)).unwrap(), ([-1.0, 1.0], [-1.0, 7.0]));
        assert!(optimizer_bounds(1.0, 0.0, alpha(0.5)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let b = SampleBatch::new(vec![1.5, -2.0, 1e-300], 9, "test").unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"value\n"));
        let back = SampleBatch::read_csv(&buf[..], 9, "test").unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn csv_reports_bad_line() {
        let err = SampleBatch::read_csv("value\n1\nabc\n".as_bytes(), 0, "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
