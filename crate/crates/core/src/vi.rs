//! Finite-dimensional variational inequalities `VI(X, F)`: find `x* in X` with
//! `(x - x*)^T F(x*) >= 0` for every `x in X`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default stopping tolerance on the natural residual.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration budget for [`extragradient_solve`].
pub const DEFAULT_MAX_ITER: usize = 200_000;
/// Feasibility slack accepted for points handed to residual checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// One block `{h >= 0, sum h = demand}` of a product of scaled simplices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexBlock {
    pub dim: usize,
    pub demand: f64,
}

/// A nonempty compact convex set.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// Per-coordinate interval `[lo_i, hi_i]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Cartesian product of scaled simplices laid out block after block.
    SimplexProduct { blocks: Vec<SimplexBlock> },
    /// `{x >= 0 : A x = b}`. Only membership is supported.
    Polytope {
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    },
}

impl FeasibleSet {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument("box of dimension zero".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidArgument("box bounds must satisfy lo <= hi".into()));
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn unit_box(dim: usize) -> Result<Self> {
        Self::new_box(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn simplex_product(blocks: Vec<SimplexBlock>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.dim == 0) {
            return Err(Error::InvalidArgument("simplex blocks must be nonempty".into()));
        }
        if blocks.iter().any(|b| !(b.demand >= 0.0 && b.demand.is_finite())) {
            return Err(Error::InvalidArgument("block demands must be finite and >= 0".into()));
        }
        Ok(FeasibleSet::SimplexProduct { blocks })
    }

    pub fn dimension(&self) -> usize {
        match self {
            FeasibleSet::Box { lo, .. } => lo.len(),
            FeasibleSet::SimplexProduct { blocks } => blocks.iter().map(|b| b.dim).sum(),
            FeasibleSet::Polytope { a_eq, .. } => a_eq.ncols(),
        }
    }

    /// Largest constraint violation of `x` (zero when feasible).
    pub fn violation(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let neg = |v: f64| (-v).max(0.0);
        Ok(match self {
            FeasibleSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            FeasibleSet::SimplexProduct { blocks } => {
                let mut worst: f64 = 0.0;
                let mut start = 0;
                for b in blocks {
                    let seg = &x[start..start + b.dim];
                    worst = worst.max((seg.iter().sum::<f64>() - b.demand).abs());
                    worst = seg.iter().map(|&v| neg(v)).fold(worst, f64::max);
                    start += b.dim;
                }
                worst
            }
            FeasibleSet::Polytope { a_eq, b_eq } => {
                let xv = DVector::from_column_slice(x);
                let r = a_eq * &xv - b_eq;
                x.iter().map(|&v| neg(v)).fold(r.amax(), f64::max)
            }
        })
    }

    /// Interior starting point: box midpoint or demand spread evenly per block.
    pub fn default_start(&self) -> Result<Vec<f64>> {
        match self {
            FeasibleSet::Box { lo, hi } => Ok(lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect()),
            FeasibleSet::SimplexProduct { blocks } => Ok(blocks
                .iter()
                .flat_map(|b| std::iter::repeat_n(b.demand / b.dim as f64, b.dim))
                .collect()),
            FeasibleSet::Polytope { .. } => Err(Error::ProjectionUnsupported),
        }
    }

    /// Uniform draw from the set (boxes and simplex products only).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            FeasibleSet::Box { lo, hi } => Ok(lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
                .collect()),
            FeasibleSet::SimplexProduct { blocks } => {
                let mut out = Vec::with_capacity(self.dimension());
                for b in blocks {
                    // Normalised unit exponentials are uniform on the simplex.
                    let e: Vec<f64> = (0..b.dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                    let s: f64 = e.iter().sum();
                    out.extend(e.iter().map(|v| b.demand * v / s));
                }
                Ok(out)
            }
            FeasibleSet::Polytope { .. } => Err(Error::ProjectionUnsupported),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = self.dimension();
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }
}

/// Euclidean projection of `y` onto `{h >= 0, sum h = demand}` by the
/// sort-and-threshold method. Ties in the sort are broken by index.
pub fn project_simplex(y: &[f64], demand: f64) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[j].total_cmp(&y[i]).then(i.cmp(&j)));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumsum += y[i];
        let candidate = (cumsum - demand) / (k + 1) as f64;
        if k == 0 || y[i] - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Euclidean projection onto `set`.
pub fn project(set: &FeasibleSet, y: &[f64]) -> Result<Vec<f64>> {
    set.check_dim(y.len())?;
    match set {
        FeasibleSet::Box { lo, hi } => Ok(y
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&l, &h))| v.clamp(l, h))
            .collect()),
        FeasibleSet::SimplexProduct { blocks } => {
            let mut out = Vec::with_capacity(y.len());
            let mut start = 0;
            for b in blocks {
                out.extend(project_simplex(&y[start..start + b.dim], b.demand));
                start += b.dim;
            }
            Ok(out)
        }
        FeasibleSet::Polytope { .. } => Err(Error::ProjectionUnsupported),
    }
}

/// A map `F: R^n -> R^n`. Implementations must be deterministic.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
    /// Upper estimate of the Lipschitz constant, when known.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

/// `F(x) = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    lipschitz: f64,
}

impl AffineField {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("affine field matrix must be square".into()));
        }
        if matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: offset.len(),
            });
        }
        let lipschitz = spectral_norm(&matrix);
        Ok(AffineField {
            matrix,
            offset,
            lipschitz,
        })
    }

    /// Same linear part with a different constant term.
    pub fn with_offset(&self, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != self.offset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.offset.len(),
                got: offset.len(),
            });
        }
        Ok(AffineField {
            matrix: self.matrix.clone(),
            offset,
            lipschitz: self.lipschitz,
        })
    }
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.offset.len();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = self.offset[i];
            for (j, xj) in x.iter().enumerate() {
                acc += self.matrix[(i, j)] * xj;
            }
            *o = acc;
        }
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// Closure-backed field.
pub struct FnField<F> {
    dim: usize,
    f: F,
    lipschitz: Option<f64>,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField {
            dim,
            f,
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Spectral norm estimate from 100 power iterations on `A^T A`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    // Non-uniform start so it is not orthogonal to the leading singular vector
    // of the structured matrices used here.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let ata = a.transpose() * a;
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViSolution {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Natural residual `||x - P_X(x - F(x))||`, zero exactly at VI solutions.
pub fn natural_residual(set: &FeasibleSet, field: &dyn VectorField, x: &[f64]) -> Result<f64> {
    let violation = set.violation(x)?;
    if violation > FEASIBILITY_TOL {
        return Err(Error::Infeasible { violation });
    }
    let fx = field.eval(x);
    residual_with(set, x, &fx)
}

fn residual_with(set: &FeasibleSet, x: &[f64], fx: &[f64]) -> Result<f64> {
    let step: Vec<f64> = x.iter().zip(fx).map(|(a, b)| a - b).collect();
    let p = project(set, &step)?;
    Ok(x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// Options for [`extragradient_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtragradientOptions {
    /// Step length; defaults to `0.9 / L` from the field's Lipschitz hint.
    pub step: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub x0: Option<Vec<f64>>,
}

impl Default for ExtragradientOptions {
    fn default() -> Self {
        ExtragradientOptions {
            step: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            x0: None,
        }
    }
}

/// Korpelevich extragradient iteration
///
/// ```text
///     y  = P(x - s F(x))
///     x+ = P(x - s F(y))
/// ```
///
/// stopping once the natural residual drops to `tol`. Converges for monotone
/// Lipschitz fields when `s < 1/L`.
pub fn extragradient_solve(
    set: &FeasibleSet,
    field: &dyn VectorField,
    opts: &ExtragradientOptions,
) -> Result<ViSolution> {
    let n = set.dimension();
    if field.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: field.dim(),
        });
    }
    let step = match (opts.step, field.lipschitz_hint()) {
        (Some(s), _) => s,
        (None, Some(l)) if l > 0.0 => 0.9 / l,
        (None, Some(_)) => 1.0,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "extragradient needs a step when the field has no Lipschitz hint".into(),
            ))
        }
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut x = match &opts.x0 {
        Some(x0) => project(set, x0)?,
        None => set.default_start()?,
    };
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    let mut trial = vec![0.0; n];

    let check = |v: &[f64], iteration: usize| -> Result<()> {
        match v.iter().position(|c| !c.is_finite()) {
            Some(component) => Err(Error::NonFiniteField {
                iteration,
                component,
            }),
            None => Ok(()),
        }
    };

    for it in 0..opts.max_iter {
        field.eval_into(&x, &mut fx);
        check(&fx, it)?;
        let residual = residual_with(set, &x, &fx)?;
        if residual <= opts.tol {
            return Ok(ViSolution {
                x_star: x,
                residual,
                iterations: it,
                converged: true,
            });
        }
        for i in 0..n {
            trial[i] = x[i] - step * fx[i];
        }
        let y = project(set, &trial)?;
        field.eval_into(&y, &mut fy);
        check(&fy, it)?;
        for i in 0..n {
            trial[i] = x[i] - step * fy[i];
        }
        x = project(set, &trial)?;
    }
    field.eval_into(&x, &mut fx);
    check(&fx, opts.max_iter)?;
    let residual = residual_with(set, &x, &fx)?;
    Ok(ViSolution {
        x_star: x,
        converged: residual <= opts.tol,
        residual,
        iterations: opts.max_iter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneReport {
    pub violations: usize,
    /// Smallest observed `(F(x) - F(x'))^T (x - x')`.
    pub worst_value: f64,
}

/// Samples point pairs uniformly from `set` and counts pairs where
/// `(F(x) - F(x'))^T (x - x') < -1e-10`.
pub fn check_monotone(
    field: &dyn VectorField,
    set: &FeasibleSet,
    trials: usize,
    rng_seed: u64,
) -> Result<MonotoneReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let x = set.sample_uniform(&mut rng)?;
        let xp = set.sample_uniform(&mut rng)?;
        let fx = field.eval(&x);
        let fxp = field.eval(&xp);
        let inner: f64 = (0..x.len()).map(|i| (fx[i] - fxp[i]) * (x[i] - xp[i])).sum();
        if inner < -1e-10 {
            violations += 1;
        }
        worst = worst.min(inner);
    }
    Ok(MonotoneReport {
        violations,
        worst_value: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(dim: usize, demand: f64) -> FeasibleSet {
        FeasibleSet::simplex_product(vec![SimplexBlock { dim, demand }]).unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let set = FeasibleSet::unit_box(2).unwrap();
        assert_eq!(project(&set, &[2.0, -1.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(project(&simplex(2, 1.0), &[0.6, 0.4]).unwrap(), vec![0.6, 0.4]);
        let p = project(&simplex(3, 1.0), &[1.0, 1.0, -2.0]).unwrap();
        for (a, b) in p.iter().zip([0.5, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_projection_brute_force() {
        // Grid over the 2-simplex scaled to demand 1 with step 1/400.
        let y = [0.9, -0.3, 0.7];
        let p = project(&simplex(3, 1.0), &y).unwrap();
        let dist = |z: &[f64]| z.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut best = f64::INFINITY;
        let m = 400;
        for i in 0..=m {
            for j in 0..=(m - i) {
                let z = [i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64];
                best = best.min(dist(&z));
            }
        }
        assert!(dist(&p) <= best + 1e-12);
        assert!((p[0] - 0.6).abs() < 1e-12 && p[1] == 0.0 && (p[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let set = FeasibleSet::unit_box(2).unwrap();
        assert!(matches!(project(&set, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_demand_block_projects_to_zero() {
        let p = project(&simplex(3, 0.0), &[1.0, -1.0, 2.0]).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn residual_examples() {
        let set = FeasibleSet::unit_box(1).unwrap();
        let zero = FnField::new(1, |_x: &[f64], out: &mut [f64]| out[0] = 0.0);
        assert_eq!(natural_residual(&set, &zero, &[0.3]).unwrap(), 0.0);

        let f = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] - 2.0);
        assert_eq!(natural_residual(&set, &f, &[1.0]).unwrap(), 0.0);
        assert_eq!(natural_residual(&set, &f, &[0.0]).unwrap(), 1.0);
        assert!(matches!(
            natural_residual(&set, &f, &[1.5]),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn extragradient_interior_zero() {
        let set = FeasibleSet::new_box(vec![-1.0; 3], vec![2.0; 3]).unwrap();
        let c = [0.2, -0.5, 1.3];
        let field = FnField::new(3, move |x: &[f64], out: &mut [f64]| {
            for i in 0..3 {
                out[i] = x[i] - c[i];
            }
        })
        .with_lipschitz(1.0);
        let sol = extragradient_solve(&set, &field, &ExtragradientOptions::default()).unwrap();
        assert!(sol.converged);
        for (x, c) in sol.x_star.iter().zip(&c) {
            assert!((x - c).abs() < 1e-9);
        }
    }

    fn two_path(kappa: [f64; 2]) -> AffineField {
        AffineField::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DVector::from_column_slice(&kappa),
        )
        .unwrap()
    }

    #[test]
    fn extragradient_two_path_toy() {
        let set = simplex(2, 1.0);
        let sol = extragradient_solve(&set, &two_path([0.0, 0.0]), &Default::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x_star[0] - 2.0 / 3.0).abs() < 1e-8);
        assert!((sol.x_star[1] - 1.0 / 3.0).abs() < 1e-8);

        let sol = extragradient_solve(&set, &two_path([0.0, 10.0]), &Default::default()).unwrap();
        assert_eq!(sol.x_star, vec![1.0, 0.0]);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn extragradient_reports_non_finite_field() {
        let set = FeasibleSet::unit_box(1).unwrap();
        let f = FnField::new(1, |_x: &[f64], out: &mut [f64]| out[0] = f64::NAN).with_lipschitz(1.0);
        assert!(matches!(
            extragradient_solve(&set, &f, &Default::default()),
            Err(Error::NonFiniteField { iteration: 0, .. })
        ));
    }

    #[test]
    fn extragradient_needs_step_without_hint() {
        let set = FeasibleSet::unit_box(1).unwrap();
        let f = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0]);
        assert!(extragradient_solve(&set, &f, &Default::default()).is_err());
        let opts = ExtragradientOptions {
            step: Some(0.5),
            ..Default::default()
        };
        assert!(extragradient_solve(&set, &f, &opts).unwrap().converged);
    }

    #[test]
    fn monotone_checks() {
        let set = FeasibleSet::new_box(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let psd = AffineField::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(check_monotone(&psd, &set, 500, 1).unwrap().violations, 0);

        let anti = FnField::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = -x[0];
            out[1] = -x[1];
        });
        let r = check_monotone(&anti, &set, 100, 1).unwrap();
        assert!(r.violations > 0 && r.worst_value < 0.0);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -3.0, 2.0]));
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-9);
    }
}
