//! Linear complementarity problems `x >= 0, Mx + q >= 0, x^T (Mx + q) = 0`
//! arising from affine routing games, with two independent solvers: Lemke's
//! complementary pivoting and a first-order route on the equivalent convex
//! quadratic program.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::routing::RoutingGame;
use crate::vi::spectral_norm;

/// Pivot elements smaller than this are treated as zero.
pub const PIVOT_TOL: f64 = 1e-11;
/// Complementarity gap at which the quadratic-program route stops.
pub const QP_GAP_TOL: f64 = 1e-8;

/// Affine LCP with the routing block structure
///
/// ```text
///     M = [ Q^T R Q   -B^T ]     q = [ Q^T t + kappa ]
///         [ B          0  ]         [ -d            ]
/// ```
///
/// over `x = (h; v)`: path flows followed by one multiplier per OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLcp {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub n_paths: usize,
    pub n_ods: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub x: Vec<f64>,
    pub complementarity_gap: f64,
    pub feasible: bool,
    /// Pivots (Lemke) or iterations (quadratic program) used.
    pub work: usize,
}

impl LcpSolution {
    /// Flow block `h` of `x = (h; v)`.
    pub fn flows(&self, n_paths: usize) -> &[f64] {
        &self.x[..n_paths]
    }
}

impl AffineLcp {
    /// Square LCP without routing structure.
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: q.len(),
            });
        }
        let n = q.len();
        Ok(AffineLcp {
            m,
            q,
            n_paths: n,
            n_ods: 0,
        })
    }

    /// Builds the routing LCP from its blocks. `incidence` is the OD-by-path
    /// 0/1 matrix `B` and `path_offset` the top block of `q`.
    pub fn from_blocks(
        path_matrix: &DMatrix<f64>,
        path_offset: &DVector<f64>,
        incidence: &DMatrix<f64>,
        demand: &[f64],
    ) -> Result<Self> {
        let p = path_matrix.nrows();
        let w = incidence.nrows();
        if !path_matrix.is_square() {
            return Err(Error::InvalidArgument("path cost matrix must be square".into()));
        }
        for (expected, got) in [(p, path_offset.len()), (p, incidence.ncols()), (w, demand.len())] {
            if expected != got {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        let n = p + w;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (p, p)).copy_from(path_matrix);
        m.view_mut((0, p), (p, w)).copy_from(&(-incidence.transpose()));
        m.view_mut((p, 0), (w, p)).copy_from(incidence);
        let mut q = DVector::zeros(n);
        q.rows_mut(0, p).copy_from(path_offset);
        for (i, d) in demand.iter().enumerate() {
            q[p + i] = -d;
        }
        Ok(AffineLcp {
            m,
            q,
            n_paths: p,
            n_ods: w,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `M x + q`.
    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.m * DVector::from_column_slice(x) + &self.q
    }

    /// Packages `x` with its complementarity diagnostics.
    pub fn certify(&self, x: Vec<f64>, work: usize) -> LcpSolution {
        let w = self.apply(&x);
        let gap = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>().abs();
        let feasible = x.iter().all(|&v| v >= -1e-9)
            && w.iter().all(|&v| v >= -1e-7)
            && gap <= 1e-6 * (1.0 + self.q.norm());
        LcpSolution {
            x,
            complementarity_gap: gap,
            feasible,
            work,
        }
    }

    /// Plain-text dump: a header line, then `M` and `q` in coordinate form with
    /// 1-based indices, listing nonzero entries only.
    ///
    /// ```text
    /// %%AffineLcp paths <P> ods <W>
    /// %%matrix M <rows> <cols> <nnz>
    /// <i> <j> <value>
    /// %%vector q <len> <nnz>
    /// <i> <value>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let n = self.dim();
        let _ = writeln!(out, "%%AffineLcp paths {} ods {}", self.n_paths, self.n_ods);
        let nnz = self.m.iter().filter(|v| **v != 0.0).count();
        let _ = writeln!(out, "%%matrix M {n} {n} {nnz}");
        for i in 0..n {
            for j in 0..n {
                let v = self.m[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "{} {} {:?}", i + 1, j + 1, v);
                }
            }
        }
        let nnz = self.q.iter().filter(|v| **v != 0.0).count();
        let _ = writeln!(out, "%%vector q {n} {nnz}");
        for (i, v) in self.q.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "{} {:?}", i + 1, v);
            }
        }
        out
    }

    /// Parses the layout written by [`AffineLcp::to_text`].
    pub fn from_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                }),
                None => Err(Error::Parse {
                    line: 0,
                    message: format!("unexpected end of input, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        let nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(line, "bad number")))
                .collect()
        };

        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != "%%AffineLcp" || h[1] != "paths" || h[3] != "ods" {
            return Err(bad(ln, "expected '%%AffineLcp paths <P> ods <W>'"));
        }
        let n_paths: usize = h[2].parse().map_err(|_| bad(ln, "bad path count"))?;
        let n_ods: usize = h[4].parse().map_err(|_| bad(ln, "bad od count"))?;
        let n = n_paths + n_ods;

        let (ln, mh) = next("matrix header")?;
        let mh: Vec<&str> = mh.split_whitespace().collect();
        if mh.len() != 5 || mh[0] != "%%matrix" || mh[1] != "M" {
            return Err(bad(ln, "expected '%%matrix M <rows> <cols> <nnz>'"));
        }
        let rows: usize = mh[2].parse().map_err(|_| bad(ln, "bad row count"))?;
        let nnz: usize = mh[4].parse().map_err(|_| bad(ln, "bad nnz"))?;
        if rows != n || mh[3] != mh[2] {
            return Err(bad(ln, "matrix size disagrees with header"));
        }
        let mut m = DMatrix::zeros(n, n);
        for _ in 0..nnz {
            let (ln, l) = next("matrix entry")?;
            let v = nums(ln, &l)?;
            if v.len() != 3 {
                return Err(bad(ln, "expected '<i> <j> <value>'"));
            }
            let (i, j) = (v[0] as usize, v[1] as usize);
            if i == 0 || j == 0 || i > n || j > n {
                return Err(bad(ln, "index out of range"));
            }
            m[(i - 1, j - 1)] = v[2];
        }
        let (ln, qh) = next("vector header")?;
        let qh: Vec<&str> = qh.split_whitespace().collect();
        if qh.len() != 4 || qh[0] != "%%vector" || qh[1] != "q" {
            return Err(bad(ln, "expected '%%vector q <len> <nnz>'"));
        }
        let nnz: usize = qh[3].parse().map_err(|_| bad(ln, "bad nnz"))?;
        let mut q = DVector::zeros(n);
        for _ in 0..nnz {
            let (ln, l) = next("vector entry")?;
            let v = nums(ln, &l)?;
            if v.len() != 2 || v[0] < 1.0 || v[0] as usize > n {
                return Err(bad(ln, "expected '<i> <value>'"));
            }
            q[v[0] as usize - 1] = v[1];
        }
        Ok(AffineLcp {
            m,
            q,
            n_paths,
            n_ods,
        })
    }
}

/// Routing LCP for `game` with per-path CVaR offsets `kappa_hat`.
pub fn assemble_lcp(game: &RoutingGame, kappa_hat: &[f64]) -> Result<AffineLcp> {
    let p = game.paths.len();
    if kappa_hat.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: kappa_hat.len(),
        });
    }
    let offset = game.free_flow_path_costs() + DVector::from_column_slice(kappa_hat);
    AffineLcp::from_blocks(
        game.path_cost_matrix(),
        &offset,
        &game.paths.od_incidence(),
        &game.demands(),
    )
}

/// Lemke's complementary pivoting with covering vector `e = 1` and a
/// lexicographic ratio test.
pub fn solve_lcp_lemke(lcp: &AffineLcp, max_pivots: usize) -> Result<LcpSolution> {
    let n = lcp.dim();
    if lcp.q.iter().all(|&v| v >= 0.0) {
        return Ok(lcp.certify(vec![0.0; n], 0));
    }
    let mut tab = Tableau::new(lcp);
    let z0 = 2 * n;

    // z0 enters; the most negative q leaves (lexicographic among ties).
    let rows: Vec<usize> = (0..n).collect();
    let first = tab.lexmin_row(&rows, |r| -tab.t[(r, z0)]);
    let mut leaving = tab.basis[first];
    tab.pivot(first, z0);

    let mut pivots = 1;
    loop {
        let entering = complement(leaving, n);
        let candidates: Vec<usize> = (0..n).filter(|&r| tab.t[(r, entering)] > PIVOT_TOL).collect();
        if candidates.is_empty() {
            return Err(Error::RayTermination);
        }
        if pivots >= max_pivots {
            return Err(Error::PivotBudget(max_pivots));
        }
        let min_ratio = candidates
            .iter()
            .map(|&r| tab.rhs(r) / tab.t[(r, entering)])
            .fold(f64::INFINITY, f64::min);
        // Let the artificial variable leave whenever it ties for the minimum.
        let z0_row = candidates.iter().copied().find(|&r| {
            tab.basis[r] == z0 && tab.rhs(r) / tab.t[(r, entering)] <= min_ratio + PIVOT_TOL
        });
        let row = match z0_row {
            Some(r) => r,
            None => tab.lexmin_row(&candidates, |r| tab.t[(r, entering)]),
        };
        leaving = tab.basis[row];
        tab.pivot(row, entering);
        pivots += 1;
        if leaving == z0 {
            break;
        }
    }

    let mut x = vec![0.0; n];
    for (r, &var) in tab.basis.iter().enumerate() {
        if (n..2 * n).contains(&var) {
            x[var - n] = tab.rhs(r).max(0.0);
        }
    }
    Ok(lcp.certify(x, pivots))
}

fn complement(var: usize, n: usize) -> usize {
    if var < n {
        var + n
    } else {
        var - n
    }
}

/// Dense tableau for `w - M z - e z0 = q`. Columns `0..n` are `w`, `n..2n`
/// are `z`, `2n` is `z0`, and `2n+1` the right-hand side.
struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    n: usize,
}

impl Tableau {
    fn new(lcp: &AffineLcp) -> Self {
        let n = lcp.dim();
        let mut t = DMatrix::zeros(n, 2 * n + 2);
        for i in 0..n {
            t[(i, i)] = 1.0;
            for j in 0..n {
                t[(i, n + j)] = -lcp.m[(i, j)];
            }
            t[(i, 2 * n)] = -1.0;
            t[(i, 2 * n + 1)] = lcp.q[i];
        }
        Tableau {
            t,
            basis: (0..n).collect(),
            n,
        }
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[(r, 2 * self.n + 1)]
    }

    /// Row minimising `(rhs_r, Binv_r) / denom(r)` lexicographically. The
    /// columns of the slack block hold the current basis inverse.
    fn lexmin_row(&self, rows: &[usize], denom: impl Fn(usize) -> f64) -> usize {
        let key = |r: usize, k: usize| -> f64 {
            let col = if k == 0 { 2 * self.n + 1 } else { k - 1 };
            self.t[(r, col)] / denom(r)
        };
        let mut best = rows[0];
        for &r in &rows[1..] {
            for k in 0..=self.n {
                let (a, b) = (key(r, k), key(best, k));
                let scale = 1.0 + a.abs().max(b.abs());
                if a < b - 1e-12 * scale {
                    best = r;
                    break;
                }
                if a > b + 1e-12 * scale {
                    break;
                }
            }
        }
        best
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let width = self.t.ncols();
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        for r in 0..self.n {
            if r == row {
                continue;
            }
            let f = self.t[(r, col)];
            if f != 0.0 {
                for j in 0..width {
                    let v = self.t[(row, j)];
                    self.t[(r, j)] -= f * v;
                }
                self.t[(r, col)] = 0.0;
            }
        }
        self.basis[row] = col;
    }
}

/// Options for [`solve_lcp_qp`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations between attempts to finish on the current active set.
    pub polish_every: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol: QP_GAP_TOL,
            max_iter: 200_000,
            polish_every: 200,
        }
    }
}

/// Solves the convex program `min x^T (Mx + q)` s.t. `Mx + q >= 0, x >= 0`,
/// whose zero-objective optimizers are the LCP solutions.
///
/// Runs extragradient on the equivalent monotone VI over the nonnegative
/// orthant and periodically polishes: the set of variables with `x_i > w_i`
/// is taken as the support, `M_SS x_S = -q_S` is solved in least squares, and
/// the candidate is accepted once it is feasible with objective `<= tol`.
pub fn solve_lcp_qp(lcp: &AffineLcp, opts: &QpOptions) -> Result<LcpSolution> {
    let n = lcp.dim();
    let lip = spectral_norm(&lcp.m);
    if lip == 0.0 {
        let x = vec![0.0; n];
        return qp_accept(lcp, x, 0, opts.tol).ok_or_else(|| {
            Error::NotConverged("zero matrix with negative offset is infeasible".into())
        });
    }
    let step = 0.9 / lip;
    let mut x = vec![0.0; n];
    let clamp = |v: &mut DVector<f64>| v.iter_mut().for_each(|c| *c = c.max(0.0));

    for it in 0..opts.max_iter {
        if it % opts.polish_every.max(1) == 0 {
            if let Some(sol) = qp_accept(lcp, x.clone(), it, opts.tol) {
                return Ok(sol);
            }
            if let Some(sol) = polish(lcp, &x).and_then(|c| qp_accept(lcp, c, it, opts.tol)) {
                return Ok(sol);
            }
        }
        let xv = DVector::from_column_slice(&x);
        let mut y = &xv - step * lcp.apply(&x);
        clamp(&mut y);
        let mut next = &xv - step * lcp.apply(y.as_slice());
        clamp(&mut next);
        if next.iter().any(|v| !v.is_finite()) || next.amax() > 1e15 {
            return Err(Error::NotConverged(
                "quadratic program iterates diverged; the LCP appears infeasible".into(),
            ));
        }
        x = next.as_slice().to_vec();
    }
    qp_accept(lcp, x.clone(), opts.max_iter, opts.tol)
        .or_else(|| polish(lcp, &x).and_then(|c| qp_accept(lcp, c, opts.max_iter, opts.tol)))
        .ok_or_else(|| {
            Error::NotConverged(format!(
                "quadratic program gap above {} after {} iterations",
                opts.tol, opts.max_iter
            ))
        })
}

fn qp_accept(lcp: &AffineLcp, x: Vec<f64>, work: usize, tol: f64) -> Option<LcpSolution> {
    let w = lcp.apply(&x);
    let scale = 1.0 + lcp.q.amax();
    if x.iter().any(|&v| v < -1e-12) || w.iter().any(|&v| v < -1e-9 * scale) {
        return None;
    }
    let obj: f64 = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
    if obj.abs() > tol {
        return None;
    }
    Some(lcp.certify(x, work))
}

fn polish(lcp: &AffineLcp, x: &[f64]) -> Option<Vec<f64>> {
    let w = lcp.apply(x);
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > w[i]).collect();
    let mut out = vec![0.0; x.len()];
    if support.is_empty() {
        return Some(out);
    }
    let k = support.len();
    let a = DMatrix::from_fn(k, k, |i, j| lcp.m[(support[i], support[j])]);
    let b = DVector::from_fn(k, |i, _| -lcp.q[support[i]]);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-12).ok()?;
    for (i, &s) in support.iter().enumerate() {
        if sol[i] < -1e-9 {
            return None;
        }
        out[s] = sol[i].max(0.0);
    }
    Some(out)
}
