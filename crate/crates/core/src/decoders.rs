//! Linear decoders: least squares and the Lasso.
//!
//! The Lasso objective is
//!
//! ```text
//! 1/2 * ||y - X theta||^2 + lambda * ||theta||_1
//! ```
//!
//! on the raw (summed, not averaged) squared loss, so `lambda` scales with
//! the number of trials. It is minimized by cyclic coordinate descent with
//! soft-thresholding on the Gram matrix `X^T X`, sweeping only the active set
//! between full sweeps. There is no intercept.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Fitted weights of a linear decoder `sign(x . theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    /// Coordinate-descent sweeps used (0 for least squares).
    pub iterations: usize,
    /// The normal equations were singular and a small ridge was added.
    pub ridge_fallback: bool,
}

impl LinearModel {
    pub fn is_zero(&self) -> bool {
        self.theta.iter().all(|&v| v == 0.0)
    }

    pub fn nonzeros(&self) -> usize {
        self.theta.iter().filter(|&&v| v != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop once a full sweep moves no coefficient by more than this.
    pub tol: f64,
    /// Sweep budget.
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Strictly increasing, non-empty list of regularization strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("lambda grid"));
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain {
                what: "lambda",
                value: bad,
            });
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        Ok(LambdaGrid(values))
    }

    /// The fifteen-point grid from 0.001 to 50000.
    pub fn standard() -> Self {
        LambdaGrid(vec![
            0.001, 0.01, 0.1, 1.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0, 5000.0, 10000.0,
            15000.0, 25000.0, 50000.0,
        ])
    }

    /// Zero plus the standard grid up to 1000: the range that matters for
    /// the two-dimensional toy problem.
    pub fn toy() -> Self {
        LambdaGrid(vec![
            0.0, 0.001, 0.01, 0.1, 1.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0,
        ])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        LambdaGrid::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.0
    }
}

impl FromStr for LambdaGrid {
    type Err = Error;

    /// Comma-separated values, e.g. `0,0.1,10`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad lambda value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LambdaGrid::new(values)
    }
}

impl fmt::Display for LambdaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Ordinary least squares through the normal equations.
///
/// When `X^T X` is singular (e.g. `n < p`) a ridge of
/// `1e-10 * trace(X^T X) / p` is added to the diagonal and the model is
/// flagged with `ridge_fallback`.
pub fn fit_least_squares(d: &Dataset) -> LinearModel {
    let gram = d.x().tr_mul(d.x());
    let xty = d.x().tr_mul(&d.y_f64());
    let (theta, ridge_fallback) = solve_normal_equations(gram, &xty);
    LinearModel {
        theta: theta.as_slice().to_vec(),
        lambda: 0.0,
        converged: true,
        iterations: 0,
        ridge_fallback,
    }
}

// Pivot ratio below which the Cholesky factor is treated as singular.
const SINGULAR_RATIO: f64 = 1e-14;

fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let p = gram.nrows();
    if let Some(theta) = cholesky_solve(gram.clone(), rhs) {
        return (theta, false);
    }
    let trace = gram.trace();
    if !(trace > 0.0) {
        return (DVector::zeros(p), true);
    }
    let mut ridged = gram;
    let ridge = 1e-10 * trace / p as f64;
    for j in 0..p {
        ridged[(j, j)] += ridge;
    }
    let theta = ridged
        .cholesky()
        .map(|c| c.solve(rhs))
        .unwrap_or_else(|| DVector::zeros(p));
    (theta, true)
}

fn cholesky_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = gram.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(lo > 0.0) || (lo / hi).powi(2) < SINGULAR_RATIO {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Smallest `lambda` at which the all-zero model is optimal: `max_j |X_j^T y|`.
pub fn lambda_max(d: &Dataset) -> f64 {
    d.x()
        .tr_mul(&d.y_f64())
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Tolerance on the KKT residual that a converged fit must meet.
pub fn kkt_tolerance(lambda: f64) -> f64 {
    1e-4 * (1.0 + lambda)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Sufficient statistics of a least-squares problem, reusable across many
/// values of `lambda`.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl LassoProblem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        Ok(LassoProblem {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.norm_squared(),
        })
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        Self::new(d.x(), &d.y_f64()).expect("dataset shapes are consistent")
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// Column `j` of the Gram matrix as a contiguous slice.
    fn gram_col(&self, j: usize) -> &[f64] {
        let p = self.p();
        &self.gram.as_slice()[j * p..(j + 1) * p]
    }

    /// `1/2 ||y - X theta||^2 + lambda ||theta||_1`.
    pub fn objective(&self, theta: &[f64], lambda: f64) -> f64 {
        let t = DVector::from_column_slice(theta);
        let quad = t.dot(&(&self.gram * &t));
        0.5 * self.yty - self.xty.dot(&t) + 0.5 * quad + lambda * t.lp_norm(1)
    }

    /// Largest violation of the Lasso optimality conditions.
    pub fn kkt_residual(&self, theta: &[f64], lambda: f64) -> f64 {
        let t = DVector::from_column_slice(theta);
        let grad = &self.gram * &t - &self.xty;
        kkt_from_gradient(theta, grad.as_slice(), lambda)
    }

    /// Minimizes the objective by coordinate descent, optionally starting
    /// from `warm`.
    pub fn solve(
        &self,
        lambda: f64,
        warm: Option<&[f64]>,
        opts: &LassoOptions,
    ) -> Result<LinearModel> {
        self.solve_traced(lambda, warm, opts, |_| {})
    }

    /// Like [`solve`](Self::solve), calling `on_sweep` with the iterate after
    /// every sweep.
    pub fn solve_traced(
        &self,
        lambda: f64,
        warm: Option<&[f64]>,
        opts: &LassoOptions,
        mut on_sweep: impl FnMut(&[f64]),
    ) -> Result<LinearModel> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain {
                what: "lambda",
                value: lambda,
            });
        }
        let p = self.p();
        let mut theta = match warm {
            Some(w) if w.len() != p => {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: w.len(),
                })
            }
            Some(w) => w.to_vec(),
            None => vec![0.0; p],
        };
        let kkt_tol = kkt_tolerance(lambda);
        let mut grad_part = vec![0.0; p]; // gram * theta
        let mut iterations = 0;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::with_capacity(p);

        while iterations < opts.max_iter {
            self.refresh_product(&theta, &mut grad_part);
            let change = self.sweep(0..p, lambda, &mut theta, &mut grad_part);
            iterations += 1;
            on_sweep(&theta);
            if change < opts.tol {
                let grad: Vec<f64> = grad_part
                    .iter()
                    .zip(self.xty.iter())
                    .map(|(q, c)| q - c)
                    .collect();
                if kkt_from_gradient(&theta, &grad, lambda) <= kkt_tol {
                    converged = true;
                    break;
                }
            }
            active.clear();
            active.extend((0..p).filter(|&j| theta[j] != 0.0));
            while iterations < opts.max_iter {
                let change = self.sweep(active.iter().copied(), lambda, &mut theta, &mut grad_part);
                iterations += 1;
                on_sweep(&theta);
                if change < opts.tol {
                    break;
                }
            }
        }

        let model = LinearModel {
            theta,
            lambda,
            converged,
            iterations,
            ridge_fallback: false,
        };
        if converged {
            Ok(model)
        } else {
            Err(Error::NotConverged(Box::new(model)))
        }
    }

    fn refresh_product(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &tk) in theta.iter().enumerate() {
            if tk != 0.0 {
                for (o, g) in out.iter_mut().zip(self.gram_col(k)) {
                    *o += g * tk;
                }
            }
        }
    }

    /// One cyclic pass over `coords`; returns the largest coefficient change.
    fn sweep(
        &self,
        coords: impl Iterator<Item = usize>,
        lambda: f64,
        theta: &mut [f64],
        grad_part: &mut [f64],
    ) -> f64 {
        let mut max_change = 0.0f64;
        for j in coords {
            let gjj = self.gram[(j, j)];
            let old = theta[j];
            let new = if gjj > 0.0 {
                let rho = self.xty[j] - grad_part[j] + gjj * old;
                soft_threshold(rho, lambda) / gjj
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                theta[j] = new;
                for (q, g) in grad_part.iter_mut().zip(self.gram_col(j)) {
                    *q += delta * g;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }
    /// Exact solutions at each of `lambdas` (non-increasing) by following the
    /// piecewise-linear solution path down from `lambda_max` (LARS with the
    /// Lasso modification). Entries past the point where the active Gram
    /// block became numerically singular are `None`.
    pub(crate) fn homotopy(&self, lambdas: &[f64]) -> Vec<Option<Vec<f64>>> {
        let p = self.p();
        let mut out: Vec<Option<Vec<f64>>> = vec![None; lambdas.len()];
        let lmax = self.xty.amax();
        let mut next = 0;
        while next < lambdas.len() && lambdas[next] >= lmax {
            out[next] = Some(vec![0.0; p]);
            next += 1;
        }
        if next == lambdas.len() || lmax == 0.0 {
            return out;
        }

        let mut theta = vec![0.0; p];
        let mut active: Vec<usize> = Vec::new();
        let mut signs: Vec<f64> = Vec::new();
        let mut in_active = vec![false; p];
        let mut inv = ActiveInverse::new(p);
        let first = self.xty.iamax();
        if !inv.push(&[], self.gram[(first, first)]) {
            return out;
        }
        active.push(first);
        signs.push(self.xty[first].signum());
        in_active[first] = true;

        let mut lambda = lmax;
        // A variable that just changed status must not flip straight back on
        // rounding noise.
        let mut last_dropped: Option<usize> = None;
        let mut last_joined: Option<usize> = None;
        let mut corr: Vec<f64> = self.xty.iter().copied().collect();
        let mut a = vec![0.0; p];
        let (mut d, mut buf) = (Vec::new(), Vec::new());

        for step_no in 1..=(20 * p + 100) {
            inv.mul(&signs, &mut d);
            a.iter_mut().for_each(|v| *v = 0.0);
            for (&dk, &j) in d.iter().zip(&active) {
                for (ai, g) in a.iter_mut().zip(self.gram_col(j)) {
                    *ai += dk * g;
                }
            }

            enum Event {
                Target,
                Join(usize),
                Drop(usize),
            }
            let mut step = lambda - lambdas[next];
            let mut event = Event::Target;
            for j in 0..p {
                if in_active[j] || last_dropped == Some(j) {
                    continue;
                }
                for (num, den) in [
                    (lambda - corr[j], 1.0 - a[j]),
                    (lambda + corr[j], 1.0 + a[j]),
                ] {
                    if den > 1e-12 {
                        let g = (num / den).max(0.0);
                        if g < step {
                            step = g;
                            event = Event::Join(j);
                        }
                    }
                }
            }
            for (k, &j) in active.iter().enumerate() {
                if d[k] != 0.0 && last_joined != Some(j) {
                    let g = -theta[j] / d[k];
                    if g > 0.0 && g < step {
                        step = g;
                        event = Event::Drop(k);
                    }
                }
            }

            lambda -= step;
            for (&dk, &j) in d.iter().zip(&active) {
                theta[j] += step * dk;
            }
            for (c, ai) in corr.iter_mut().zip(&a) {
                *c -= step * ai;
            }
            last_dropped = None;
            last_joined = None;
            match event {
                Event::Target => lambda = lambdas[next],
                Event::Join(j) => {
                    let col = self.gram_col(j);
                    buf.clear();
                    buf.extend(active.iter().map(|&i| col[i]));
                    if !inv.push(&buf, col[j]) {
                        return out;
                    }
                    active.push(j);
                    signs.push(corr[j].signum());
                    in_active[j] = true;
                    last_joined = Some(j);
                }
                Event::Drop(k) => {
                    let j = active.swap_remove(k);
                    signs.swap_remove(k);
                    inv.swap_remove(k);
                    in_active[j] = false;
                    theta[j] = 0.0;
                    last_dropped = Some(j);
                }
            }

            // Re-solve on the active set so rounding does not accumulate, and
            // every few steps check the inverse and the correlations against
            // a fresh computation.
            let rhs: Vec<f64> = active
                .iter()
                .zip(&signs)
                .map(|(&j, s)| self.xty[j] - lambda * s)
                .collect();
            inv.mul(&rhs, &mut buf);
            if step_no % 16 == 0 {
                let drift = active
                    .iter()
                    .zip(&rhs)
                    .map(|(&r, b)| {
                        let row: f64 = active
                            .iter()
                            .zip(&buf)
                            .map(|(&c, x)| self.gram[(r, c)] * x)
                            .sum();
                        (row - b).abs()
                    })
                    .fold(0.0, f64::max);
                let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if drift > 1e-10 * scale {
                    if !inv.rebuild(&self.gram, &active) {
                        return out;
                    }
                    inv.mul(&rhs, &mut buf);
                }
            }
            for (&x, &j) in buf.iter().zip(&active) {
                theta[j] = x;
            }
            if step_no % 16 == 0 {
                corr.copy_from_slice(self.xty.as_slice());
                for &j in &active {
                    let tj = theta[j];
                    for (c, g) in corr.iter_mut().zip(self.gram_col(j)) {
                        *c -= tj * g;
                    }
                }
            }

            while next < lambdas.len() && lambdas[next] >= lambda {
                out[next] = Some(theta.clone());
                next += 1;
            }
            if next == lambdas.len() {
                break;
            }
        }
        out
    }
}

/// Inverse of the Gram block of the active variables, kept in a fixed-stride
/// buffer so that adding or removing a variable is an in-place `O(k^2)`
/// update.
struct ActiveInverse {
    stride: usize,
    k: usize,
    m: Vec<f64>,
}

impl ActiveInverse {
    fn new(capacity: usize) -> Self {
        ActiveInverse {
            stride: capacity,
            k: 0,
            m: vec![0.0; capacity * capacity],
        }
    }

    fn mul(&self, v: &[f64], out: &mut Vec<f64>) {
        // The matrix is symmetric, so accumulate scaled rows; this vectorizes
        // where a row-times-vector reduction would not.
        out.clear();
        out.resize(self.k, 0.0);
        for (r, &vr) in v.iter().enumerate().take(self.k) {
            let row = &self.m[r * self.stride..r * self.stride + self.k];
            for (o, m) in out.iter_mut().zip(row) {
                *o += vr * m;
            }
        }
    }

    /// Borders the block with a new variable whose Gram column restricted to
    /// the current active set is `b` and whose diagonal entry is `gjj`.
    /// Returns false when the enlarged block would be numerically singular.
    fn push(&mut self, b: &[f64], gjj: f64) -> bool {
        let (k, s) = (self.k, self.stride);
        let mut u = Vec::with_capacity(k);
        self.mul(b, &mut u);
        let schur = gjj - b.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
        if !(schur > 1e-12 * gjj) {
            return false;
        }
        for r in 0..k {
            let ur = u[r] / schur;
            let row = &mut self.m[r * s..r * s + k];
            for (m, uc) in row.iter_mut().zip(&u) {
                *m += ur * uc;
            }
            self.m[r * s + k] = -ur;
            self.m[k * s + r] = -ur;
        }
        self.m[k * s + k] = 1.0 / schur;
        self.k += 1;
        true
    }

    /// Removes variable `q`, moving the last one into its slot (matching
    /// `Vec::swap_remove`).
    fn swap_remove(&mut self, q: usize) {
        let (k, s) = (self.k, self.stride);
        let mqq = self.m[q * s + q];
        let col: Vec<f64> = (0..k).map(|r| self.m[r * s + q]).collect();
        for r in 0..k {
            let f = col[r] / mqq;
            let row = &mut self.m[r * s..r * s + k];
            for (m, c) in row.iter_mut().zip(&col) {
                *m -= f * c;
            }
        }
        let last = k - 1;
        if q != last {
            for c in 0..k {
                self.m[q * s + c] = self.m[last * s + c];
            }
            for r in 0..k {
                self.m[r * s + q] = self.m[r * s + last];
            }
        }
        self.k -= 1;
    }

    /// Recomputes the inverse from a Cholesky factorization; false when the
    /// block is numerically singular.
    fn rebuild(&mut self, gram: &DMatrix<f64>, active: &[usize]) -> bool {
        let k = active.len();
        let block = DMatrix::from_fn(k, k, |r, c| gram[(active[r], active[c])]);
        let Some(chol) = block.cholesky() else {
            return false;
        };
        let diag = chol.l_dirty().diagonal();
        if !(diag.min() > 1e-7 * diag.max()) {
            return false;
        }
        let inv = chol.inverse();
        for r in 0..k {
            for c in 0..k {
                self.m[r * self.stride + c] = inv[(r, c)];
            }
        }
        self.k = k;
        true
    }
}

fn kkt_from_gradient(theta: &[f64], grad: &[f64], lambda: f64) -> f64 {
    theta
        .iter()
        .zip(grad)
        .map(|(&t, &g)| {
            if t != 0.0 {
                (g + lambda * t.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso fit from a cold start.
pub fn fit_lasso(d: &Dataset, lambda: f64, opts: &LassoOptions) -> Result<LinearModel> {
    LassoProblem::from_dataset(d).solve(lambda, None, opts)
}

/// Lasso fits for every value in `grid`, returned in grid order.
///
/// The path is traversed from the largest `lambda` down. Each coordinate
/// descent run is warm-started from the exact homotopy solution at that
/// `lambda` when one is available, and from the previous (sparser) fit
/// otherwise.
pub fn fit_path(d: &Dataset, grid: &LambdaGrid, opts: &LassoOptions) -> Vec<Result<LinearModel>> {
    let problem = LassoProblem::from_dataset(d);
    solve_path(&problem, grid, opts)
}

pub(crate) fn solve_path(
    problem: &LassoProblem,
    grid: &LambdaGrid,
    opts: &LassoOptions,
) -> Vec<Result<LinearModel>> {
    let descending: Vec<f64> = grid.values().iter().rev().copied().collect();
    let exact = problem.homotopy(&descending);
    let mut out: Vec<Result<LinearModel>> = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for (&lambda, start) in descending.iter().zip(exact) {
        let start = start.or_else(|| warm.take());
        let fit = problem.solve(lambda, start.as_deref(), opts);
        warm = Some(match &fit {
            Ok(m) => m.theta.clone(),
            Err(Error::NotConverged(m)) => m.theta.clone(),
            Err(_) => vec![0.0; problem.p()],
        });
        out.push(fit);
    }
    out.reverse();
    out
}

/// Labels `sign(x . theta)`, with `sign(0) = +1`.
pub fn predict(model: &LinearModel, x: &DMatrix<f64>) -> Result<Vec<i8>> {
    predict_theta(&model.theta, x)
}

pub(crate) fn predict_theta(theta: &[f64], x: &DMatrix<f64>) -> Result<Vec<i8>> {
    if x.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            actual: x.ncols(),
        });
    }
    let scores = x * DVector::from_column_slice(theta);
    Ok(scores
        .iter()
        .map(|&s| if s >= 0.0 { 1 } else { -1 })
        .collect())
}
