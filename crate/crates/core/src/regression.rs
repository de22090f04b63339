//! Polynomial surfaces in `(lambda, alpha)` fitted by least absolute deviations, optionally
//! constrained to be nonincreasing in both arguments.
//!
//! Weights are reported over the monomial basis `lambda^i alpha^j`, `i + j <= degree`,
//! ordered by total degree and then by decreasing `i`. The linear program itself is set
//! up in the shifted Legendre product basis, which spans the same space and is far
//! better conditioned on the unit square; the solution is converted afterwards.
//!
//! The l1 fit `min sum |Phi w - z|` subject to `D w <= 0` is solved through its dual
//!
//! ```text
//! max  z'u + margin'mu   s.t.  Phi'u - D'mu (+ v) = Phi'1 (+ eta 1),
//!      0 <= u <= 2,  mu >= 0,  0 <= v <= 2 eta,
//! ```
//!
//! whose simplex multipliers are the primal weights. `eta > 0` adds `eta |w|_1` to the
//! primal objective and is only used when the design matrix is rank deficient.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lp::Lp;

/// Tie-break weight on `|w|_1` for rank-deficient designs.
pub const RANK_DEFICIENT_ETA: f64 = 1e-9;
/// Required slack of each (row-normalized) derivative constraint.
const MONOTONE_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFit {
    pub degree: u32,
    pub weights: Vec<f64>,
    pub constrained: bool,
}

/// Rectangular grid over `[0, 1] x [alpha_lo, alpha_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGrid {
    pub lambda_points: usize,
    pub alpha_points: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl Default for ConstraintGrid {
    fn default() -> Self {
        Self::square(50)
    }
}

impl ConstraintGrid {
    pub fn square(points: usize) -> Self {
        Self {
            lambda_points: points,
            alpha_points: points,
            alpha_lo: 0.005,
            alpha_hi: 0.995,
        }
    }

    /// The same box sampled `factor` times more densely per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            lambda_points: (self.lambda_points - 1) * factor + 1,
            alpha_points: (self.alpha_points - 1) * factor + 1,
            ..*self
        }
    }

    fn axis(n: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
        (0..n).map(move |k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        Self::axis(self.lambda_points, 0.0, 1.0).flat_map(move |l| {
            Self::axis(self.alpha_points, self.alpha_lo, self.alpha_hi).map(move |a| (l, a))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_points < 2 || self.alpha_points < 2 {
            return Err(invalid("constraint_grid", "needs at least 2 points per axis"));
        }
        if !(0.0 < self.alpha_lo && self.alpha_lo < self.alpha_hi && self.alpha_hi < 1.0) {
            return Err(invalid("constraint_grid", "alpha range must satisfy 0 < lo < hi < 1"));
        }
        Ok(())
    }
}

/// `(i, j)` exponents of `lambda^i alpha^j` in weight order.
pub fn basis_exponents(degree: u32) -> Vec<(u32, u32)> {
    (0..=degree)
        .flat_map(|d| (0..=d).rev().map(move |i| (i, d - i)))
        .collect()
}

pub fn basis_size(degree: u32) -> usize {
    ((degree + 1) * (degree + 2) / 2) as usize
}

/// Monomial coefficients of the shifted Legendre polynomials `L_0..=L_degree` on `[0, 1]`.
fn legendre_monomials(degree: u32) -> Vec<Vec<f64>> {
    // L_n(x) = sum_k (-1)^(n+k) C(n,k) C(n+k,k) x^k
    (0..=degree as u64)
        .map(|n| {
            (0..=n)
                .map(|k| {
                    let s = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
                    s * binomial(n, k) * binomial(n + k, k)
                })
                .collect()
        })
        .collect()
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Values and first derivatives of `L_0..=L_degree` at `x` in `[0, 1]`.
fn legendre(degree: u32, x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = degree as usize + 1;
    let t = 2.0 * x - 1.0;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    p[0] = 1.0;
    if n > 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for k in 1..n - 1 {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    // Chain rule for t = 2x - 1.
    dp.iter_mut().for_each(|d| *d *= 2.0);
    (p, dp)
}

struct LegendreRow {
    value: Vec<f64>,
    d_lambda: Vec<f64>,
    d_alpha: Vec<f64>,
}

fn legendre_row(exps: &[(u32, u32)], degree: u32, lambda: f64, alpha: f64) -> LegendreRow {
    let (pl, dpl) = legendre(degree, lambda);
    let (pa, dpa) = legendre(degree, alpha);
    let mut row = LegendreRow {
        value: Vec::with_capacity(exps.len()),
        d_lambda: Vec::with_capacity(exps.len()),
        d_alpha: Vec::with_capacity(exps.len()),
    };
    for &(i, j) in exps {
        let (i, j) = (i as usize, j as usize);
        row.value.push(pl[i] * pa[j]);
        row.d_lambda.push(dpl[i] * pa[j]);
        row.d_alpha.push(pl[i] * dpa[j]);
    }
    row
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn numerical_rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let n_rows = a.len();
    let n_cols = a.first().map_or(0, Vec::len);
    let scale = a.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut col_of: Vec<usize> = (0..n_cols).collect();
    let mut rank = 0;
    while rank < n_rows.min(n_cols) {
        let mut best = (rank, rank, 0.0);
        for (r, row) in a.iter().enumerate().skip(rank) {
            for c in rank..n_cols {
                let v = row[col_of[c]].abs();
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        if best.2 <= rel_tol * scale {
            break;
        }
        a.swap(rank, best.0);
        col_of.swap(rank, best.1);
        let pc = col_of[rank];
        let pivot_row = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[pc] / pivot_row[pc];
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
        }
        rank += 1;
    }
    rank
}

/// Least-absolute-deviation polynomial fit of `values` at `points`.
///
/// With `grid`, both partial derivatives are constrained to be nonpositive at every grid
/// point, and at every point of the [`REFINE_FACTOR`]-times finer grid where the first
/// solution still increases (added in rounds).
pub fn fit_surface(
    points: &[(f64, f64)],
    values: &[f64],
    degree: u32,
    grid: Option<&ConstraintGrid>,
) -> Result<MonotoneFit> {
    if points.is_empty() || points.len() != values.len() {
        return Err(invalid("data", "need equally many points and values, at least one"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("data", "observations must be finite"));
    }
    if let Some(g) = grid {
        g.validate()?;
    }
    let exps = basis_exponents(degree);
    let m = exps.len();
    let design: Vec<Vec<f64>> = points
        .iter()
        .map(|&(l, a)| legendre_row(&exps, degree, l, a).value)
        .collect();

    let rank = numerical_rank(&design, 1e-10);
    let eta = if rank < m {
        warn!("design matrix has rank {rank} < {m} basis terms; using a minimum-norm tie-break");
        RANK_DEFICIENT_ETA
    } else {
        0.0
    };

    let Some(grid) = grid else {
        let coef = solve_l1(&design, values, eta, &exps, degree, &[])?;
        return Ok(MonotoneFit {
            degree,
            weights: to_monomial(&exps, degree, &coef),
            constrained: false,
        });
    };
    // Cutting planes: add the violated points of the refined grid until it is clean.
    let fine = grid.refined(REFINE_FACTOR);
    let mut cuts: Vec<(f64, f64)> = grid.points().collect();
    for round in 0..MAX_CUT_ROUNDS {
        let coef = solve_l1(&design, values, eta, &exps, degree, &cuts)?;
        let fit = MonotoneFit {
            degree,
            weights: to_monomial(&exps, degree, &coef),
            constrained: true,
        };
        let violated: Vec<(f64, f64)> = fine
            .points()
            .filter(|&(l, a)| {
                let (dl, da) = fit.gradient(l, a);
                dl.max(da) > 0.0
            })
            .collect();
        if violated.is_empty() || round + 1 == MAX_CUT_ROUNDS {
            if !violated.is_empty() {
                warn!("{} refined-grid points still increasing after {MAX_CUT_ROUNDS} rounds", violated.len());
            }
            return Ok(fit);
        }
        log::debug!("round {round}: adding {} constraint points", violated.len());
        cuts.extend(violated);
    }
    unreachable!("loop returns on its last round")
}

/// Refinement factor of the post-hoc monotonicity check.
pub const REFINE_FACTOR: usize = 4;
const MAX_CUT_ROUNDS: usize = 8;

/// Legendre coefficients of the l1 fit with nonincreasing constraints at `cuts`.
fn solve_l1(
    design: &[Vec<f64>],
    values: &[f64],
    eta: f64,
    exps: &[(u32, u32)],
    degree: u32,
    cuts: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let m = exps.len();
    // Right-hand side Phi'1 + eta 1.
    let mut rhs = vec![eta; m];
    for row in design {
        for (b, v) in rhs.iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut lp = Lp::new(rhs);
    for (row, z) in design.iter().zip(values) {
        lp.add_column(row.clone(), *z, 2.0)?;
    }
    for &(l, a) in cuts {
        let row = legendre_row(exps, degree, l, a);
        for d in [row.d_lambda, row.d_alpha] {
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            // Column -D_k / |D_k|; its cost asks for D_k w <= -margin |D_k|.
            lp.add_column(d.iter().map(|v| -v / norm).collect(), MONOTONE_MARGIN, f64::INFINITY)?;
        }
    }
    if eta > 0.0 {
        for k in 0..m {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            lp.add_column(e, 0.0, 2.0 * eta)?;
        }
    }
    let sol = lp.maximize()?;
    log::debug!("l1 fit: {} pivots, {} columns", sol.pivots, lp.columns());
    Ok(sol.duals)
}

fn to_monomial(exps: &[(u32, u32)], degree: u32, legendre_coef: &[f64]) -> Vec<f64> {
    let lm = legendre_monomials(degree);
    let d = degree as usize + 1;
    let mut dense = vec![0.0; d * d];
    for (&(i, j), c) in exps.iter().zip(legendre_coef) {
        for (a, la) in lm[i as usize].iter().enumerate() {
            for (b, lb) in lm[j as usize].iter().enumerate() {
                dense[a * d + b] += c * la * lb;
            }
        }
    }
    exps.iter().map(|&(i, j)| dense[i as usize * d + j as usize]).collect()
}

impl MonotoneFit {
    pub fn zero(degree: u32) -> Self {
        Self {
            degree,
            weights: vec![0.0; basis_size(degree)],
            constrained: false,
        }
    }

    /// Coefficient table `c[i][j]` of `lambda^i alpha^j`.
    fn table(&self) -> Vec<Vec<f64>> {
        let d = self.degree as usize;
        let mut c: Vec<Vec<f64>> = (0..=d).map(|i| vec![0.0; d + 1 - i]).collect();
        for (&(i, j), w) in basis_exponents(self.degree).iter().zip(&self.weights) {
            c[i as usize][j as usize] = *w;
        }
        c
    }

    pub fn evaluate(&self, lambda: f64, alpha: f64) -> f64 {
        horner(&self.table().iter().map(|row| horner(row, alpha)).collect::<Vec<_>>(), lambda)
    }

    /// `(d/d lambda, d/d alpha)` of the surface.
    pub fn gradient(&self, lambda: f64, alpha: f64) -> (f64, f64) {
        let c = self.table();
        let in_alpha: Vec<f64> = c.iter().map(|row| horner(row, alpha)).collect();
        let d_in_alpha: Vec<f64> = c.iter().map(|row| horner_derivative(row, alpha)).collect();
        (horner_derivative(&in_alpha, lambda), horner(&d_in_alpha, lambda))
    }

    pub fn l1_error(&self, points: &[(f64, f64)], values: &[f64]) -> f64 {
        points
            .iter()
            .zip(values)
            .map(|(&(l, a), z)| (self.evaluate(l, a) - z).abs())
            .sum()
    }

    /// Largest partial derivative over `grid`; nonpositive means nonincreasing there.
    pub fn max_partial(&self, grid: &ConstraintGrid) -> f64 {
        grid.points()
            .map(|(l, a)| {
                let (dl, da) = self.gradient(l, a);
                dl.max(da)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn horner_derivative(coef: &[f64], x: f64) -> f64 {
    coef.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
}
