//! Bounded-variable revised simplex for small dense linear programs.
//!
//! Solves `max c'x  s.t.  Ax = b,  0 <= x <= u` with `u` possibly infinite. The basis
//! inverse is kept explicitly and rebuilt every [`REFACTOR_EVERY`] pivots. Phase one
//! drives one artificial per row out of the objective. Pricing is Dantzig's rule;
//! after [`STALL_LIMIT`] non-improving pivots it switches to Bland's rule until the
//! objective moves again.

use crate::error::{Error, Result};

pub const REFACTOR_EVERY: usize = 50;
pub const STALL_LIMIT: usize = 100;

const PIVOT_TOL: f64 = 1e-11;
const SINGULAR_TOL: f64 = 1e-14;

/// A linear program in equality form with box bounds `[0, upper]`.
#[derive(Debug, Clone)]
pub struct Lp {
    rhs: Vec<f64>,
    cols: Vec<Vec<f64>>,
    cost: Vec<f64>,
    upper: Vec<f64>,
    /// Reduced-cost optimality tolerance.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers `y` with `c_B' = y' B`; optimal for the dual program.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl Lp {
    pub fn new(rhs: Vec<f64>) -> Self {
        Self {
            rhs,
            cols: Vec::new(),
            cost: Vec::new(),
            upper: Vec::new(),
            tolerance: 1e-11,
        }
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn columns(&self) -> usize {
        self.cols.len()
    }

    /// Add a variable with column `col`, objective coefficient `cost` and bounds `[0, upper]`.
    pub fn add_column(&mut self, col: Vec<f64>, cost: f64, upper: f64) -> Result<usize> {
        if col.len() != self.rows() {
            return Err(Error::Lp(format!(
                "column of length {} for {} rows",
                col.len(),
                self.rows()
            )));
        }
        if !(upper >= 0.0) {
            return Err(Error::Lp(format!("negative upper bound {upper}")));
        }
        self.cols.push(col);
        self.cost.push(cost);
        self.upper.push(upper);
        Ok(self.cols.len() - 1)
    }

    pub fn maximize(&self) -> Result<LpSolution> {
        Simplex::new(self).run()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Simplex {
    m: usize,
    n: usize,
    /// Row signs applied so the right-hand side is nonnegative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    /// Structural columns (row-flipped) followed by one unit artificial per row.
    cols: Vec<Vec<f64>>,
    cost: Vec<f64>,
    original_cost: Vec<f64>,
    upper: Vec<f64>,
    tol: f64,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl Simplex {
    fn new(lp: &Lp) -> Self {
        let m = lp.rows();
        let n = lp.columns();
        let sign: Vec<f64> = lp.rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = lp.rhs.iter().zip(&sign).map(|(b, s)| b * s).collect();
        let mut cols: Vec<Vec<f64>> = lp
            .cols
            .iter()
            .map(|c| c.iter().zip(&sign).map(|(a, s)| a * s).collect())
            .collect();
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            cols.push(e);
        }
        let mut upper = lp.upper.clone();
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut x = vec![0.0; n + m];
        x[n..].copy_from_slice(&rhs);
        let mut status = vec![Status::Lower; n + m];
        status[n..].fill(Status::Basic);
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Self {
            m,
            n,
            sign,
            rhs,
            cols,
            cost: vec![0.0; n + m],
            original_cost: lp.cost.clone(),
            upper,
            tol: lp.tolerance,
            x,
            status,
            basis: (n..n + m).collect(),
            binv,
            pivots: 0,
            since_refactor: 0,
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        // Phase one: maximize minus the sum of artificials.
        self.cost[self.n..].fill(-1.0);
        self.optimize()?;
        let infeas: f64 = self.x[self.n..].iter().sum();
        let scale = 1.0 + self.rhs.iter().fold(0.0_f64, |a, b| a.max(*b));
        if infeas > 1e-9 * scale {
            return Err(Error::Lp(format!("infeasible (phase one residual {infeas:.3e})")));
        }
        // Phase two: artificials are pinned at zero and never re-enter.
        self.cost[self.n..].fill(0.0);
        self.upper[self.n..].fill(0.0);
        for j in self.n..self.n + self.m {
            if self.status[j] != Status::Basic {
                self.x[j] = 0.0;
            }
        }
        self.cost[..self.n].copy_from_slice(&self.original_cost);
        self.optimize()?;

        let duals = self.multipliers().iter().zip(&self.sign).map(|(y, s)| y * s).collect();
        let x = self.x[..self.n].to_vec();
        let objective = x.iter().zip(&self.original_cost).map(|(x, c)| x * c).sum();
        Ok(LpSolution {
            x,
            objective,
            duals,
            pivots: self.pivots,
        })
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    fn multipliers(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let c = self.cost[b];
            if c != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += c * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| self.binv[i * m..(i + 1) * m].iter().zip(col).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn objective(&self) -> f64 {
        self.x.iter().zip(&self.cost).map(|(x, c)| x * c).sum()
    }

    /// Entering variable and its reduced cost, or `None` at optimality.
    fn price(&self, y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == Status::Basic || self.upper[j] <= 0.0 {
                continue;
            }
            let d = self.cost[j] - y.iter().zip(self.column(j)).map(|(a, b)| a * b).sum::<f64>();
            let eligible = match st {
                Status::Lower => d > self.tol,
                Status::Upper => d < -self.tol,
                Status::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn optimize(&mut self) -> Result<()> {
        let limit = 50_000 + 50 * (self.n + self.m);
        let mut stalled = 0;
        let mut last = self.objective();
        let mut iterations = 0;
        loop {
            if iterations > limit {
                return Err(Error::Lp(format!("no convergence after {limit} iterations")));
            }
            iterations += 1;
            let y = self.multipliers();
            let Some((j, d)) = self.price(&y, stalled >= STALL_LIMIT) else {
                // Confirm optimality against a fresh factorization.
                if self.since_refactor == 0 {
                    return Ok(());
                }
                self.refactor()?;
                continue;
            };
            self.step(j, d)?;
            let obj = self.objective();
            if obj > last + 1e-13 * (1.0 + last.abs()) {
                stalled = 0;
                last = obj;
            } else {
                stalled += 1;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    fn step(&mut self, j: usize, d: f64) -> Result<()> {
        let dir = if d > 0.0 { 1.0 } else { -1.0 };
        let alpha = self.ftran(&self.cols[j]);
        let mut theta = self.upper[j];
        let mut leave: Option<(usize, Status)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            let a = dir * a;
            let b = self.basis[i];
            let (t, bound) = if a > PIVOT_TOL {
                (self.x[b].max(0.0) / a, Status::Lower)
            } else if a < -PIVOT_TOL && self.upper[b].is_finite() {
                ((self.upper[b] - self.x[b]).max(0.0) / -a, Status::Upper)
            } else {
                continue;
            };
            let better = match leave {
                _ if t < theta => true,
                // Ties go to the smallest variable index (Bland).
                Some((r, _)) if t == theta => b < self.basis[r],
                _ => false,
            };
            if better {
                theta = t;
                leave = Some((i, bound));
            }
        }
        if theta.is_infinite() {
            return Err(Error::Lp("unbounded".into()));
        }
        self.x[j] += dir * theta;
        for (i, a) in alpha.iter().enumerate() {
            self.x[self.basis[i]] -= dir * theta * a;
        }
        match leave {
            None => {
                self.status[j] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                self.x[j] = if dir > 0.0 { self.upper[j] } else { 0.0 };
            }
            Some((r, bound)) => {
                let out = self.basis[r];
                self.status[out] = bound;
                self.x[out] = if bound == Status::Upper { self.upper[out] } else { 0.0 };
                self.basis[r] = j;
                self.status[j] = Status::Basic;
                self.pivot(r, &alpha);
            }
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let pr = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= pr;
        }
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[r * m + k];
            }
        }
        self.pivots += 1;
        self.since_refactor += 1;
    }

    /// Rebuild `B^-1` by Gauss-Jordan elimination and recompute the basic values.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (i, &b) in self.basis.iter().enumerate() {
            for (k, v) in self.cols[b].iter().enumerate() {
                a[k * m + i] = *v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .expect("non-empty range");
            if a[p * m + c].abs() < SINGULAR_TOL {
                return Err(Error::Lp("singular basis".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for i in 0..m {
                let f = a[i * m + c];
                if i == c || f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[i * m + k] -= f * a[c * m + k];
                    inv[i * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;

        let mut rhs = self.rhs.clone();
        for j in 0..self.n + self.m {
            if self.status[j] == Status::Upper {
                for (r, a) in rhs.iter_mut().zip(&self.cols[j]) {
                    *r -= self.upper[j] * a;
                }
            }
        }
        let xb = self.ftran(&rhs);
        for (i, v) in xb.into_iter().enumerate() {
            self.x[self.basis[i]] = v;
        }
        Ok(())
    }
}
