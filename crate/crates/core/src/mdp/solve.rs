use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::MdpInstance;
use crate::price::PriceGrid;
use crate::risk::{mean_cvar_atoms, RiskSchedule};
use crate::scalar::Scalar;

/// Value, post-decision value and threshold tables of a solved horizon-`T` problem.
///
/// Tables are price-major: entry `(t, p, r)` lives at `(t * n_prices + p) * n_levels + r`.
#[derive(Debug, Clone)]
pub struct MdpSolution<S> {
    pub horizon: usize,
    pub r_max: u32,
    pub x_max: u32,
    pub grid: PriceGrid,
    c_f: S,
    price_kwh: Vec<S>,
    values: Vec<S>,
    post_values: Vec<S>,
    thresholds: Vec<u32>,
}

struct Column<S> {
    post: Vec<S>,
    value: Vec<S>,
    threshold: u32,
}

/// Risk-averse backward induction.
///
/// `V_T(r, p) = rho_{beta_T}[compensation]`; for `t < T`,
/// `post(r', p) = rho_{beta_t}[V_{t+1}(r', P_{t+1}(p))]` and
/// `V_t(r, p) = min_x x p - c_f + post(r + x, p)`. The threshold is the smallest minimizer
/// of `r' p + post(r', p)` over all levels.
pub fn solve<S: Scalar>(inst: &MdpInstance<S>, beta: &RiskSchedule<S>) -> Result<MdpSolution<S>> {
    let horizon = inst.horizon;
    if beta.horizon() != horizon {
        return Err(Error::Inconsistent(format!(
            "risk schedule covers horizon {}, instance has {horizon}",
            beta.horizon()
        )));
    }
    let (n_p, n_r) = (inst.n_prices(), inst.n_levels());
    let slab = n_p * n_r;
    let mut values: Vec<S> = vec![S::zero(); (horizon + 1) * slab];
    let mut post_values: Vec<S> = vec![S::zero(); horizon * slab];
    let mut thresholds = vec![0u32; horizon * n_p];

    let beta_t = beta.at(horizon);
    let terminal: Vec<Vec<S>> = (0..n_p)
        .into_par_iter()
        .map_init(Vec::new, |scratch, p| {
            (0..n_r as u32)
                .map(|r| {
                    let (costs, probs) = inst.terminal_outcomes(r, p);
                    mean_cvar_atoms(costs, probs, beta_t, scratch)
                })
                .collect()
        })
        .collect();
    for (p, col) in terminal.into_iter().enumerate() {
        let base = horizon * slab + p * n_r;
        values[base..base + n_r].clone_from_slice(&col);
    }
    check_finite(&values[horizon * slab..], horizon, inst)?;

    for t in (0..horizon).rev() {
        let rp = beta.at(t);
        let next = &values[(t + 1) * slab..(t + 2) * slab];
        let columns: Vec<Column<S>> = (0..n_p)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(scratch, outcome), p| {
                    let (targets, probs) = inst.transition(t, p);
                    let post: Vec<S> = (0..n_r)
                        .map(|r| {
                            outcome.clear();
                            outcome.extend(targets.iter().map(|q| next[q * n_r + r].clone()));
                            mean_cvar_atoms(outcome, probs, rp, scratch)
                        })
                        .collect();
                    decide(&post, inst.price_kwh(p), inst.c_f(), inst.cfg.x_max)
                },
            )
            .collect();
        for (p, col) in columns.into_iter().enumerate() {
            let base = p * n_r;
            post_values[t * slab + base..t * slab + base + n_r].clone_from_slice(&col.post);
            values[t * slab + base..t * slab + base + n_r].clone_from_slice(&col.value);
            thresholds[t * n_p + p] = col.threshold;
        }
        check_finite(&values[t * slab..(t + 1) * slab], t, inst)?;
    }

    Ok(MdpSolution {
        horizon,
        r_max: inst.cfg.r_max,
        x_max: inst.cfg.x_max,
        grid: inst.grid,
        c_f: inst.c_f().clone(),
        price_kwh: (0..n_p).map(|p| inst.price_kwh(p).clone()).collect(),
        values,
        post_values,
        thresholds,
    })
}

fn decide<S: Scalar>(post: &[S], price: &S, c_f: &S, x_max: u32) -> Column<S> {
    let n_r = post.len();
    let objective: Vec<S> = post
        .iter()
        .enumerate()
        .map(|(r, v)| S::lit(r as f64) * price.clone() + v.clone())
        .collect();
    let threshold = smallest_minimizer(&objective).0 as u32;
    let value = (0..n_r)
        .map(|r| bellman_min(post, r, price, c_f, x_max).1)
        .collect();
    Column {
        post: post.to_vec(),
        value,
        threshold,
    }
}

/// Index of the first entry within the tie tolerance of the minimum, and the minimum.
fn smallest_minimizer<S: Scalar>(values: &[S]) -> (usize, S) {
    let min = values
        .iter()
        .cloned()
        .reduce(S::min_of)
        .expect("non-empty objective");
    let cutoff = min.clone() + S::tie_tolerance(&min);
    let index = values
        .iter()
        .position(|v| *v <= cutoff)
        .expect("minimum is attained");
    (index, min)
}

/// Smallest minimizing action and the minimum of `x p - c_f + post(r + x)`.
fn bellman_min<S: Scalar>(post: &[S], r: usize, price: &S, c_f: &S, x_max: u32) -> (u32, S) {
    let top = (post.len() - 1).min(r + x_max as usize);
    let objective: Vec<S> = (r..=top)
        .map(|level| S::lit((level - r) as f64) * price.clone() - c_f.clone() + post[level].clone())
        .collect();
    let (x, min) = smallest_minimizer(&objective);
    (x as u32, min)
}

fn check_finite<S: Scalar>(slab: &[S], t: usize, inst: &MdpInstance<S>) -> Result<()> {
    let n_r = inst.n_levels();
    match slab.iter().position(|v| !v.is_finite_value()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite {
            t,
            r: (i % n_r) as u32,
            p: inst.grid.point(i / n_r),
        }),
    }
}

impl<S: Scalar> MdpSolution<S> {
    pub fn n_prices(&self) -> usize {
        self.grid.len()
    }

    pub fn n_levels(&self) -> usize {
        self.r_max as usize + 1
    }

    fn idx(&self, t: usize, r: u32, p: usize) -> usize {
        (t * self.n_prices() + p) * self.n_levels() + r as usize
    }

    /// `V_{t,T}(r, p)` for `t = 0..=T`.
    pub fn value(&self, t: usize, r: u32, p: usize) -> &S {
        &self.values[self.idx(t, r, p)]
    }

    /// Post-decision value for `t < T`.
    pub fn post_value(&self, t: usize, r: u32, p: usize) -> &S {
        &self.post_values[self.idx(t, r, p)]
    }

    /// Basestock level `r_{t,T}(p)` for `t < T`.
    pub fn threshold(&self, t: usize, p: usize) -> u32 {
        self.thresholds[t * self.n_prices() + p]
    }

    pub fn c_f(&self) -> &S {
        &self.c_f
    }

    pub fn price_kwh(&self, p: usize) -> &S {
        &self.price_kwh[p]
    }

    fn post_column(&self, t: usize, p: usize) -> &[S] {
        let start = self.idx(t, 0, p);
        &self.post_values[start..start + self.n_levels()]
    }

    /// Greedy action read straight from the value tables (smallest minimizer).
    pub fn bellman_action(&self, t: usize, r: u32, p: usize) -> u32 {
        bellman_min(self.post_column(t, p), r as usize, self.price_kwh(p), &self.c_f, self.x_max).0
    }

    /// Right-hand side of the Bellman equation at `(t, r, p)`, from stored tables.
    pub fn bellman_rhs(&self, t: usize, r: u32, p: usize) -> S {
        bellman_min(self.post_column(t, p), r as usize, self.price_kwh(p), &self.c_f, self.x_max).1
    }

    /// Basestock action `min(r_t(p) - r, x_max) 1{r <= r_t(p)}` at grid price `p`.
    pub fn threshold_action(&self, t: usize, r: u32, p: usize) -> u32 {
        let level = self.threshold(t, p);
        if r <= level {
            (level - r).min(self.x_max)
        } else {
            0
        }
    }

    /// Basestock action at an arbitrary price; off-grid prices use the nearest grid price.
    pub fn greedy_action(&self, t: usize, r: u32, price: f64) -> Result<u32> {
        if t >= self.horizon {
            return Err(Error::NotDecisionPeriod {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.threshold_action(t, r, self.grid.nearest(price)))
    }

    pub fn threshold_table(&self) -> ThresholdTable {
        ThresholdTable {
            horizon: self.horizon,
            x_max: self.x_max,
            grid: self.grid,
            thresholds: self.thresholds.clone(),
        }
    }

    /// Overwrite one value entry. Only meant for negative controls of the checks.
    pub fn corrupt_value(&mut self, t: usize, r: u32, p: usize, value: S) {
        let i = self.idx(t, r, p);
        self.values[i] = value;
    }

    /// `t,p,threshold` rows.
    pub fn write_thresholds_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,p,threshold")?;
        for t in 0..self.horizon {
            for p in 0..self.n_prices() {
                writeln!(out, "{t},{:.6},{}", self.grid.point(p), self.threshold(t, p))?;
            }
        }
        Ok(())
    }

    /// `r,p,value` rows of `V_{t,T}`.
    pub fn write_value_slice_csv<W: Write>(&self, t: usize, mut out: W) -> Result<()> {
        writeln!(out, "r,p,value")?;
        for r in 0..=self.r_max {
            for p in 0..self.n_prices() {
                writeln!(out, "{r},{:.6},{:.9}", self.grid.point(p), self.value(t, r, p).as_f64())?;
            }
        }
        Ok(())
    }
}

/// The policy part of a solution: thresholds only, for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub horizon: usize,
    pub x_max: u32,
    pub grid: PriceGrid,
    thresholds: Vec<u32>,
}

impl ThresholdTable {
    /// `thresholds` is period-major: entry `t * grid.len() + p`.
    pub fn new(horizon: usize, x_max: u32, grid: PriceGrid, thresholds: Vec<u32>) -> Result<Self> {
        if thresholds.len() != horizon * grid.len() {
            return Err(Error::Inconsistent(format!(
                "{} thresholds for {horizon} periods and {} prices",
                thresholds.len(),
                grid.len()
            )));
        }
        Ok(Self {
            horizon,
            x_max,
            grid,
            thresholds,
        })
    }

    pub fn threshold(&self, t: usize, p: usize) -> u32 {
        self.thresholds[t * self.grid.len() + p]
    }

    pub fn greedy_action(&self, t: usize, r: u32, price: f64) -> Result<u32> {
        if t >= self.horizon {
            return Err(Error::NotDecisionPeriod {
                t,
                horizon: self.horizon,
            });
        }
        let level = self.threshold(t, self.grid.nearest(price));
        Ok(if r <= level { (level - r).min(self.x_max) } else { 0 })
    }
}
