//! Seasonal mean-reverting jump-diffusion spot prices at 15-minute resolution.
//!
//! `P_t = g(t) + Y_t` with
//! `Y_{t+1} = Y_t e^{-kappa} + mu_Y (1 - e^{-kappa}) + xi + X J`, where `xi` is the exact
//! one-step Ornstein-Uhlenbeck noise, `X` a Bernoulli jump indicator and `J` a normal jump.
//! Conditional on `P_t = p`, the next price is `p e^{-kappa} + psi_{t+1}` with `psi_{t+1}`
//! independent of `p`; the solver works with an integer discretization of `psi_{t+1}` and
//! an integer-spaced price grid.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dist::DiscreteDist;
use crate::error::{invalid, Error, Result};

/// Outcomes of the discretized noise below this probability are dropped.
pub const DEFAULT_TRIM: f64 = 1.5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModelParams {
    #[serde(rename = "kappa_Y")]
    pub kappa_y: f64,
    #[serde(rename = "mu_Y")]
    pub mu_y: f64,
    #[serde(rename = "sigma_Y")]
    pub sigma_y: f64,
    #[serde(rename = "mu_J")]
    pub mu_j: f64,
    #[serde(rename = "sigma_J")]
    pub sigma_j: f64,
    pub jump_prob: f64,
    pub seas_a: f64,
    pub seas_b: f64,
    pub seas_c: f64,
    pub seas_period: u32,
}

impl PriceModelParams {
    /// CAISO winter 2016-17 fit (15-minute market, 48-period seasonal cycle).
    pub fn caiso_winter() -> Self {
        Self {
            kappa_y: 0.341,
            mu_y: -0.492,
            sigma_y: 5.350,
            mu_j: -0.484,
            sigma_j: 40.602,
            jump_prob: 0.131,
            seas_a: 13.586,
            seas_b: -0.7597,
            seas_c: 34.1362,
            seas_period: 48,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_y > 0.0 && self.kappa_y.is_finite()) {
            return Err(invalid("kappa_Y", "must be positive"));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(invalid("sigma_Y", "must be positive"));
        }
        if !(self.sigma_j >= 0.0 && self.sigma_j.is_finite()) {
            return Err(invalid("sigma_J", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return Err(invalid("jump_prob", "must lie in [0, 1]"));
        }
        if self.seas_period < 1 {
            return Err(invalid("seas_period", "must be at least 1"));
        }
        for (field, v) in [
            ("mu_Y", self.mu_y),
            ("mu_J", self.mu_j),
            ("seas_a", self.seas_a),
            ("seas_b", self.seas_b),
            ("seas_c", self.seas_c),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        Ok(())
    }

    /// `e^{-kappa}`, the one-period price decay factor.
    pub fn decay(&self) -> f64 {
        (-self.kappa_y).exp()
    }

    /// Seasonality `g(t) = a sin(2 pi t / period) + b cos(2 pi t / period) + c`.
    ///
    /// `t` is reduced modulo the period first, so `g(t) == g(t + period)` bit for bit.
    pub fn seasonality(&self, t: usize) -> f64 {
        let period = self.seas_period as usize;
        let phase = 2.0 * PI * (t % period) as f64 / period as f64;
        self.seas_a * phase.sin() + self.seas_b * phase.cos() + self.seas_c
    }

    /// Variance of the one-step diffusion noise `xi`.
    pub fn diffusion_variance(&self) -> f64 {
        self.sigma_y * self.sigma_y * (1.0 - (-2.0 * self.kappa_y).exp()) / (2.0 * self.kappa_y)
    }

    /// Deterministic part of `psi_{t+1}`: `g(t+1) - g(t) e^{-kappa} + mu_Y (1 - e^{-kappa})`.
    pub fn noise_drift(&self, t: usize) -> f64 {
        let d = self.decay();
        self.seasonality(t + 1) - self.seasonality(t) * d + self.mu_y * (1.0 - d)
    }

    /// Exact mean of `psi_{t+1}` (before discretization).
    pub fn noise_mean(&self, t: usize) -> f64 {
        self.noise_drift(t) + self.jump_prob * self.mu_j
    }

    /// One exact step of the price recursion from `p` at period `t`.
    pub fn step<R: Rng + ?Sized>(&self, t: usize, p: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let u: f64 = rng.random();
        let zj: f64 = StandardNormal.sample(rng);
        let jump = if u < self.jump_prob {
            self.mu_j + self.sigma_j * zj
        } else {
            0.0
        };
        p * self.decay() + self.noise_drift(t) + self.diffusion_variance().sqrt() * z + jump
    }

    /// `P_0..=P_horizon` from the undiscretized recursion, drawing from `rng`.
    pub fn sample_path_with<R: Rng + ?Sized>(&self, p0: f64, horizon: usize, rng: &mut R) -> Vec<f64> {
        let mut path = Vec::with_capacity(horizon + 1);
        path.push(p0);
        let mut p = p0;
        for t in 0..horizon {
            p = self.step(t, p, rng);
            path.push(p);
        }
        path
    }

    /// Seeded variant of [`Self::sample_path_with`].
    pub fn sample_path(&self, p0: f64, horizon: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_path_with(p0, horizon, &mut rng)
    }

    /// Integer discretization of `psi_{t+1}`.
    ///
    /// Integer `k` receives the mixture mass of `(k - 1/2, k + 1/2]`; outcomes below `trim`
    /// are removed and the rest renormalized.
    pub fn noise_dist(&self, t: usize, trim: f64) -> Result<DiscreteDist> {
        self.validate()?;
        let var0 = self.diffusion_variance();
        let var1 = var0 + self.sigma_j * self.sigma_j;
        if !(var0 > 0.0 && var0.is_finite()) {
            return Err(Error::DegenerateVariance(var0));
        }
        let q = self.jump_prob;
        let m0 = self.noise_drift(t);
        let m1 = m0 + self.mu_j;
        let (s0, s1) = (var0.sqrt(), var1.sqrt());

        // Widest reach of either component that can still carry mass.
        let reach = 12.0;
        let lo = (m0 - reach * s0).min(if q > 0.0 { m1 - reach * s1 } else { f64::INFINITY });
        let hi = (m0 + reach * s0).max(if q > 0.0 { m1 + reach * s1 } else { f64::NEG_INFINITY });
        let (k_lo, k_hi) = (lo.floor() as i64, hi.ceil() as i64);

        let cdf = |x: f64| {
            let c0 = normal_cdf((x - m0) / s0);
            if q > 0.0 {
                (1.0 - q) * c0 + q * normal_cdf((x - m1) / s1)
            } else {
                c0
            }
        };
        let mut support = Vec::new();
        let mut probs = Vec::new();
        let mut below = cdf(k_lo as f64 - 0.5);
        for k in k_lo..=k_hi {
            let above = cdf(k as f64 + 0.5);
            let mass = (above - below).max(0.0);
            below = above;
            if mass >= trim {
                support.push(k as f64);
                probs.push(mass);
            }
        }
        let total: f64 = probs.iter().sum();
        if support.is_empty() || total <= 0.0 {
            return Err(Error::InvalidDist(format!(
                "every integer outcome of psi_{} falls below the trim level {trim}",
                t + 1
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        DiscreteDist::new(support, probs)
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Uniformly spaced admissible spot prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceGrid {
    lo: f64,
    step: f64,
    len: usize,
}

impl PriceGrid {
    pub fn new(lo: f64, step: f64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(step > 0.0 && step.is_finite() && lo.is_finite()) {
            return Err(invalid("price_grid", "step must be positive and bounds finite"));
        }
        Ok(Self { lo, step, len })
    }

    /// Integer grid `round(center) - span ..= round(center) + span`.
    pub fn centered(center: f64, span: u32) -> Result<Self> {
        let c = center.round();
        Self::new(c - span as f64, 1.0, 2 * span as usize + 1)
    }

    /// Smallest centered integer grid around the seasonal level `c` such that, from every
    /// state in the seasonal band, the one-step probability of leaving the grid is below `tol`.
    ///
    /// The band is `c +- (sqrt(a^2 + b^2) + 4 sd)` with `sd` the stationary standard deviation
    /// of the deseasonalized process.
    pub fn auto(params: &PriceModelParams, trim: f64, tol: f64) -> Result<Self> {
        let noises = (0..params.seas_period as usize)
            .map(|t| params.noise_dist(t, trim))
            .collect::<Result<Vec<_>>>()?;
        let amp = params.seas_a.hypot(params.seas_b);
        let jump_var = params.jump_prob * params.sigma_j.powi(2)
            + params.jump_prob * (1.0 - params.jump_prob) * params.mu_j.powi(2);
        let stat_sd = ((params.diffusion_variance() + jump_var) / (1.0 - (-2.0 * params.kappa_y).exp())).sqrt();
        let band = amp + 4.0 * stat_sd;
        let c = params.seas_c.round();
        for span in (band.ceil() as u32)..=100_000 {
            let grid = Self::centered(params.seas_c, span)?;
            let grid = &grid;
            let (band_lo, band_hi) = (c - band, c + band);
            let worst = grid
                .points()
                .filter(|p| *p >= band_lo && *p <= band_hi)
                .flat_map(|p| noises.iter().map(move |n| grid.escape_probability(p, params.decay(), n)))
                .fold(0.0, f64::max);
            if worst < tol {
                return Ok(*grid);
            }
        }
        Err(invalid("price_grid", "no span up to 100000 meets the escape tolerance"))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.point(i))
    }

    pub fn min(&self) -> f64 {
        self.lo
    }

    pub fn max(&self) -> f64 {
        self.point(self.len - 1)
    }

    /// Index of the nearest grid point; out-of-range prices map to the boundary.
    pub fn nearest(&self, price: f64) -> usize {
        let x = ((price - self.lo) / self.step).round();
        if x <= 0.0 || x.is_nan() {
            0
        } else {
            (x as usize).min(self.len - 1)
        }
    }

    /// Index of `price` if it is (to rounding) a grid point.
    pub fn index_of(&self, price: f64) -> Option<usize> {
        let i = self.nearest(price);
        ((self.point(i) - price).abs() <= 1e-9 * self.step.max(price.abs())).then_some(i)
    }

    /// Mass of `p e^{-kappa} + psi` that lands outside the grid's cells.
    pub fn escape_probability(&self, p: f64, decay: f64, noise: &DiscreteDist) -> f64 {
        let (lo, hi) = (self.min() - 0.5 * self.step, self.max() + 0.5 * self.step);
        noise
            .iter()
            .filter(|(k, _)| {
                let x = p * decay + **k;
                x < lo || x > hi
            })
            .map(|(_, w)| *w)
            .sum()
    }

    /// Conditional law of the next grid price: `p e^{-kappa} + k` snapped to the nearest
    /// grid point, merged per target, with out-of-grid mass lumped at the boundary.
    /// Returned as `(grid index, probability)` sorted by index.
    pub fn transition(&self, p: f64, decay: f64, noise: &DiscreteDist) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(noise.len());
        for (k, w) in noise.iter() {
            let j = self.nearest(p * decay + k);
            match out.last_mut() {
                Some((last, acc)) if *last == j => *acc += w,
                _ => out.push((j, *w)),
            }
        }
        // Snapping is monotone in k, so targets arrive sorted.
        debug_assert!(out.windows(2).all(|w| w[0].0 < w[1].0));
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,price")?;
        for (i, p) in self.points().enumerate() {
            writeln!(out, "{i},{p:.6}")?;
        }
        Ok(())
    }
}

/// The discretized price model: grid plus the integer noise law per period.
#[derive(Debug, Clone)]
pub struct PriceModel {
    pub params: PriceModelParams,
    pub grid: PriceGrid,
    pub trim: f64,
    noise: Vec<DiscreteDist>,
}

impl PriceModel {
    /// Precompute noise laws `psi_1..=psi_{periods}` (periods `t = 0..periods`).
    pub fn new(params: PriceModelParams, grid: PriceGrid, trim: f64, periods: usize) -> Result<Self> {
        params.validate()?;
        let noise = (0..periods.max(1))
            .map(|t| params.noise_dist(t, trim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            grid,
            trim,
            noise,
        })
    }

    pub fn periods(&self) -> usize {
        self.noise.len()
    }

    /// Law of `psi_{t+1}`.
    pub fn noise(&self, t: usize) -> &DiscreteDist {
        &self.noise[t]
    }

    /// Law of the next grid price given grid price `p` at period `t`.
    pub fn next_price_dist(&self, p: f64, t: usize) -> Result<DiscreteDist> {
        if self.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let rows = self.grid.transition(p, self.params.decay(), self.noise(t));
        DiscreteDist::new(
            rows.iter().map(|(j, _)| self.grid.point(*j)).collect(),
            rows.iter().map(|(_, w)| *w).collect(),
        )
    }

    pub fn write_noise_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value,probability")?;
        for (t, d) in self.noise.iter().enumerate() {
            for (v, p) in d.iter() {
                writeln!(out, "{t},{v:.6},{p:.12e}")?;
            }
        }
        Ok(())
    }
}
