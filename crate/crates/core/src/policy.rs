//! Monte Carlo evaluation of charging policies over a random reservation length `tau`.
//!
//! Path `i` of a run with master seed `s` draws everything from its own ChaCha stream
//! `(s, i)`: first `tau`, then a fixed number of price steps regardless of `tau`. Two
//! policies simulated with the same seed therefore see identical `tau` and price paths
//! (common random numbers), and results do not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::MASS_TOL;
use crate::error::{invalid, Error, Result};
use crate::mdp::{MdpConfig, ThresholdTable};
use crate::price::PriceModelParams;

/// Distribution of the reservation length in periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauDist {
    pub horizons: Vec<usize>,
    pub probs: Vec<f64>,
}

impl TauDist {
    pub fn new(horizons: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let d = Self { horizons, probs };
        d.validate()?;
        Ok(d)
    }

    /// Parking-length law on `T = 4..=16` with its mode at `T = 5` (1.25 hours).
    /// Approximate: a right-skewed shape with mean of about two hours.
    pub fn parking_default() -> Self {
        Self {
            horizons: (4..=16).collect(),
            probs: vec![
                0.09, 0.15, 0.13, 0.11, 0.095, 0.08, 0.07, 0.06, 0.05, 0.05, 0.045, 0.04, 0.03,
            ],
        }
    }

    pub fn point(horizon: usize) -> Self {
        Self {
            horizons: vec![horizon],
            probs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.len() != self.probs.len() {
            return Err(invalid("tau", "horizons and probs must be non-empty and of equal length"));
        }
        if self.horizons.iter().any(|&t| t < 1) {
            return Err(invalid("tau", "horizons must be at least 1"));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("tau", "horizons must be strictly increasing"));
        }
        if self.probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("tau", "probabilities must be nonnegative"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid("tau", format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        *self.horizons.last().expect("validated non-empty")
    }

    pub fn mean(&self) -> f64 {
        self.horizons.iter().zip(&self.probs).map(|(t, p)| *t as f64 * p).sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        let mut cum = 0.0;
        for (t, p) in self.horizons.iter().zip(&self.probs) {
            cum += p;
            if u < cum {
                return *t;
            }
        }
        self.max_horizon()
    }
}

/// A charging rule for every horizon it supports.
pub trait ChargingPolicy: Sync {
    /// Charge to buy at period `t` of a horizon-`tau` reservation.
    fn action(&self, tau: usize, t: usize, r: u32, price: f64) -> Result<u32>;

    fn supports(&self, _tau: usize) -> bool {
        true
    }
}

/// Basestock policies from solved MDPs, one per horizon.
#[derive(Debug, Clone, Default)]
pub struct ThresholdPolicy {
    tables: BTreeMap<usize, ThresholdTable>,
}

impl ThresholdPolicy {
    pub fn new(tables: impl IntoIterator<Item = ThresholdTable>) -> Self {
        Self {
            tables: tables.into_iter().map(|t| (t.horizon, t)).collect(),
        }
    }

    pub fn table(&self, horizon: usize) -> Option<&ThresholdTable> {
        self.tables.get(&horizon)
    }
}

impl ChargingPolicy for ThresholdPolicy {
    fn action(&self, tau: usize, t: usize, r: u32, price: f64) -> Result<u32> {
        self.tables
            .get(&tau)
            .ok_or(Error::UnknownHorizon(tau))?
            .greedy_action(t, r, price)
    }

    fn supports(&self, tau: usize) -> bool {
        self.tables.contains_key(&tau)
    }
}

/// The default station behavior: charge as fast as possible.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousCharging {
    pub r_max: u32,
    pub x_max: u32,
}

impl ChargingPolicy for ContinuousCharging {
    fn action(&self, _tau: usize, _t: usize, r: u32, _price: f64) -> Result<u32> {
        Ok((self.r_max - r).min(self.x_max))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NeverCharge;

impl ChargingPolicy for NeverCharge {
    fn action(&self, _tau: usize, _t: usize, _r: u32, _price: f64) -> Result<u32> {
        Ok(0)
    }
}

/// One simulated reservation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: usize,
    /// `P_0..=P_{tau+1}` in $/MWh.
    pub prices: Vec<f64>,
    /// `R_0..=R_tau` in kWh.
    pub charges: Vec<u32>,
    /// `x_0..x_{tau-1}` in kWh.
    pub actions: Vec<u32>,
}

impl Trajectory {
    pub fn final_charge(&self) -> u32 {
        *self.charges.last().expect("at least R_0")
    }
}

/// Everything the simulator needs besides the policy.
#[derive(Debug, Clone, Copy)]
pub struct SimContext<'a> {
    pub cfg: &'a MdpConfig,
    pub price: &'a PriceModelParams,
    pub p0: f64,
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

pub fn simulate_path<P: ChargingPolicy + ?Sized>(
    policy: &P,
    ctx: SimContext<'_>,
    tau_dist: &TauDist,
    seed: u64,
    path: u64,
) -> Result<Trajectory> {
    let mut rng = path_rng(seed, path);
    let tau = tau_dist.sample(rng.random());
    if !policy.supports(tau) {
        return Err(Error::UnknownHorizon(tau));
    }
    // Always draw the longest path so streams stay aligned across tau.
    let mut prices = ctx.price.sample_path_with(ctx.p0, tau_dist.max_horizon() + 1, &mut rng);
    prices.truncate(tau + 2);

    let cfg = ctx.cfg;
    let mut charges = Vec::with_capacity(tau + 1);
    let mut actions = Vec::with_capacity(tau);
    let mut r = cfg.r0;
    charges.push(r);
    for t in 0..tau {
        let x = policy.action(tau, t, r, prices[t])?;
        if x > cfg.max_action(r) {
            return Err(Error::Inconsistent(format!(
                "policy charged {x} kWh at level {r} (max {})",
                cfg.max_action(r)
            )));
        }
        r += x;
        actions.push(x);
        charges.push(r);
    }
    Ok(Trajectory {
        tau,
        prices,
        charges,
        actions,
    })
}

/// Simulate `n_paths` independent reservations; path `i` uses stream `(seed, i)`.
pub fn simulate<P: ChargingPolicy + ?Sized>(
    policy: &P,
    ctx: SimContext<'_>,
    tau_dist: &TauDist,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    tau_dist.validate()?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(policy, ctx, tau_dist, seed, i))
        .collect()
}

/// Fee income, energy bill and compensation of one path, all in $.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub fees: f64,
    pub energy: f64,
    pub compensation: f64,
}

impl RewardBreakdown {
    pub fn reward(&self) -> f64 {
        self.fees - self.energy - self.compensation
    }
}

pub fn reward_breakdown(traj: &Trajectory, cfg: &MdpConfig, price: &PriceModelParams) -> RewardBreakdown {
    let tau = traj.tau;
    // Energy bought between t-1 and t is billed at P_t.
    let energy = (1..=tau)
        .map(|t| (traj.charges[t] - traj.charges[t - 1]) as f64 * traj.prices[t] / 1000.0)
        .sum();
    let deviation = traj.prices[tau + 1] - price.seasonality(tau + 1);
    RewardBreakdown {
        fees: cfg.c_f * tau as f64,
        energy,
        compensation: cfg.compensation(cfg.shortage(traj.final_charge(), tau), deviation),
    }
}

/// `c_f tau - sum_t (R_t - R_{t-1}) P_t - [1 + gamma_h h + gamma_Y(Y_{tau+1})] h p_ref`.
pub fn practical_reward(traj: &Trajectory, cfg: &MdpConfig, price: &PriceModelParams) -> f64 {
    reward_breakdown(traj, cfg, price).reward()
}

/// Per-path risk outcome and how outcomes are aggregated across paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskMetric {
    /// `P(R_tau / r_max <= 1 - delta)`.
    ShortageIndicator { delta: f64 },
    /// Mean terminal compensation.
    ExpectedCompensation,
    /// `VaR_alpha` of the terminal compensation.
    CompensationVar { alpha: f64 },
    /// `CVaR_alpha` of the shortage in kWh.
    ShortageCvar { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    Mean,
    Var(f64),
    Cvar(f64),
}

impl RiskMetric {
    pub fn aggregation(&self) -> Aggregation {
        match *self {
            Self::ShortageIndicator { .. } | Self::ExpectedCompensation => Aggregation::Mean,
            Self::CompensationVar { alpha } => Aggregation::Var(alpha),
            Self::ShortageCvar { alpha } => Aggregation::Cvar(alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::ShortageIndicator { delta } if !(0.0..=1.0).contains(&delta) => {
                Err(invalid("delta", "must lie in [0, 1]"))
            }
            Self::CompensationVar { alpha } | Self::ShortageCvar { alpha }
                if !(alpha > 0.0 && alpha < 1.0) =>
            {
                Err(invalid("alpha", "must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for RiskMetric {
    fn default() -> Self {
        Self::ShortageIndicator { delta: 0.3 }
    }
}

impl fmt::Display for RiskMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShortageIndicator { delta } => write!(f, "indicator:{delta}"),
            Self::ExpectedCompensation => write!(f, "compensation"),
            Self::CompensationVar { alpha } => write!(f, "compensation_var:{alpha}"),
            Self::ShortageCvar { alpha } => write!(f, "shortage_cvar:{alpha}"),
        }
    }
}

/// `indicator[:delta]`, `compensation`, `compensation_var[:alpha]`, `shortage_cvar[:alpha]`.
impl FromStr for RiskMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| Error::UnknownMetric(s.to_string()))
            })
        };
        let metric = match kind {
            "indicator" => Self::ShortageIndicator { delta: num(0.3)? },
            "compensation" if arg.is_none() => Self::ExpectedCompensation,
            "compensation_var" => Self::CompensationVar { alpha: num(0.9)? },
            "shortage_cvar" => Self::ShortageCvar { alpha: num(0.9)? },
            _ => return Err(Error::UnknownMetric(s.to_string())),
        };
        metric.validate()?;
        Ok(metric)
    }
}

/// Per-path outcome of `metric`, before aggregation across paths.
pub fn practical_risk(
    traj: &Trajectory,
    metric: &RiskMetric,
    cfg: &MdpConfig,
    price: &PriceModelParams,
) -> f64 {
    match *metric {
        RiskMetric::ShortageIndicator { delta } => {
            let fill = traj.final_charge() as f64 / cfg.r_max as f64;
            if fill <= 1.0 - delta {
                1.0
            } else {
                0.0
            }
        }
        RiskMetric::ExpectedCompensation | RiskMetric::CompensationVar { .. } => {
            reward_breakdown(traj, cfg, price).compensation
        }
        RiskMetric::ShortageCvar { .. } => cfg.shortage(traj.final_charge(), traj.tau).max(0) as f64,
    }
}

/// Estimated practical reward and risk with Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PracticalMetrics {
    pub reward: f64,
    pub reward_se: f64,
    pub risk: f64,
    pub risk_se: f64,
    pub n_paths: usize,
}

impl PracticalMetrics {
    pub const CSV_HEADER: &'static str = "beta_lambda,beta_alpha,reward,reward_se,risk,risk_se";

    pub fn write_csv_row<W: Write>(&self, mut out: W, lambda: f64, alpha: f64) -> Result<()> {
        writeln!(
            out,
            "{lambda:.6},{alpha:.6},{:.6},{:.6},{:.6},{:.6}",
            self.reward, self.reward_se, self.risk, self.risk_se
        )?;
        Ok(())
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn empirical_var(sorted: &[f64], alpha: f64) -> f64 {
    // Smallest u with F(u) > alpha on equal weights.
    let n = sorted.len();
    let k = ((alpha * n as f64).floor() as usize).min(n - 1);
    sorted[k]
}

/// Aggregate per-path outcomes; returns the estimate and a standard error.
pub fn aggregate(outcomes: &[f64], how: Aggregation) -> (f64, f64) {
    match how {
        Aggregation::Mean => mean_and_se(outcomes),
        Aggregation::Var(alpha) => {
            let mut sorted = outcomes.to_vec();
            sorted.sort_by(f64::total_cmp);
            let est = empirical_var(&sorted, alpha);
            // Sectioning: spread of the estimator over 20 contiguous batches.
            let batches = 20.min(outcomes.len());
            let size = outcomes.len() / batches;
            let per_batch: Vec<f64> = (0..batches)
                .map(|b| {
                    let mut chunk = outcomes[b * size..(b + 1) * size].to_vec();
                    chunk.sort_by(f64::total_cmp);
                    empirical_var(&chunk, alpha)
                })
                .collect();
            (est, mean_and_se(&per_batch).1)
        }
        Aggregation::Cvar(alpha) => {
            let mut sorted = outcomes.to_vec();
            sorted.sort_by(f64::total_cmp);
            let u = empirical_var(&sorted, alpha);
            let scores: Vec<f64> = outcomes
                .iter()
                .map(|x| u + (x - u).max(0.0) / (1.0 - alpha))
                .collect();
            mean_and_se(&scores)
        }
    }
}

/// Simulate a policy and estimate its practical reward and risk.
pub fn estimate<P: ChargingPolicy + ?Sized>(
    policy: &P,
    ctx: SimContext<'_>,
    tau_dist: &TauDist,
    metric: &RiskMetric,
    n_paths: usize,
    seed: u64,
) -> Result<PracticalMetrics> {
    if n_paths < 2 {
        return Err(Error::TooFewPaths {
            need: 2,
            got: n_paths,
        });
    }
    metric.validate()?;
    let paths = simulate(policy, ctx, tau_dist, n_paths, seed)?;
    Ok(metrics_from_paths(&paths, ctx, metric))
}

pub fn metrics_from_paths(paths: &[Trajectory], ctx: SimContext<'_>, metric: &RiskMetric) -> PracticalMetrics {
    let rewards: Vec<f64> = paths
        .iter()
        .map(|p| practical_reward(p, ctx.cfg, ctx.price))
        .collect();
    let risks: Vec<f64> = paths
        .iter()
        .map(|p| practical_risk(p, metric, ctx.cfg, ctx.price))
        .collect();
    let (reward, reward_se) = mean_and_se(&rewards);
    let (risk, risk_se) = aggregate(&risks, metric.aggregation());
    PracticalMetrics {
        reward,
        reward_se,
        risk,
        risk_se,
        n_paths: paths.len(),
    }
}

/// `path_id,t,p,r,x` rows; `r` is blank at `t = tau + 1` and `x` blank from `t = tau`.
pub fn write_trajectories_csv<W: Write>(paths: &[Trajectory], mut out: W) -> Result<()> {
    writeln!(out, "path_id,t,p,r,x")?;
    for (id, traj) in paths.iter().enumerate() {
        for (t, p) in traj.prices.iter().enumerate() {
            let r = traj.charges.get(t).map(|r| r.to_string()).unwrap_or_default();
            let x = traj.actions.get(t).map(|x| x.to_string()).unwrap_or_default();
            writeln!(out, "{id},{t},{p:.6},{r},{x}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MarketCompensation;

    fn cfg() -> MdpConfig {
        MdpConfig {
            r_max: 60,
            x_max: 60,
            c_f: 0.5,
            p_ref: 0.05,
            gamma_h: 0.01,
            gamma_y: MarketCompensation::Softplus,
            r0: 0,
        }
    }

    fn traj(tau: usize, prices: Vec<f64>, actions: Vec<u32>) -> Trajectory {
        let mut charges = vec![0];
        for x in &actions {
            charges.push(charges.last().unwrap() + x);
        }
        Trajectory {
            tau,
            prices,
            charges,
            actions,
        }
    }

    #[test]
    fn tau_dist_checks() {
        let d = TauDist::parking_default();
        d.validate().unwrap();
        assert_eq!(d.horizons[d.probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0], 5);
        assert_eq!(d.sample(0.0), 4);
        assert_eq!(d.sample(0.999_999_9), 16);
        assert!(TauDist::new(vec![3, 2], vec![0.5, 0.5]).is_err());
        assert!(TauDist::new(vec![2, 3], vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn zero_policy_reward() {
        let pm = PriceModelParams::caiso_winter();
        let prices = vec![35.0, 30.0, 31.0, 32.0, 33.0, 40.0];
        let t = traj(4, prices.clone(), vec![0; 4]);
        let dev = 40.0 - pm.seasonality(5);
        let comp = (1.0 + 0.01 * 60.0 + MarketCompensation::Softplus.eval(dev / 1000.0)) * 60.0 * 0.05;
        assert!((practical_reward(&t, &cfg(), &pm) - (4.0 * 0.5 - comp)).abs() < 1e-12);
    }

    #[test]
    fn immediate_full_charge_reward() {
        let pm = PriceModelParams::caiso_winter();
        let t = traj(3, vec![35.0, 28.0, 50.0, 60.0, 10.0], vec![60, 0, 0]);
        assert!((practical_reward(&t, &cfg(), &pm) - (3.0 * 0.5 - 60.0 * 28.0 / 1000.0)).abs() < 1e-12);
        let b = reward_breakdown(&t, &cfg(), &pm);
        assert_eq!(b.compensation, 0.0);
    }

    #[test]
    fn indicator_boundary() {
        let pm = PriceModelParams::caiso_winter();
        let m = RiskMetric::ShortageIndicator { delta: 0.3 };
        let full = traj(2, vec![0.0; 4], vec![60, 0]);
        assert_eq!(practical_risk(&full, &m, &cfg(), &pm), 0.0);
        let at_70 = traj(2, vec![0.0; 4], vec![42, 0]);
        assert_eq!(practical_risk(&at_70, &m, &cfg(), &pm), 1.0);
        let above = traj(2, vec![0.0; 4], vec![43, 0]);
        assert_eq!(practical_risk(&above, &m, &cfg(), &pm), 0.0);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("indicator".parse::<RiskMetric>().unwrap(), RiskMetric::ShortageIndicator { delta: 0.3 });
        assert_eq!(
            "shortage_cvar:0.9".parse::<RiskMetric>().unwrap(),
            RiskMetric::ShortageCvar { alpha: 0.9 }
        );
        let err = "semideviation".parse::<RiskMetric>().unwrap_err();
        assert!(matches!(err, Error::UnknownMetric(_)));
        assert!("indicator:2".parse::<RiskMetric>().is_err());
    }

    #[test]
    fn aggregation_rules() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(aggregate(&xs, Aggregation::Mean).0, 4.5);
        assert_eq!(aggregate(&xs, Aggregation::Var(0.9)).0, 9.0);
        assert_eq!(aggregate(&xs, Aggregation::Var(0.85)).0, 8.0);
        // Worst 20% of ten equal atoms: {8, 9}.
        assert!((aggregate(&xs, Aggregation::Cvar(0.8)).0 - 8.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_paths() {
        let pm = PriceModelParams::caiso_winter();
        let c = cfg();
        let ctx = SimContext { cfg: &c, price: &pm, p0: 35.0 };
        let err = estimate(&NeverCharge, ctx, &TauDist::point(4), &RiskMetric::default(), 1, 0).unwrap_err();
        assert!(matches!(err, Error::TooFewPaths { .. }));
    }
}
