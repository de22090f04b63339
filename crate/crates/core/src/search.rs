//! Risk-parameter selection: solve and simulate a sample of time-homogeneous `beta`,
//! fit reward and risk surfaces, and pick the best `beta` under a risk cap.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{solve, MdpConfig, MdpInstance};
use crate::policy::{
    estimate, ChargingPolicy, ContinuousCharging, PracticalMetrics, RiskMetric, SimContext, TauDist,
    ThresholdPolicy,
};
use crate::price::PriceModel;
use crate::regression::{fit_surface, ConstraintGrid, MonotoneFit};
use crate::risk::{RiskParams, RiskSchedule};

/// Estimated practical metrics of one sampled `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSample {
    pub beta: RiskParams,
    pub metrics: PracticalMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Fitted without shape constraints.
    Reward,
    /// Fitted nonincreasing in both `lambda` and `alpha`.
    Risk,
}

pub fn fit(samples: &[BetaSample], target: Target, degree: u32, grid: &ConstraintGrid) -> Result<MonotoneFit> {
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.beta.lambda, s.beta.alpha)).collect();
    let (values, constraint): (Vec<f64>, _) = match target {
        Target::Reward => (samples.iter().map(|s| s.metrics.reward).collect(), None),
        Target::Risk => (samples.iter().map(|s| s.metrics.risk).collect(), Some(grid)),
    };
    fit_surface(&points, &values, degree, constraint)
}

/// Candidate grid `lambda = i / (lambda_points - 1)`, `alpha` evenly from `alpha_lo` to `alpha_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub lambda_points: usize,
    pub alpha_points: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl Default for SelectionGrid {
    /// 201 x 199 points: `lambda` in steps of 0.005 and `alpha = 0.005..=0.995`.
    fn default() -> Self {
        Self {
            lambda_points: 201,
            alpha_points: 199,
            alpha_lo: 0.005,
            alpha_hi: 0.995,
        }
    }
}

impl SelectionGrid {
    fn lambda(&self, i: usize) -> f64 {
        i as f64 / (self.lambda_points - 1) as f64
    }

    fn alpha(&self, j: usize) -> f64 {
        if self.alpha_points == 1 {
            return self.alpha_lo;
        }
        let n = (self.alpha_points - 1) as f64;
        (self.alpha_lo * (n - j as f64) + self.alpha_hi * j as f64) / n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub beta: RiskParams,
    pub fitted_reward: f64,
    pub fitted_risk: f64,
    /// False when no grid point meets the risk cap; `beta` then minimizes fitted risk.
    pub feasible: bool,
}

pub fn select_beta(reward_fit: &MonotoneFit, risk_fit: &MonotoneFit, epsilon: f64) -> Selection {
    select_beta_on(&SelectionGrid::default(), reward_fit, risk_fit, epsilon)
}

/// Grid maximizer of fitted reward subject to fitted risk `<= epsilon`. Scanning `lambda`
/// then `alpha` and replacing only on strict improvement keeps the lexicographically
/// smallest maximizer.
pub fn select_beta_on(
    grid: &SelectionGrid,
    reward_fit: &MonotoneFit,
    risk_fit: &MonotoneFit,
    epsilon: f64,
) -> Selection {
    let mut best: Option<Selection> = None;
    let mut safest: Option<Selection> = None;
    for i in 0..grid.lambda_points {
        let lambda = grid.lambda(i);
        for j in 0..grid.alpha_points {
            let alpha = grid.alpha(j);
            let reward = reward_fit.evaluate(lambda, alpha);
            let risk = risk_fit.evaluate(lambda, alpha);
            let here = || Selection {
                beta: RiskParams { lambda, alpha },
                fitted_reward: reward,
                fitted_risk: risk,
                feasible: risk <= epsilon,
            };
            if risk <= epsilon && best.as_ref().is_none_or(|b| reward > b.fitted_reward) {
                best = Some(here());
            }
            if safest.as_ref().is_none_or(|s| risk < s.fitted_risk) {
                safest = Some(here());
            }
        }
    }
    best.or(safest).expect("selection grid is non-empty")
}

/// Inputs of the three-step selection procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSetup {
    pub sample_grid: Vec<RiskParams>,
    pub degree: u32,
    pub constraint_grid: ConstraintGrid,
    #[serde(default)]
    pub selection_grid: SelectionGrid,
    pub epsilons: Vec<f64>,
    pub metric: RiskMetric,
    pub n_paths: usize,
    pub seed: u64,
    pub p0: f64,
}

impl PipelineSetup {
    pub fn validate(&self) -> Result<()> {
        if self.sample_grid.is_empty() {
            return Err(invalid("sample_grid", "must contain at least one beta"));
        }
        for b in &self.sample_grid {
            b.validate()?;
        }
        self.constraint_grid.validate()?;
        if self.selection_grid.lambda_points < 2 || self.selection_grid.alpha_points < 1 {
            return Err(invalid("selection_grid", "needs at least 2 lambda points and 1 alpha point"));
        }
        if self.epsilons.iter().any(|e| !e.is_finite()) {
            return Err(invalid("epsilons", "must be finite"));
        }
        self.metric.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKind {
    Default,
    Epsilon(f64),
    RiskNeutral,
}

/// One row of the selection table: a policy and its re-simulated metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub kind: RowKind,
    pub beta: Option<RiskParams>,
    pub feasible: bool,
    pub metrics: PracticalMetrics,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub samples: Vec<BetaSample>,
    pub reward_fit: MonotoneFit,
    pub risk_fit: MonotoneFit,
    /// Default row, one row per epsilon in ascending order, risk-neutral row.
    pub rows: Vec<SelectionRow>,
}

/// Solved MDPs for every horizon in the support of `tau`.
pub struct Family<'a> {
    instances: BTreeMap<usize, MdpInstance<f64>>,
    cfg: &'a MdpConfig,
}

impl<'a> Family<'a> {
    pub fn build(cfg: &'a MdpConfig, model: &PriceModel, tau: &TauDist) -> Result<Self> {
        let instances = tau
            .horizons
            .par_iter()
            .map(|&t| MdpInstance::build(cfg, model, t).map(|inst| (t, inst)))
            .collect::<Result<_>>()?;
        Ok(Self { instances, cfg })
    }

    pub fn cfg(&self) -> &MdpConfig {
        self.cfg
    }

    /// Basestock policies for a time-homogeneous `beta` at every horizon.
    pub fn policy(&self, beta: &RiskParams) -> Result<ThresholdPolicy> {
        let tables = self
            .instances
            .par_iter()
            .map(|(&t, inst)| {
                let job = |e: Error| Error::Job {
                    lambda: beta.lambda,
                    alpha: beta.alpha,
                    horizon: t,
                    source: Box::new(e),
                };
                let schedule = RiskSchedule::homogeneous(beta.clone(), t).map_err(job)?;
                solve(inst, &schedule).map(|s| s.threshold_table()).map_err(job)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ThresholdPolicy::new(tables))
    }
}

pub fn pipeline(
    setup: &PipelineSetup,
    cfg: &MdpConfig,
    model: &PriceModel,
    tau: &TauDist,
) -> Result<PipelineOutput> {
    setup.validate()?;
    tau.validate()?;
    let family = Family::build(cfg, model, tau)?;
    let ctx = SimContext {
        cfg,
        price: &model.params,
        p0: setup.p0,
    };
    // Every policy sees the same paths (common random numbers).
    let evaluate = |policy: &dyn ChargingPolicy| {
        estimate(policy, ctx, tau, &setup.metric, setup.n_paths, setup.seed)
    };
    let evaluate_beta = |beta: &RiskParams| -> Result<PracticalMetrics> { evaluate(&family.policy(beta)?) };

    // Step 1: sample.
    let samples = setup
        .sample_grid
        .par_iter()
        .map(|b| {
            Ok(BetaSample {
                beta: b.clone(),
                metrics: evaluate_beta(b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // Step 2: fit.
    let reward_fit = fit(&samples, Target::Reward, setup.degree, &setup.constraint_grid)?;
    let risk_fit = fit(&samples, Target::Risk, setup.degree, &setup.constraint_grid)?;

    // Step 3: select per epsilon, then re-solve and re-simulate.
    let mut epsilons = setup.epsilons.clone();
    epsilons.sort_by(f64::total_cmp);
    let picks: Vec<Selection> = epsilons
        .iter()
        .map(|&e| select_beta_on(&setup.selection_grid, &reward_fit, &risk_fit, e))
        .collect();
    let mut cache: BTreeMap<(u64, u64), PracticalMetrics> = BTreeMap::new();
    for s in &picks {
        let key = (s.beta.lambda.to_bits(), s.beta.alpha.to_bits());
        if !cache.contains_key(&key) {
            cache.insert(key, evaluate_beta(&s.beta)?);
        }
    }

    let default = ContinuousCharging {
        r_max: cfg.r_max,
        x_max: cfg.x_max,
    };
    let mut rows = vec![SelectionRow {
        kind: RowKind::Default,
        beta: None,
        feasible: true,
        metrics: evaluate(&default)?,
    }];
    for (e, s) in epsilons.iter().zip(picks) {
        let key = (s.beta.lambda.to_bits(), s.beta.alpha.to_bits());
        rows.push(SelectionRow {
            kind: RowKind::Epsilon(*e),
            metrics: cache[&key],
            feasible: s.feasible,
            beta: Some(s.beta),
        });
    }
    let rn = RiskParams::risk_neutral();
    rows.push(SelectionRow {
        kind: RowKind::RiskNeutral,
        metrics: evaluate_beta(&rn)?,
        feasible: true,
        beta: Some(rn),
    });
    Ok(PipelineOutput {
        samples,
        reward_fit,
        risk_fit,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn pct(v: f64, of: f64) -> String {
    let p = 100.0 * v / of;
    if p.is_finite() {
        format!("{p:.2}")
    } else {
        String::new()
    }
}

impl PipelineOutput {
    pub fn risk_neutral(&self) -> &SelectionRow {
        self.rows.last().expect("pipeline always emits the risk-neutral row")
    }

    /// `epsilon,lambda_hat,alpha_hat,reward,reward_pct_of_RN,risk,risk_pct_of_RN,reward_se,risk_se,feasible`.
    pub fn write_selection_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "epsilon,lambda_hat,alpha_hat,reward,reward_pct_of_RN,risk,risk_pct_of_RN,reward_se,risk_se,feasible"
        )?;
        let rn = self.risk_neutral().metrics;
        for row in &self.rows {
            let label = match row.kind {
                RowKind::Default => "Default".to_string(),
                RowKind::Epsilon(e) => format!("{e:.6}"),
                RowKind::RiskNeutral => "RN".to_string(),
            };
            let (l, a) = match (&row.kind, &row.beta) {
                (RowKind::Epsilon(_), Some(b)) => (Some(b.lambda), Some(b.alpha)),
                _ => (None, None),
            };
            let m = row.metrics;
            writeln!(
                out,
                "{label},{},{},{:.6},{},{:.6},{},{:.6},{:.6},{}",
                fmt_opt(l),
                fmt_opt(a),
                m.reward,
                pct(m.reward, rn.reward),
                m.risk,
                pct(m.risk, rn.risk),
                m.reward_se,
                m.risk_se,
                row.feasible
            )?;
        }
        Ok(())
    }

    /// `epsilon,lambda_hat,alpha_hat` for the epsilon rows.
    pub fn write_beta_path_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epsilon,lambda_hat,alpha_hat")?;
        for row in &self.rows {
            if let (RowKind::Epsilon(e), Some(b)) = (row.kind, &row.beta) {
                writeln!(out, "{e:.6},{:.6},{:.6}", b.lambda, b.alpha)?;
            }
        }
        Ok(())
    }

    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", PracticalMetrics::CSV_HEADER)?;
        for s in &self.samples {
            s.metrics.write_csv_row(&mut out, s.beta.lambda, s.beta.alpha)?;
        }
        Ok(())
    }

    /// `lambda,alpha,reward_fit,risk_fit` on `grid`.
    pub fn write_surface_csv<W: Write>(&self, grid: &ConstraintGrid, mut out: W) -> Result<()> {
        writeln!(out, "lambda,alpha,reward_fit,risk_fit")?;
        for (l, a) in grid.points() {
            writeln!(
                out,
                "{l:.6},{a:.6},{:.9},{:.9}",
                self.reward_fit.evaluate(l, a),
                self.risk_fit.evaluate(l, a)
            )?;
        }
        Ok(())
    }
}
