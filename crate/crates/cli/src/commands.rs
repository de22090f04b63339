//! Subcommand bodies. Each collects results in memory and writes its files once.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;

use riskcharge::mdp::{self, check_threshold_order, check_value_order, verify_structure, CheckOutcome, MdpInstance};
use riskcharge::policy::{
    metrics_from_paths, simulate as simulate_paths, write_trajectories_csv, ChargingPolicy, ContinuousCharging,
    NeverCharge, PracticalMetrics, SimContext, TauDist,
};
use riskcharge::risk::{RiskParams, RiskSchedule};
use riskcharge::search::{self, Family};
use riskcharge::Solution;

use crate::config::{beta_grid, ExperimentConfig};
use crate::{Failure, PolicyKind};

/// Tolerance of the floating-point structure checks.
const CHECK_TOL: f64 = 1e-9;

type Outcome = Result<(), Failure>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Runtime)
}

fn finish(mut w: BufWriter<File>) -> Outcome {
    w.flush().map_err(runtime)
}

fn solve_one(inst: &MdpInstance<f64>, beta: &RiskParams) -> Result<Solution, Failure> {
    let schedule = RiskSchedule::homogeneous(beta.clone(), inst.horizon).map_err(runtime)?;
    mdp::solve(inst, &schedule)
        .with_context(|| format!("lambda={}, alpha={}", beta.lambda, beta.alpha))
        .map_err(Failure::Runtime)
}

fn label(beta: &RiskParams) -> String {
    format!("l{:.3}_a{:.3}", beta.lambda, beta.alpha)
}

fn solve_betas(
    cfg: &ExperimentConfig,
    lambda: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
) -> Result<Vec<RiskParams>, Failure> {
    let lambdas = lambda.unwrap_or_else(|| cfg.risk.lambda.clone());
    let alphas = alpha.unwrap_or_else(|| cfg.risk.alpha.clone());
    let betas = beta_grid(&lambdas, &alphas).map_err(Failure::Config)?;
    if betas.is_empty() {
        return Err(Failure::Config(anyhow!("no (lambda, alpha) pairs to solve")));
    }
    Ok(betas)
}

/// `thresholds.csv` (`t,p` then one column per beta) and `values_t0.csv`
/// (`lambda,alpha,r,p,value`).
pub fn solve(cfg: &ExperimentConfig, lambda: Option<Vec<f64>>, alpha: Option<Vec<f64>>, horizon: Option<usize>) -> Outcome {
    let betas = solve_betas(cfg, lambda, alpha)?;
    let horizon = horizon.unwrap_or(cfg.risk.horizon);
    if horizon == 0 {
        return Err(Failure::Config(anyhow!("invalid parameter `horizon`: must be at least 1")));
    }
    let model = cfg.price_model(horizon).map_err(Failure::Config)?;
    let inst = MdpInstance::<f64>::build(&cfg.mdp, &model, horizon).map_err(runtime)?;
    let sols = betas
        .par_iter()
        .map(|b| solve_one(&inst, b))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = &cfg.output.dir;
    let mut out = create(dir, "thresholds.csv")?;
    let header: Vec<String> = betas.iter().map(label).collect();
    writeln!(out, "t,p,{}", header.join(",")).map_err(runtime)?;
    for t in 0..horizon {
        for p in 0..inst.n_prices() {
            let row: Vec<String> = sols.iter().map(|s| s.threshold(t, p).to_string()).collect();
            writeln!(out, "{t},{:.6},{}", inst.grid.point(p), row.join(",")).map_err(runtime)?;
        }
    }
    finish(out)?;

    let mut out = create(dir, "values_t0.csv")?;
    writeln!(out, "lambda,alpha,r,p,value").map_err(runtime)?;
    for (b, s) in betas.iter().zip(&sols) {
        for r in 0..=cfg.mdp.r_max {
            for p in 0..inst.n_prices() {
                writeln!(
                    out,
                    "{:.6},{:.6},{r},{:.6},{:.9}",
                    b.lambda,
                    b.alpha,
                    inst.grid.point(p),
                    s.value(0, r, p)
                )
                .map_err(runtime)?;
            }
        }
    }
    finish(out)?;
    println!(
        "solved {} risk level(s), T={horizon}, {} prices x {} charge levels -> {}",
        betas.len(),
        inst.n_prices(),
        cfg.mdp.r_max + 1,
        dir.display()
    );
    Ok(())
}

pub const BETA_GRID_USAGE: &str = "usage: --beta-grid LAMBDAS/ALPHAS, e.g. --beta-grid 0,0.5,1/0.1,0.5,0.9";

/// Parse `l1,l2,.../a1,a2,...` into a lambda-major grid.
pub fn parse_beta_grid(spec: &str) -> Result<Vec<RiskParams>, Failure> {
    let usage = |why: &str| Failure::Config(anyhow!("{why}\n{BETA_GRID_USAGE}"));
    let (l, a) = spec.split_once('/').ok_or_else(|| usage("missing `/` between lambdas and alphas"))?;
    let list = |s: &str| -> Result<Vec<f64>, Failure> {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse::<f64>().map_err(|_| usage(&format!("not a number: `{x}`"))))
            .collect()
    };
    let (lambdas, alphas) = (list(l)?, list(a)?);
    if lambdas.is_empty() || alphas.is_empty() {
        return Err(usage("empty beta grid"));
    }
    beta_grid(&lambdas, &alphas).map_err(Failure::Config)
}

struct ReportRow {
    check: String,
    beta: RiskParams,
    beta_hi: Option<RiskParams>,
    enforced: bool,
    outcome: CheckOutcome,
}

/// `verify_report.csv`: one row per check and beta (or comparable beta pair).
pub fn verify(cfg: &ExperimentConfig, grid: Option<&str>) -> Outcome {
    let betas = match grid {
        Some(spec) => parse_beta_grid(spec)?,
        None => beta_grid(&cfg.risk.verify_lambda, &cfg.risk.verify_alpha).map_err(Failure::Config)?,
    };
    if betas.is_empty() {
        return Err(Failure::Config(anyhow!("empty beta grid\n{BETA_GRID_USAGE}")));
    }
    let horizon = cfg.risk.horizon;
    let model = cfg.price_model(horizon).map_err(Failure::Config)?;
    let inst = MdpInstance::<f64>::build(&cfg.mdp, &model, horizon).map_err(runtime)?;
    let sols = betas
        .par_iter()
        .map(|b| solve_one(&inst, b))
        .collect::<Result<Vec<_>, _>>()?;

    let fast = cfg.mdp.is_fast();
    let mut rows = Vec::new();
    for (b, s) in betas.iter().zip(&sols) {
        for outcome in verify_structure(s, CHECK_TOL).checks {
            rows.push(ReportRow {
                check: outcome.name.to_string(),
                beta: b.clone(),
                beta_hi: None,
                enforced: true,
                outcome,
            });
        }
    }
    for (i, lo) in betas.iter().enumerate() {
        for (j, hi) in betas.iter().enumerate() {
            if i == j || !lo.le(hi) {
                continue;
            }
            // Threshold ordering in beta needs x_max >= r_max; otherwise it is reported only.
            let pairs = [
                (check_threshold_order(&sols[i], &sols[j]), fast),
                (check_value_order(&sols[i], &sols[j], CHECK_TOL), true),
            ];
            for (outcome, enforced) in pairs {
                rows.push(ReportRow {
                    check: outcome.name.to_string(),
                    beta: lo.clone(),
                    beta_hi: Some(hi.clone()),
                    enforced,
                    outcome,
                });
            }
        }
    }

    let mut out = create(&cfg.output.dir, "verify_report.csv")?;
    writeln!(
        out,
        "check,lambda,alpha,lambda_hi,alpha_hi,horizon,enforced,passed,worst_violation,violations,location"
    )
    .map_err(runtime)?;
    for r in &rows {
        let (lh, ah) = r
            .beta_hi
            .as_ref()
            .map(|b| (format!("{:.6}", b.lambda), format!("{:.6}", b.alpha)))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{:.6},{:.6},{lh},{ah},{horizon},{},{},{:.3e},{},{}",
            r.check,
            r.beta.lambda,
            r.beta.alpha,
            r.enforced,
            r.outcome.passed,
            r.outcome.worst_violation,
            r.outcome.violations,
            r.outcome.location.map(|l| l.to_string()).unwrap_or_default()
        )
        .map_err(runtime)?;
    }
    finish(out)?;

    let failed: Vec<&ReportRow> = rows.iter().filter(|r| r.enforced && !r.outcome.passed).collect();
    let informational = rows.iter().filter(|r| !r.enforced && !r.outcome.passed).count();
    println!(
        "{} checks over {} risk levels ({} regime): {} failed, {} informational violations",
        rows.len(),
        betas.len(),
        if fast { "fast" } else { "slow" },
        failed.len(),
        informational
    );
    match failed.first() {
        None => Ok(()),
        Some(r) => Err(Failure::Structure(format!(
            "{} at lambda={}, alpha={}: worst violation {:.3e} at {}",
            r.check,
            r.beta.lambda,
            r.beta.alpha,
            r.outcome.worst_violation,
            r.outcome.location.map(|l| l.to_string()).unwrap_or_default()
        ))),
    }
}

fn max_horizon(tau: &TauDist) -> usize {
    tau.max_horizon()
}

/// `metrics.csv` (one row) and optionally `trajectories.csv`.
pub fn simulate(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    lambda: Option<f64>,
    alpha: Option<f64>,
    n_paths: Option<usize>,
    dump: bool,
) -> Outcome {
    let beta = RiskParams::new(
        lambda.unwrap_or(cfg.risk.lambda[0]),
        alpha.unwrap_or(cfg.risk.alpha[0]),
    )
    .map_err(|e| Failure::Config(e.into()))?;
    let n_paths = n_paths.unwrap_or(cfg.simulation.n_paths);
    if n_paths < 2 {
        return Err(Failure::Config(anyhow!("invalid parameter `n_paths`: need at least 2")));
    }
    let model = cfg.price_model(max_horizon(&cfg.tau)).map_err(Failure::Config)?;
    let metric = cfg.metric().map_err(Failure::Config)?;
    let ctx = SimContext {
        cfg: &cfg.mdp,
        price: &cfg.price,
        p0: cfg.simulation.p0,
    };
    let policy: Box<dyn ChargingPolicy> = match kind {
        PolicyKind::Threshold => {
            let family = Family::build(&cfg.mdp, &model, &cfg.tau).map_err(runtime)?;
            Box::new(family.policy(&beta).map_err(runtime)?)
        }
        PolicyKind::Default => Box::new(ContinuousCharging {
            r_max: cfg.mdp.r_max,
            x_max: cfg.mdp.x_max,
        }),
        PolicyKind::Never => Box::new(NeverCharge),
    };
    let paths = simulate_paths(policy.as_ref(), ctx, &cfg.tau, n_paths, cfg.simulation.seed).map_err(runtime)?;
    let m = metrics_from_paths(&paths, ctx, &metric);

    let dir = &cfg.output.dir;
    let mut out = create(dir, "metrics.csv")?;
    writeln!(out, "{}", PracticalMetrics::CSV_HEADER).map_err(runtime)?;
    m.write_csv_row(&mut out, beta.lambda, beta.alpha).map_err(runtime)?;
    finish(out)?;
    if dump {
        let mut out = create(dir, "trajectories.csv")?;
        write_trajectories_csv(&paths, &mut out).map_err(runtime)?;
        finish(out)?;
    }
    println!(
        "{kind:?} policy, {n_paths} paths: reward {:.4} (se {:.4}), risk [{metric}] {:.4} (se {:.4})",
        m.reward, m.reward_se, m.risk, m.risk_se
    );
    Ok(())
}

/// `selection_table.csv`, `metrics_samples.csv`, `beta_path.csv`, `surface_grid.csv`.
pub fn pipeline(cfg: &ExperimentConfig) -> Outcome {
    let setup = cfg.pipeline_setup().map_err(Failure::Config)?;
    let model = cfg.price_model(max_horizon(&cfg.tau)).map_err(Failure::Config)?;
    let out = search::pipeline(&setup, &cfg.mdp, &model, &cfg.tau).map_err(runtime)?;

    let dir = &cfg.output.dir;
    let mut w = create(dir, "selection_table.csv")?;
    out.write_selection_csv(&mut w).map_err(runtime)?;
    finish(w)?;
    let mut w = create(dir, "metrics_samples.csv")?;
    out.write_samples_csv(&mut w).map_err(runtime)?;
    finish(w)?;
    let mut w = create(dir, "beta_path.csv")?;
    out.write_beta_path_csv(&mut w).map_err(runtime)?;
    finish(w)?;
    let mut w = create(dir, "surface_grid.csv")?;
    out.write_surface_csv(&setup.constraint_grid, &mut w).map_err(runtime)?;
    finish(w)?;

    let fine = setup.constraint_grid.refined(riskcharge::regression::REFINE_FACTOR);
    println!(
        "{} samples, {} selection rows; risk surface max partial on refined grid {:.3e} -> {}",
        out.samples.len(),
        out.rows.len(),
        out.risk_fit.max_partial(&fine),
        dir.display()
    );
    Ok(())
}

/// `price_grid.csv`, `noise.csv` and `price_check.csv` (`t,chain_mean,mc_mean,chain_sd,mc_sd`).
pub fn price_check(cfg: &ExperimentConfig, paths: usize, horizon: Option<usize>) -> Outcome {
    let horizon = horizon.unwrap_or(max_horizon(&cfg.tau));
    if paths < 2 {
        return Err(Failure::Config(anyhow!("invalid parameter `paths`: need at least 2")));
    }
    let model = cfg.price_model(horizon).map_err(Failure::Config)?;
    let grid = model.grid;
    let dir = &cfg.output.dir;

    let mut w = create(dir, "price_grid.csv")?;
    grid.write_csv(&mut w).map_err(runtime)?;
    finish(w)?;
    let mut w = create(dir, "noise.csv")?;
    model.write_noise_csv(&mut w).map_err(runtime)?;
    finish(w)?;

    // Law of the grid chain started at the snapped initial price.
    let decay = cfg.price.decay();
    let mut law = vec![0.0; grid.len()];
    law[grid.nearest(cfg.simulation.p0)] = 1.0;
    let mut chain = vec![moments(grid.points().zip(law.iter().copied()))];
    for t in 0..horizon {
        let mut next = vec![0.0; grid.len()];
        for (p, w) in law.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            for (j, q) in grid.transition(grid.point(p), decay, model.noise(t)) {
                next[j] += w * q;
            }
        }
        law = next;
        chain.push(moments(grid.points().zip(law.iter().copied())));
    }

    let sampled: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| cfg.price.sample_path(cfg.simulation.p0, horizon, cfg.simulation.seed.wrapping_add(i)))
        .collect();
    let mut w = create(dir, "price_check.csv")?;
    writeln!(w, "t,chain_mean,mc_mean,chain_sd,mc_sd").map_err(runtime)?;
    let weight = 1.0 / paths as f64;
    for (t, (cm, csd)) in chain.iter().enumerate() {
        let (mm, msd) = moments(sampled.iter().map(|p| (p[t], weight)));
        writeln!(w, "{t},{cm:.6},{mm:.6},{csd:.6},{msd:.6}").map_err(runtime)?;
    }
    finish(w)?;
    println!("price grid [{}, {}] ({} points), {horizon} periods -> {}", grid.min(), grid.max(), grid.len(), dir.display());
    Ok(())
}

fn moments(atoms: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let atoms: Vec<(f64, f64)> = atoms.collect();
    let mean: f64 = atoms.iter().map(|(x, w)| x * w).sum();
    let var: f64 = atoms.iter().map(|(x, w)| w * (x - mean).powi(2)).sum();
    (mean, var.max(0.0).sqrt())
}
