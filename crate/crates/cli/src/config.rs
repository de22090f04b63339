//! Experiment configuration: one TOML file with named sections.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use riskcharge::mdp::MdpConfig;
use riskcharge::policy::{RiskMetric, TauDist};
use riskcharge::price::{PriceGrid, PriceModel, PriceModelParams, DEFAULT_TRIM};
use riskcharge::regression::ConstraintGrid;
use riskcharge::risk::RiskParams;
use riskcharge::search::{PipelineSetup, SelectionGrid};

pub const PRESETS: &[(&str, &str)] = &[
    ("paper_case_study", include_str!("../../../configs/paper_case_study.toml")),
    ("desk_scale", include_str!("../../../configs/desk_scale.toml")),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub price: PriceModelParams,
    pub grid: GridSection,
    pub mdp: MdpConfig,
    pub risk: RiskSection,
    pub tau: TauDist,
    pub simulation: SimulationSection,
    pub search: SearchSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Half-width in $/MWh of the integer grid.
    pub span: u32,
    /// Grid center; defaults to the rounded seasonal mean.
    pub center: Option<f64>,
    #[serde(default = "default_trim")]
    pub trim: f64,
}

fn default_trim() -> f64 {
    DEFAULT_TRIM
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub horizon: usize,
    pub verify_lambda: Vec<f64>,
    pub verify_alpha: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub p0: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub metric: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub sample_lambda: Vec<f64>,
    pub sample_alpha: Vec<f64>,
    pub degree: u32,
    pub constraint_points: usize,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Cartesian product in `lambda`-major order.
pub fn beta_grid(lambdas: &[f64], alphas: &[f64]) -> Result<Vec<RiskParams>> {
    let mut out = Vec::with_capacity(lambdas.len() * alphas.len());
    for &lambda in lambdas {
        for &alpha in alphas {
            out.push(RiskParams::new(lambda, alpha)?);
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text),
            None => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                bail!("unknown preset `{name}` (available: {})", names.join(", "))
            }
        }
    }

    /// Cross-field checks on top of each section's own validation.
    pub fn validate(&self) -> Result<()> {
        self.price.validate()?;
        self.mdp.validate(&self.price)?;
        self.tau.validate()?;
        if self.grid.span == 0 {
            bail!("invalid parameter `grid.span`: must be positive");
        }
        if !(self.grid.trim >= 0.0 && self.grid.trim < 0.5) {
            bail!("invalid parameter `grid.trim`: must lie in [0, 0.5)");
        }
        if self.risk.horizon == 0 {
            bail!("invalid parameter `risk.horizon`: must be at least 1");
        }
        beta_grid(&self.risk.lambda, &self.risk.alpha).context("in [risk]")?;
        beta_grid(&self.risk.verify_lambda, &self.risk.verify_alpha).context("in [risk] verify grid")?;
        if self.simulation.n_paths < 2 {
            bail!("invalid parameter `simulation.n_paths`: need at least 2");
        }
        self.metric()?;
        let grid = self.price_grid()?;
        let p0 = self.simulation.p0;
        if !(p0 >= grid.min() && p0 <= grid.max()) {
            bail!(
                "invalid parameter `simulation.p0`: {p0} outside the price grid [{}, {}]",
                grid.min(),
                grid.max()
            );
        }
        self.pipeline_setup()?.validate()?;
        Ok(())
    }

    pub fn metric(&self) -> Result<RiskMetric> {
        self.simulation
            .metric
            .parse()
            .with_context(|| "invalid parameter `simulation.metric`".to_string())
    }

    pub fn price_grid(&self) -> Result<PriceGrid> {
        let center = self.grid.center.unwrap_or(self.price.seas_c.round());
        Ok(PriceGrid::centered(center, self.grid.span)?)
    }

    /// Price model covering horizons up to `max_horizon` (terminal noise included).
    pub fn price_model(&self, max_horizon: usize) -> Result<PriceModel> {
        Ok(PriceModel::new(
            self.price.clone(),
            self.price_grid()?,
            self.grid.trim,
            max_horizon + 1,
        )?)
    }

    pub fn constraint_grid(&self) -> ConstraintGrid {
        ConstraintGrid::square(self.search.constraint_points)
    }

    pub fn pipeline_setup(&self) -> Result<PipelineSetup> {
        Ok(PipelineSetup {
            sample_grid: beta_grid(&self.search.sample_lambda, &self.search.sample_alpha)
                .context("in [search] sample grid")?,
            degree: self.search.degree,
            constraint_grid: self.constraint_grid(),
            selection_grid: SelectionGrid::default(),
            epsilons: self.search.epsilons.clone(),
            metric: self.metric()?,
            n_paths: self.simulation.n_paths,
            seed: self.simulation.seed,
            p0: self.simulation.p0,
        })
    }
}
