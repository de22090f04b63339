use crate::error::{Error, Result};
use crate::mdp::MdpConfig;
use crate::price::{PriceGrid, PriceModel};
use crate::scalar::Scalar;

/// A horizon-`T` charging MDP with every model input lifted into the scalar type `S`.
///
/// Layout: grid prices are indexed `0..n_prices`, charge levels `0..=r_max`.
#[derive(Debug, Clone)]
pub struct MdpInstance<S> {
    pub cfg: MdpConfig,
    pub horizon: usize,
    pub grid: PriceGrid,
    c_f: S,
    price_kwh: Vec<S>,
    // [t][p] -> next-price targets and their probabilities, t < T.
    targets: Vec<Vec<Vec<usize>>>,
    probs: Vec<Vec<Vec<S>>>,
    // Terminal compensation outcomes: probabilities of psi_{T+1}, costs per (r, p).
    terminal_probs: Vec<S>,
    terminal_costs: Vec<Vec<S>>,
}

impl<S: Scalar> MdpInstance<S> {
    pub fn build(cfg: &MdpConfig, model: &PriceModel, horizon: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(crate::error::invalid("horizon", "must be at least 1"));
        }
        cfg.validate(&model.params)?;
        if model.periods() < horizon + 1 {
            return Err(Error::Inconsistent(format!(
                "price model covers {} periods, horizon {horizon} needs {}",
                model.periods(),
                horizon + 1
            )));
        }
        let grid = model.grid;
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let decay = model.params.decay();
        let mut targets = Vec::with_capacity(horizon);
        let mut probs = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let noise = model.noise(t);
            let (mut tt, mut pt) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
            for p in grid.points() {
                let rows = grid.transition(p, decay, noise);
                tt.push(rows.iter().map(|(j, _)| *j).collect());
                pt.push(rows.iter().map(|(_, w)| S::lit(*w)).collect());
            }
            targets.push(tt);
            probs.push(pt);
        }

        // Y_{T+1} = p e^{-kappa} + psi_{T+1} - g(T+1), left undiscretized.
        let noise = model.noise(horizon);
        let g_next = model.params.seasonality(horizon + 1);
        let terminal_probs = noise.probs().iter().map(|w| S::lit(*w)).collect();
        let n_r = cfg.r_max as usize + 1;
        let mut terminal_costs = Vec::with_capacity(n_r * grid.len());
        for r in 0..=cfg.r_max {
            let h = cfg.shortage(r, horizon);
            for p in grid.points() {
                terminal_costs.push(
                    noise
                        .support()
                        .iter()
                        .map(|k| S::lit(cfg.compensation(h, p * decay + k - g_next)))
                        .collect(),
                );
            }
        }

        Ok(Self {
            cfg: cfg.clone(),
            horizon,
            c_f: S::lit(cfg.c_f),
            price_kwh: grid.points().map(|p| S::lit(p) / S::lit(1000.0)).collect(),
            grid,
            targets,
            probs,
            terminal_probs,
            terminal_costs,
        })
    }

    pub fn n_prices(&self) -> usize {
        self.grid.len()
    }

    pub fn n_levels(&self) -> usize {
        self.cfg.r_max as usize + 1
    }

    pub fn c_f(&self) -> &S {
        &self.c_f
    }

    /// Grid price `p` converted to $/kWh.
    pub fn price_kwh(&self, p: usize) -> &S {
        &self.price_kwh[p]
    }

    /// Next-price targets (grid indices) and probabilities from grid price `p` at period `t`.
    pub fn transition(&self, t: usize, p: usize) -> (&[usize], &[S]) {
        (&self.targets[t][p], &self.probs[t][p])
    }

    /// Terminal compensation outcomes at `(r, p)` and their probabilities.
    pub fn terminal_outcomes(&self, r: u32, p: usize) -> (&[S], &[S]) {
        (
            &self.terminal_costs[r as usize * self.grid.len() + p],
            &self.terminal_probs,
        )
    }
}
