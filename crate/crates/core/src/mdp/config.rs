use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::price::PriceModelParams;

/// Market-dependent compensation per unit of shortage, `gamma_Y(y)` with `y` in $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarketCompensation {
    /// `log(1 + e^y)`.
    Softplus,
    /// `clamp(slope * y, 0, cap)`.
    LinearCapped { slope: f64, cap: f64 },
}

impl MarketCompensation {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            // Stable form of ln(1 + e^y).
            Self::Softplus => y.max(0.0) + (-y.abs()).exp().ln_1p(),
            Self::LinearCapped { slope, cap } => (slope * y).clamp(0.0, cap),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Softplus => 1.0,
            Self::LinearCapped { slope, .. } => slope,
        }
    }
}

impl Default for MarketCompensation {
    fn default() -> Self {
        Self::Softplus
    }
}

/// Static data of the charging problem. Energy is in integer kWh, prices in $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpConfig {
    /// Battery capacity (kWh).
    pub r_max: u32,
    /// Maximum charge per period (kWh).
    pub x_max: u32,
    /// Access fee per period ($).
    pub c_f: f64,
    /// Retail reference price ($/kWh).
    pub p_ref: f64,
    /// Inconvenience coefficient per kWh of shortage.
    pub gamma_h: f64,
    #[serde(default)]
    pub gamma_y: MarketCompensation,
    /// Initial charge (kWh).
    #[serde(default)]
    pub r0: u32,
}

impl MdpConfig {
    /// Checks ranges and the Lipschitz bound `L <= e^{2 kappa} / p_ref` on `gamma_Y`.
    pub fn validate(&self, price: &PriceModelParams) -> Result<()> {
        if self.x_max < 1 {
            return Err(invalid("x_max", "must be at least 1"));
        }
        if self.r0 > self.r_max {
            return Err(invalid("r0", format!("{} exceeds r_max = {}", self.r0, self.r_max)));
        }
        if !(self.p_ref > 0.0 && self.p_ref.is_finite()) {
            return Err(invalid("p_ref", "must be positive"));
        }
        if !(self.gamma_h >= 0.0 && self.gamma_h.is_finite()) {
            return Err(invalid("gamma_h", "must be nonnegative"));
        }
        if !self.c_f.is_finite() {
            return Err(invalid("c_f", "must be finite"));
        }
        if let MarketCompensation::LinearCapped { slope, cap } = self.gamma_y {
            if !(slope > 0.0 && cap > 0.0) {
                return Err(invalid("gamma_y", "slope and cap must be positive"));
            }
        }
        let bound = (2.0 * price.kappa_y).exp() / self.p_ref;
        if self.gamma_y.lipschitz() > bound {
            return Err(invalid(
                "gamma_y",
                format!(
                    "Lipschitz constant {} exceeds e^(2 kappa_Y) / p_ref = {bound}",
                    self.gamma_y.lipschitz()
                ),
            ));
        }
        Ok(())
    }

    /// Fast charging: a full charge fits in one period.
    pub fn is_fast(&self) -> bool {
        self.x_max >= self.r_max
    }

    /// Charge a customer expects after `horizon` periods: `min(r0 + T x_max, r_max)`.
    pub fn benchmark(&self, horizon: usize) -> u32 {
        let reach = self.r0 as u64 + horizon as u64 * self.x_max as u64;
        reach.min(self.r_max as u64) as u32
    }

    /// Shortage `h(r) = benchmark - r`; negative only above the benchmark.
    pub fn shortage(&self, r: u32, horizon: usize) -> i64 {
        self.benchmark(horizon) as i64 - r as i64
    }

    /// Terminal compensation `[1 + gamma_h h + gamma_Y(y)] h p_ref` for shortage `h`
    /// (its positive part) and deseasonalized price deviation `deviation` in $/MWh.
    pub fn compensation(&self, shortage: i64, deviation: f64) -> f64 {
        let h = shortage.max(0) as f64;
        if h == 0.0 {
            return 0.0;
        }
        (1.0 + self.gamma_h * h + self.gamma_y.eval(deviation / 1000.0)) * h * self.p_ref
    }

    /// Largest feasible charge from level `r`.
    pub fn max_action(&self, r: u32) -> u32 {
        (self.r_max - r).min(self.x_max)
    }
}
