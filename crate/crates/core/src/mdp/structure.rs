//! Executable structural checks on solved value and threshold tables.
//!
//! - convexity of `V_t(., p)` in the charge level,
//! - `V_t(r, .)` nondecreasing in price for `r < r_max`,
//! - thresholds nonincreasing in price (integers, checked exactly),
//! - greedy actions from the tables equal the basestock formula.
//!
//! Failures are report entries, not errors.

use std::fmt;

use crate::mdp::MdpSolution;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub t: usize,
    pub r: Option<u32>,
    pub p: f64,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.r {
            Some(r) => write!(f, "t={} r={} p={:.3}", self.t, r, self.p),
            None => write!(f, "t={} p={:.3}", self.t, self.p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation found; 0 when the check passes.
    pub worst_violation: f64,
    pub location: Option<Location>,
    pub violations: usize,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            worst_violation: 0.0,
            location: None,
            violations: 0,
        }
    }

    /// Record a margin that should be `>= -tol`.
    fn observe(&mut self, margin: f64, tol: f64, at: Location) {
        if !(margin >= -tol) {
            self.passed = false;
            self.violations += 1;
            let size = if margin.is_nan() { f64::INFINITY } else { -margin };
            if size > self.worst_violation || self.location.is_none() {
                self.worst_violation = size;
                self.location = Some(at);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub checks: Vec<CheckOutcome>,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CONVEXITY: &str = "convex_in_charge";
pub const PRICE_MONOTONE: &str = "value_nondecreasing_in_price";
pub const THRESHOLD_PRICE: &str = "threshold_nonincreasing_in_price";
pub const BASESTOCK: &str = "basestock_exact";

pub fn verify_structure<S: Scalar>(sol: &MdpSolution<S>, tolerance: f64) -> StructureReport {
    let n_p = sol.n_prices();
    let mut convex = CheckOutcome::new(CONVEXITY);
    let mut mono = CheckOutcome::new(PRICE_MONOTONE);
    let mut thresh = CheckOutcome::new(THRESHOLD_PRICE);
    let mut basestock = CheckOutcome::new(BASESTOCK);

    for t in 0..=sol.horizon {
        for p in 0..n_p {
            let price = sol.grid.point(p);
            for r in 1..sol.r_max {
                let second = sol.value(t, r - 1, p).clone() + sol.value(t, r + 1, p).clone()
                    - S::lit(2.0) * sol.value(t, r, p).clone();
                convex.observe(second.as_f64(), tolerance, Location { t, r: Some(r), p: price });
            }
            if p + 1 < n_p {
                for r in 0..sol.r_max {
                    let diff = sol.value(t, r, p + 1).clone() - sol.value(t, r, p).clone();
                    mono.observe(diff.as_f64(), tolerance, Location { t, r: Some(r), p: price });
                }
            }
        }
    }
    for t in 0..sol.horizon {
        for p in 0..n_p {
            let price = sol.grid.point(p);
            if p + 1 < n_p {
                let drop = sol.threshold(t, p) as f64 - sol.threshold(t, p + 1) as f64;
                thresh.observe(drop, 0.0, Location { t, r: None, p: price });
            }
            for r in 0..=sol.r_max {
                let gap = sol.bellman_action(t, r, p) as f64 - sol.threshold_action(t, r, p) as f64;
                basestock.observe(-gap.abs(), 0.0, Location { t, r: Some(r), p: price });
            }
        }
    }
    StructureReport {
        checks: vec![convex, mono, thresh, basestock],
    }
}

/// Thresholds of `lower` must not exceed those of `upper` anywhere (same horizon and grid).
pub fn check_threshold_order<S: Scalar>(
    lower: &MdpSolution<S>,
    upper: &MdpSolution<S>,
) -> CheckOutcome {
    let mut out = CheckOutcome::new("threshold_nondecreasing_in_beta");
    for t in 0..lower.horizon.min(upper.horizon) {
        for p in 0..lower.n_prices() {
            let margin = upper.threshold(t, p) as f64 - lower.threshold(t, p) as f64;
            out.observe(margin, 0.0, Location { t, r: None, p: lower.grid.point(p) });
        }
    }
    out
}

/// Values of `lower` must not exceed those of `upper` (risk-monotonicity of values).
pub fn check_value_order<S: Scalar>(
    lower: &MdpSolution<S>,
    upper: &MdpSolution<S>,
    tolerance: f64,
) -> CheckOutcome {
    let mut out = CheckOutcome::new("value_nondecreasing_in_beta");
    for t in 0..=lower.horizon.min(upper.horizon) {
        for p in 0..lower.n_prices() {
            for r in 0..=lower.r_max {
                let margin = upper.value(t, r, p).clone() - lower.value(t, r, p).clone();
                out.observe(margin.as_f64(), tolerance, Location { t, r: Some(r), p: lower.grid.point(p) });
            }
        }
    }
    out
}
