//! Value-at-risk, CVaR and the mean-CVaR one-step risk measure on finite distributions.
//!
//! CVaR is evaluated in closed form: the Rockafellar-Uryasev objective
//! `u + E[(X - u)^+] / (1 - alpha)` is piecewise linear in `u` and attains its infimum at
//! any alpha-quantile, in particular at `VaR_alpha`. Evaluating it there is equivalent to
//! averaging the worst `1 - alpha` of the mass with the quantile atom split proportionally.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDist;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Degree of risk-aversion for one period: tail weight `lambda` and tail level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskParams<S = f64> {
    pub lambda: S,
    pub alpha: S,
}

impl<S: Scalar> RiskParams<S> {
    pub fn new(lambda: S, alpha: S) -> Result<Self> {
        let rp = Self { lambda, alpha };
        rp.validate()?;
        Ok(rp)
    }

    pub fn risk_neutral() -> Self {
        Self {
            lambda: S::zero(),
            alpha: S::lit(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= S::zero() && self.lambda <= S::one()) {
            return Err(invalid("lambda", format!("{:?} not in [0, 1]", self.lambda)));
        }
        if !(self.alpha > S::zero() && self.alpha < S::one()) {
            return Err(invalid("alpha", format!("{:?} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }

    /// Componentwise order: `self` is no more risk-averse than `other`.
    pub fn le(&self, other: &Self) -> bool {
        self.lambda <= other.lambda && self.alpha <= other.alpha
    }

    pub fn cast<T: Scalar>(&self) -> RiskParams<T> {
        RiskParams {
            lambda: T::lit(self.lambda.as_f64()),
            alpha: T::lit(self.alpha.as_f64()),
        }
    }
}

/// One `RiskParams` per period `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSchedule<S = f64> {
    per_period: Vec<RiskParams<S>>,
}

impl<S: Scalar> RiskSchedule<S> {
    pub fn new(per_period: Vec<RiskParams<S>>) -> Result<Self> {
        if per_period.is_empty() {
            return Err(invalid("beta", "schedule needs at least two periods"));
        }
        for rp in &per_period {
            rp.validate()?;
        }
        Ok(Self { per_period })
    }

    /// The same `(lambda, alpha)` in every period of a horizon-`horizon` problem.
    pub fn homogeneous(rp: RiskParams<S>, horizon: usize) -> Result<Self> {
        rp.validate()?;
        Ok(Self {
            per_period: vec![rp; horizon + 1],
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_period.len() - 1
    }

    pub fn at(&self, t: usize) -> &RiskParams<S> {
        &self.per_period[t]
    }

    pub fn periods(&self) -> &[RiskParams<S>] {
        &self.per_period
    }

    /// Copy with the period-0 parameters replaced.
    pub fn with_initial(&self, rp: RiskParams<S>) -> Self {
        let mut per_period = self.per_period.clone();
        per_period[0] = rp;
        Self { per_period }
    }

    pub fn le(&self, other: &Self) -> bool {
        self.per_period.len() == other.per_period.len()
            && self.per_period.iter().zip(&other.per_period).all(|(a, b)| a.le(b))
    }

    pub fn cast<T: Scalar>(&self) -> RiskSchedule<T> {
        RiskSchedule {
            per_period: self.per_period.iter().map(RiskParams::cast).collect(),
        }
    }
}

pub fn var_discrete<S: Scalar>(dist: &DiscreteDist<S>, alpha: &S) -> S {
    var_sorted(dist.support(), dist.probs(), alpha)
}

pub fn cvar_discrete<S: Scalar>(dist: &DiscreteDist<S>, alpha: &S) -> S {
    let var = var_discrete(dist, alpha);
    cvar_at(dist.support(), dist.probs(), alpha, var)
}

pub fn mean_cvar<S: Scalar>(dist: &DiscreteDist<S>, rp: &RiskParams<S>) -> S {
    let mean = dist.mean();
    if rp.lambda == S::zero() {
        return mean;
    }
    let cvar = cvar_discrete(dist, &rp.alpha);
    combine(mean, cvar, &rp.lambda)
}

/// Rockafellar-Uryasev objective `u + E[(X - u)^+] / (1 - alpha)`.
pub fn ru_objective<S: Scalar>(values: &[S], probs: &[S], alpha: &S, u: &S) -> S {
    let excess = values
        .iter()
        .zip(probs)
        .fold(S::zero(), |acc, (v, p)| {
            if *v > *u {
                acc + (v.clone() - u.clone()) * p.clone()
            } else {
                acc
            }
        });
    u.clone() + excess / (S::one() - alpha.clone())
}

/// Mean-CVaR of an unsorted, possibly repeated list of atoms.
///
/// `scratch` is reused between calls to avoid reallocating in the solver's inner loop.
pub fn mean_cvar_atoms<S: Scalar>(
    values: &[S],
    probs: &[S],
    rp: &RiskParams<S>,
    scratch: &mut Vec<(S, S)>,
) -> S {
    debug_assert_eq!(values.len(), probs.len());
    let mean = values
        .iter()
        .zip(probs)
        .fold(S::zero(), |acc, (v, p)| acc + v.clone() * p.clone());
    if rp.lambda == S::zero() {
        return mean;
    }
    scratch.clear();
    scratch.extend(values.iter().cloned().zip(probs.iter().cloned()));
    scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("unordered value"));
    let mut cum = S::zero();
    let mut var = scratch.last().expect("non-empty atoms").0.clone();
    for (v, p) in scratch.iter() {
        cum = cum + p.clone();
        if cum > rp.alpha {
            var = v.clone();
            break;
        }
    }
    let excess = scratch
        .iter()
        .rev()
        .take_while(|(v, _)| *v > var)
        .fold(S::zero(), |acc, (v, p)| acc + (v.clone() - var.clone()) * p.clone());
    let cvar = var + excess / (S::one() - rp.alpha.clone());
    combine(mean, cvar, &rp.lambda)
}

fn combine<S: Scalar>(mean: S, cvar: S, lambda: &S) -> S {
    if *lambda == S::one() {
        return cvar;
    }
    (S::one() - lambda.clone()) * mean + lambda.clone() * cvar
}

/// Smallest support point with `P(X <= u) > alpha`, on an increasing support.
fn var_sorted<S: Scalar>(support: &[S], probs: &[S], alpha: &S) -> S {
    let mut cum = S::zero();
    for (v, p) in support.iter().zip(probs) {
        cum = cum + p.clone();
        if cum > *alpha {
            return v.clone();
        }
    }
    // Only reachable when rounding leaves the total mass at or below alpha.
    support.last().expect("non-empty support").clone()
}

fn cvar_at<S: Scalar>(support: &[S], probs: &[S], alpha: &S, var: S) -> S {
    ru_objective(support, probs, alpha, &var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    fn two_point() -> DiscreteDist {
        DiscreteDist::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn var_examples() {
        assert_eq!(var_discrete(&DiscreteDist::point_mass(7.0), &0.9), 7.0);
        assert_eq!(var_discrete(&two_point(), &0.5), 3.0);
        assert_eq!(var_discrete(&two_point(), &0.4), 1.0);
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(cvar_discrete(&DiscreteDist::point_mass(-2.5), &0.3), -2.5);
        assert_eq!(cvar_discrete(&two_point(), &0.5), 3.0);
        let d = DiscreteDist::new(vec![0.0, 10.0], vec![0.9, 0.1]).unwrap();
        assert!((cvar_discrete(&d, &0.8_f64) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cvar_exact_in_rationals() {
        let d = DiscreteDist::new(
            vec![ratio(0, 1), ratio(10, 1)],
            vec![ratio(9, 10), ratio(1, 10)],
        )
        .unwrap();
        assert_eq!(cvar_discrete(&d, &ratio(4, 5)), ratio(5, 1));
    }

    #[test]
    fn mean_cvar_examples() {
        let d = two_point();
        assert_eq!(mean_cvar(&d, &RiskParams::new(0.0, 0.9).unwrap()), 2.0);
        assert_eq!(mean_cvar(&d, &RiskParams::new(1.0, 0.5).unwrap()), 3.0);
        assert_eq!(mean_cvar(&d, &RiskParams::new(0.5, 0.5).unwrap()), 2.5);
    }

    #[test]
    fn atoms_agree_with_dist() {
        let values = [3.0, -1.0, 3.0, 7.5, 0.0];
        let probs = [0.1, 0.3, 0.2, 0.15, 0.25];
        let d = DiscreteDist::from_atoms(values.iter().copied().zip(probs.iter().copied())).unwrap();
        let mut scratch = Vec::new();
        for &(l, a) in &[(0.0, 0.5), (0.3, 0.2), (1.0, 0.95), (0.7, 0.5)] {
            let rp = RiskParams::new(l, a).unwrap();
            let x: f64 = mean_cvar_atoms(&values, &probs, &rp, &mut scratch);
            assert!((x - mean_cvar(&d, &rp)).abs() < 1e-14);
        }
    }

    #[test]
    fn params_validation() {
        assert!(RiskParams::new(1.1, 0.5).is_err());
        assert!(RiskParams::new(0.5, 1.0).is_err());
        assert!(RiskParams::new(0.5, 0.0).is_err());
        assert!(RiskParams::<BigRational>::new(ratio(1, 2), ratio(1, 3)).is_ok());
        assert!(RiskSchedule::<f64>::new(vec![]).is_err());
        let s = RiskSchedule::homogeneous(RiskParams::new(0.2, 0.3).unwrap(), 4).unwrap();
        assert_eq!(s.horizon(), 4);
        assert_eq!(s.periods().len(), 5);
    }
}
