//! Risk-averse dynamic EV charging.
//!
//! A vehicle parked for `T` fifteen-minute periods is charged against a seasonal
//! mean-reverting jump-diffusion spot price. Charging decisions minimize a nested
//! mean-CVaR dynamic risk measure of energy costs plus a terminal under-charge
//! compensation. The crate provides:
//!
//! - [`price`]: the price model, its integer noise discretization and price grid,
//! - [`risk`]: VaR, CVaR and mean-CVaR on finite distributions,
//! - [`mdp`]: backward induction, basestock thresholds and structural checks,
//! - [`policy`]: Monte Carlo evaluation of practical reward and risk,
//! - [`regression`] and [`search`]: monotone polynomial surfaces and risk-parameter selection.
//!
//! The risk functionals and the solver are generic over [`Scalar`]; the aliases below pick
//! the usual instantiations.

pub mod dist;
pub mod error;
pub mod lp;
pub mod mdp;
pub mod policy;
pub mod price;
pub mod regression;
pub mod risk;
pub mod scalar;
pub mod search;

pub use dist::DiscreteDist;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact arithmetic scalar.
pub type Rational = num_rational::BigRational;

pub type Solution = mdp::MdpSolution<f64>;
pub type Instance = mdp::MdpInstance<f64>;
pub type ExactSolution = mdp::MdpSolution<Rational>;
pub type ExactInstance = mdp::MdpInstance<Rational>;
pub type Schedule = risk::RiskSchedule<f64>;
