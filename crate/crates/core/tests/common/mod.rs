//! Shared desk-scale fixtures for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use riskcharge::mdp::{MarketCompensation, MdpConfig, MdpInstance};
use riskcharge::price::{PriceGrid, PriceModel, PriceModelParams};
use riskcharge::risk::{RiskParams, RiskSchedule};
use riskcharge::Scalar;

pub const TRIM: f64 = 1.5e-3;

pub fn desk_config(x_max: u32) -> MdpConfig {
    MdpConfig {
        r_max: 12,
        x_max,
        c_f: 0.5,
        p_ref: 0.05,
        gamma_h: 0.01,
        gamma_y: MarketCompensation::Softplus,
        r0: 0,
    }
}

/// 41 integer prices around the seasonal level, noise laws for `periods` steps.
pub fn desk_model(periods: usize) -> PriceModel {
    let params = PriceModelParams::caiso_winter();
    let grid = PriceGrid::centered(params.seas_c, 20).unwrap();
    PriceModel::new(params, grid, TRIM, periods).unwrap()
}

pub fn desk_instance<S: Scalar>(x_max: u32, horizon: usize) -> MdpInstance<S> {
    MdpInstance::build(&desk_config(x_max), &desk_model(horizon + 1), horizon).unwrap()
}

/// The 5x5 grid lambda in {0, .25, .5, .75, 1} x alpha in {.1, .3, .5, .7, .9}.
pub fn beta_grid() -> Vec<RiskParams> {
    let mut out = Vec::new();
    for l in [0.0, 0.25, 0.5, 0.75, 1.0] {
        for a in [0.1, 0.3, 0.5, 0.7, 0.9] {
            out.push(RiskParams::new(l, a).unwrap());
        }
    }
    out
}

pub fn random_params<R: Rng>(rng: &mut R) -> RiskParams {
    RiskParams::new(rng.random_range(0.0..=1.0), rng.random_range(0.01..0.99)).unwrap()
}

/// Independent `(lambda_t, alpha_t)` per period.
pub fn random_schedule<R: Rng>(rng: &mut R, horizon: usize) -> RiskSchedule {
    RiskSchedule::new((0..=horizon).map(|_| random_params(rng)).collect()).unwrap()
}

pub fn homogeneous(lambda: f64, alpha: f64, horizon: usize) -> RiskSchedule {
    RiskSchedule::homogeneous(RiskParams::new(lambda, alpha).unwrap(), horizon).unwrap()
}

/// Reservation lengths of the desk preset.
pub fn desk_tau() -> riskcharge::policy::TauDist {
    riskcharge::policy::TauDist::new(vec![4, 5, 6, 7, 8], vec![0.15, 0.3, 0.25, 0.18, 0.12]).unwrap()
}

/// Desk instance with a cheap retail reference price: under-charging is sometimes cheaper
/// than buying energy, so the shortage risk is not identically zero.
pub fn stressed_config(x_max: u32) -> MdpConfig {
    MdpConfig { p_ref: 0.02, ..desk_config(x_max) }
}
