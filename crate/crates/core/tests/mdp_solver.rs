//! Backward induction: Bellman consistency, closed-form examples and risk monotonicity.

mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskcharge::mdp::{
    check_threshold_order, check_value_order, solve, verify_structure, MarketCompensation, MdpConfig,
    MdpInstance, ThresholdTable, BASESTOCK, CONVEXITY, PRICE_MONOTONE, THRESHOLD_PRICE,
};
use riskcharge::price::{PriceGrid, PriceModel, PriceModelParams};
use riskcharge::risk::{mean_cvar, RiskParams, RiskSchedule};
use riskcharge::{DiscreteDist, Error, Instance};

#[test]
fn bellman_rhs_reproduces_stored_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let horizon = 6;
    let model = desk_model(horizon + 1);
    for x_max in [3, 12] {
        let inst: Instance = desk_instance(x_max, horizon);
        for _ in 0..3 {
            let beta = random_schedule(&mut rng, horizon);
            let sol = solve(&inst, &beta).unwrap();
            for t in 0..horizon {
                let noise = model.noise(t);
                for p in 0..sol.n_prices() {
                    let price = sol.grid.point(p);
                    let rows = model.grid.transition(price, model.params.decay(), noise);
                    for r in 0..=sol.r_max {
                        // Post-decision value through the sorted-distribution route.
                        let next = DiscreteDist::from_atoms(
                            rows.iter().map(|&(q, w)| (*sol.value(t + 1, r, q), w)),
                        )
                        .unwrap();
                        let post = mean_cvar(&next, beta.at(t));
                        assert!((post - sol.post_value(t, r, p)).abs() <= 1e-10);
                        assert!((sol.bellman_rhs(t, r, p) - sol.value(t, r, p)).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn greedy_action_formula() {
    let grid = PriceGrid::centered(40.0, 2).unwrap();
    let full = ThresholdTable::new(2, 60, grid, vec![60; 10]).unwrap();
    assert_eq!(full.greedy_action(0, 10, 40.0).unwrap(), 50);
    let capped = ThresholdTable::new(2, 20, grid, vec![60; 10]).unwrap();
    assert_eq!(capped.greedy_action(1, 10, 41.3).unwrap(), 20);
    assert_eq!(full.greedy_action(0, 60, 40.0).unwrap(), 0);
    assert_eq!(full.greedy_action(0, 61, 40.0).unwrap(), 0);
    assert!(matches!(full.greedy_action(2, 10, 40.0), Err(Error::NotDecisionPeriod { .. })));
    assert!(ThresholdTable::new(2, 20, grid, vec![60; 9]).is_err());
}

#[test]
fn solved_greedy_action_matches_tables_off_grid() {
    let inst: Instance = desk_instance(3, 4);
    let sol = solve(&inst, &homogeneous(0.5, 0.7, 4)).unwrap();
    let table = sol.threshold_table();
    for t in 0..4 {
        for p in 0..sol.n_prices() {
            let price = sol.grid.point(p) + 0.3;
            for r in 0..=12 {
                let a = sol.greedy_action(t, r, price).unwrap();
                assert_eq!(a, table.greedy_action(t, r, price).unwrap());
                assert_eq!(a, sol.bellman_action(t, r, p));
            }
        }
    }
    assert!(sol.greedy_action(4, 0, 35.0).is_err());
}

#[test]
fn terminal_compensation_examples() {
    let mut cfg = MdpConfig {
        r_max: 60,
        x_max: 60,
        c_f: 0.5,
        p_ref: 0.05,
        gamma_h: 0.0,
        gamma_y: MarketCompensation::LinearCapped { slope: 0.0, cap: 0.0 },
        r0: 0,
    };
    assert_eq!(cfg.compensation(0, 100.0), 0.0);
    assert_eq!(cfg.compensation(-5, 100.0), 0.0);
    assert!((cfg.compensation(20, 100.0) - 1.0).abs() < 1e-12);

    // Same numbers through a solved terminal slice; the validator wants a positive slope,
    // so use one too small to matter.
    cfg.gamma_y = MarketCompensation::LinearCapped { slope: 1e-12, cap: 1e-12 };
    let horizon = 4;
    let params = PriceModelParams::caiso_winter();
    let model = PriceModel::new(params, PriceGrid::centered(34.0, 10).unwrap(), TRIM, horizon + 1).unwrap();
    let inst: Instance = MdpInstance::build(&cfg, &model, horizon).unwrap();
    let rn = solve(&inst, &homogeneous(0.0, 0.5, horizon)).unwrap();
    for p in 0..rn.n_prices() {
        assert_eq!(*rn.value(horizon, 60, p), 0.0);
        assert!((rn.value(horizon, 40, p) - 1.0).abs() < 1e-9);
    }

    // With market-dependent compensation the terminal outcome is random.
    let inst: Instance = desk_instance(3, horizon);
    let rn = solve(&inst, &homogeneous(0.0, 0.5, horizon)).unwrap();
    let averse = solve(&inst, &homogeneous(1.0, 0.9, horizon)).unwrap();
    let mut strict = 0;
    for p in 0..rn.n_prices() {
        for r in 0..=12 {
            let (a, b) = (averse.value(horizon, r, p), rn.value(horizon, r, p));
            assert!(*a >= b - 1e-12);
            strict += (*a > b + 1e-9) as usize;
        }
    }
    assert!(strict > 0);
}

#[test]
fn point_mass_prices_match_enumeration() {
    // Flat, jump-free, nearly noiseless prices: every transition is a point mass.
    let params = PriceModelParams {
        seas_a: 0.0,
        seas_b: 0.0,
        seas_c: 40.0,
        mu_y: 0.0,
        sigma_y: 1e-3,
        jump_prob: 0.0,
        ..PriceModelParams::caiso_winter()
    };
    let horizon = 2;
    let model = PriceModel::new(params.clone(), PriceGrid::centered(40.0, 6).unwrap(), TRIM, horizon + 1).unwrap();
    for t in 0..=horizon {
        assert_eq!(model.noise(t).len(), 1);
    }
    let cfg = MdpConfig {
        r_max: 2,
        x_max: 1,
        c_f: 0.5,
        p_ref: 0.05,
        gamma_h: 0.01,
        gamma_y: MarketCompensation::Softplus,
        r0: 0,
    };
    let inst: Instance = MdpInstance::build(&cfg, &model, horizon).unwrap();
    let d = params.decay();
    let step = |t: usize, p: f64| model.grid.point(model.grid.nearest(p * d + model.noise(t).support()[0]));
    for beta in [homogeneous(0.0, 0.5, horizon), homogeneous(1.0, 0.95, horizon)] {
        let sol = solve(&inst, &beta).unwrap();
        for p in 0..sol.n_prices() {
            let p0 = sol.grid.point(p);
            let p1 = step(0, p0);
            let p2 = step(1, p1);
            let y3 = p2 * d + model.noise(2).support()[0] - params.seasonality(3);
            for r in 0..=2u32 {
                let mut best = f64::INFINITY;
                for x0 in 0..=cfg.max_action(r) {
                    for x1 in 0..=cfg.max_action(r + x0) {
                        let energy = (x0 as f64 * p0 + x1 as f64 * p1) / 1000.0;
                        let cost = energy - 2.0 * cfg.c_f
                            + cfg.compensation(cfg.shortage(r + x0 + x1, horizon), y3);
                        best = best.min(cost);
                    }
                }
                assert!((sol.value(0, r, p) - best).abs() < 1e-12, "r={r} p={p0}");
            }
        }
    }
}

#[test]
fn corrupted_entry_is_located() {
    let inst: Instance = desk_instance(3, 6);
    let mut sol = solve(&inst, &homogeneous(0.5, 0.5, 6)).unwrap();
    assert!(verify_structure(&sol, 1e-9).all_passed());
    let bumped = sol.value(2, 5, 20) + 10.0;
    sol.corrupt_value(2, 5, 20, bumped);
    let report = verify_structure(&sol, 1e-9);
    let convex = report.get(CONVEXITY).unwrap();
    assert!(!convex.passed);
    let at = convex.location.unwrap();
    assert_eq!((at.t, at.r, at.p), (2, Some(5), sol.grid.point(20)));
    assert!((convex.worst_violation - 20.0).abs() < 1e-6);
    assert!(!report.get(PRICE_MONOTONE).unwrap().passed);
    // Thresholds come from post-decision values, which the corruption does not touch.
    assert!(report.get(THRESHOLD_PRICE).unwrap().passed);
    assert!(report.get(BASESTOCK).unwrap().passed);
}

#[test]
fn structure_holds_at_case_study_scale() {
    // Case-study battery and grid on a short horizon.
    let params = PriceModelParams::caiso_winter();
    let horizon = 4;
    let model = PriceModel::new(params.clone(), PriceGrid::centered(params.seas_c, 130).unwrap(), TRIM, horizon + 1)
        .unwrap();
    let cfg = MdpConfig { r_max: 60, x_max: 15, ..desk_config(15) };
    let inst: Instance = MdpInstance::build(&cfg, &model, horizon).unwrap();
    for (l, a) in [(0.0, 0.5), (1.0, 0.95)] {
        let sol = solve(&inst, &homogeneous(l, a, horizon)).unwrap();
        let report = verify_structure(&sol, 1e-9);
        assert!(report.all_passed(), "lambda={l} alpha={a}: {report:?}");
    }
}

#[test]
fn schedule_length_must_match_horizon() {
    let inst: Instance = desk_instance(3, 4);
    assert!(matches!(solve(&inst, &homogeneous(0.5, 0.5, 5)), Err(Error::Inconsistent(_))));
}

#[test]
fn initial_period_risk_raises_first_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let horizon = 6;
    for x_max in [3, 5, 12] {
        let inst: Instance = desk_instance(x_max, horizon);
        for _ in 0..4 {
            let base = random_schedule(&mut rng, horizon);
            let (lo, hi) = (random_params(&mut rng), random_params(&mut rng));
            let (lo, hi) = (
                RiskParams::new(lo.lambda.min(hi.lambda), lo.alpha.min(hi.alpha)).unwrap(),
                RiskParams::new(lo.lambda.max(hi.lambda), lo.alpha.max(hi.alpha)).unwrap(),
            );
            let a = solve(&inst, &base.with_initial(lo)).unwrap();
            let b = solve(&inst, &base.with_initial(hi)).unwrap();
            for p in 0..a.n_prices() {
                assert!(a.threshold(0, p) <= b.threshold(0, p), "x_max={x_max} p={p}");
            }
        }
    }
}

#[test]
fn slow_regime_incompatibility_search() {
    // The theory leaves room for cross-beta threshold inversions when x_max < r_max;
    // record whether this instance exhibits one. Nothing is asserted.
    let horizon = 6;
    let betas = beta_grid();
    for x_max in [3, 5] {
        let inst: Instance = desk_instance(x_max, horizon);
        let sols: Vec<_> = betas
            .iter()
            .map(|rp| solve(&inst, &RiskSchedule::homogeneous(rp.clone(), horizon).unwrap()).unwrap())
            .collect();
        let mut witnesses = 0;
        for (i, a) in betas.iter().enumerate() {
            for (j, b) in betas.iter().enumerate() {
                if i != j && a.le(b) && !check_threshold_order(&sols[i], &sols[j]).passed {
                    witnesses += 1;
                }
            }
        }
        println!("x_max={x_max}: {witnesses} comparable pairs with a threshold inversion");
    }
}

fn ordered_pair() -> impl Strategy<Value = (RiskParams, RiskParams)> {
    (0u32..=20, 0u32..=20, 1u32..99, 1u32..99).prop_map(|(l1, l2, a1, a2)| {
        let lo = RiskParams::new(l1.min(l2) as f64 / 20.0, a1.min(a2) as f64 / 100.0).unwrap();
        let hi = RiskParams::new(l1.max(l2) as f64 / 20.0, a1.max(a2) as f64 / 100.0).unwrap();
        (lo, hi)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn values_increase_with_risk_aversion((lo, hi) in ordered_pair(), fast in any::<bool>()) {
        let horizon = 4;
        let inst: Instance = desk_instance(if fast { 12 } else { 3 }, horizon);
        let a = solve(&inst, &RiskSchedule::homogeneous(lo, horizon).unwrap()).unwrap();
        let b = solve(&inst, &RiskSchedule::homogeneous(hi, horizon).unwrap()).unwrap();
        let order = check_value_order(&a, &b, 1e-9);
        prop_assert!(order.passed, "{:?}", order);
        if fast {
            let thresholds = check_threshold_order(&a, &b);
            prop_assert!(thresholds.passed, "{:?}", thresholds);
        }
    }
}
