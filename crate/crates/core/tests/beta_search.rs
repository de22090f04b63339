//! Monotone surface fits, grid selection and the end-to-end selection pipeline.

mod common;

use common::*;
use proptest::prelude::*;
use riskcharge::policy::RiskMetric;
use riskcharge::regression::{fit_surface, ConstraintGrid, MonotoneFit};
use riskcharge::risk::RiskParams;
use riskcharge::search::{pipeline, select_beta_on, PipelineSetup, RowKind, SelectionGrid};

fn small_grid() -> SelectionGrid {
    SelectionGrid {
        lambda_points: 21,
        alpha_points: 19,
        alpha_lo: 0.05,
        alpha_hi: 0.95,
    }
}

fn data() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>)> {
    prop::collection::vec((0.0..=1.0f64, 0.01..0.99f64, -1.0..1.0f64), 8..30)
        .prop_map(|rows| rows.into_iter().map(|(l, a, v)| ((l, a), v)).unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constraints_never_lower_the_error((points, values) in data(), degree in 1u32..=3) {
        let grid = ConstraintGrid::square(10);
        let free = fit_surface(&points, &values, degree, None).unwrap();
        let mono = fit_surface(&points, &values, degree, Some(&grid)).unwrap();
        prop_assert!(mono.l1_error(&points, &values) >= free.l1_error(&points, &values) - 1e-9);
        prop_assert!(mono.max_partial(&grid) <= 1e-9);
        prop_assert!(mono.constrained && !free.constrained);
    }

    #[test]
    fn fitted_reward_grows_with_epsilon((points, values) in data(), rewards in prop::collection::vec(-1.0..1.0f64, 30)) {
        let grid = ConstraintGrid::square(8);
        let risk = fit_surface(&points, &values, 2, Some(&grid)).unwrap();
        let reward = fit_surface(&points, &rewards[..points.len()], 2, None).unwrap();
        let mut last = f64::NEG_INFINITY;
        for eps in [-0.5, -0.2, 0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
            let pick = select_beta_on(&small_grid(), &reward, &risk, eps);
            if pick.feasible {
                prop_assert!(pick.fitted_risk <= eps);
                prop_assert!(pick.fitted_reward >= last);
                last = pick.fitted_reward;
            }
        }
    }
}

#[test]
fn linear_generator_is_recovered_under_constraints() {
    let generator = |l: f64, a: f64| 1.0 - 0.5 * l - 0.3 * a;
    let points: Vec<(f64, f64)> = ConstraintGrid::square(6).points().collect();
    let values: Vec<f64> = points.iter().map(|&(l, a)| generator(l, a)).collect();
    let fit = fit_surface(&points, &values, 3, Some(&ConstraintGrid::square(20))).unwrap();
    assert!(fit.l1_error(&points, &values) <= 1e-8);
    assert!((fit.evaluate(0.5, 0.5) - 0.6).abs() <= 1e-8);
    assert_eq!(MonotoneFit::zero(3).evaluate(0.3, 0.7), 0.0);
}

#[test]
fn slack_constraint_gives_the_unconstrained_argmax() {
    let points: Vec<(f64, f64)> = ConstraintGrid::square(5).points().collect();
    let rewards: Vec<f64> = points.iter().map(|&(l, a)| -(l - 0.3).powi(2) - (a - 0.6).powi(2)).collect();
    let risks: Vec<f64> = points.iter().map(|&(l, a)| 0.5 - 0.2 * l - 0.2 * a).collect();
    let reward = fit_surface(&points, &rewards, 2, None).unwrap();
    let risk = fit_surface(&points, &risks, 1, Some(&ConstraintGrid::square(5))).unwrap();
    let loose = select_beta_on(&small_grid(), &reward, &risk, 10.0);
    assert!(loose.feasible);
    assert!((loose.beta.lambda - 0.3).abs() < 1e-9 && (loose.beta.alpha - 0.6).abs() < 1e-9);
    // A tight cap pushes the choice toward larger (lambda, alpha).
    let tight = select_beta_on(&small_grid(), &reward, &risk, 0.25);
    assert!(tight.fitted_risk <= 0.25);
    assert!(tight.beta.lambda + tight.beta.alpha > 0.9);
}

fn setup(sample_grid: Vec<RiskParams>, degree: u32) -> PipelineSetup {
    PipelineSetup {
        sample_grid,
        degree,
        constraint_grid: ConstraintGrid::square(12),
        selection_grid: small_grid(),
        epsilons: vec![0.3, 0.0, 0.1, 0.45],
        metric: RiskMetric::default(),
        n_paths: 1000,
        seed: 99,
        p0: 35.0,
    }
}

#[test]
fn single_sample_gives_constant_fits() {
    let cfg = stressed_config(12);
    let model = desk_model(9);
    let one = RiskParams::new(0.5, 0.5).unwrap();
    let out = pipeline(&setup(vec![one], 0), &cfg, &model, &desk_tau()).unwrap();
    let sample = out.samples[0].metrics;
    assert!((out.reward_fit.evaluate(0.9, 0.2) - sample.reward).abs() < 1e-9);
    assert!((out.risk_fit.evaluate(0.1, 0.8) - sample.risk).abs() < 1e-9);
    for row in &out.rows[1..out.rows.len() - 1] {
        let b = row.beta.as_ref().unwrap();
        assert_eq!((b.lambda, b.alpha), (0.0, 0.05));
        assert_eq!(row.feasible, sample.risk <= epsilon(row.kind));
    }
}

fn epsilon(kind: RowKind) -> f64 {
    match kind {
        RowKind::Epsilon(e) => e,
        _ => panic!("not an epsilon row"),
    }
}

#[test]
fn recommendations_respect_risk_ordering() {
    let cfg = stressed_config(12);
    let model = desk_model(9);
    let out = pipeline(&setup(beta_grid(), 3), &cfg, &model, &desk_tau()).unwrap();
    assert_eq!(out.rows.len(), 6);
    assert_eq!(out.rows[0].kind, RowKind::Default);
    assert_eq!(out.risk_neutral().kind, RowKind::RiskNeutral);
    let eps: Vec<f64> = out.rows[1..5].iter().map(|r| epsilon(r.kind)).collect();
    assert_eq!(eps, vec![0.0, 0.1, 0.3, 0.45]);
    assert_eq!(out.rows[0].metrics.risk, 0.0);

    let picks = &out.rows[1..5];
    for (i, a) in picks.iter().enumerate() {
        for b in &picks[i + 1..] {
            let (ba, bb) = (a.beta.as_ref().unwrap(), b.beta.as_ref().unwrap());
            if bb.le(ba) {
                let se = (a.metrics.risk_se.powi(2) + b.metrics.risk_se.powi(2)).sqrt();
                assert!(a.metrics.risk <= b.metrics.risk + 2.0 * se);
            }
        }
    }
    let mut csv = Vec::new();
    out.write_selection_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["Default", "0.000000", "0.100000", "0.300000", "0.450000", "RN"]);
}
