//! Properties of VaR, CVaR and mean-CVaR, checked exactly on rational distributions.

use num_traits::{One, Zero};
use proptest::prelude::*;
use riskcharge::risk::{cvar_discrete, mean_cvar, mean_cvar_atoms, ru_objective, var_discrete, RiskParams};
use riskcharge::scalar::ratio;
use riskcharge::{DiscreteDist, Rational};

/// Atoms with integer values and rational probabilities from integer weights.
fn rational_atoms() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-50i64..50, 1i64..20), 1..12)
}

fn to_dist(atoms: &[(i64, i64)]) -> DiscreteDist<Rational> {
    let total: i64 = atoms.iter().map(|(_, w)| w).sum();
    DiscreteDist::from_atoms(atoms.iter().map(|&(v, w)| (ratio(v, 1), ratio(w, total)))).unwrap()
}

fn level() -> impl Strategy<Value = Rational> {
    (1i64..99).prop_map(|k| ratio(k, 100))
}

fn weight() -> impl Strategy<Value = Rational> {
    (0i64..=10).prop_map(|k| ratio(k, 10))
}

proptest! {
    #[test]
    fn translation_invariance(atoms in rational_atoms(), lambda in weight(), alpha in level(), c in -30i64..30) {
        let d = to_dist(&atoms);
        let c = ratio(c, 1);
        let shifted = d.map(|x| x + c.clone()).unwrap();
        let rp = RiskParams::new(lambda, alpha).unwrap();
        prop_assert_eq!(mean_cvar(&shifted, &rp), mean_cvar(&d, &rp) + c);
    }

    #[test]
    fn positive_homogeneity(atoms in rational_atoms(), lambda in weight(), alpha in level(), a in 0i64..7) {
        let d = to_dist(&atoms);
        let a = ratio(a, 3);
        let rp = RiskParams::new(lambda, alpha).unwrap();
        let scaled = if a.is_zero() {
            DiscreteDist::point_mass(Rational::zero())
        } else {
            d.map(|x| x * a.clone()).unwrap()
        };
        prop_assert_eq!(mean_cvar(&scaled, &rp), a * mean_cvar(&d, &rp));
    }

    #[test]
    fn monotone_under_coupling(atoms in rational_atoms(), bumps in prop::collection::vec(0i64..5, 12), lambda in weight(), alpha in level()) {
        let total: i64 = atoms.iter().map(|(_, w)| w).sum();
        let low = DiscreteDist::from_atoms(atoms.iter().map(|&(v, w)| (ratio(v, 1), ratio(w, total)))).unwrap();
        let high = DiscreteDist::from_atoms(
            atoms.iter().zip(&bumps).map(|(&(v, w), b)| (ratio(v + b, 1), ratio(w, total))),
        )
        .unwrap();
        let rp = RiskParams::new(lambda, alpha).unwrap();
        prop_assert!(mean_cvar(&high, &rp) >= mean_cvar(&low, &rp));
    }

    #[test]
    fn cvar_dominates_mean_and_var(atoms in rational_atoms(), alpha in level()) {
        let d = to_dist(&atoms);
        let cvar = cvar_discrete(&d, &alpha);
        prop_assert!(cvar >= d.mean());
        prop_assert!(cvar >= var_discrete(&d, &alpha));
    }

    #[test]
    fn nondecreasing_in_lambda_and_alpha(atoms in rational_atoms(), l1 in weight(), l2 in weight(), a1 in level(), a2 in level()) {
        let d = to_dist(&atoms);
        let (l_lo, l_hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (a_lo, a_hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let base = mean_cvar(&d, &RiskParams::new(l_lo.clone(), a_lo.clone()).unwrap());
        prop_assert!(mean_cvar(&d, &RiskParams::new(l_hi.clone(), a_lo.clone()).unwrap()) >= base);
        prop_assert!(mean_cvar(&d, &RiskParams::new(l_lo, a_hi).unwrap()) >= base);
    }

    /// The infimum over `u` is attained on the support, so the minimum over atoms is exact.
    #[test]
    fn sorting_matches_objective_minimum(atoms in rational_atoms(), alpha in level()) {
        let d = to_dist(&atoms);
        let best = d
            .support()
            .iter()
            .map(|u| ru_objective(d.support(), d.probs(), &alpha, u))
            .min()
            .unwrap();
        prop_assert_eq!(cvar_discrete(&d, &alpha), best);
    }

    #[test]
    fn unsorted_atoms_agree(atoms in rational_atoms(), lambda in weight(), alpha in level()) {
        let total: i64 = atoms.iter().map(|(_, w)| w).sum();
        let values: Vec<Rational> = atoms.iter().map(|&(v, _)| ratio(v, 1)).collect();
        let probs: Vec<Rational> = atoms.iter().map(|&(_, w)| ratio(w, total)).collect();
        let rp = RiskParams::new(lambda, alpha).unwrap();
        let mut scratch = Vec::new();
        prop_assert_eq!(mean_cvar_atoms(&values, &probs, &rp, &mut scratch), mean_cvar(&to_dist(&atoms), &rp));
    }

    #[test]
    fn float_homogeneity(values in prop::collection::vec(-100.0f64..100.0, 1..20), a in 0.0f64..10.0, alpha in 0.01f64..0.99, lambda in 0.0f64..=1.0) {
        let n = values.len() as f64;
        let probs = vec![1.0 / n; values.len()];
        let rp = RiskParams::new(lambda, alpha).unwrap();
        let mut s = Vec::new();
        let base = mean_cvar_atoms(&values, &probs, &rp, &mut s);
        let scaled: Vec<f64> = values.iter().map(|v| a * v).collect();
        let got = mean_cvar_atoms(&scaled, &probs, &rp, &mut s);
        prop_assert!((got - a * base).abs() <= 1e-12 * (1.0 + (a * base).abs()));
    }
}

#[test]
fn extreme_weights_are_exact() {
    let d = to_dist(&[(1, 1), (3, 1)]);
    let half = ratio(1, 2);
    let rn = RiskParams::new(Rational::zero(), half.clone()).unwrap();
    let tail = RiskParams::new(Rational::one(), half.clone()).unwrap();
    assert_eq!(mean_cvar(&d, &rn), ratio(2, 1));
    assert_eq!(mean_cvar(&d, &tail), ratio(3, 1));
    assert_eq!(mean_cvar(&d, &RiskParams::new(half.clone(), half).unwrap()), ratio(5, 2));
}
