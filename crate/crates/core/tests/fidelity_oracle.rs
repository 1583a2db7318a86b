mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use qsched_core::fidelity::{distill_fidelity, distill_success_probability, required_pre_swap_fidelity, swap_fidelity};

use common::{oracle_distill, oracle_swap};

#[test]
fn oracle_sanity() {
    assert_abs_diff_eq!(oracle_swap(1.0, 1.0), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(oracle_swap(0.25, 0.9), 0.25, epsilon = 1e-15);
    let (f, p) = oracle_distill(1.0, 1.0);
    assert_abs_diff_eq!(f, 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
    // Two maximally mixed pairs agree half of the time.
    assert_abs_diff_eq!(oracle_distill(0.25, 0.25).1, 0.5, epsilon = 1e-15);
}

proptest! {
    #[test]
    fn swap_matches_density_matrices(f1 in 0.25f64..=1.0, f2 in 0.25f64..=1.0) {
        prop_assert!((swap_fidelity(f1, f2).unwrap() - oracle_swap(f1, f2)).abs() < 1e-12);
    }

    #[test]
    fn distill_matches_density_matrices(f1 in 0.25f64..=1.0, f2 in 0.25f64..=1.0) {
        let (f, p) = oracle_distill(f1, f2);
        prop_assert!((distill_fidelity(f1, f2).unwrap() - f).abs() < 1e-12);
        prop_assert!((distill_success_probability(f1, f2).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn inverse_swap_round_trips(f in 0.25f64..=1.0) {
        let g = required_pre_swap_fidelity(f).unwrap();
        prop_assert!((swap_fidelity(g, g).unwrap() - f).abs() < 1e-12);
        prop_assert!((oracle_swap(g, g) - f).abs() < 1e-12);
    }
}
