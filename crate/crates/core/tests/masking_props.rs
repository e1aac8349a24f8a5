use ifwer_core::audit::{budget_consistent, null_mask_check};
use ifwer_core::masking::{budget, estimate, fwer_estimate, invert, k_fwer_estimate, mask, within_level, MaskedPair};
use ifwer_core::{MaskingScheme, Sign};
use proptest::prelude::*;

fn schemes() -> impl Strategy<Value = MaskingScheme> {
    prop_oneof![
        (0.01f64..0.5).prop_map(|p| MaskingScheme::tent(p).unwrap()),
        (0.01f64..0.5).prop_map(|p| MaskingScheme::railway(p).unwrap()),
        (0.01f64..0.3, 0.35f64..0.95).prop_map(|(l, u)| MaskingScheme::gap(l, u).unwrap()),
        (0.01f64..0.3, 0.35f64..0.95).prop_map(|(l, u)| MaskingScheme::gap_railway(l, u).unwrap()),
    ]
}

proptest! {
    #[test]
    fn mask_then_invert_recovers_p(scheme in schemes(), p in 0.0f64..=1.0) {
        let pair = mask(p, &scheme).unwrap();
        let back = invert(&pair, &scheme).unwrap();
        prop_assert!((back - p).abs() <= 1e-12, "{scheme:?}: {p} -> {back}");
    }

    #[test]
    fn masked_values_stay_in_codomain(scheme in schemes(), p in 0.0f64..=1.0) {
        match mask(p, &scheme).unwrap() {
            MaskedPair::Masked { bit, g } => {
                prop_assert!((0.0..=scheme.lower() * (1.0 + 1e-12)).contains(&g));
                prop_assert_eq!(bit == Sign::Plus, p < scheme.lower());
            }
            MaskedPair::Plain(q) => {
                prop_assert!(scheme.has_middle_band());
                prop_assert!(q >= scheme.lower() && q <= scheme.upper());
                prop_assert_eq!(q, p);
            }
        }
    }

    #[test]
    fn stop_rule_and_budget_agree(scheme in schemes(), alpha in 0.05f64..0.5) {
        match budget(alpha, &scheme) {
            Ok(_) => prop_assert!(budget_consistent(alpha, &scheme, 6).unwrap()),
            Err(_) => prop_assert!(!ifwer_core::masking::feasible(&scheme, alpha)),
        }
    }

    #[test]
    fn estimators_are_monotone(scheme in schemes(), n in 0usize..400, k in 1usize..6) {
        let (lo, hi) = (fwer_estimate(n, &scheme), fwer_estimate(n + 1, &scheme));
        // Strict until the estimate rounds to one.
        prop_assert!(hi > lo || (hi >= lo && lo > 1.0 - 1e-12));
        prop_assert!(k_fwer_estimate(n, k + 1, &scheme) <= k_fwer_estimate(n, k, &scheme) + 1e-15);
        prop_assert!((estimate(n, 1, &scheme) - fwer_estimate(n, &scheme)).abs() < 1e-15);
        prop_assert!((k_fwer_estimate(n, 1, &scheme) - fwer_estimate(n, &scheme)).abs() < 1e-12);
    }
}

#[test]
fn large_negative_counts_do_not_overflow() {
    let s = MaskingScheme::tent(0.1).unwrap();
    for n in [1_000, 10_000, 1_000_000] {
        let e = k_fwer_estimate(n, 3, &s);
        assert!(e.is_finite() && (0.0..=1.0).contains(&e));
    }
    assert!(within_level(k_fwer_estimate(0, 2, &s), 0.02));
}

#[test]
fn null_masked_value_is_independent_of_the_bit() {
    let all = [
        MaskingScheme::tent(0.1).unwrap(),
        MaskingScheme::railway(0.1).unwrap(),
        MaskingScheme::gap(0.1, 0.5).unwrap(),
        MaskingScheme::gap_railway(0.1, 0.5).unwrap(),
    ];
    for (i, scheme) in all.iter().enumerate() {
        let c = null_mask_check(scheme, 100_000, 40 + i as u64).unwrap();
        assert!(c.ks_between_bits < 0.02, "{scheme:?}: KS {}", c.ks_between_bits);
        assert!((c.bit_rate - c.expected_rate).abs() < 4.0 * c.rate_se, "{scheme:?}: {c:?}");
        assert!(c.max_round_trip_error <= 1e-12);
    }
}

#[test]
fn tent_example_values() {
    let s = MaskingScheme::tent(0.2).unwrap();
    assert_eq!(mask(0.01, &s).unwrap(), MaskedPair::Masked { bit: Sign::Plus, g: 0.01 });
    match mask(0.9, &s).unwrap() {
        MaskedPair::Masked { bit, g } => {
            assert_eq!(bit, Sign::Minus);
            assert!((g - 0.025).abs() < 1e-15);
        }
        other => panic!("unexpected {other:?}"),
    }
}
