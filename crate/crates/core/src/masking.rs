//! Decomposition of p-values into an analyst-visible masked value and a
//! quarantined sign bit, together with the FWER / k-FWER estimators that the
//! stopping rule is built on.
//!
//! Four masking maps are supported:
//!
//! * **tent**: `h = +1` iff `p < p*`; `g = min(p, p*/(1-p*) * (1-p))`.
//! * **railway**: same bit; for `p >= p*` the masked value is increasing,
//!   `g = p*/(1-p*) * (p - p*)`.
//! * **gap**: `h = +1` for `p < p_l`, `h = -1` for `p > p_u`; p-values in
//!   `[p_l, p_u]` are passed through unmasked. Large p-values fold as
//!   `g = p_l/(1-p_u) * (1-p)`.
//! * **gap-railway**: as gap, with `g = p_l/(1-p_u) * (p - p_u)` above `p_u`.
//!
//! For a uniform null p-value the masked value and the bit are independent,
//! and the bit is a coin with success rate [`hidden_bit_rate`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing an estimate against the target level.
///
/// Estimates such as `1 - (1 - 0.2)^1` evaluate to `0.19999999999999996`;
/// the slack keeps the comparison and [`budget`] consistent without
/// admitting any estimate that is meaningfully above the level.
const LEVEL_SLACK: f64 = 1e-12;

/// Returns true when `estimate` is at or below the target level `alpha`.
pub fn within_level(estimate: f64, alpha: f64) -> bool {
    estimate <= alpha * (1.0 + LEVEL_SLACK)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MaskingScheme {
    Tent { p_star: f64 },
    Railway { p_star: f64 },
    Gap { p_l: f64, p_u: f64 },
    GapRailway { p_l: f64, p_u: f64 },
}

/// The sign of the quarantined bit `h(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Result of masking one p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskedPair {
    /// The bit is quarantined; only `g` may be shown.
    Masked { bit: Sign, g: f64 },
    /// Gap variants pass the middle band through unmasked.
    Plain(f64),
}

impl MaskedPair {
    pub fn bit(&self) -> Option<Sign> {
        match *self {
            MaskedPair::Masked { bit, .. } => Some(bit),
            MaskedPair::Plain(_) => None,
        }
    }

    pub fn g(&self) -> Option<f64> {
        match *self {
            MaskedPair::Masked { g, .. } => Some(g),
            MaskedPair::Plain(_) => None,
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

impl MaskingScheme {
    pub fn tent(p_star: f64) -> Result<Self> {
        let s = MaskingScheme::Tent { p_star };
        s.validate()?;
        Ok(s)
    }

    pub fn railway(p_star: f64) -> Result<Self> {
        let s = MaskingScheme::Railway { p_star };
        s.validate()?;
        Ok(s)
    }

    pub fn gap(p_l: f64, p_u: f64) -> Result<Self> {
        let s = MaskingScheme::Gap { p_l, p_u };
        s.validate()?;
        Ok(s)
    }

    pub fn gap_railway(p_l: f64, p_u: f64) -> Result<Self> {
        let s = MaskingScheme::GapRailway { p_l, p_u };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => {
                if p_star > 0.0 && p_star < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidScheme(format!(
                        "p_star must lie in (0, 1), got {p_star}"
                    )))
                }
            }
            MaskingScheme::Gap { p_l, p_u } | MaskingScheme::GapRailway { p_l, p_u } => {
                if p_l > 0.0 && p_l < p_u && p_u < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidScheme(format!(
                        "need 0 < p_l < p_u < 1, got p_l={p_l}, p_u={p_u}"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaskingScheme::Tent { .. } => "tent",
            MaskingScheme::Railway { .. } => "railway",
            MaskingScheme::Gap { .. } => "gap",
            MaskingScheme::GapRailway { .. } => "gap_railway",
        }
    }

    /// Compact label including parameters, e.g. `tent(0.1)`.
    pub fn label(&self) -> String {
        match *self {
            MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => {
                format!("{}({})", self.name(), p_star)
            }
            MaskingScheme::Gap { p_l, p_u } | MaskingScheme::GapRailway { p_l, p_u } => {
                format!("{}({};{})", self.name(), p_l, p_u)
            }
        }
    }

    /// Threshold below which a p-value carries `h = +1`: `p*` or `p_l`.
    pub fn lower(&self) -> f64 {
        match *self {
            MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => p_star,
            MaskingScheme::Gap { p_l, .. } | MaskingScheme::GapRailway { p_l, .. } => p_l,
        }
    }

    /// Threshold above which a p-value carries `h = -1`: `p*` or `p_u`.
    pub fn upper(&self) -> f64 {
        match *self {
            MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => p_star,
            MaskingScheme::Gap { p_u, .. } | MaskingScheme::GapRailway { p_u, .. } => p_u,
        }
    }

    /// Slope of the folded branch, `lower / (1 - upper)`.
    pub(crate) fn fold_slope(&self) -> f64 {
        self.lower() / (1.0 - self.upper())
    }

    /// True for the railway-type maps whose folded branch is increasing.
    pub fn is_railway(&self) -> bool {
        matches!(
            self,
            MaskingScheme::Railway { .. } | MaskingScheme::GapRailway { .. }
        )
    }

    pub fn has_middle_band(&self) -> bool {
        matches!(
            self,
            MaskingScheme::Gap { .. } | MaskingScheme::GapRailway { .. }
        )
    }
}

/// Splits `p` into its masked value and quarantined bit.
///
/// `p == p*` maps to `h = -1`; for gap variants both `p_l` and `p_u` fall in
/// the unmasked middle band.
pub fn mask(p: f64, scheme: &MaskingScheme) -> Result<MaskedPair> {
    check_probability(p)?;
    let lower = scheme.lower();
    let upper = scheme.upper();
    if p < lower {
        return Ok(MaskedPair::Masked { bit: Sign::Plus, g: p });
    }
    if scheme.has_middle_band() && p <= upper {
        return Ok(MaskedPair::Plain(p));
    }
    let slope = scheme.fold_slope();
    let g = if scheme.is_railway() {
        slope * (p - upper)
    } else {
        slope * (1.0 - p)
    };
    Ok(MaskedPair::Masked { bit: Sign::Minus, g })
}

/// Recovers the p-value that produced `pair` under `scheme`.
pub fn invert(pair: &MaskedPair, scheme: &MaskingScheme) -> Result<f64> {
    match *pair {
        MaskedPair::Plain(p) => {
            check_probability(p)?;
            if !scheme.has_middle_band() {
                return Err(Error::Domain(format!(
                    "{} masking never produces an unmasked value",
                    scheme.name()
                )));
            }
            if p < scheme.lower() || p > scheme.upper() {
                return Err(Error::Domain(format!(
                    "unmasked value {p} lies outside the middle band [{}, {}]",
                    scheme.lower(),
                    scheme.upper()
                )));
            }
            Ok(p)
        }
        MaskedPair::Masked { bit, g } => {
            let lower = scheme.lower();
            match bit {
                Sign::Plus => {
                    if !(0.0..lower).contains(&g) {
                        return Err(Error::Domain(format!(
                            "g={g} with h=+1 must lie in [0, {lower})"
                        )));
                    }
                    Ok(g)
                }
                Sign::Minus => {
                    if !(0.0..=lower).contains(&g) {
                        return Err(Error::Domain(format!(
                            "g={g} with h=-1 must lie in [0, {lower}]"
                        )));
                    }
                    let upper = scheme.upper();
                    let stretch = g / scheme.fold_slope();
                    let p = if scheme.is_railway() {
                        upper + stretch
                    } else {
                        1.0 - stretch
                    };
                    Ok(p.clamp(0.0, 1.0))
                }
            }
        }
    }
}

/// Probability that a uniform null p-value carries `h = +1`, given that it
/// is masked.
pub fn hidden_bit_rate(scheme: &MaskingScheme) -> f64 {
    match *scheme {
        MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => p_star,
        MaskingScheme::Gap { p_l, p_u } | MaskingScheme::GapRailway { p_l, p_u } => {
            p_l / (p_l + 1.0 - p_u)
        }
    }
}

/// FWER estimate `1 - (1 - rate)^(n_minus + 1)`.
pub fn fwer_estimate(n_minus: usize, scheme: &MaskingScheme) -> f64 {
    let rate = hidden_bit_rate(scheme);
    -(((n_minus as f64) + 1.0) * (-rate).ln_1p()).exp_m1()
}

/// k-FWER estimate: one minus the probability that a negative binomial with
/// `n_minus + 1` failures and success rate `rate` has fewer than `k` successes.
///
/// Terms are accumulated in log space so large `n_minus` cannot overflow the
/// binomial coefficients.
pub fn k_fwer_estimate(n_minus: usize, k: usize, scheme: &MaskingScheme) -> f64 {
    assert!(k >= 1, "k-FWER needs k >= 1");
    let rate = hidden_bit_rate(scheme);
    let n = n_minus as f64;
    let ln_rate = rate.ln();
    // ln C(n+i, i) + (n+1) ln(1-rate) + i ln(rate), built up term by term.
    let mut ln_term = (n + 1.0) * (-rate).ln_1p();
    let mut below = ln_term.exp();
    for i in 1..k {
        let i = i as f64;
        ln_term += (n + i).ln() - i.ln() + ln_rate;
        below += ln_term.exp();
    }
    (1.0 - below).clamp(0.0, 1.0)
}

/// Generalised estimate: plain FWER for `k == 1`, k-FWER otherwise.
pub fn estimate(n_minus: usize, k: usize, scheme: &MaskingScheme) -> f64 {
    if k <= 1 {
        fwer_estimate(n_minus, scheme)
    } else {
        k_fwer_estimate(n_minus, k, scheme)
    }
}

/// Whether the scheme can ever reach level `alpha`.
pub fn feasible(scheme: &MaskingScheme, alpha: f64) -> bool {
    match *scheme {
        MaskingScheme::Tent { p_star } | MaskingScheme::Railway { p_star } => p_star <= alpha,
        MaskingScheme::Gap { p_l, p_u } | MaskingScheme::GapRailway { p_l, p_u } => {
            (1.0 - alpha) / alpha * p_l + p_u < 1.0
        }
    }
}

/// Largest admissible count of negative bits plus one: the session may stop
/// exactly when `n_minus < budget`.
pub fn budget(alpha: f64, scheme: &MaskingScheme) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !feasible(scheme, alpha) {
        return Err(Error::Infeasible {
            scheme: scheme.label(),
            alpha,
        });
    }
    let rate = hidden_bit_rate(scheme);
    let raw = ((-alpha).ln_1p() / (-rate).ln_1p()).floor();
    let mut v = if raw.is_finite() && raw > 0.0 { raw as usize } else { 0 };
    // Align with the estimator so both characterisations agree exactly.
    while within_level(fwer_estimate(v, scheme), alpha) {
        v += 1;
    }
    while v > 0 && !within_level(fwer_estimate(v - 1, scheme), alpha) {
        v -= 1;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent(p: f64) -> MaskingScheme {
        MaskingScheme::tent(p).unwrap()
    }

    #[test]
    fn tent_and_railway_fold_large_p_values() {
        match mask(0.99, &tent(0.2)).unwrap() {
            MaskedPair::Masked { bit, g } => {
                assert_eq!(bit, Sign::Minus);
                assert!((g - 0.0025).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let rail = MaskingScheme::railway(0.2).unwrap();
        let pair = mask(0.99, &rail).unwrap();
        assert_eq!(pair.bit(), Some(Sign::Minus));
        assert!((pair.g().unwrap() - 0.1975).abs() < 1e-12);
    }

    #[test]
    fn identity_branch_and_middle_band() {
        assert_eq!(
            mask(0.3, &tent(0.5)).unwrap(),
            MaskedPair::Masked { bit: Sign::Plus, g: 0.3 }
        );
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        assert_eq!(mask(0.3, &gap).unwrap(), MaskedPair::Plain(0.3));
    }

    #[test]
    fn boundaries_follow_tie_breaks() {
        assert_eq!(mask(0.2, &tent(0.2)).unwrap().bit(), Some(Sign::Minus));
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        assert_eq!(mask(0.1, &gap).unwrap(), MaskedPair::Plain(0.1));
        assert_eq!(mask(0.5, &gap).unwrap(), MaskedPair::Plain(0.5));
    }

    #[test]
    fn out_of_range_p_is_rejected() {
        assert!(matches!(mask(1.2, &tent(0.2)), Err(Error::InvalidProbability(_))));
        assert!(mask(-0.1, &tent(0.2)).is_err());
        assert!(mask(f64::NAN, &tent(0.2)).is_err());
    }

    #[test]
    fn invert_examples() {
        let p = invert(&MaskedPair::Masked { bit: Sign::Minus, g: 0.0025 }, &tent(0.2)).unwrap();
        assert!((p - 0.99).abs() < 1e-12);
        let rail = MaskingScheme::railway(0.2).unwrap();
        let p = invert(&MaskedPair::Masked { bit: Sign::Minus, g: 0.1975 }, &rail).unwrap();
        assert!((p - 0.99).abs() < 1e-12);
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        assert_eq!(invert(&MaskedPair::Plain(0.42), &gap).unwrap(), 0.42);
    }

    #[test]
    fn invert_rejects_inconsistent_pairs() {
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        let bad = MaskedPair::Masked { bit: Sign::Minus, g: 0.3 };
        assert!(matches!(invert(&bad, &gap), Err(Error::Domain(_))));
        let bad = MaskedPair::Masked { bit: Sign::Plus, g: 0.1 };
        assert!(invert(&bad, &gap).is_err());
        assert!(invert(&MaskedPair::Plain(0.7), &gap).is_err());
        assert!(invert(&MaskedPair::Plain(0.3), &tent(0.2)).is_err());
    }

    #[test]
    fn bit_rates() {
        assert_eq!(hidden_bit_rate(&tent(0.1)), 0.1);
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        assert!((hidden_bit_rate(&gap) - 1.0 / 6.0).abs() < 1e-15);
        // p_l = p_u collapses to the tent rate.
        let collapsed = MaskingScheme::Gap { p_l: 0.15, p_u: 0.15 };
        assert!((hidden_bit_rate(&collapsed) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn fwer_estimates() {
        assert!((fwer_estimate(0, &tent(0.1)) - 0.1).abs() < 1e-15);
        assert!((fwer_estimate(2, &tent(0.1)) - 0.271).abs() < 1e-14);
        let gap = MaskingScheme::gap(0.1, 0.5).unwrap();
        assert!((fwer_estimate(1, &gap) - 0.305_555_555_555_555_6).abs() < 1e-12);
    }

    #[test]
    fn k_fwer_estimates() {
        for n in 0..50 {
            for s in [tent(0.05), tent(0.1), MaskingScheme::gap(0.02, 0.4).unwrap()] {
                assert!((k_fwer_estimate(n, 1, &s) - fwer_estimate(n, &s)).abs() < 1e-12);
            }
        }
        assert!((k_fwer_estimate(0, 2, &tent(0.1)) - 0.01).abs() < 1e-12);
        assert!((k_fwer_estimate(1, 2, &tent(0.1)) - 0.028).abs() < 1e-12);
    }

    #[test]
    fn k_fwer_handles_large_counts() {
        let v = k_fwer_estimate(5_000, 40, &tent(0.01));
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        assert!(k_fwer_estimate(5_000, 40, &tent(0.01)) <= k_fwer_estimate(5_000, 39, &tent(0.01)));
    }

    #[test]
    fn budgets() {
        assert_eq!(budget(0.2, &tent(0.1)).unwrap(), 2);
        assert_eq!(budget(0.2, &tent(0.2)).unwrap(), 1);
        let gap = MaskingScheme::gap(0.01, 0.5).unwrap();
        assert_eq!(budget(0.1, &gap).unwrap(), 5);
        assert!(matches!(budget(0.2, &tent(0.3)), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn feasibility() {
        assert!(feasible(&tent(0.1), 0.2));
        assert!(!feasible(&tent(0.3), 0.2));
        // (1 - 0.2) / 0.2 * 0.1 + 0.5 = 0.9 < 1
        assert!(feasible(&MaskingScheme::gap(0.1, 0.5).unwrap(), 0.2));
        assert!(!feasible(&MaskingScheme::gap(0.1, 0.6).unwrap(), 0.2));
    }

    #[test]
    fn scheme_validation() {
        assert!(MaskingScheme::tent(0.0).is_err());
        assert!(MaskingScheme::tent(1.0).is_err());
        assert!(MaskingScheme::gap(0.5, 0.5).is_err());
        assert!(MaskingScheme::gap_railway(0.3, 0.2).is_err());
    }
}
