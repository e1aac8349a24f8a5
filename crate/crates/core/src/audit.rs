//! Exact error audits for small all-null problems.
//!
//! Under the global null the masked values are independent of the hidden
//! bits, and given the masked values the bits are independent coins with
//! success rate [`hidden_bit_rate`]. For a fixed vector of masked values the
//! probability of `k` or more false rejections under any exclusion policy is
//! therefore a finite sum over the `2^n` bit patterns, which
//! [`enumerate_error`] evaluates by driving a real [`Session`] through every
//! pattern.
//!
//! [`worst_case`] gives the supremum of that probability over every adaptive
//! policy, batch sizes included. Bits are exchangeable, so what a policy can
//! exploit is only how many hypotheses it excludes at a time; the supremum
//! is a dynamic program over the number of active hypotheses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::masking::{self, hidden_bit_rate, within_level, MaskedPair, MaskingScheme, Sign};
use crate::session::{AnalystView, Session, SessionConfig};

/// Hard cap on the number of hypotheses for exhaustive enumeration.
pub const MAX_ENUMERATED: usize = 20;

/// One hidden-bit pattern: the p-values it induces and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub bits: Vec<Sign>,
    pub pvalues: Vec<f64>,
    pub weight: f64,
}

/// Every bit pattern consistent with the masked values `g`.
///
/// Each `g` must lie strictly inside `(0, scheme.lower())` so that both
/// branches of the inverse exist.
pub fn patterns(g: &[f64], scheme: &MaskingScheme) -> Result<Vec<Pattern>> {
    scheme.validate()?;
    let n = g.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > MAX_ENUMERATED {
        return Err(Error::Config(format!(
            "exhaustive enumeration is limited to {MAX_ENUMERATED} hypotheses, got {n}"
        )));
    }
    if let Some(&bad) = g.iter().find(|&&x| !(x > 0.0 && x < scheme.lower())) {
        return Err(Error::Domain(format!(
            "masked value {bad} is outside (0, {})",
            scheme.lower()
        )));
    }
    let rate = hidden_bit_rate(scheme);
    (0u32..1 << n)
        .map(|code| {
            let bits: Vec<Sign> = (0..n)
                .map(|i| if code >> i & 1 == 1 { Sign::Plus } else { Sign::Minus })
                .collect();
            let plus = code.count_ones() as i32;
            let weight = rate.powi(plus) * (1.0 - rate).powi(n as i32 - plus);
            let pvalues = bits
                .iter()
                .zip(g)
                .map(|(&bit, &g)| masking::invert(&MaskedPair::Masked { bit, g }, scheme))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Pattern { bits, pvalues, weight })
        })
        .collect()
}

/// Runs `policy` to completion on a fresh session over `pvalues` and returns
/// the number of rejections. Every hypothesis is a true null here, so that
/// is the number of false rejections.
pub fn false_rejections<F>(pvalues: &[f64], config: &SessionConfig, policy: &mut F) -> Result<usize>
where
    F: FnMut(&AnalystView) -> Vec<usize>,
{
    let mut session = Session::create(pvalues, Vec::new(), config.clone())?;
    while !session.is_stopped() {
        let batch = policy(&session.view());
        session.exclude(&batch)?;
    }
    Ok(session.rejections().map_or(0, <[usize]>::len))
}

/// `P(V >= k)` for the policy, summed exactly over all bit patterns.
pub fn enumerate_error<F>(g: &[f64], config: &SessionConfig, mut policy: F) -> Result<f64>
where
    F: FnMut(&AnalystView) -> Vec<usize>,
{
    let mut total = 0.0;
    for pattern in patterns(g, &config.scheme)? {
        if false_rejections(&pattern.pvalues, config, &mut policy)? >= config.k {
            total += pattern.weight;
        }
    }
    Ok(total)
}

/// Largest negative count at which the stopping rule holds, if any.
pub fn stop_threshold(alpha: f64, k: usize, scheme: &MaskingScheme) -> Option<usize> {
    let mut m = None;
    let mut n = 0;
    while within_level(masking::estimate(n, k, scheme), alpha) {
        m = Some(n);
        n += 1;
    }
    m
}

/// The error-maximising policy and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Supremum of `P(V >= k)` over all adaptive exclusion policies.
    pub value: f64,
    /// `batch[a]` is an optimal batch size with `a` hypotheses still active.
    pub batch: Vec<usize>,
}

fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; row.len() + 1];
        for (x, &w) in row.iter().enumerate() {
            next[x] += w * (1.0 - q);
            next[x + 1] += w * q;
        }
        row = next;
    }
    row
}

/// Exact supremum of `P(V >= k)` over exclusion policies for `n` null
/// hypotheses, with any batch sizes the policy likes.
pub fn worst_case(n: usize, scheme: &MaskingScheme, alpha: f64, k: usize) -> Result<WorstCase> {
    scheme.validate()?;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let q = 1.0 - hidden_bit_rate(scheme);
    let pmf: Vec<Vec<f64>> = (0..=n).map(|a| binomial_pmf(a, q)).collect();
    let Some(m) = stop_threshold(alpha, k, scheme) else {
        return Ok(WorstCase {
            value: 0.0,
            batch: vec![0; n + 1],
        });
    };
    // Error mass when the session stops with `a` active, `x` of them negative.
    let stop_error = |a: usize, x: usize| if x <= m && a - x >= k { 1.0 } else { 0.0 };
    let tail = |a: usize| pmf[a].iter().skip(m + 1).sum::<f64>();

    // f[a]: error probability from `a` active hypotheses given that the
    // session has not stopped, under the best continuation.
    let mut f = vec![0.0; n + 1];
    let mut batch = vec![0; n + 1];
    for a in 1..=n {
        let alive = tail(a);
        if alive <= 0.0 {
            continue;
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for b in 1..=a {
            let rest = a - b;
            let mut value = 0.0;
            for (x, &px) in pmf[rest].iter().enumerate() {
                if x <= m {
                    let needed = m + 1 - x;
                    let py: f64 = pmf[b].iter().skip(needed).sum();
                    value += px * py * stop_error(rest, x);
                } else {
                    value += px * f[rest];
                }
            }
            if value > best.0 + 1e-15 {
                best = (value, b);
            }
        }
        f[a] = best.0 / alive;
        batch[a] = best.1;
    }
    let start: f64 = (0..=n.min(m))
        .map(|x| pmf[n][x] * stop_error(n, x))
        .sum();
    Ok(WorstCase {
        value: start + tail(n) * f[n],
        batch,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Empirical behaviour of a masking map on uniform null p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct NullMaskCheck {
    pub samples: usize,
    /// KS distance between `g` given `h = +1` and `g` given `h = -1`.
    pub ks_between_bits: f64,
    /// Observed fraction of `h = +1` among masked p-values.
    pub bit_rate: f64,
    pub expected_rate: f64,
    /// Standard error of `bit_rate` under the expected rate.
    pub rate_se: f64,
    /// Largest `|invert(mask(p)) - p|` seen.
    pub max_round_trip_error: f64,
}

/// Masks `samples` uniform p-values drawn from a seeded stream.
pub fn null_mask_check(scheme: &MaskingScheme, samples: usize, seed: u64) -> Result<NullMaskCheck> {
    scheme.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p: f64 = rng.random();
        let pair = masking::mask(p, scheme)?;
        worst = worst.max((masking::invert(&pair, scheme)? - p).abs());
        if let MaskedPair::Masked { bit, g } = pair {
            match bit {
                Sign::Plus => plus.push(g),
                Sign::Minus => minus.push(g),
            }
        }
    }
    let masked = (plus.len() + minus.len()) as f64;
    let expected_rate = hidden_bit_rate(scheme);
    Ok(NullMaskCheck {
        samples,
        ks_between_bits: ks_statistic(&plus, &minus),
        bit_rate: plus.len() as f64 / masked,
        expected_rate,
        rate_se: (expected_rate * (1.0 - expected_rate) / masked).sqrt(),
        max_round_trip_error: worst,
    })
}

/// Whether the estimator-based stop rule and the integer budget agree for
/// every negative count up to `budget + extra`.
pub fn budget_consistent(alpha: f64, scheme: &MaskingScheme, extra: usize) -> Result<bool> {
    let v = masking::budget(alpha, scheme)?;
    Ok((0..v + extra).all(|n| within_level(masking::fwer_estimate(n, scheme), alpha) == (n < v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hypothesis_worst_case_is_rate() {
        // One null with tent(0.2) at level 0.2 stops at once and rejects iff h = +1.
        let s = MaskingScheme::tent(0.2).unwrap();
        let w = worst_case(1, &s, 0.2, 1).unwrap();
        assert!((w.value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pattern_weights_sum_to_one() {
        let s = MaskingScheme::gap(0.1, 0.5).unwrap();
        let ps = patterns(&[0.01, 0.05, 0.09], &s).unwrap();
        assert_eq!(ps.len(), 8);
        let total: f64 = ps.iter().map(|p| p.weight).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for p in &ps {
            for (&bit, &pv) in p.bits.iter().zip(&p.pvalues) {
                assert_eq!(masking::mask(pv, &s).unwrap().bit(), Some(bit));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = MaskingScheme::tent(0.1).unwrap();
        assert!(patterns(&[], &s).is_err());
        assert!(patterns(&[0.2], &s).is_err());
        assert!(patterns(&[0.05; 21], &s).is_err());
        assert!(worst_case(3, &s, 0.2, 0).is_err());
    }

    #[test]
    fn ks_statistic_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_statistic(&[1.0, 3.0], &[2.0, 4.0]) - 0.5).abs() < 1e-15);
        assert_eq!(ks_statistic(&[], &[1.0]), 1.0);
    }

    #[test]
    fn stop_threshold_matches_budget() {
        for p in [0.05, 0.1, 0.2] {
            let s = MaskingScheme::tent(p).unwrap();
            let v = masking::budget(0.2, &s).unwrap();
            assert_eq!(stop_threshold(0.2, 1, &s), v.checked_sub(1));
        }
    }
}
