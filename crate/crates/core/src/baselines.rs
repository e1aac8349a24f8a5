//! Classical FWER procedures used as reference points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub rejected: Vec<usize>,
    /// One threshold for single-step procedures, the per-position levels
    /// for step-down and ordered ones.
    pub thresholds: Vec<f64>,
}

fn check(pvalues: &[f64], alpha: f64) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(p));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `1 - (1 - alpha)^(1/n)`.
pub fn sidak_threshold(n: usize, alpha: f64) -> f64 {
    -((-alpha).ln_1p() / n as f64).exp_m1()
}

pub fn sidak(pvalues: &[f64], alpha: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    let t = sidak_threshold(pvalues.len(), alpha);
    Ok(BaselineResult {
        rejected: (0..pvalues.len()).filter(|&i| pvalues[i] <= t).collect(),
        thresholds: vec![t],
    })
}

pub fn bonferroni(pvalues: &[f64], alpha: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    let t = alpha / pvalues.len() as f64;
    Ok(BaselineResult {
        rejected: (0..pvalues.len()).filter(|&i| pvalues[i] <= t).collect(),
        thresholds: vec![t],
    })
}

/// Step-down: walk the p-values in ascending order (ties by index) and
/// reject while the `i`-th smallest is at most `alpha / (n - i + 1)`.
pub fn holm(pvalues: &[f64], alpha: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let thresholds: Vec<f64> = (0..n).map(|i| alpha / (n - i) as f64).collect();
    let mut rejected: Vec<usize> = order
        .iter()
        .zip(&thresholds)
        .take_while(|(&i, &t)| pvalues[i] <= t)
        .map(|(&i, _)| i)
        .collect();
    rejected.sort_unstable();
    Ok(BaselineResult { rejected, thresholds })
}

/// Tests hypotheses in `order` at level `alpha / v` each, stopping after the
/// `v`-th non-rejection.
pub fn fallback(pvalues: &[f64], order: &[usize], alpha: f64, v: usize) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    if v == 0 {
        return Err(Error::Config("v must be at least 1".into()));
    }
    let n = pvalues.len();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Config("order must be a permutation of the hypotheses".into()));
    }
    let t = alpha / v as f64;
    let mut failures = 0;
    let mut rejected = Vec::new();
    for &i in order {
        if pvalues[i] <= t {
            rejected.push(i);
        } else {
            failures += 1;
            if failures == v {
                break;
            }
        }
    }
    rejected.sort_unstable();
    Ok(BaselineResult {
        rejected,
        thresholds: vec![t],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidak_examples() {
        assert!((sidak_threshold(1, 0.2) - 0.2).abs() < 1e-15);
        assert!((sidak_threshold(900, 0.2) - 0.000_247_906_545_331).abs() < 1e-15);
        assert!(sidak(&[1.0; 5], 0.2).unwrap().rejected.is_empty());
        assert!(sidak(&[], 0.2).is_err());
        for n in 1..200 {
            assert!(sidak_threshold(n + 1, 0.2) < sidak_threshold(n, 0.2));
        }
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm(&[0.01], 0.05).unwrap().rejected, vec![0]);
        assert_eq!(holm(&[0.01, 0.04], 0.05).unwrap().rejected, vec![0, 1]);
        assert_eq!(holm(&[0.04, 0.02], 0.05).unwrap().rejected, vec![0, 1]);
        assert!(holm(&[0.04, 0.03, 0.5], 0.05).unwrap().rejected.is_empty());
        assert!(holm(&[], 0.05).is_err());
    }

    #[test]
    fn fallback_examples() {
        let r = fallback(&[0.01, 0.9, 0.01], &[0, 1, 2], 0.2, 2).unwrap();
        assert_eq!(r.rejected, vec![0, 2]);
        let r = fallback(&[0.01, 0.02, 0.9, 0.01], &[0, 1, 2, 3], 0.2, 1).unwrap();
        assert_eq!(r.rejected, vec![0, 1]);
        assert!(fallback(&[0.5; 4], &[3, 2, 1, 0], 0.2, 2).unwrap().rejected.is_empty());
        assert!(fallback(&[0.5; 2], &[0, 0], 0.2, 1).is_err());
        assert!(fallback(&[0.5; 2], &[0], 0.2, 1).is_err());
        assert!(fallback(&[0.5; 2], &[0, 1], 0.2, 0).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(sidak(&[1.5], 0.1), Err(Error::InvalidProbability(_))));
        assert!(holm(&[0.5], 1.0).is_err());
    }
}
