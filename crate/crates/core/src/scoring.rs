//! Non-null likelihood scores from masked data.
//!
//! The two-groups model puts `Z_i = Φ⁻¹(1 - P_i)` at `N(mu, 1)` with prior
//! probability `pi(x_i)` and at `N(0, 1)` otherwise. For a masked hypothesis
//! only `g(P_i)` is known, so `P_i` is one of two candidates: the
//! `h = +1` preimage (observed `z̃`) or the folded preimage `t⁻¹(z̃)`. EM
//! treats the candidate choice `w_i` and the non-null label `q_i` as latent
//! and tracks
//! `a = E[w q]`, `b = E[w (1 - q)]`, `c = E[(1 - w) q]`, `d = E[(1 - w)(1 - q)]`.
//! The score of a hypothesis is `a + c`, the posterior probability that it is
//! non-null.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisSpec};
use crate::error::{Error, Result};
use crate::masking::MaskingScheme;
use crate::normal::{ln_pdf, normal_cdf, normal_quantile, normal_sf};
use crate::session::AnalystView;
use crate::tree::Tree;

pub const P_CLAMP: f64 = 1e-15;
pub const INITIAL_MU: f64 = 2.5;

const IRLS_MAX_ITER: usize = 25;
const IRLS_GRAD_TOL: f64 = 1e-6;
const IRLS_RIDGE: f64 = 1e-6;

pub fn clamp_p(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// `Φ⁻¹(1 - p)` after clamping `p`.
pub fn z_from_p(p: f64) -> f64 {
    -normal_quantile(clamp_p(p)).expect("clamped into (0, 1)")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The p-value is known exactly.
    Plain,
    /// Only the masked value is known; `z_tilde` is the `h = +1` candidate.
    Folded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedZ {
    pub z_tilde: f64,
    pub branch: Branch,
}

/// The observed variable for one hypothesis of an analyst view.
pub fn observed_z(h: &crate::session::HypothesisView) -> Result<ObservedZ> {
    if let Some(p) = h.p {
        Ok(ObservedZ {
            z_tilde: z_from_p(p),
            branch: Branch::Plain,
        })
    } else if let Some(g) = h.g {
        Ok(ObservedZ {
            z_tilde: z_from_p(g),
            branch: Branch::Folded,
        })
    } else {
        Err(Error::Fit(format!(
            "hypothesis {} carries neither a p-value nor a masked value",
            h.index
        )))
    }
}

/// `1 - P` of the folded candidate given the observed `z̃`.
fn folded_upper_tail(z_tilde: f64, scheme: &MaskingScheme) -> f64 {
    let k = 1.0 / scheme.fold_slope();
    let g = normal_sf(z_tilde);
    if scheme.is_railway() {
        1.0 - scheme.upper() - k * g
    } else {
        k * g
    }
}

/// Maps the observed `z̃` of a masked hypothesis to the z-value of its
/// folded (`h = -1`) candidate.
pub fn t_inverse(z_tilde: f64, scheme: &MaskingScheme) -> f64 {
    normal_quantile(clamp_p(folded_upper_tail(z_tilde, scheme))).expect("clamped into (0, 1)")
}

/// `|d t⁻¹ / d z̃|`.
pub fn t_inverse_jacobian(z_tilde: f64, scheme: &MaskingScheme) -> f64 {
    let k = 1.0 / scheme.fold_slope();
    let alt = t_inverse(z_tilde, scheme);
    k * (ln_pdf(z_tilde) - ln_pdf(alt)).exp()
}

/// Maps a z-value whose p-value lies in the folded region to the observed
/// `z̃ = Φ⁻¹(1 - g)`.
pub fn t_forward(z: f64, scheme: &MaskingScheme) -> f64 {
    let s = scheme.fold_slope();
    let g = if scheme.is_railway() {
        s * (normal_sf(z) - scheme.upper())
    } else {
        s * normal_cdf(z)
    };
    z_from_p(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub mu: f64,
    pub beta: Vec<f64>,
}

impl MixtureModel {
    /// `mu = 2.5` and a flat prior `pi = 0.5`.
    pub fn initial(basis_cols: usize) -> MixtureModel {
        MixtureModel {
            mu: INITIAL_MU,
            beta: vec![0.0; basis_cols],
        }
    }

    pub fn prior(&self, basis: &Basis) -> Vec<f64> {
        basis
            .linear_predictor(&self.beta)
            .into_iter()
            .map(logistic)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Posterior {
    pub fn score(&self) -> f64 {
        self.a + self.c
    }
}

pub fn scores(posteriors: &[Posterior]) -> Vec<f64> {
    posteriors.iter().map(Posterior::score).collect()
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy)]
struct Fold {
    z_alt: f64,
    ln_jac: f64,
}

#[derive(Debug, Clone, Copy)]
struct Obs {
    z: f64,
    fold: Option<Fold>,
}

/// Observations and design matrix for one EM fit. The folded candidates and
/// Jacobians are computed once here.
#[derive(Debug, Clone)]
pub struct EmData {
    obs: Vec<Obs>,
    basis: Basis,
}

impl EmData {
    pub fn new(observed: &[ObservedZ], scheme: &MaskingScheme, basis: Basis) -> Result<EmData> {
        if observed.is_empty() {
            return Err(Error::EmptyInput);
        }
        if observed.len() != basis.rows() {
            return Err(Error::LengthMismatch(format!(
                "{} observations but {} basis rows",
                observed.len(),
                basis.rows()
            )));
        }
        let ln_k = -scheme.fold_slope().ln();
        let obs = observed
            .iter()
            .map(|o| {
                let fold = (o.branch == Branch::Folded).then(|| {
                    let z_alt = t_inverse(o.z_tilde, scheme);
                    Fold {
                        z_alt,
                        ln_jac: ln_k + ln_pdf(o.z_tilde) - ln_pdf(z_alt),
                    }
                });
                Obs { z: o.z_tilde, fold }
            })
            .collect();
        Ok(EmData { obs, basis })
    }

    pub fn from_view(view: &AnalystView, scheme: &MaskingScheme, basis: Basis) -> Result<EmData> {
        let observed = view
            .hypotheses
            .iter()
            .map(observed_z)
            .collect::<Result<Vec<_>>>()?;
        EmData::new(&observed, scheme, basis)
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Posteriors and observed-data log-likelihood under mean `mu` and explicit
/// per-hypothesis priors.
pub fn e_step_with_prior(mu: f64, prior: &[f64], data: &EmData) -> (Vec<Posterior>, f64) {
    assert_eq!(prior.len(), data.obs.len());
    let mut loglik = 0.0;
    let post = data
        .obs
        .iter()
        .zip(prior)
        .map(|(o, &pi)| {
            let (ln_pi, ln_1mpi) = (pi.ln(), (-pi).ln_1p());
            let ta = ln_pi + ln_pdf(o.z - mu);
            let tb = ln_1mpi + ln_pdf(o.z);
            match o.fold {
                None => {
                    let l = log_sum_exp(&[ta, tb]);
                    loglik += l;
                    Posterior {
                        a: (ta - l).exp(),
                        b: (tb - l).exp(),
                        c: 0.0,
                        d: 0.0,
                    }
                }
                Some(f) => {
                    let tc = ln_pi + ln_pdf(f.z_alt - mu) + f.ln_jac;
                    let td = ln_1mpi + ln_pdf(f.z_alt) + f.ln_jac;
                    let l = log_sum_exp(&[ta, tb, tc, td]);
                    loglik += l;
                    Posterior {
                        a: (ta - l).exp(),
                        b: (tb - l).exp(),
                        c: (tc - l).exp(),
                        d: (td - l).exp(),
                    }
                }
            }
        })
        .collect();
    (post, loglik)
}

pub fn e_step(model: &MixtureModel, data: &EmData) -> (Vec<Posterior>, f64) {
    e_step_with_prior(model.mu, &model.prior(&data.basis), data)
}

/// Expected complete-data log-likelihood in `beta` for soft targets `y`.
fn bernoulli_objective(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &t)| t * e - softplus(e)).sum()
}

/// Log density, up to a constant, of the Gaussian ridge prior on `beta`.
fn ridge_penalty(beta: &[f64]) -> f64 {
    0.5 * IRLS_RIDGE * beta.iter().map(|b| b * b).sum::<f64>()
}

fn penalized_objective(eta: &[f64], y: &[f64], beta: &[f64]) -> f64 {
    bernoulli_objective(eta, y) - ridge_penalty(beta)
}

/// Logistic regression on soft targets by damped Newton steps from `beta0`.
///
/// The ridge term is a proper L2 penalty, so regions whose targets are all
/// near zero still have a finite optimum and Newton converges quickly. Each
/// accepted step does not decrease the penalized objective.
pub fn fit_logistic(basis: &Basis, y: &[f64], beta0: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (basis.rows(), basis.cols());
    assert_eq!(y.len(), n);
    let mut beta = beta0.to_vec();
    let mut eta = basis.linear_predictor(&beta);
    let mut obj = penalized_objective(&eta, y, &beta);
    for _ in 0..IRLS_MAX_ITER {
        let mut grad = DVector::<f64>::zeros(m);
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            let x = basis.row(i);
            let pi = logistic(eta[i]);
            let r = y[i] - pi;
            let w = pi * (1.0 - pi);
            for a in 0..m {
                grad[a] += x[a] * r;
                let wx = w * x[a];
                for b in a..m {
                    hess[(a, b)] += wx * x[b];
                }
            }
        }
        for a in 0..m {
            grad[a] -= IRLS_RIDGE * beta[a];
        }
        if grad.norm() < IRLS_GRAD_TOL {
            break;
        }
        for a in 0..m {
            hess[(a, a)] += IRLS_RIDGE;
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::Fit("logistic normal equations are not positive definite".into()))?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let cand_eta = basis.linear_predictor(&cand);
            let cand_obj = penalized_objective(&cand_eta, y, &cand);
            if cand_obj >= obj {
                beta = cand;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(beta)
}

pub fn m_step(posteriors: &[Posterior], data: &EmData, previous: &MixtureModel) -> Result<MixtureModel> {
    if posteriors.len() != data.obs.len() {
        return Err(Error::LengthMismatch(format!(
            "{} posteriors for {} observations",
            posteriors.len(),
            data.obs.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, o) in posteriors.iter().zip(&data.obs) {
        num += p.a * o.z;
        den += p.a;
        if let Some(f) = o.fold {
            num += p.c * f.z_alt;
            den += p.c;
        }
    }
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::Fit("no posterior mass on the alternative".into()));
    }
    let y: Vec<f64> = posteriors.iter().map(Posterior::score).map(|s| s.clamp(0.0, 1.0)).collect();
    let beta = fit_logistic(&data.basis, &y, &previous.beta)?;
    Ok(MixtureModel { mu: num / den, beta })
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    pub posteriors: Vec<Posterior>,
    /// Observed-data log-likelihood before each M-step and after the last,
    /// including the log density of the ridge prior on `beta`. EM maximizes
    /// this quantity, so the sequence never decreases.
    pub loglik: Vec<f64>,
}

/// Runs up to `iters` EM iterations from `init`, stopping early once the
/// log-likelihood gain falls below `1e-10` relative.
pub fn fit(data: &EmData, init: MixtureModel, iters: usize) -> Result<EmFit> {
    if iters == 0 {
        return Err(Error::Config("EM needs at least one iteration".into()));
    }
    if init.beta.len() != data.basis.cols() {
        return Err(Error::LengthMismatch(format!(
            "model has {} coefficients, basis has {} columns",
            init.beta.len(),
            data.basis.cols()
        )));
    }
    let mut model = init;
    let mut loglik = Vec::with_capacity(iters + 1);
    let (mut post, ll) = e_step(&model, data);
    loglik.push(ll - ridge_penalty(&model.beta));
    for _ in 0..iters {
        model = m_step(&post, data, &model)?;
        let ll;
        (post, ll) = e_step(&model, data);
        let ll = ll - ridge_penalty(&model.beta);
        let prev = *loglik.last().unwrap();
        loglik.push(ll);
        if ll - prev <= 1e-10 * prev.abs() {
            break;
        }
    }
    Ok(EmFit {
        model,
        posteriors: post,
        loglik,
    })
}

/// Raises each parent's value to at least the maximum of its children, in one
/// bottom-up pass.
pub fn tree_monotonize(pi: &[f64], tree: &Tree) -> Result<Vec<f64>> {
    if pi.len() != tree.len() {
        return Err(Error::LengthMismatch(format!(
            "{} values for a tree of {} nodes",
            pi.len(),
            tree.len()
        )));
    }
    let mut out = pi.to_vec();
    for &v in tree.bfs_order().iter().rev() {
        if let Some(p) = tree.parent(v) {
            out[p] = out[p].max(out[v]);
        }
    }
    Ok(out)
}

/// Produces one score per hypothesis from what the analyst can see. Higher
/// scores mean "more likely non-null"; only active entries are consulted.
pub trait Scorer {
    fn scores(&mut self, view: &AnalystView, scheme: &MaskingScheme) -> Result<Vec<f64>>;
}

/// `S_i = -g(P_i)`. Hypotheses without a masked value score 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct NegGScorer;

impl Scorer for NegGScorer {
    fn scores(&mut self, view: &AnalystView, _scheme: &MaskingScheme) -> Result<Vec<f64>> {
        Ok(view.hypotheses.iter().map(|h| h.g.map_or(0.0, |g| -g)).collect())
    }
}

/// EM posterior scores, warm-started from the previous fit.
#[derive(Debug, Clone)]
pub struct EmScorer {
    spec: BasisSpec,
    tree: Option<Tree>,
    basis: Option<Basis>,
    model: Option<MixtureModel>,
    pub first_iters: usize,
    pub warm_iters: usize,
}

impl EmScorer {
    pub fn new(spec: BasisSpec) -> EmScorer {
        EmScorer {
            spec,
            tree: None,
            basis: None,
            model: None,
            first_iters: 20,
            warm_iters: 5,
        }
    }

    /// Tree-structured data: the prior is made monotone along the tree
    /// (parents at least as likely non-null as their children) before scoring.
    pub fn with_tree(spec: BasisSpec, tree: Tree) -> EmScorer {
        EmScorer {
            tree: Some(tree),
            ..EmScorer::new(spec)
        }
    }

    pub fn model(&self) -> Option<&MixtureModel> {
        self.model.as_ref()
    }
}

impl Scorer for EmScorer {
    fn scores(&mut self, view: &AnalystView, scheme: &MaskingScheme) -> Result<Vec<f64>> {
        let basis = match &self.basis {
            Some(b) if b.rows() == view.len() => b.clone(),
            _ => {
                let covs: Vec<Vec<f64>> = view.hypotheses.iter().map(|h| h.covariates.clone()).collect();
                let b = self.spec.build(&covs, self.tree.as_ref())?;
                self.basis = Some(b.clone());
                b
            }
        };
        let (init, iters) = match self.model.take() {
            Some(m) if m.beta.len() == basis.cols() => (m, self.warm_iters),
            _ => (MixtureModel::initial(basis.cols()), self.first_iters),
        };
        let data = EmData::from_view(view, scheme, basis)?;
        let fitted = fit(&data, init, iters)?;
        let out = match &self.tree {
            Some(tree) => {
                let pi = tree_monotonize(&fitted.model.prior(data.basis()), tree)?;
                scores(&e_step_with_prior(fitted.model.mu, &pi, &data).0)
            }
            None => scores(&fitted.posteriors),
        };
        self.model = Some(fitted.model);
        Ok(out)
    }
}
