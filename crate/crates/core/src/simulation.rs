//! Synthetic data generators and the Monte Carlo harness.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::masking::MaskingScheme;
use crate::normal::normal_sf;
use crate::scoring::{EmScorer, NegGScorer, Scorer};
use crate::session::{Session, SessionConfig};
use crate::shrinkers::{default_refit_every, run_until_stop, ConePeelParams, Strategy};
use crate::tree::Tree;

/// One synthetic dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub pvalues: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
    pub nonnull: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Tree>,
}

impl SimData {
    pub fn nonnull_count(&self) -> usize {
        self.nonnull.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub disc_center: [f64; 2],
    pub disc_radius: f64,
    pub mu_alt: f64,
    pub mu_null: f64,
    pub rho: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 30,
            cols: 30,
            disc_center: [15.0, 15.0],
            disc_radius: 2.5,
            mu_alt: 3.0,
            mu_null: 0.0,
            rho: 0.0,
        }
    }
}

impl GridSpec {
    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        let [cr, cc] = self.disc_center;
        let r = self.disc_radius;
        if r.is_nan() || r < 0.0 || cr - r < 0.0 || cc - r < 0.0 || cr + r > (self.rows - 1) as f64 || cc + r > (self.cols - 1) as f64 {
            return Err(Error::Config("the non-null disc must lie inside the grid".into()));
        }
        let lower = if n > 1 { -1.0 / (n - 1) as f64 } else { f64::NEG_INFINITY };
        if !(self.rho > lower && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho = {} gives an indefinite covariance; need {lower} < rho < 1",
                self.rho
            )));
        }
        if !self.mu_alt.is_finite() || !self.mu_null.is_finite() {
            return Err(Error::Config("means must be finite".into()));
        }
        Ok(())
    }

    pub fn in_disc(&self, row: usize, col: usize) -> bool {
        let dr = row as f64 - self.disc_center[0];
        let dc = col as f64 - self.disc_center[1];
        dr * dr + dc * dc <= self.disc_radius * self.disc_radius
    }
}

/// Draws `n` standard normals with pairwise correlation `rho`.
///
/// Non-negative `rho` uses a shared factor. Negative `rho` uses the symmetric
/// square root of the equi-correlation matrix,
/// `sqrt(1 - rho) I + c 11'` with `c = (sqrt(1 - rho + n rho) - sqrt(1 - rho)) / n`,
/// which costs O(n).
pub fn equicorrelated_normals<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if rho == 0.0 {
        return eps;
    }
    if rho > 0.0 {
        let w: f64 = rng.sample(StandardNormal);
        let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
        return eps.into_iter().map(|e| a * w + b * e).collect();
    }
    let s = (1.0 - rho).sqrt();
    let c = ((1.0 - rho + n as f64 * rho).sqrt() - s) / n as f64;
    let total: f64 = eps.iter().sum();
    eps.into_iter().map(|e| s * e + c * total).collect()
}

pub fn gen_grid<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> Result<SimData> {
    spec.validate()?;
    let noise = equicorrelated_normals(spec.n(), spec.rho, rng);
    let mut data = SimData {
        pvalues: Vec::with_capacity(spec.n()),
        covariates: Vec::with_capacity(spec.n()),
        nonnull: Vec::with_capacity(spec.n()),
        tree: None,
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let i = r * spec.cols + c;
            let mean = if spec.in_disc(r, c) { spec.mu_alt } else { spec.mu_null };
            data.pvalues.push(normal_sf(mean + noise[i]));
            data.covariates.push(vec![r as f64, c as f64]);
            // One-sided nulls: any mean at or below zero is a true null.
            data.nonnull.push(mean > 0.0);
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSpec {
    /// Children per node at each depth, starting from the root.
    pub fanouts: Vec<usize>,
    pub mu_alt: f64,
    pub mu_null: f64,
    /// Which child of the root hosts the non-null cluster.
    pub branch: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            fanouts: vec![20, 3, 3, 3],
            mu_alt: 3.0,
            mu_null: 0.0,
            branch: 0,
        }
    }
}

impl TreeSpec {
    /// The non-null cluster: the designated depth-1 node `b`, its first child
    /// `c`, all children of `c`, and the first two children of `c`'s first
    /// child.
    pub fn nonnull_nodes(&self, tree: &Tree) -> Result<Vec<usize>> {
        let bad = || Error::Config("tree is too small for the non-null cluster".into());
        let b = *tree.children(tree.root()).get(self.branch).ok_or_else(bad)?;
        let c = *tree.children(b).first().ok_or_else(bad)?;
        let grand = tree.children(c);
        let first = *grand.first().ok_or_else(bad)?;
        let great = tree.children(first);
        if great.len() < 2 {
            return Err(bad());
        }
        let mut nodes = vec![b, c];
        nodes.extend_from_slice(grand);
        nodes.extend_from_slice(&great[..2]);
        Ok(nodes)
    }
}

/// Tree covariate: the parent index, `-1` for the root.
pub fn parent_covariates(tree: &Tree) -> Vec<Vec<f64>> {
    tree.parents()
        .iter()
        .map(|p| vec![p.map_or(-1.0, |p| p as f64)])
        .collect()
}

pub fn gen_tree<R: Rng + ?Sized>(spec: &TreeSpec, rng: &mut R) -> Result<SimData> {
    let tree = Tree::complete(&spec.fanouts);
    let mut means = vec![spec.mu_null; tree.len()];
    for v in spec.nonnull_nodes(&tree)? {
        means[v] = spec.mu_alt;
    }
    let pvalues = means
        .iter()
        .map(|&m| {
            let e: f64 = rng.sample(StandardNormal);
            normal_sf(m + e)
        })
        .collect();
    let nonnull = means.iter().map(|&m| m > 0.0).collect();
    Ok(SimData {
        pvalues,
        covariates: parent_covariates(&tree),
        nonnull,
        tree: Some(tree),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Grid(GridSpec),
    Tree(TreeSpec),
    /// The same fixed dataset in every replication.
    Custom(SimData),
}

impl Generator {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimData> {
        match self {
            Generator::Grid(s) => gen_grid(s, rng),
            Generator::Tree(s) => gen_tree(s, rng),
            Generator::Custom(d) => Ok(d.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    NegG,
    Em,
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Ifwer {
        scheme: MaskingScheme,
        /// Defaults to cone peeling on grids and subtree pruning on trees.
        #[serde(default)]
        strategy: Option<Strategy>,
        #[serde(default)]
        scorer: ScorerKind,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        adjusted_start: bool,
    },
    Sidak,
    Holm,
    Bonferroni,
    /// Fallback in index order with `v` allowed failures.
    Fallback { v: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Ifwer { strategy, scorer, k, .. } => {
                let strat = strategy.map_or("default", |s| s.name());
                let scorer = match scorer {
                    ScorerKind::NegG => "neg_g",
                    ScorerKind::Em => "em",
                };
                if *k > 1 {
                    format!("ifwer:{strat}:{scorer}:k{k}")
                } else {
                    format!("ifwer:{strat}:{scorer}")
                }
            }
            Method::Sidak => "sidak".into(),
            Method::Holm => "holm".into(),
            Method::Bonferroni => "bonferroni".into(),
            Method::Fallback { v } => format!("fallback:v{v}"),
        }
    }

    pub fn scheme_label(&self) -> String {
        match self {
            Method::Ifwer { scheme, .. } => scheme.label(),
            _ => "NA".into(),
        }
    }

    fn error_threshold(&self) -> usize {
        match self {
            Method::Ifwer { k, .. } => *k,
            _ => 1,
        }
    }

    /// Rejected indices for one dataset.
    pub fn apply(&self, data: &SimData, alpha: f64, session_seed: u64) -> Result<Vec<usize>> {
        match self {
            Method::Sidak => Ok(baselines::sidak(&data.pvalues, alpha)?.rejected),
            Method::Holm => Ok(baselines::holm(&data.pvalues, alpha)?.rejected),
            Method::Bonferroni => Ok(baselines::bonferroni(&data.pvalues, alpha)?.rejected),
            Method::Fallback { v } => {
                let order: Vec<usize> = match &data.tree {
                    Some(t) => t.bfs_order().to_vec(),
                    None => (0..data.pvalues.len()).collect(),
                };
                Ok(baselines::fallback(&data.pvalues, &order, alpha, *v)?.rejected)
            }
            Method::Ifwer {
                scheme,
                strategy,
                scorer,
                k,
                adjusted_start,
            } => {
                let config = SessionConfig {
                    k: *k,
                    adjusted_start: *adjusted_start,
                    rng_seed: session_seed,
                    ..SessionConfig::new(*scheme, alpha)
                };
                let mut session = Session::create(&data.pvalues, data.covariates.clone(), config)?;
                let dim = data.covariates.first().map_or(0, Vec::len);
                let strategy = strategy.unwrap_or_else(|| default_strategy(data.tree.as_ref(), dim));
                let mut scorer = build_scorer(*scorer, data.tree.as_ref(), dim);
                let refit = default_refit_every(data.pvalues.len());
                run_until_stop(&mut session, &strategy, scorer.as_mut(), data.tree.as_ref(), refit)?;
                Ok(session.rejections().unwrap_or_default().to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub config_id: String,
    pub generator: Generator,
    pub method: Method,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Method::Ifwer { scheme, k, adjusted_start, .. } = &self.method {
            SessionConfig {
                k: *k,
                adjusted_start: *adjusted_start,
                ..SessionConfig::new(*scheme, self.alpha)
            }
            .validate()?;
        }
        match &self.generator {
            Generator::Grid(s) => s.validate(),
            Generator::Tree(s) => s.nonnull_nodes(&Tree::complete(&s.fanouts)).map(|_| ()),
            Generator::Custom(d) => {
                if d.pvalues.len() != d.nonnull.len() {
                    return Err(Error::LengthMismatch("labels and p-values differ in length".into()));
                }
                Ok(())
            }
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub false_rejections: usize,
    pub true_rejections: usize,
    pub nonnulls: usize,
}

impl RepOutcome {
    pub fn score(data: &SimData, rejected: &[usize]) -> RepOutcome {
        let true_rejections = rejected.iter().filter(|&&i| data.nonnull[i]).count();
        RepOutcome {
            false_rejections: rejected.len() - true_rejections,
            true_rejections,
            nonnulls: data.nonnull_count(),
        }
    }

    pub fn power(&self) -> Option<f64> {
        (self.nonnulls > 0).then(|| self.true_rejections as f64 / self.nonnulls as f64)
    }
}

/// Subtree pruning for trees, cone peeling for 2-D coordinates, and plain
/// lowest-score exclusion otherwise.
pub fn default_strategy(tree: Option<&Tree>, covariate_dim: usize) -> Strategy {
    match (tree, covariate_dim) {
        (Some(_), _) => Strategy::SubtreePrune,
        (None, 2) => Strategy::ConePeel(ConePeelParams::default()),
        _ => Strategy::LowestScore { batch_size: 1 },
    }
}

/// The EM basis follows the data layout: subtree groups on trees, a tensor
/// spline on covariates, an intercept when there are none.
pub fn build_scorer(kind: ScorerKind, tree: Option<&Tree>, covariate_dim: usize) -> Box<dyn Scorer> {
    match (kind, tree) {
        (ScorerKind::NegG, _) => Box::new(NegGScorer),
        (ScorerKind::Em, Some(t)) => {
            let depth = t.max_depth().clamp(1, 2);
            Box::new(EmScorer::with_tree(BasisSpec::TreeGroups { depth }, t.clone()))
        }
        (ScorerKind::Em, None) if covariate_dim == 0 => Box::new(EmScorer::new(BasisSpec::Intercept)),
        (ScorerKind::Em, None) => Box::new(EmScorer::new(BasisSpec::default())),
    }
}

/// Per-replication random stream: ChaCha20 keyed by the seed, one stream
/// number per replication.
pub fn rep_rng(seed: u64, rep: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<RepOutcome> {
    let mut rng = rep_rng(config.seed, rep);
    let data = config.generator.generate(&mut rng)?;
    let session_seed = rng.random();
    let rejected = config.method.apply(&data, config.alpha, session_seed)?;
    Ok(RepOutcome::score(&data, &rejected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_id: String,
    pub method: String,
    pub alpha: f64,
    pub scheme: String,
    pub reps: usize,
    pub fwer: f64,
    pub se_fwer: Option<f64>,
    pub power: Option<f64>,
    pub se_power: Option<f64>,
    /// Wall-clock seconds; not part of the CSV row.
    pub runtime: f64,
}

pub const SUMMARY_HEADER: &str = "config_id,method,alpha,scheme,reps,fwer,se_fwer,power,se_power";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl Summary {
    pub fn from_outcomes(config: &ExperimentConfig, outcomes: &[RepOutcome], runtime: f64) -> Summary {
        let reps = outcomes.len();
        let k = config.method.error_threshold();
        let errors = outcomes.iter().filter(|o| o.false_rejections >= k).count();
        let fwer = errors as f64 / reps as f64;
        let powers: Vec<f64> = outcomes.iter().filter_map(RepOutcome::power).collect();
        let power = (!powers.is_empty()).then(|| powers.iter().sum::<f64>() / powers.len() as f64);
        let se_power = match (power, powers.len()) {
            (Some(m), n) if n > 1 => {
                let var = powers.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (n - 1) as f64;
                Some((var / n as f64).sqrt())
            }
            _ => None,
        };
        Summary {
            config_id: config.config_id.clone(),
            method: config.method.label(),
            alpha: config.alpha,
            scheme: config.method.scheme_label(),
            reps,
            fwer,
            se_fwer: (reps > 1).then(|| (fwer * (1.0 - fwer) / reps as f64).sqrt()),
            power,
            se_power,
            runtime,
        }
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{:.6},{},{},{}",
            self.config_id,
            self.method,
            self.alpha,
            self.scheme,
            self.reps,
            self.fwer,
            fmt_opt(self.se_fwer),
            fmt_opt(self.power),
            fmt_opt(self.se_power)
        )
        .expect("writing to a String");
        s
    }
}

/// Runs all replications in order and summarizes them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    let (outcomes, runtime) = run_outcomes(config)?;
    Ok(Summary::from_outcomes(config, &outcomes, runtime))
}

/// Per-replication outcomes, for paired comparisons across methods that
/// share a seed (and therefore the same datasets).
pub fn run_outcomes(config: &ExperimentConfig) -> Result<(Vec<RepOutcome>, f64)> {
    config.validate()?;
    let start = Instant::now();
    let outcomes = (0..config.reps)
        .map(|rep| run_replication(config, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok((outcomes, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorBin {
    pub lo: f64,
    pub hi: f64,
    pub f_low: f64,
    pub f_high: f64,
    pub se: f64,
    pub count_low: usize,
    pub count_high: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorReport {
    pub bins: Vec<MirrorBin>,
    /// Bins where the low-side density exceeds its mirror by more than 3 SE.
    pub flagged: Vec<usize>,
    /// Some bin has fewer than 20 samples on one side.
    pub inconclusive: bool,
}

/// Histogram comparison of `f(a)` against `f(1 - a (1 - p*) / p*)` on
/// `[0, p*]`, the condition under which tent masking keeps null bits fair.
pub fn mirror_conservative_check(samples: &[f64], p_star: f64, bins: usize) -> Result<MirrorReport> {
    if bins < 2 {
        return Err(Error::Config("need at least 2 bins".into()));
    }
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(Error::InvalidScheme(format!("p* must lie in (0, 1), got {p_star}")));
    }
    if let Some(&p) = samples.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(p));
    }
    let n = samples.len() as f64;
    let ratio = (1.0 - p_star) / p_star;
    let w_low = p_star / bins as f64;
    let w_high = w_low * ratio;
    let mut low = vec![0usize; bins];
    let mut high = vec![0usize; bins];
    for &p in samples {
        if p < p_star {
            low[((p / w_low) as usize).min(bins - 1)] += 1;
        } else if p > p_star {
            // p = 1 - a * ratio  =>  a = (1 - p) / ratio
            let a = (1.0 - p) / ratio;
            high[((a / w_low) as usize).min(bins - 1)] += 1;
        }
    }
    let mut out = Vec::with_capacity(bins);
    let mut flagged = Vec::new();
    let mut inconclusive = false;
    for j in 0..bins {
        let f_low = low[j] as f64 / (n * w_low);
        let f_high = high[j] as f64 / (n * w_high);
        let se = ((low[j] as f64).sqrt() / (n * w_low)).hypot((high[j] as f64).sqrt() / (n * w_high));
        if low[j] < 20 || high[j] < 20 {
            inconclusive = true;
        } else if f_low - f_high > 3.0 * se {
            flagged.push(j);
        }
        out.push(MirrorBin {
            lo: j as f64 * w_low,
            hi: (j + 1) as f64 * w_low,
            f_low,
            f_high,
            se,
            count_low: low[j],
            count_high: high[j],
        });
    }
    Ok(MirrorReport {
        bins: out,
        flagged,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_disc_has_21_cells() {
        let spec = GridSpec::default();
        let count = (0..30).flat_map(|r| (0..30).map(move |c| (r, c))).filter(|&(r, c)| spec.in_disc(r, c)).count();
        assert_eq!(count, 21);
        let data = gen_grid(&spec, &mut rep_rng(1, 0)).unwrap();
        assert_eq!(data.nonnull_count(), 21);
        assert_eq!(data.pvalues.len(), 900);
    }

    #[test]
    fn grid_spec_validation() {
        let bad_rho = GridSpec { rho: -0.01, ..GridSpec::default() };
        assert!(gen_grid(&bad_rho, &mut rep_rng(0, 0)).is_err());
        let ok_rho = GridSpec { rho: -0.5 / 900.0, ..GridSpec::default() };
        assert!(gen_grid(&ok_rho, &mut rep_rng(0, 0)).is_ok());
        let off = GridSpec { disc_center: [1.0, 1.0], ..GridSpec::default() };
        assert!(off.validate().is_err());
    }

    #[test]
    fn tree_cluster_shape() {
        let data = gen_tree(&TreeSpec::default(), &mut rep_rng(3, 0)).unwrap();
        let tree = data.tree.as_ref().unwrap();
        assert_eq!(tree.len(), 801);
        assert_eq!(data.nonnull_count(), 7);
        let nodes: Vec<usize> = (0..801).filter(|&i| data.nonnull[i]).collect();
        assert!(nodes.iter().all(|&v| tree.top_branch(v) == Some(1)));
        // Connected: every non-null except the top has a non-null parent.
        let tops = nodes.iter().filter(|&&v| !data.nonnull[tree.parent(v).unwrap()]).count();
        assert_eq!(tops, 1);
    }

    #[test]
    fn equicorrelated_sample_covariance() {
        let mut rng = rep_rng(5, 0);
        for rho in [0.5, -0.2] {
            let reps = 20_000;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for _ in 0..reps {
                let z = equicorrelated_normals(4, rho, &mut rng);
                sxy += z[0] * z[1];
                sxx += z[2] * z[2];
            }
            assert!((sxy / reps as f64 - rho).abs() < 0.03, "rho={rho}");
            assert!((sxx / reps as f64 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn summary_csv_and_single_rep() {
        let cfg = ExperimentConfig {
            config_id: "t".into(),
            generator: Generator::Grid(GridSpec { rows: 10, cols: 10, disc_center: [5.0, 5.0], ..GridSpec::default() }),
            method: Method::Sidak,
            alpha: 0.2,
            reps: 1,
            seed: 1,
        };
        let s = run_experiment(&cfg).unwrap();
        let row = s.csv_row();
        assert!(row.starts_with("t,sidak,0.2,NA,1,"));
        assert!(row.contains(",NA,") && row.ends_with(",NA"));
        assert_eq!(SUMMARY_HEADER.split(',').count(), row.split(',').count());
    }

    #[test]
    fn reps_zero_is_rejected() {
        let cfg = ExperimentConfig {
            config_id: "t".into(),
            generator: Generator::Tree(TreeSpec::default()),
            method: Method::Holm,
            alpha: 0.2,
            reps: 0,
            seed: 1,
        };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn mirror_check_examples() {
        let mut rng = rep_rng(9, 0);
        let n = 200_000;
        let uniform: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let r = mirror_conservative_check(&uniform, 0.2, 5).unwrap();
        assert!(!r.inconclusive && r.flagged.is_empty());
        let increasing: Vec<f64> = (0..n).map(|_| rng.random::<f64>().sqrt()).collect();
        assert!(mirror_conservative_check(&increasing, 0.2, 5).unwrap().flagged.is_empty());
        let decreasing: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>().cbrt()).collect();
        assert!(!mirror_conservative_check(&decreasing, 0.2, 5).unwrap().flagged.is_empty());
        let tiny = mirror_conservative_check(&uniform[..50], 0.2, 5).unwrap();
        assert!(tiny.inconclusive);
        assert!(mirror_conservative_check(&uniform, 0.2, 1).is_err());
    }
}
