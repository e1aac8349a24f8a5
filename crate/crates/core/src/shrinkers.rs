//! Automated exclusion strategies and the loop that drives them.
//!
//! A strategy looks at an [`AnalystView`] plus one score per hypothesis and
//! proposes a non-empty subset of the active set to exclude. Strategies never
//! see anything the view does not carry, so they can be freely swapped
//! between steps.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Scorer;
use crate::session::{AnalystView, Session, Status, ViewState};
use crate::tree::Tree;

fn default_d() -> usize {
    5
}

fn default_delta() -> f64 {
    0.05
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePeelParams {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for ConePeelParams {
    fn default() -> Self {
        ConePeelParams { d: 5, delta: 0.05 }
    }
}

impl ConePeelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("cone count d must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("peel fraction must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    ConePeel(ConePeelParams),
    SubtreePrune,
    LowestScore {
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ConePeel(_) => "cone_peel",
            Strategy::SubtreePrune => "subtree_prune",
            Strategy::LowestScore { .. } => "lowest_score",
        }
    }
}

fn check_scores(view: &AnalystView, scores: &[f64]) -> Result<()> {
    if scores.len() != view.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores for {} hypotheses",
            scores.len(),
            view.len()
        )));
    }
    Ok(())
}

/// The `min(batch_size, |active|)` active hypotheses with the smallest scores,
/// ties going to the lower index.
pub fn lowest_score_propose(view: &AnalystView, scores: &[f64], batch_size: usize) -> Result<Vec<usize>> {
    check_scores(view, scores)?;
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut active = view.active_indices();
    active.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    active.truncate(batch_size);
    active.sort_unstable();
    Ok(active)
}

/// Splits the active set into `d` equal angular sectors around its centroid
/// and proposes the outer `delta` fraction of the sector with the lowest mean
/// score.
pub fn cone_peel_propose(view: &AnalystView, params: &ConePeelParams, scores: &[f64]) -> Result<Vec<usize>> {
    params.validate()?;
    check_scores(view, scores)?;
    let active = view.active_indices();
    if active.is_empty() {
        return Err(Error::InvalidExclusion("no active hypotheses".into()));
    }
    let mut pts = Vec::with_capacity(active.len());
    for &i in &active {
        match view.hypotheses[i].covariates.as_slice() {
            &[x, y] => pts.push((i, x, y)),
            other => {
                return Err(Error::Covariates(format!(
                    "cone peeling needs 2-D coordinates, hypothesis {i} has {}",
                    other.len()
                )))
            }
        }
    }
    let m = pts.len() as f64;
    let cx = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let cy = pts.iter().map(|p| p.2).sum::<f64>() / m;
    let width = TAU / params.d as f64;

    // (index, squared distance) per sector
    let mut sectors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); params.d];
    for &(i, x, y) in &pts {
        let (dx, dy) = (x - cx, y - cy);
        let mut angle = dy.atan2(dx);
        if angle < 0.0 {
            angle += TAU;
        }
        let s = ((angle / width) as usize).min(params.d - 1);
        sectors[s].push((i, dx * dx + dy * dy));
    }

    let mut best: Option<(usize, f64)> = None;
    for (s, members) in sectors.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mean = members.iter().map(|&(i, _)| scores[i]).sum::<f64>() / members.len() as f64;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((s, mean));
        }
    }
    let (s, _) = best.expect("at least one sector is non-empty");
    let mut members = sectors.swap_remove(s);
    members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let take = ((params.delta * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut out: Vec<usize> = members.into_iter().take(take).map(|(i, _)| i).collect();
    out.sort_unstable();
    Ok(out)
}

/// Nearest ancestor of `v` that is not in the gap middle band.
fn anchor(view: &AnalystView, tree: &Tree, v: usize) -> Option<usize> {
    let mut u = tree.parent(v)?;
    loop {
        if view.hypotheses[u].state != ViewState::MiddleBand {
            return Some(u);
        }
        u = tree.parent(u)?;
    }
}

/// Proposes the lowest-scoring leaf of the active subtree.
///
/// Middle-band nodes are never candidates, so they are contracted away: each
/// active node hangs off its nearest ancestor outside the middle band, and
/// that ancestor must itself be active.
pub fn subtree_prune_propose(view: &AnalystView, tree: &Tree, scores: &[f64]) -> Result<Vec<usize>> {
    check_scores(view, scores)?;
    if tree.len() != view.len() {
        return Err(Error::LengthMismatch(format!(
            "tree has {} nodes for {} hypotheses",
            tree.len(),
            view.len()
        )));
    }
    let mut has_active_child = vec![false; view.len()];
    let active = view.active_indices();
    if active.is_empty() {
        return Err(Error::InvalidExclusion("no active hypotheses".into()));
    }
    for &v in &active {
        if let Some(a) = anchor(view, tree, v) {
            if !view.is_active(a) {
                return Err(Error::Tree(format!(
                    "active node {v} hangs below inactive node {a}; the active set is not a rooted subtree"
                )));
            }
            has_active_child[a] = true;
        }
    }
    let leaf = active
        .into_iter()
        .filter(|&v| !has_active_child[v])
        .min_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)))
        .expect("a finite non-empty forest has a leaf");
    Ok(vec![leaf])
}

pub fn propose(strategy: &Strategy, view: &AnalystView, scores: &[f64], tree: Option<&Tree>) -> Result<Vec<usize>> {
    match strategy {
        Strategy::ConePeel(p) => cone_peel_propose(view, p, scores),
        Strategy::SubtreePrune => {
            let tree = tree.ok_or_else(|| Error::Config("subtree pruning needs a tree".into()))?;
            subtree_prune_propose(view, tree, scores)
        }
        Strategy::LowestScore { batch_size } => lowest_score_propose(view, scores, *batch_size),
    }
}

/// Scores are refreshed after roughly every 2% of the hypotheses have been
/// excluded.
pub fn default_refit_every(n: usize) -> usize {
    (n / 50).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejections: Option<Vec<usize>>,
}

/// Runs at most `max_steps` propose/exclude rounds (unbounded for `None`).
/// The scorer is consulted again once `refit_every` hypotheses have been
/// excluded since its last call.
pub fn run_steps(
    session: &mut Session,
    strategy: &Strategy,
    scorer: &mut dyn Scorer,
    tree: Option<&Tree>,
    refit_every: usize,
    max_steps: Option<usize>,
) -> Result<RunReport> {
    let refit_every = refit_every.max(1);
    let mut scores: Option<Vec<f64>> = None;
    let mut since_refit = 0;
    let mut steps = 0;
    while !session.is_stopped() && session.active_count() > 0 && max_steps.is_none_or(|m| steps < m) {
        let view = session.view();
        if scores.is_none() || since_refit >= refit_every {
            scores = Some(scorer.scores(&view, session.scheme())?);
            since_refit = 0;
        }
        let batch = propose(strategy, &view, scores.as_deref().unwrap(), tree)?;
        since_refit += batch.len();
        session.exclude(&batch)?;
        steps += 1;
    }
    Ok(RunReport {
        steps,
        status: session.status(),
        rejections: session.rejections().map(<[usize]>::to_vec),
    })
}

pub fn run_until_stop(
    session: &mut Session,
    strategy: &Strategy,
    scorer: &mut dyn Scorer,
    tree: Option<&Tree>,
    refit_every: usize,
) -> Result<Status> {
    run_steps(session, strategy, scorer, tree, refit_every, None).map(|r| r.status)
}
