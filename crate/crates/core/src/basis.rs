//! Design matrices for the prior model `pi(x) = logistic(beta' B(x))`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::Tree;

fn default_knots() -> usize {
    3
}

fn default_group_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Intercept,
    /// Tensor product of per-axis natural cubic splines, knots at the axis
    /// extremes plus `interior_knots` equally spaced quantiles.
    TensorSpline {
        #[serde(default = "default_knots")]
        interior_knots: usize,
    },
    /// Intercept plus per-axis powers `1..=degree`, no interactions.
    RawPolynomial { degree: usize },
    /// Intercept plus one indicator per subtree rooted at `depth`; nodes
    /// above that depth share the intercept.
    TreeGroups {
        #[serde(default = "default_group_depth")]
        depth: usize,
    },
    Custom { rows: Vec<Vec<f64>> },
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::TensorSpline { interior_knots: 3 }
    }
}

impl BasisSpec {
    pub fn build(&self, covariates: &[Vec<f64>], tree: Option<&Tree>) -> Result<Basis> {
        match self {
            BasisSpec::Intercept => Ok(Basis::intercept(covariates.len())),
            BasisSpec::TensorSpline { interior_knots } => {
                Basis::tensor_spline(covariates, *interior_knots)
            }
            BasisSpec::RawPolynomial { degree } => Basis::raw_polynomial(covariates, *degree),
            BasisSpec::TreeGroups { depth } => {
                let tree = tree.ok_or_else(|| Error::Config("tree basis needs a tree".into()))?;
                if tree.len() != covariates.len() {
                    return Err(Error::LengthMismatch(format!(
                        "tree has {} nodes, data has {} rows",
                        tree.len(),
                        covariates.len()
                    )));
                }
                Basis::tree_groups(tree, *depth)
            }
            BasisSpec::Custom { rows } => {
                if rows.len() != covariates.len() {
                    return Err(Error::LengthMismatch(format!(
                        "custom basis has {} rows, data has {}",
                        rows.len(),
                        covariates.len()
                    )));
                }
                Basis::custom(rows.clone())
            }
        }
    }
}

/// Dense row-major design matrix with full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Basis {
    pub fn intercept(n: usize) -> Basis {
        Basis {
            rows: n,
            cols: 1,
            data: vec![1.0; n],
        }
    }

    pub fn custom(rows: Vec<Vec<f64>>) -> Result<Basis> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Covariates("custom basis rows must share a positive width".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Covariates("custom basis has non-finite entries".into()));
        }
        let basis = Basis {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        };
        basis.check_rank()?;
        Ok(basis)
    }

    pub fn tensor_spline(covariates: &[Vec<f64>], interior_knots: usize) -> Result<Basis> {
        let dim = covariate_dim(covariates)?;
        if dim > 3 {
            return Err(Error::Covariates(format!(
                "tensor splines support at most 3 covariates, got {dim}"
            )));
        }
        let axes: Vec<Vec<Vec<f64>>> = (0..dim)
            .map(|j| {
                let xs: Vec<f64> = covariates.iter().map(|r| r[j]).collect();
                natural_spline_axis(&xs, interior_knots)
            })
            .collect();
        let mut rows: Vec<Vec<f64>> = vec![vec![1.0]; covariates.len()];
        for axis in &axes {
            for (row, feats) in rows.iter_mut().zip(axis) {
                let mut next = Vec::with_capacity(row.len() * (feats.len() + 1));
                for &a in row.iter() {
                    next.push(a);
                    next.extend(feats.iter().map(|&f| a * f));
                }
                *row = next;
            }
        }
        Basis::custom(rows)
    }

    pub fn raw_polynomial(covariates: &[Vec<f64>], degree: usize) -> Result<Basis> {
        let dim = covariate_dim(covariates)?;
        let mut rows: Vec<Vec<f64>> = vec![vec![1.0]; covariates.len()];
        for j in 0..dim {
            let xs: Vec<f64> = covariates.iter().map(|r| r[j]).collect();
            let Some(unit) = to_unit(&xs) else { continue };
            for (row, u) in rows.iter_mut().zip(unit) {
                for d in 1..=degree {
                    row.push(u.powi(d as i32));
                }
            }
        }
        Basis::custom(rows)
    }

    pub fn tree_groups(tree: &Tree, depth: usize) -> Result<Basis> {
        if depth == 0 || depth > tree.max_depth() {
            return Err(Error::Config(format!(
                "group depth must lie in 1..={}, got {depth}",
                tree.max_depth()
            )));
        }
        let mut column = vec![usize::MAX; tree.len()];
        let mut groups = 0;
        for &v in tree.bfs_order() {
            if tree.depth(v) == depth {
                column[v] = groups;
                groups += 1;
            } else if tree.depth(v) > depth {
                column[v] = column[tree.parent(v).expect("non-root")];
            }
        }
        let rows = column
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; groups + 1];
                row[0] = 1.0;
                if c != usize::MAX {
                    row[c + 1] = 1.0;
                }
                row
            })
            .collect();
        Basis::custom(rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `X beta` for every row.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    fn check_rank(&self) -> Result<()> {
        if self.rows < self.cols {
            return Err(Error::Covariates(format!(
                "{} basis columns for {} rows",
                self.cols, self.rows
            )));
        }
        let mut gram = DMatrix::<f64>::zeros(self.cols, self.cols);
        for r in self.data.chunks_exact(self.cols) {
            for a in 0..self.cols {
                for b in a..self.cols {
                    gram[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        // Scale to unit diagonal so the test is about collinearity, not units.
        let scale: Vec<f64> = (0..self.cols).map(|a| gram[(a, a)].sqrt()).collect();
        if scale.contains(&0.0) {
            return Err(Error::Covariates("basis has an all-zero column".into()));
        }
        for a in 0..self.cols {
            for b in 0..self.cols {
                gram[(a, b)] /= scale[a] * scale[b];
            }
        }
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min <= max * 1e-12 {
            return Err(Error::Covariates(
                "basis matrix is rank deficient on the design points".into(),
            ));
        }
        Ok(())
    }
}

fn covariate_dim(covariates: &[Vec<f64>]) -> Result<usize> {
    let first = covariates.first().ok_or(Error::EmptyInput)?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::Covariates("no covariates to build a basis on".into()));
    }
    if covariates.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Covariates("covariate rows must be finite and equally long".into()));
    }
    Ok(dim)
}

/// Rescales to [0, 1]; `None` for a constant axis.
fn to_unit(xs: &[f64]) -> Option<Vec<f64>> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi > lo).then(|| xs.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Non-constant natural cubic spline features for one axis (the intercept is
/// added by the caller), in the truncated-power form:
/// `x` and `d_k(x) - d_{K-1}(x)` with
/// `d_k(x) = ((x - t_k)_+^3 - (x - t_K)_+^3) / (t_K - t_k)`.
fn natural_spline_axis(xs: &[f64], interior_knots: usize) -> Vec<Vec<f64>> {
    let Some(unit) = to_unit(xs) else {
        return vec![Vec::new(); xs.len()];
    };
    let mut sorted = unit.clone();
    sorted.sort_by(f64::total_cmp);
    let mut knots = vec![0.0];
    for j in 1..=interior_knots {
        knots.push(quantile_sorted(&sorted, j as f64 / (interior_knots + 1) as f64));
    }
    knots.push(1.0);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let kk = knots.len();
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |k: usize, x: f64| (cube(x - knots[k]) - cube(x - knots[kk - 1])) / (knots[kk - 1] - knots[k]);
    unit.iter()
        .map(|&x| {
            let mut f = vec![x];
            if kk >= 3 {
                for k in 0..kk - 2 {
                    f.push(d(k, x) - d(kk - 2, x));
                }
            }
            f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows)
            .flat_map(|r| (0..cols).map(move |c| vec![r as f64, c as f64]))
            .collect()
    }

    #[test]
    fn grid_tensor_spline_has_25_columns() {
        let b = Basis::tensor_spline(&grid(30, 30), 3).unwrap();
        assert_eq!(b.cols(), 25);
        assert_eq!(b.rows(), 900);
        assert_eq!(b.row(0)[0], 1.0);
    }

    #[test]
    fn natural_spline_is_linear_beyond_boundary_knots() {
        // Second differences vanish to the right of the last knot, where only
        // the linear part survives; check on the last stretch of knots.
        let xs: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let f = natural_spline_axis(&xs, 3);
        assert_eq!(f[0].len(), 4);
        for (col, ((a, b), c)) in f[100].iter().zip(&f[99]).zip(&f[98]).enumerate() {
            let second = a - 2.0 * b + c;
            assert!(second.abs() < 0.05, "col {col}: {second}");
        }
    }

    #[test]
    fn tree_group_dimensions() {
        let t = Tree::complete(&[20, 3, 3, 3]);
        assert_eq!(Basis::tree_groups(&t, 2).unwrap().cols(), 1 + 60);
        let b = Basis::tree_groups(&t, 1).unwrap();
        assert_eq!(b.cols(), 1 + 20);
        // Node 21 sits below depth-1 node 1, the first group.
        assert_eq!(&b.row(21)[..3], &[1.0, 1.0, 0.0]);
        assert!(Basis::tree_groups(&t, 5).is_err());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(matches!(Basis::custom(rows), Err(Error::Covariates(_))));
        assert!(Basis::custom(vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn raw_polynomial_and_intercept() {
        let b = Basis::raw_polynomial(&grid(5, 5), 2).unwrap();
        assert_eq!(b.cols(), 5);
        assert_eq!(Basis::intercept(4).linear_predictor(&[0.5]), vec![0.5; 4]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s: BasisSpec = serde_json::from_str(r#"{"kind":"tensor_spline"}"#).unwrap();
        assert_eq!(s, BasisSpec::default());
        let t = Tree::complete(&[2]);
        let spec = BasisSpec::TreeGroups { depth: 1 };
        assert!(spec.build(&[vec![], vec![]], Some(&t)).is_err());
        assert!(spec.build(&vec![vec![]; 3], None).is_err());
        let s: BasisSpec = serde_json::from_str(r#"{"kind":"tree_groups"}"#).unwrap();
        assert_eq!(s, BasisSpec::TreeGroups { depth: 2 });
    }
}
