//! Rooted trees over hypothesis indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rooted tree on nodes `0..n`, stored as a parent array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Option<usize>>", into = "Vec<Option<usize>>")]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Breadth-first order starting at the root.
    order: Vec<usize>,
    root: usize,
}

impl Tree {
    /// Builds a tree from `parent[i]` (`None` for the root). Rejects
    /// multiple roots, dangling parents and cycles.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Tree> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::Tree("no nodes".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (i, p) in parent.iter().enumerate() {
            match *p {
                None if root.is_some() => {
                    return Err(Error::Tree(format!("nodes {} and {i} are both roots", root.unwrap())))
                }
                None => root = Some(i),
                Some(j) if j >= n => {
                    return Err(Error::Tree(format!("node {i} has unknown parent {j}")))
                }
                Some(j) if j == i => return Err(Error::Tree(format!("node {i} is its own parent"))),
                Some(j) => children[j].push(i),
            }
        }
        let root = root.ok_or_else(|| Error::Tree("no root (every node has a parent)".into()))?;
        let mut depth = vec![0; n];
        let mut order = Vec::with_capacity(n);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::Tree(format!(
                "{} nodes are unreachable from the root (cycle)",
                n - order.len()
            )));
        }
        Ok(Tree {
            parent,
            children,
            depth,
            order,
            root,
        })
    }

    /// Complete tree with the given fanout at each depth, numbered
    /// breadth-first from the root.
    pub fn complete(fanouts: &[usize]) -> Tree {
        let mut parent = vec![None];
        let mut level = vec![0usize];
        for &f in fanouts {
            let mut next = Vec::with_capacity(level.len() * f);
            for &v in &level {
                for _ in 0..f {
                    next.push(parent.len());
                    parent.push(Some(v));
                }
            }
            level = next;
        }
        Tree::from_parents(parent).expect("complete tree is valid")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// The depth-1 ancestor of `v` (itself at depth 1), `None` for the root.
    pub fn top_branch(&self, mut v: usize) -> Option<usize> {
        if v == self.root {
            return None;
        }
        while self.depth[v] > 1 {
            v = self.parent[v].expect("non-root has a parent");
        }
        Some(v)
    }
}

impl TryFrom<Vec<Option<usize>>> for Tree {
    type Error = Error;

    fn try_from(parent: Vec<Option<usize>>) -> Result<Tree> {
        Tree::from_parents(parent)
    }
}

impl From<Tree> for Vec<Option<usize>> {
    fn from(t: Tree) -> Self {
        t.parent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_tree_sizes() {
        let t = Tree::complete(&[20, 3, 3, 3]);
        assert_eq!(t.len(), 801);
        assert_eq!(t.children(0).len(), 20);
        assert_eq!(t.max_depth(), 4);
        assert_eq!(t.children(1), &[21, 22, 23]);
        assert_eq!(t.top_branch(21), Some(1));
        assert_eq!(t.top_branch(0), None);
    }

    #[test]
    fn rejects_bad_parent_arrays() {
        assert!(Tree::from_parents(vec![]).is_err());
        assert!(Tree::from_parents(vec![None, None]).is_err());
        assert!(Tree::from_parents(vec![Some(1), Some(0)]).is_err());
        assert!(Tree::from_parents(vec![None, Some(2), Some(1)]).is_err());
        assert!(Tree::from_parents(vec![None, Some(5)]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = Tree::from_parents(vec![None, Some(0), Some(1)]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "[null,0,1]");
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Tree>("[0,0]").is_err());
    }
}
