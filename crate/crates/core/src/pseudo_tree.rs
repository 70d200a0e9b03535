//! Pseudo trees derived from an elimination ordering.

use crate::graph::{induced_parents, positions, PrimalGraph};

/// Rooted tree over all variables in which every primal edge joins a node to
/// one of its ancestors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoTree {
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Context variables of each node, ordered root-first.
    context: Vec<Vec<usize>>,
    /// Variables in depth-first preorder.
    dfs: Vec<usize>,
    height: usize,
    subtree_size: Vec<usize>,
}

impl PseudoTree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn var_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn context(&self, v: usize) -> &[usize] {
        &self.context[v]
    }

    /// Context size of `v`.
    pub fn width(&self, v: usize) -> usize {
        self.context[v].len()
    }

    pub fn max_width(&self) -> usize {
        self.context.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dfs_order(&self) -> &[usize] {
        &self.dfs
    }

    pub fn subtree_size(&self, v: usize) -> usize {
        self.subtree_size[v]
    }

    /// Variables of the subtree rooted at `v`, in preorder.
    pub fn subtree(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.subtree_size[v]);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    /// Whether `a` is a proper ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut cur = self.parent[b];
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    /// Ancestors of `v`, nearest first.
    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[v]);
        let mut cur = self.parent[v];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }
}

/// Builds the pseudo tree induced by the bucket structure of `ordering`
/// (first entry is the root). Each variable hangs below the latest of its
/// induced earlier neighbours; roots of further connected components are
/// attached as children of the first variable so the tree stays single-rooted.
pub fn build_pseudo_tree(graph: &PrimalGraph, ordering: &[usize]) -> PseudoTree {
    let n = graph.vertex_count();
    assert!(n > 0, "pseudo tree needs at least one variable");
    let earlier = induced_parents(graph, ordering);
    let pos = positions(ordering);
    let root = ordering[0];

    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    for &v in ordering.iter().skip(1) {
        let p = earlier[v].iter().copied().max_by_key(|&u| pos[u]).unwrap_or(root);
        parent[v] = Some(p);
    }
    // children listed in ordering position
    for &v in ordering {
        if let Some(p) = parent[v] {
            children[p].push(v);
        }
    }

    let mut depth = vec![0; n];
    let mut dfs = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        dfs.push(u);
        for &c in children[u].iter().rev() {
            depth[c] = depth[u] + 1;
            stack.push(c);
        }
    }
    debug_assert_eq!(dfs.len(), n);

    let mut subtree_size = vec![1; n];
    for &u in dfs.iter().rev() {
        if let Some(p) = parent[u] {
            subtree_size[p] += subtree_size[u];
        }
    }
    let context = earlier
        .into_iter()
        .map(|set| {
            let mut c: Vec<usize> = set.into_iter().collect();
            c.sort_by_key(|&u| depth[u]);
            c
        })
        .collect();
    let height = depth.iter().copied().max().unwrap_or(0);

    PseudoTree {
        root,
        parent,
        children,
        depth,
        context,
        dfs,
        height,
        subtree_size,
    }
}
