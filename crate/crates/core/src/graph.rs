//! Primal graph construction, min-fill elimination ordering and induced width.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::GraphicalModel;

/// Undirected interaction graph: an edge joins two variables that share a
/// factor scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimalGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl PrimalGraph {
    pub fn with_vertices(n: usize) -> Self {
        PrimalGraph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::with_vertices(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn from_model(model: &GraphicalModel) -> Self {
        let mut g = Self::with_vertices(model.var_count());
        for f in model.factors() {
            g.add_clique(f.scope());
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn add_clique(&mut self, vars: &[usize]) {
        for (i, &u) in vars.iter().enumerate() {
            for &v in &vars[i + 1..] {
                self.add_edge(u, v);
            }
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` pairs with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.range(u + 1..).map(move |&v| (u, v)))
            .collect()
    }
}

/// Edge set of the primal graph; see [`PrimalGraph::from_model`].
pub fn primal_graph(model: &GraphicalModel) -> PrimalGraph {
    PrimalGraph::from_model(model)
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let ns: Vec<usize> = adj[v].iter().copied().collect();
    let mut fill = 0;
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            if !adj[a].contains(&b) {
                fill += 1;
            }
        }
    }
    fill
}

fn eliminate(adj: &mut [BTreeSet<usize>], v: usize) {
    let ns: Vec<usize> = adj[v].iter().copied().collect();
    for (i, &a) in ns.iter().enumerate() {
        adj[a].remove(&v);
        for &b in &ns[i + 1..] {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    if let Some(&last) = ns.last() {
        adj[last].remove(&v);
    }
    adj[v].clear();
}

/// Greedy min-fill ordering. Variables are eliminated from the end of the
/// returned ordering towards its front, so the first entry is eliminated last
/// and becomes the pseudo tree root. Ties are broken uniformly at random from
/// `seed`.
pub fn min_fill_ordering(graph: &PrimalGraph, seed: u64) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = graph.adj.clone();
    let mut alive: Vec<bool> = vec![true; n];
    let mut elim = Vec::with_capacity(n);
    let mut candidates = Vec::new();
    for _ in 0..n {
        let mut best = usize::MAX;
        candidates.clear();
        for v in (0..n).filter(|&v| alive[v]) {
            let f = fill_in(&adj, v);
            if f < best {
                best = f;
                candidates.clear();
            }
            if f == best {
                candidates.push(v);
            }
        }
        let v = *candidates.choose(&mut rng).expect("at least one live vertex");
        eliminate(&mut adj, v);
        alive[v] = false;
        elim.push(v);
    }
    elim.reverse();
    elim
}

/// Position of each variable within `ordering`.
pub(crate) fn positions(ordering: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; ordering.len()];
    for (i, &v) in ordering.iter().enumerate() {
        pos[v] = i;
    }
    pos
}

/// Induced earlier-neighbour sets along `ordering`, processing variables last
/// to first.
pub(crate) fn induced_parents(graph: &PrimalGraph, ordering: &[usize]) -> Vec<BTreeSet<usize>> {
    assert_eq!(ordering.len(), graph.vertex_count(), "ordering must be a permutation");
    let pos = positions(ordering);
    assert!(pos.iter().all(|&p| p != usize::MAX), "ordering must be a permutation");
    let mut adj = graph.adj.clone();
    let mut earlier = vec![BTreeSet::new(); ordering.len()];
    for &v in ordering.iter().rev() {
        let e: BTreeSet<usize> = adj[v].iter().copied().filter(|&u| pos[u] < pos[v]).collect();
        let list: Vec<usize> = e.iter().copied().collect();
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        earlier[v] = e;
    }
    earlier
}

/// Width of the induced graph along `ordering`: the largest number of
/// earlier neighbours any variable has when it is eliminated.
pub fn induced_width(graph: &PrimalGraph, ordering: &[usize]) -> usize {
    induced_parents(graph, ordering)
        .iter()
        .map(BTreeSet::len)
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_factors_no_edges() {
        let m = GraphicalModel::new(vec![2, 2], vec![]).unwrap();
        assert_eq!(primal_graph(&m).edge_count(), 0);
    }

    #[test]
    fn single_factor_is_a_clique() {
        let m = GraphicalModel::new(vec![2; 3], vec![(vec![0, 1, 2], vec![0.0; 8])]).unwrap();
        assert_eq!(primal_graph(&m).edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn pairwise_triangle_dedups() {
        let m = GraphicalModel::new(
            vec![2; 3],
            vec![
                (vec![0, 1], vec![0.0; 4]),
                (vec![1, 2], vec![0.0; 4]),
                (vec![0, 2], vec![0.0; 4]),
            ],
        )
        .unwrap();
        let g = primal_graph(&m);
        assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn path_width_one_every_ordering() {
        let g = PrimalGraph::from_edges(3, &[(0, 1), (1, 2)]);
        for seed in 0..5 {
            assert_eq!(induced_width(&g, &min_fill_ordering(&g, seed)), 1);
        }
        for ord in [[0, 1, 2], [1, 0, 2], [0, 2, 1], [2, 0, 1]] {
            // eliminating the middle vertex first (last in the ordering) fills 0-2
            let w = induced_width(&g, &ord);
            assert!((1..=2).contains(&w));
        }
        assert_eq!(induced_width(&g, &[0, 1, 2]), 1);
    }

    #[test]
    fn clique_width_three() {
        let mut g = PrimalGraph::with_vertices(4);
        g.add_clique(&[0, 1, 2, 3]);
        for seed in 0..5 {
            let ord = min_fill_ordering(&g, seed);
            assert_eq!(induced_width(&g, &ord), 3);
        }
        assert_eq!(induced_width(&g, &[3, 1, 0, 2]), 3);
    }

    #[test]
    fn ordering_is_permutation_and_seeded() {
        let g = PrimalGraph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        let a = min_fill_ordering(&g, 7);
        let b = min_fill_ordering(&g, 7);
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..6).collect::<Vec<_>>());
        assert_eq!(induced_width(&g, &a), 2);
    }
}
