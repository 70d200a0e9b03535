//! Depth-first AND/OR Branch-and-Bound over the context-minimal search graph.
//!
//! Every generated node, OR or AND, counts as one expansion; the probe cap
//! applies to that count. AND children of an OR node are visited by
//! decreasing heuristic value, ties broken by a seeded hash. OR nodes are
//! cached by context, but only once their value is known exactly: a subtree
//! cut short by a bound inherited from above yields only "at most the
//! threshold" and is not stored.

use std::collections::HashMap;
use std::time::Instant;

use crate::model::UNASSIGNED;
use crate::problem::Problem;

/// Expansion budget of the probes that feed the dynamic features.
pub const PROBE_CAP: u64 = 5000;

/// Root of a conditioned subproblem: a pseudo tree variable whose context is
/// fully instantiated, plus the bounds known when it was created.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemHandle {
    pub var: usize,
    /// Values of `tree.context(var)`, in the same order.
    pub context: Vec<usize>,
    /// Depth of `var` in the pseudo tree.
    pub depth: usize,
    /// Log-cost of the conditioning path above this subproblem.
    pub path_cost: f64,
    /// Sum of the upper bounds of the other open subproblems on the path.
    pub open_bound: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SubproblemHandle {
    pub fn new(var: usize, context: Vec<usize>, depth: usize) -> Self {
        SubproblemHandle {
            var,
            context,
            depth,
            path_cost: 0.0,
            open_bound: 0.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub caching: bool,
    pub pruning: bool,
    /// Seed for value-ordering ties.
    pub seed: u64,
    /// Stop after this many node expansions.
    pub cap: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            caching: true,
            pruning: true,
            seed: 0,
            cap: None,
        }
    }
}

impl SearchConfig {
    pub fn probe(seed: u64) -> Self {
        SearchConfig {
            seed,
            cap: Some(PROBE_CAP),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    /// Exact optimum when `complete`, otherwise the best solution value found
    /// for the subproblem so far (`-inf` if none).
    pub optimum: f64,
    /// Generated OR plus AND nodes.
    pub expansions: u64,
    pub elapsed: f64,
    pub pruned_by_heuristic: u64,
    pub pruned_by_determinism: u64,
    /// Expanded AND nodes of pseudo tree leaves.
    pub leaf_nodes: u64,
    /// Nodes where a branch of the search ends: leaf AND nodes, pruned AND
    /// nodes and cache hits.
    pub terminal_nodes: u64,
    /// Node depths are pseudo tree levels counted from the subproblem root,
    /// which sits at level 1.
    pub depth_sum: u64,
    pub terminal_depth_sum: u64,
    pub complete: bool,
}

impl SearchResult {
    pub fn mean_depth(&self) -> f64 {
        if self.expansions == 0 {
            0.0
        } else {
            self.depth_sum as f64 / self.expansions as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Exact(f64),
    /// The subproblem cannot exceed the threshold it was given.
    FailLow,
}

struct Halt;

fn tiebreak(seed: u64, var: usize, val: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed
        .wrapping_add((var as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((val as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Searcher<'a> {
    p: &'a Problem,
    cfg: SearchConfig,
    asg: Vec<usize>,
    /// Mixed-radix multipliers per variable context; `None` when the key
    /// space does not fit in a `u64`.
    radix: Vec<Option<Vec<u64>>>,
    cache: Vec<HashMap<u64, f64>>,
    root: usize,
    root_depth: usize,
    root_best: f64,
    stats: SearchResult,
}

impl<'a> Searcher<'a> {
    fn new(p: &'a Problem, root: usize, asg: Vec<usize>, cfg: SearchConfig) -> Self {
        let n = p.model.var_count();
        let radix = if cfg.caching {
            (0..n)
                .map(|v| {
                    let ctx = p.tree.context(v);
                    let mut mult = vec![0u64; ctx.len()];
                    let mut acc: u64 = 1;
                    for (i, &u) in ctx.iter().enumerate().rev() {
                        mult[i] = acc;
                        acc = acc.checked_mul(p.model.domain(u) as u64)?;
                    }
                    Some(mult)
                })
                .collect()
        } else {
            vec![None; n]
        };
        Searcher {
            p,
            cfg,
            asg,
            radix,
            cache: vec![HashMap::new(); n],
            root,
            root_depth: p.tree.depth(root),
            root_best: f64::NEG_INFINITY,
            stats: SearchResult::default(),
        }
    }

    fn generate(&mut self, var: usize) -> Result<u64, Halt> {
        if let Some(cap) = self.cfg.cap {
            if self.stats.expansions >= cap {
                return Err(Halt);
            }
        }
        self.stats.expansions += 1;
        let d = (self.p.tree.depth(var) - self.root_depth + 1) as u64;
        self.stats.depth_sum += d;
        Ok(d)
    }

    fn terminal(&mut self, depth: u64) {
        self.stats.terminal_nodes += 1;
        self.stats.terminal_depth_sum += depth;
    }

    fn cache_key(&self, var: usize) -> Option<u64> {
        let mult = self.radix[var].as_ref()?;
        Some(
            self.p
                .tree
                .context(var)
                .iter()
                .zip(mult)
                .map(|(&u, &m)| self.asg[u] as u64 * m)
                .sum(),
        )
    }

    fn expand_or(&mut self, var: usize, threshold: f64) -> Result<Outcome, Halt> {
        let depth = self.generate(var)?;
        let key = self.cache_key(var);
        if let Some(k) = key {
            if let Some(&v) = self.cache[var].get(&k) {
                self.terminal(depth);
                return Ok(Outcome::Exact(v));
            }
        }

        let (model, h) = (&self.p.model, &self.p.heuristic);
        let mut cands: Vec<(usize, f64, f64, u64)> = (0..model.domain(var))
            .map(|x| {
                self.asg[var] = x;
                let w = h.arc_cost(model, var, &self.asg);
                let ub = if w == f64::NEG_INFINITY {
                    w
                } else {
                    w + h.below_bound(var, &self.asg)
                };
                (x, w, ub, tiebreak(self.cfg.seed, var, x))
            })
            .collect();
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.3.cmp(&b.3)));

        let mut best = f64::NEG_INFINITY;
        let mut unresolved = f64::NEG_INFINITY;
        for (x, w, ub, _) in cands {
            let d = self.generate(var)?;
            if w == f64::NEG_INFINITY {
                self.stats.pruned_by_determinism += 1;
                self.terminal(d);
                continue;
            }
            let t = threshold.max(best);
            if self.cfg.pruning && ub <= t {
                self.stats.pruned_by_heuristic += 1;
                self.terminal(d);
                unresolved = unresolved.max(ub);
                continue;
            }
            self.asg[var] = x;
            match self.expand_and(var, w, t, d)? {
                Outcome::Exact(v) => best = best.max(v),
                Outcome::FailLow => unresolved = unresolved.max(t),
            }
            if var == self.root {
                self.root_best = self.root_best.max(best);
            }
        }
        self.asg[var] = UNASSIGNED;

        if unresolved > best {
            return Ok(Outcome::FailLow);
        }
        if let Some(k) = key {
            self.cache[var].insert(k, best);
        }
        Ok(Outcome::Exact(best))
    }

    fn expand_and(&mut self, var: usize, w: f64, t: f64, depth: u64) -> Result<Outcome, Halt> {
        let p = self.p;
        let children = p.tree.children(var);
        if children.is_empty() {
            self.stats.leaf_nodes += 1;
            self.terminal(depth);
            return Ok(Outcome::Exact(w));
        }
        let ubs: Vec<f64> = children
            .iter()
            .map(|&c| p.heuristic.or_bound(&p.model, c, &mut self.asg))
            .collect();
        let mut suffix = vec![0.0; ubs.len() + 1];
        for j in (0..ubs.len()).rev() {
            suffix[j] = suffix[j + 1] + ubs[j];
        }
        if self.cfg.pruning && w + suffix[0] <= t {
            self.stats.pruned_by_heuristic += 1;
            self.terminal(depth);
            return Ok(Outcome::FailLow);
        }
        let mut sum = 0.0;
        for (j, &c) in children.iter().enumerate() {
            let child_t = t - w - sum - suffix[j + 1];
            match self.expand_or(c, child_t)? {
                Outcome::FailLow => return Ok(Outcome::FailLow),
                Outcome::Exact(v) if v == f64::NEG_INFINITY => return Ok(Outcome::Exact(v)),
                Outcome::Exact(v) => {
                    // same test a recomputed child would have failed, so a
                    // cache hit never widens the search
                    if self.cfg.pruning && v <= child_t {
                        return Ok(Outcome::FailLow);
                    }
                    sum += v;
                }
            }
        }
        Ok(Outcome::Exact(w + sum))
    }
}

fn run(p: &Problem, handle: &SubproblemHandle, cfg: SearchConfig) -> SearchResult {
    let start = Instant::now();
    let asg = p.context_assignment(handle);
    let mut s = Searcher::new(p, handle.var, asg, cfg);
    let outcome = s.expand_or(handle.var, f64::NEG_INFINITY);
    let mut r = s.stats;
    match outcome {
        Ok(Outcome::Exact(v)) => {
            r.optimum = v;
            r.complete = true;
        }
        Ok(Outcome::FailLow) => unreachable!("root threshold is -inf"),
        Err(Halt) => {
            r.optimum = s.root_best;
            r.complete = false;
        }
    }
    r.elapsed = start.elapsed().as_secs_f64();
    r
}

/// Solves the subproblem below `handle` exactly.
pub fn solve(p: &Problem, handle: &SubproblemHandle, cfg: SearchConfig) -> SearchResult {
    run(p, handle, SearchConfig { cap: None, ..cfg })
}

/// Runs the same traversal as [`solve`], halting after `cap` expansions.
pub fn probe(p: &Problem, handle: &SubproblemHandle, cap: u64, seed: u64) -> SearchResult {
    run(
        p,
        handle,
        SearchConfig {
            cap: Some(cap),
            seed,
            ..Default::default()
        },
    )
}

/// Value the subproblem must exceed for a solution through it to beat
/// `incumbent`: incumbent minus path cost minus the bounds of the open
/// sibling subproblems.
pub fn lower_bound_at(handle: &SubproblemHandle, incumbent: Option<f64>) -> f64 {
    match incumbent {
        Some(v) if v > f64::NEG_INFINITY => v - handle.path_cost - handle.open_bound,
        _ => f64::NEG_INFINITY,
    }
}

/// Greedy heuristic dive: assigns variables in pseudo tree preorder, each to
/// its best heuristic value. Returns the assignment and its log-value, a
/// valid lower bound on the optimum.
pub fn greedy_solution(p: &Problem) -> (Vec<usize>, f64) {
    let n = p.model.var_count();
    let mut asg = vec![UNASSIGNED; n];
    for &v in p.tree.dfs_order() {
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..p.model.domain(v) {
            asg[v] = x;
            let b = p.heuristic.and_bound(&p.model, v, &asg);
            if b > best.1 {
                best = (x, b);
            }
        }
        asg[v] = best.0;
    }
    let value = p.model.log_value(&asg);
    (asg, value)
}
