//! Parallelization frontiers: sets of conditioned subproblems that together
//! cover the whole search space, plus the conditioning trace needed to
//! combine their optima into the global one.
//!
//! Entries are OR-level subproblems. Splitting an entry assigns its root
//! variable and yields one entry per consistent value and pseudo tree child.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{assemble, csv_fields, csv_header, extract_dynamic, extract_static, FeatureError, FeatureVector};
use crate::problem::Problem;
use crate::regression::{RegressionError, RegressionModel};
use crate::search::{greedy_solution, lower_bound_at, probe, solve, SearchConfig, SearchResult, SubproblemHandle, PROBE_CAP};

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("variable {var} cannot be split: {reason}")]
    Unsplittable { var: usize, reason: &'static str },
    #[error("no complete result for entries {0:?}")]
    Incomplete(Vec<usize>),
    #[error("expected {expected} results, got {found}")]
    ResultCount { expected: usize, found: usize },
    #[error("estimator: {0}")]
    Estimator(#[from] RegressionError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Source of subproblem complexity estimates `N̂`.
pub trait Estimator {
    /// Whether [`Estimator::estimate`] reads the feature vector.
    fn needs_features(&self) -> bool;

    fn estimate(
        &self,
        p: &Problem,
        handle: &SubproblemHandle,
        features: Option<&FeatureVector>,
    ) -> Result<f64, RegressionError>;
}

impl Estimator for RegressionModel {
    fn needs_features(&self) -> bool {
        true
    }

    fn estimate(
        &self,
        _: &Problem,
        _: &SubproblemHandle,
        features: Option<&FeatureVector>,
    ) -> Result<f64, RegressionError> {
        self.estimate_n(features.map_or(&[][..], |f| &f.values))
    }
}

/// Constant estimate; with FIFO ties this grows the frontier breadth-first.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformEstimator;

impl Estimator for UniformEstimator {
    fn needs_features(&self) -> bool {
        false
    }

    fn estimate(&self, _: &Problem, _: &SubproblemHandle, _: Option<&FeatureVector>) -> Result<f64, RegressionError> {
        Ok(1.0)
    }
}

/// Exact node count, obtained by solving the subproblem.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeCountOracle {
    pub config: SearchConfig,
}

impl Estimator for NodeCountOracle {
    fn needs_features(&self) -> bool {
        false
    }

    fn estimate(
        &self,
        p: &Problem,
        handle: &SubproblemHandle,
        _: Option<&FeatureVector>,
    ) -> Result<f64, RegressionError> {
        Ok(solve(p, handle, self.config).expansions as f64)
    }
}

/// One consistent value of a split variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBranch {
    pub value: usize,
    pub arc_cost: f64,
    /// One handle per pseudo tree child, in child order.
    pub children: Vec<SubproblemHandle>,
}

/// Conditions `handle`'s variable on each of its consistent values.
/// Pseudo tree leaves and variables without a consistent value are
/// unsplittable.
pub fn split(p: &Problem, handle: &SubproblemHandle, incumbent: Option<f64>) -> Result<Vec<SplitBranch>, FrontierError> {
    let var = handle.var;
    let kids = p.tree.children(var);
    if kids.is_empty() {
        return Err(FrontierError::Unsplittable {
            var,
            reason: "pseudo tree leaf",
        });
    }
    let (model, h) = (&p.model, &p.heuristic);
    let mut asg = p.context_assignment(handle);
    let mut out = Vec::new();
    for x in 0..model.domain(var) {
        asg[var] = x;
        let w = h.arc_cost(model, var, &asg);
        if w == f64::NEG_INFINITY {
            continue;
        }
        let ubs: Vec<f64> = kids.iter().map(|&c| h.or_bound(model, c, &mut asg)).collect();
        let children = kids
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let ctx = p.tree.context(c).iter().map(|&u| asg[u]).collect();
                let mut ch = SubproblemHandle::new(c, ctx, p.tree.depth(c));
                ch.path_cost = handle.path_cost + w;
                ch.open_bound = handle.open_bound
                    + ubs.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, u)| u).sum::<f64>();
                ch.upper = ubs[j];
                ch.lower = lower_bound_at(&ch, incumbent);
                ch
            })
            .collect();
        out.push(SplitBranch {
            value: x,
            arc_cost: w,
            children,
        });
    }
    if out.is_empty() {
        return Err(FrontierError::Unsplittable {
            var,
            reason: "no consistent value",
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceNode {
    /// Frontier entry, by index.
    Open(usize),
    Split { var: usize, branches: Vec<TraceBranch> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBranch {
    pub value: usize,
    pub arc_cost: f64,
    /// Trace node ids, one per pseudo tree child.
    pub children: Vec<usize>,
}

/// The conditioning search space explored by the master; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditioningTrace {
    pub nodes: Vec<TraceNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierEntry {
    pub handle: SubproblemHandle,
    pub estimate: f64,
    pub features: Option<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    /// In insertion order.
    pub entries: Vec<FrontierEntry>,
    pub trace: ConditioningTrace,
    /// Best solution value known to the master.
    pub incumbent: f64,
    /// Master-side seconds spent building the frontier.
    pub overhead: f64,
    /// True when fewer than the requested entries could be produced.
    pub exhausted: bool,
}

impl Frontier {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierOptions {
    /// Seed for probes.
    pub seed: u64,
    /// Extract features for every entry even if the estimator ignores them.
    pub features: bool,
    pub instance: String,
    pub class: String,
}

impl Default for FrontierOptions {
    fn default() -> Self {
        FrontierOptions {
            seed: 0,
            features: true,
            instance: String::new(),
            class: String::new(),
        }
    }
}

struct Pending {
    node: usize,
    entry: FrontierEntry,
    unsplittable: bool,
}

struct Builder<'a> {
    p: &'a Problem,
    est: &'a dyn Estimator,
    opts: &'a FrontierOptions,
    incumbent: f64,
    nodes: Vec<TraceNode>,
    /// Open entries in insertion order.
    open: Vec<Pending>,
}

impl<'a> Builder<'a> {
    fn new(p: &'a Problem, est: &'a dyn Estimator, opts: &'a FrontierOptions) -> Result<Self, FrontierError> {
        let features = opts.features || est.needs_features();
        let mut incumbent = greedy_solution(p).1;
        if features {
            incumbent = incumbent.max(probe(p, &p.root_handle(), PROBE_CAP, opts.seed).optimum);
        }
        let mut b = Builder {
            p,
            est,
            opts,
            incumbent,
            nodes: Vec::new(),
            open: Vec::new(),
        };
        let mut root = p.root_handle();
        root.lower = lower_bound_at(&root, b.incumbent_opt());
        b.insert(root)?;
        Ok(b)
    }

    fn incumbent_opt(&self) -> Option<f64> {
        Some(self.incumbent).filter(|v| *v > f64::NEG_INFINITY)
    }

    fn insert(&mut self, handle: SubproblemHandle) -> Result<usize, FrontierError> {
        let features = if self.opts.features || self.est.needs_features() {
            let pr = probe(self.p, &handle, PROBE_CAP, self.opts.seed);
            let s = extract_static(self.p, &handle);
            let d = extract_dynamic(&pr, &handle);
            Some(assemble(&s, &d, &self.opts.instance, &self.opts.class)?)
        } else {
            None
        };
        let estimate = self.est.estimate(self.p, &handle, features.as_ref())?;
        let node = self.nodes.len();
        self.nodes.push(TraceNode::Open(usize::MAX));
        self.open.push(Pending {
            node,
            entry: FrontierEntry {
                handle,
                estimate,
                features,
            },
            unsplittable: false,
        });
        Ok(node)
    }

    /// Splits the open entry at `idx`; returns false if it is unsplittable.
    fn split_at(&mut self, idx: usize) -> Result<bool, FrontierError> {
        let branches = match split(self.p, &self.open[idx].entry.handle, self.incumbent_opt()) {
            Ok(b) => b,
            Err(FrontierError::Unsplittable { .. }) => {
                self.open[idx].unsplittable = true;
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let pending = self.open.remove(idx);
        let mut trace = Vec::with_capacity(branches.len());
        for br in branches {
            let mut ids = Vec::with_capacity(br.children.len());
            for ch in br.children {
                ids.push(self.insert(ch)?);
            }
            trace.push(TraceBranch {
                value: br.value,
                arc_cost: br.arc_cost,
                children: ids,
            });
        }
        self.nodes[pending.node] = TraceNode::Split {
            var: pending.entry.handle.var,
            branches: trace,
        };
        Ok(true)
    }

    fn finish(mut self, start: Instant, exhausted: bool) -> Frontier {
        let mut entries = Vec::with_capacity(self.open.len());
        for (i, pend) in self.open.into_iter().enumerate() {
            self.nodes[pend.node] = TraceNode::Open(i);
            entries.push(pend.entry);
        }
        Frontier {
            entries,
            trace: ConditioningTrace { nodes: self.nodes },
            incumbent: self.incumbent,
            overhead: start.elapsed().as_secs_f64(),
            exhausted,
        }
    }
}

/// Splits every entry breadth-first until each sits at pseudo tree depth `d`
/// or cannot be split.
pub fn fixed_depth_frontier(
    p: &Problem,
    d: usize,
    est: &dyn Estimator,
    opts: &FrontierOptions,
) -> Result<Frontier, FrontierError> {
    let start = Instant::now();
    let mut b = Builder::new(p, est, opts)?;
    let mut idx = 0;
    while idx < b.open.len() {
        if b.open[idx].entry.handle.depth < d && b.split_at(idx)? {
            // children were appended; the removed slot now holds the next entry
            continue;
        }
        idx += 1;
    }
    Ok(b.finish(start, false))
}

/// Repeatedly splits the open entry with the largest estimate (earliest
/// inserted on ties) until there are at least `count` entries or nothing is
/// splittable.
pub fn build_frontier(
    p: &Problem,
    est: &dyn Estimator,
    count: usize,
    opts: &FrontierOptions,
) -> Result<Frontier, FrontierError> {
    assert!(count >= 1, "frontier size must be at least 1");
    let start = Instant::now();
    let mut b = Builder::new(p, est, opts)?;
    let mut exhausted = false;
    while b.open.len() < count {
        let pick = b
            .open
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.unsplittable)
            .fold(None::<(usize, f64)>, |acc, (i, e)| match acc {
                Some((_, v)) if e.entry.estimate <= v => acc,
                _ => Some((i, e.entry.estimate)),
            });
        match pick {
            Some((i, _)) => {
                b.split_at(i)?;
            }
            None => {
                exhausted = true;
                break;
            }
        }
    }
    Ok(b.finish(start, exhausted))
}

/// Combines per-entry optima through the conditioning trace: AND levels add
/// arc costs and child values, OR levels take the best value.
pub fn recombine(frontier: &Frontier, optima: &[Option<f64>]) -> Result<f64, FrontierError> {
    if optima.len() != frontier.len() {
        return Err(FrontierError::ResultCount {
            expected: frontier.len(),
            found: optima.len(),
        });
    }
    let missing: Vec<usize> = (0..optima.len()).filter(|&i| optima[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(FrontierError::Incomplete(missing));
    }
    let nodes = &frontier.trace.nodes;
    // children always have larger ids than their parent
    let mut value = vec![0.0; nodes.len()];
    for id in (0..nodes.len()).rev() {
        value[id] = match &nodes[id] {
            TraceNode::Open(e) => optima[*e].unwrap(),
            TraceNode::Split { branches, .. } => branches
                .iter()
                .map(|b| b.arc_cost + b.children.iter().map(|&c| value[c]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
        };
    }
    Ok(value[0])
}

/// [`recombine`] over search results; incomplete results count as missing.
pub fn recombine_results(frontier: &Frontier, results: &[Option<SearchResult>]) -> Result<f64, FrontierError> {
    let optima: Vec<Option<f64>> = results
        .iter()
        .map(|r| r.as_ref().filter(|r| r.complete).map(|r| r.optimum))
        .collect();
    recombine(frontier, &optima)
}

pub fn manifest_header() -> Vec<String> {
    let mut h: Vec<String> = ["entry", "root", "context", "path_cost", "L", "U", "estimate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(csv_header());
    h
}

/// One record per entry. The feature columns follow the sample CSV layout,
/// so a manifest also reads as an unlabelled sample file.
pub fn write_manifest<W: Write>(out: W, frontier: &Frontier) -> Result<(), FrontierError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(manifest_header()).map_err(FeatureError::from)?;
    let blank = vec![String::new(); manifest_header().len() - 7];
    for (i, e) in frontier.entries.iter().enumerate() {
        let h = &e.handle;
        let ctx: Vec<String> = h.context.iter().map(|v| v.to_string()).collect();
        let mut row = vec![
            i.to_string(),
            h.var.to_string(),
            ctx.join(" "),
            h.path_cost.to_string(),
            h.lower.to_string(),
            h.upper.to_string(),
            e.estimate.to_string(),
        ];
        match &e.features {
            Some(f) => row.extend(csv_fields(f)),
            None => row.extend(blank.iter().cloned()),
        }
        w.write_record(row).map_err(FeatureError::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Solves a random subset of at most `max` entries and labels their feature
/// vectors with the measured `ln N`. Entries without features are skipped.
pub fn label_samples(p: &Problem, frontier: &Frontier, max: usize, seed: u64) -> Vec<FeatureVector> {
    let with: Vec<usize> = (0..frontier.len()).filter(|&i| frontier.entries[i].features.is_some()).collect();
    let mut chosen: Vec<usize> = if with.len() > max {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, with.len(), max).into_iter().map(|k| with[k]).collect()
    } else {
        with
    };
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| {
            let e = &frontier.entries[i];
            let r = solve(p, &e.handle, SearchConfig::default());
            let mut fv = e.features.clone().unwrap();
            fv.log_n = Some((r.expansions as f64).ln());
            fv
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GraphicalModel;
    use crate::problem::ProblemOptions;

    fn ln(v: &[f64]) -> Vec<f64> {
        v.iter().map(|p| p.ln()).collect()
    }

    /// A root, B below A, C and E below B; D below C and F below E.
    fn six_var() -> Problem {
        let m = GraphicalModel::new(
            vec![2; 6],
            vec![
                (vec![0, 1], ln(&[0.3, 0.7, 0.6, 0.4])),
                (vec![1, 2], ln(&[0.2, 0.8, 0.5, 0.5])),
                (vec![0, 2], ln(&[0.9, 0.1, 0.4, 0.6])),
                (vec![2, 3], ln(&[0.5, 0.5, 0.3, 0.7])),
                (vec![1, 3], ln(&[0.6, 0.4, 0.1, 0.9])),
                (vec![1, 4], ln(&[0.7, 0.3, 0.2, 0.8])),
                (vec![0, 4], ln(&[0.5, 0.5, 0.5, 0.5])),
                (vec![4, 5], ln(&[0.9, 0.1, 0.3, 0.7])),
                (vec![1, 5], ln(&[0.4, 0.6, 0.8, 0.2])),
            ],
        )
        .unwrap();
        let p = Problem::with_ordering(m, vec![0, 1, 2, 3, 4, 5], ProblemOptions::default()).unwrap();
        assert_eq!(p.tree.children(1), &[2, 4]);
        p
    }

    fn opts() -> FrontierOptions {
        FrontierOptions {
            features: false,
            ..Default::default()
        }
    }

    fn exact(p: &Problem, f: &Frontier) -> f64 {
        let optima: Vec<Option<f64>> = f
            .entries
            .iter()
            .map(|e| Some(solve(p, &e.handle, SearchConfig::default()).optimum))
            .collect();
        recombine(f, &optima).unwrap()
    }

    #[test]
    fn depth_two_gives_eight() {
        let p = six_var();
        let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &opts()).unwrap();
        assert_eq!(f.len(), 8);
        assert!(f.entries.iter().all(|e| e.handle.depth == 2));
        let seq = solve(&p, &p.root_handle(), SearchConfig::default()).optimum;
        assert!((exact(&p, &f) - seq).abs() < 1e-12);
    }

    #[test]
    fn depth_zero_is_root() {
        let p = six_var();
        let f = fixed_depth_frontier(&p, 0, &UniformEstimator, &opts()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.trace.nodes, vec![TraceNode::Open(0)]);
        assert_eq!(recombine(&f, &[Some(-1.5)]).unwrap(), -1.5);
    }

    #[test]
    fn split_counts() {
        let m = GraphicalModel::new(
            vec![3, 2],
            vec![(vec![0], ln(&[0.2, 0.3, 0.5])), (vec![0, 1], ln(&[0.5; 6]))],
        )
        .unwrap();
        let p = Problem::with_ordering(m, vec![0, 1], ProblemOptions::default()).unwrap();
        let b = split(&p, &p.root_handle(), None).unwrap();
        assert_eq!(b.iter().map(|b| b.children.len()).sum::<usize>(), 3);

        let m = GraphicalModel::new(
            vec![3, 2],
            vec![(vec![0], vec![0.2f64.ln(), f64::NEG_INFINITY, 0.5f64.ln()]), (vec![0, 1], ln(&[0.5; 6]))],
        )
        .unwrap();
        let p = Problem::with_ordering(m, vec![0, 1], ProblemOptions::default()).unwrap();
        let b = split(&p, &p.root_handle(), None).unwrap();
        assert_eq!(b.iter().map(|b| b.value).collect::<Vec<_>>(), vec![0, 2]);
        let leaf = SubproblemHandle::new(1, vec![0], 1);
        assert!(matches!(split(&p, &leaf, None), Err(FrontierError::Unsplittable { var: 1, .. })));
    }

    #[test]
    fn count_one_keeps_root() {
        let p = six_var();
        let f = build_frontier(&p, &NodeCountOracle::default(), 1, &opts()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.entries[0].handle, {
            let mut r = p.root_handle();
            r.lower = f.entries[0].handle.lower;
            r
        });
    }

    #[test]
    fn uniform_matches_breadth_first() {
        let p = six_var();
        for d in 0..=3 {
            let fixed = fixed_depth_frontier(&p, d, &UniformEstimator, &opts()).unwrap();
            let grown = build_frontier(&p, &UniformEstimator, fixed.len(), &opts()).unwrap();
            let a: Vec<_> = fixed.entries.iter().map(|e| e.handle.clone()).collect();
            let b: Vec<_> = grown.entries.iter().map(|e| e.handle.clone()).collect();
            assert_eq!(a, b, "depth {d}");
        }
    }

    #[test]
    fn exhausted_when_too_large() {
        let p = six_var();
        let f = build_frontier(&p, &UniformEstimator, 10_000, &opts()).unwrap();
        assert!(f.exhausted);
        assert!(f.entries.iter().all(|e| p.tree.is_leaf(e.handle.var)));
        let seq = solve(&p, &p.root_handle(), SearchConfig::default()).optimum;
        assert!((exact(&p, &f) - seq).abs() < 1e-12);
    }

    #[test]
    fn recombine_reports_missing() {
        let p = six_var();
        let f = fixed_depth_frontier(&p, 1, &UniformEstimator, &opts()).unwrap();
        let mut optima = vec![Some(0.0); f.len()];
        optima[1] = None;
        assert!(matches!(recombine(&f, &optima), Err(FrontierError::Incomplete(v)) if v == vec![1]));
    }

    #[test]
    fn manifest_rows() {
        let p = six_var();
        let o = FrontierOptions {
            instance: "six_var".into(),
            class: "toy".into(),
            ..Default::default()
        };
        let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &o).unwrap();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        let rows = crate::features::read_samples(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.log_n.is_none() && r.instance == "six_var"));
        for r in &rows {
            assert_eq!(r.f(26), r.f(25) - r.f(24));
        }
    }

    #[test]
    fn labelled_samples_capped() {
        let p = six_var();
        let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &FrontierOptions::default()).unwrap();
        assert_eq!(label_samples(&p, &f, 500, 0).len(), 8);
        let few = label_samples(&p, &f, 3, 0);
        assert_eq!(few.len(), 3);
        assert!(few.iter().all(|s| s.log_n.unwrap() >= 0.0));
    }
}
