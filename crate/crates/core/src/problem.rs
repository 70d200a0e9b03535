use crate::graph::{min_fill_ordering, PrimalGraph};
use crate::minibucket::{HeuristicError, MiniBucketHeuristic, DEFAULT_MEMORY_CAP};
use crate::model::{GraphicalModel, UNASSIGNED};
use crate::pseudo_tree::{build_pseudo_tree, PseudoTree};
use crate::search::SubproblemHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemOptions {
    pub i_bound: usize,
    /// Seed for min-fill tie-breaking.
    pub seed: u64,
    pub memory_cap: u64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            i_bound: 4,
            seed: 0,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

/// A model together with its pseudo tree and compiled heuristic. Immutable
/// once built and shared read-only between workers.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: GraphicalModel,
    pub graph: PrimalGraph,
    pub ordering: Vec<usize>,
    pub tree: PseudoTree,
    pub heuristic: MiniBucketHeuristic,
}

impl Problem {
    pub fn build(model: GraphicalModel, opts: ProblemOptions) -> Result<Self, HeuristicError> {
        let graph = PrimalGraph::from_model(&model);
        let ordering = min_fill_ordering(&graph, opts.seed);
        Self::with_ordering(model, ordering, opts)
    }

    pub fn with_ordering(
        model: GraphicalModel,
        ordering: Vec<usize>,
        opts: ProblemOptions,
    ) -> Result<Self, HeuristicError> {
        let graph = PrimalGraph::from_model(&model);
        let tree = build_pseudo_tree(&graph, &ordering);
        let heuristic = MiniBucketHeuristic::compile_with_cap(&model, &tree, opts.i_bound, opts.memory_cap)?;
        Ok(Problem {
            model,
            graph,
            ordering,
            tree,
            heuristic,
        })
    }

    pub fn i_bound(&self) -> usize {
        self.heuristic.i_bound()
    }

    /// Handle for the whole problem.
    pub fn root_handle(&self) -> SubproblemHandle {
        let root = self.tree.root();
        let mut h = SubproblemHandle::new(root, Vec::new(), 0);
        h.upper = self.heuristic.global_bound();
        h
    }

    /// Full assignment vector holding only the handle's context.
    pub fn context_assignment(&self, handle: &SubproblemHandle) -> Vec<usize> {
        let ctx = self.tree.context(handle.var);
        assert_eq!(
            ctx.len(),
            handle.context.len(),
            "context of variable {} is not fully instantiated",
            handle.var
        );
        let mut asg = vec![UNASSIGNED; self.model.var_count()];
        for (&v, &x) in ctx.iter().zip(&handle.context) {
            asg[v] = x;
        }
        asg
    }

    /// Mini-bucket bound `u(n)` of a handle.
    pub fn upper_bound(&self, handle: &SubproblemHandle) -> f64 {
        self.heuristic.evaluate(&self.model, &self.tree, handle)
    }
}
