//! Mini-bucket elimination MBE(i) compiled along a pseudo tree, used as an
//! admissible upper-bound heuristic for maximisation.
//!
//! Buckets are processed leaf to root. Every original factor sits in the
//! bucket of its deepest scope variable. A bucket is split first-fit (largest
//! scope first) into mini-buckets whose generated message mentions at most
//! `i` variables; each mini-bucket is combined, the bucket variable is maxed
//! out, and the message moves to the bucket of its deepest remaining
//! variable. A single function wider than the bound gets a mini-bucket of its
//! own.
//!
//! For an AND node `<X, x>` the heuristic is the arc cost of `X = x` plus
//! every message produced strictly below `X` that lands in the bucket of `X`
//! or above. The OR-level bound of a subproblem rooted at `X` maximises that
//! over the values of `X`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{Factor, GraphicalModel, UNASSIGNED};
use crate::pseudo_tree::PseudoTree;
use crate::search::SubproblemHandle;

pub const DEFAULT_MEMORY_CAP: u64 = 1 << 30;

#[derive(Debug, Error, PartialEq)]
pub enum HeuristicError {
    #[error("i-bound must be at least 1")]
    InvalidIBound,
    #[error(
        "mini-bucket tables for i = {i_bound} need {required_bytes} bytes, above the cap of {cap_bytes} bytes{}",
        match .max_feasible { Some(i) => format!("; largest i-bound that fits is {i}"), None => "; no i-bound fits".to_string() }
    )]
    MemoryCap {
        i_bound: usize,
        required_bytes: u64,
        cap_bytes: u64,
        max_feasible: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FnRef {
    Original(usize),
    Message(usize),
}

/// One mini-bucket of a bucket, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBucket {
    /// Number of functions combined.
    pub functions: usize,
    /// Union of the function scopes, bucket variable included.
    pub scope: Vec<usize>,
    /// Id of the message generated from this mini-bucket.
    pub message: usize,
}

#[derive(Debug, Clone)]
struct Message {
    origin: usize,
    destination: Option<usize>,
    table: Factor,
}

#[derive(Debug, Clone)]
pub struct MiniBucketHeuristic {
    i_bound: usize,
    /// Original factors per bucket variable.
    own: Vec<Vec<usize>>,
    messages: Vec<Message>,
    /// Messages entering `h(<X, x>)` for each variable `X`.
    below: Vec<Vec<usize>>,
    mini_buckets: Vec<Vec<MiniBucket>>,
    global_bound: f64,
}

struct Layout {
    own: Vec<Vec<usize>>,
    minis: Vec<Vec<(Vec<FnRef>, Vec<usize>)>>,
    msg_scopes: Vec<(usize, Vec<usize>, Option<usize>)>,
}

fn scope_bytes(domains: &[usize], scope: &[usize]) -> u64 {
    scope
        .iter()
        .fold(8u64, |acc, &v| acc.saturating_mul(domains[v] as u64))
}

fn layout(model: &GraphicalModel, tree: &PseudoTree, i_bound: usize) -> Layout {
    let n = model.var_count();
    let mut own = vec![Vec::new(); n];
    for (fi, f) in model.factors().iter().enumerate() {
        let bucket = f
            .scope()
            .iter()
            .copied()
            .max_by_key(|&v| tree.depth(v))
            .unwrap_or(tree.root());
        own[bucket].push(fi);
    }
    let mut incoming: Vec<Vec<FnRef>> = own
        .iter()
        .map(|fs| fs.iter().map(|&f| FnRef::Original(f)).collect())
        .collect();
    let mut msg_scopes: Vec<(usize, Vec<usize>, Option<usize>)> = Vec::new();
    let mut minis = vec![Vec::new(); n];

    for &x in tree.dfs_order().iter().rev() {
        let scope_of = |r: &FnRef, msgs: &[(usize, Vec<usize>, Option<usize>)]| -> Vec<usize> {
            match *r {
                FnRef::Original(f) => model.factors()[f].scope().to_vec(),
                FnRef::Message(m) => msgs[m].1.clone(),
            }
        };
        let mut fns: Vec<(FnRef, Vec<usize>)> = std::mem::take(&mut incoming[x])
            .into_iter()
            .map(|r| {
                let s = scope_of(&r, &msg_scopes);
                (r, s)
            })
            .collect();
        // stable: equal sizes keep originals-then-messages arrival order
        fns.sort_by_key(|f| std::cmp::Reverse(f.1.len()));

        let mut parts: Vec<(Vec<FnRef>, BTreeSet<usize>)> = Vec::new();
        for (r, s) in fns {
            let slot = parts.iter().position(|(_, union)| {
                let mut u = union.clone();
                u.extend(s.iter().copied());
                u.remove(&x);
                u.len() <= i_bound
            });
            match slot {
                Some(k) => {
                    parts[k].0.push(r);
                    parts[k].1.extend(s);
                }
                None => parts.push((vec![r], s.into_iter().collect())),
            }
        }
        for (refs, union) in parts {
            let mut out: Vec<usize> = union.iter().copied().filter(|&v| v != x).collect();
            out.sort_by_key(|&v| tree.depth(v));
            let dest = out.last().copied();
            let id = msg_scopes.len();
            msg_scopes.push((x, out, dest));
            if let Some(d) = dest {
                incoming[d].push(FnRef::Message(id));
            }
            let mut full: Vec<usize> = union.into_iter().collect();
            full.sort_by_key(|&v| tree.depth(v));
            minis[x].push((refs, full));
        }
    }
    Layout {
        own,
        minis,
        msg_scopes,
    }
}

fn required_bytes(model: &GraphicalModel, layout: &Layout) -> u64 {
    layout
        .msg_scopes
        .iter()
        .fold(0u64, |acc, (_, s, _)| acc.saturating_add(scope_bytes(model.domains(), s)))
}

impl MiniBucketHeuristic {
    /// Compiles MBE(i) with the default 1 GiB table budget.
    pub fn compile(model: &GraphicalModel, tree: &PseudoTree, i_bound: usize) -> Result<Self, HeuristicError> {
        Self::compile_with_cap(model, tree, i_bound, DEFAULT_MEMORY_CAP)
    }

    pub fn compile_with_cap(
        model: &GraphicalModel,
        tree: &PseudoTree,
        i_bound: usize,
        cap_bytes: u64,
    ) -> Result<Self, HeuristicError> {
        if i_bound == 0 {
            return Err(HeuristicError::InvalidIBound);
        }
        let lay = layout(model, tree, i_bound);
        let required = required_bytes(model, &lay);
        if required > cap_bytes {
            let max_feasible =
                (1..i_bound).rev().find(|&i| required_bytes(model, &layout(model, tree, i)) <= cap_bytes);
            return Err(HeuristicError::MemoryCap {
                i_bound,
                required_bytes: required,
                cap_bytes,
                max_feasible,
            });
        }

        let n = model.var_count();
        let mut messages: Vec<Message> = Vec::with_capacity(lay.msg_scopes.len());
        let mut mini_buckets = vec![Vec::new(); n];
        let mut scratch = vec![UNASSIGNED; n];
        let mut next_id = 0;
        // messages were laid out in processing order, so inputs always exist
        for &x in tree.dfs_order().iter().rev() {
            for (refs, full) in &lay.minis[x] {
                let (origin, ref scope, dest) = lay.msg_scopes[next_id];
                debug_assert_eq!(origin, x);
                let table = eliminate_max(model, &messages, x, scope, refs, &mut scratch);
                messages.push(Message {
                    origin,
                    destination: dest,
                    table,
                });
                mini_buckets[x].push(MiniBucket {
                    functions: refs.len(),
                    scope: full.clone(),
                    message: next_id,
                });
                next_id += 1;
            }
        }

        let mut below = vec![Vec::new(); n];
        for (id, m) in messages.iter().enumerate() {
            let mut cur = tree.parent(m.origin);
            while let Some(y) = cur {
                below[y].push(id);
                if Some(y) == m.destination {
                    break;
                }
                cur = tree.parent(y);
            }
        }

        let mut h = MiniBucketHeuristic {
            i_bound,
            own: lay.own,
            messages,
            below,
            mini_buckets,
            global_bound: f64::NAN,
        };
        let mut asg = vec![UNASSIGNED; n];
        h.global_bound = h.or_bound(model, tree.root(), &mut asg);
        Ok(h)
    }

    pub fn i_bound(&self) -> usize {
        self.i_bound
    }

    /// Upper bound on the optimal log-value of the whole model.
    pub fn global_bound(&self) -> f64 {
        self.global_bound
    }

    pub fn mini_buckets(&self, var: usize) -> &[MiniBucket] {
        &self.mini_buckets[var]
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn message_scope(&self, id: usize) -> &[usize] {
        self.messages[id].table.scope()
    }

    pub fn message_table(&self, id: usize) -> &[f64] {
        self.messages[id].table.table()
    }

    /// Original factors whose deepest scope variable is `var`.
    pub fn bucket_factors(&self, var: usize) -> &[usize] {
        &self.own[var]
    }

    /// Sum of the original factors in the bucket of `var`; `var` and its
    /// context must be assigned.
    #[inline]
    pub fn arc_cost(&self, model: &GraphicalModel, var: usize, assignment: &[usize]) -> f64 {
        let fs = model.factors();
        self.own[var].iter().fold(0.0, |acc, &f| acc + fs[f].value(assignment))
    }

    /// `h(<var, x>)` for the value currently in `assignment[var]`.
    #[inline]
    pub fn below_bound(&self, var: usize, assignment: &[usize]) -> f64 {
        self.below[var]
            .iter()
            .fold(0.0, |acc, &m| acc + self.messages[m].table.value(assignment))
    }

    /// Arc cost plus heuristic for `var = assignment[var]`.
    #[inline]
    pub fn and_bound(&self, model: &GraphicalModel, var: usize, assignment: &[usize]) -> f64 {
        let w = self.arc_cost(model, var, assignment);
        if w == f64::NEG_INFINITY {
            return w;
        }
        w + self.below_bound(var, assignment)
    }

    /// Bound on the subproblem rooted at `var`, maximised over its values.
    /// The context of `var` must be assigned; `var` itself is left unassigned
    /// on return.
    pub fn or_bound(&self, model: &GraphicalModel, var: usize, assignment: &mut [usize]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for x in 0..model.domain(var) {
            assignment[var] = x;
            best = best.max(self.and_bound(model, var, assignment));
        }
        assignment[var] = UNASSIGNED;
        best
    }

    /// `u(n)` for a subproblem handle.
    ///
    /// Panics if the handle's context does not match the pseudo tree.
    pub fn evaluate(&self, model: &GraphicalModel, tree: &PseudoTree, handle: &SubproblemHandle) -> f64 {
        let ctx = tree.context(handle.var);
        assert_eq!(
            ctx.len(),
            handle.context.len(),
            "context of variable {} is not fully instantiated",
            handle.var
        );
        let mut asg = vec![UNASSIGNED; model.var_count()];
        for (&v, &val) in ctx.iter().zip(&handle.context) {
            assert!(val < model.domain(v), "context value out of range for variable {v}");
            asg[v] = val;
        }
        self.or_bound(model, handle.var, &mut asg)
    }
}

fn eliminate_max(
    model: &GraphicalModel,
    messages: &[Message],
    x: usize,
    scope: &[usize],
    refs: &[FnRef],
    scratch: &mut [usize],
) -> Factor {
    let doms: Vec<usize> = scope.iter().map(|&v| model.domain(v)).collect();
    let size: usize = doms.iter().product();
    let mut table = Vec::with_capacity(size);
    let mut digits = vec![0usize; scope.len()];
    for _ in 0..size {
        for (&v, &d) in scope.iter().zip(&digits) {
            scratch[v] = d;
        }
        let mut best = f64::NEG_INFINITY;
        for xv in 0..model.domain(x) {
            scratch[x] = xv;
            let mut s = 0.0;
            for r in refs {
                s += match *r {
                    FnRef::Original(f) => model.factors()[f].value(scratch),
                    FnRef::Message(m) => messages[m].table.value(scratch),
                };
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
            best = best.max(s);
        }
        table.push(best);
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < doms[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    for &v in scope {
        scratch[v] = UNASSIGNED;
    }
    scratch[x] = UNASSIGNED;
    Factor::new(scope.to_vec(), &doms, table)
}
