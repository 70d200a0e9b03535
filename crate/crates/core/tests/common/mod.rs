#![allow(dead_code)]

use aolb_core::generate::{random_model, RandomSpec};
use aolb_core::model::UNASSIGNED;
use aolb_core::{GraphicalModel, Problem, ProblemOptions, PseudoTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn ln(v: &[f64]) -> Vec<f64> {
    v.iter().map(|p| p.ln()).collect()
}

/// Exhaustive maximum of the log-value over all assignments.
pub fn brute_force(m: &GraphicalModel) -> f64 {
    let n = m.var_count();
    let mut asg = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        let v: f64 = m.factors().iter().map(|f| f.value(&asg)).sum();
        if v > best {
            best = v;
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            asg[i] += 1;
            if asg[i] < m.domain(i) {
                break;
            }
            asg[i] = 0;
            i += 1;
        }
    }
}

/// Factor indices grouped by the deepest pseudo tree variable of their scope.
pub fn buckets(m: &GraphicalModel, t: &PseudoTree) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); m.var_count()];
    for (i, f) in m.factors().iter().enumerate() {
        if let Some(&v) = f.scope().iter().max_by_key(|&&v| t.depth(v)) {
            out[v].push(i);
        }
    }
    out
}

/// Exact value of the subproblem below `var` given the ancestors set in
/// `asg`, by plain recursion over the pseudo tree without bounds or caching.
pub fn exact_below(m: &GraphicalModel, t: &PseudoTree, b: &[Vec<usize>], var: usize, asg: &mut Vec<usize>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for x in 0..m.domain(var) {
        asg[var] = x;
        let mut v: f64 = b[var].iter().map(|&i| m.factors()[i].value(asg)).sum();
        for &c in t.children(var) {
            if v == f64::NEG_INFINITY {
                break;
            }
            v += exact_below(m, t, b, c, asg);
        }
        best = best.max(v);
    }
    asg[var] = UNASSIGNED;
    best
}

pub fn same(a: f64, b: f64, tol: f64) -> bool {
    (a == f64::NEG_INFINITY && b == f64::NEG_INFINITY) || (a - b).abs() <= tol
}

pub fn corpus_spec(rng: &mut impl Rng) -> RandomSpec {
    let vars = rng.random_range(2..=12);
    RandomSpec {
        vars,
        max_domain: 3,
        factors: rng.random_range(vars / 2..=vars + 2),
        max_arity: 3,
        determinism: 0.1,
    }
}

/// `count` seeded random models with at most 12 variables of domain ≤ 3.
pub fn corpus(count: usize, seed: u64) -> Vec<GraphicalModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spec = corpus_spec(&mut rng);
            random_model(&mut rng, &spec)
        })
        .collect()
}

pub fn problem(m: GraphicalModel, i_bound: usize, seed: u64) -> Problem {
    Problem::build(
        m,
        ProblemOptions {
            i_bound,
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Binary A at the root, B below A, C and E below B, D below C, F below E.
pub fn six_var_model() -> GraphicalModel {
    GraphicalModel::new(
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
    .unwrap()
}

pub fn six_var_problem() -> Problem {
    Problem::with_ordering(six_var_model(), vec![0, 1, 2, 3, 4, 5], ProblemOptions::default()).unwrap()
}

pub fn gaussian_rows(rng: &mut impl Rng, m: usize, p: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn noise(rng: &mut impl Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).unwrap().sample(rng)
}

/// Exact subproblem value for every variable and every instantiation of its
/// context, keyed by the context values in `tree.context` order.
pub fn exact_contexts(p: &Problem) -> Vec<std::collections::HashMap<Vec<usize>, f64>> {
    let (m, t) = (&p.model, &p.tree);
    let b = buckets(m, t);
    let n = m.var_count();
    let mut memo: Vec<std::collections::HashMap<Vec<usize>, f64>> = vec![Default::default(); n];

    fn value(
        m: &GraphicalModel,
        t: &PseudoTree,
        b: &[Vec<usize>],
        memo: &mut Vec<std::collections::HashMap<Vec<usize>, f64>>,
        var: usize,
        asg: &mut Vec<usize>,
    ) -> f64 {
        let key: Vec<usize> = t.context(var).iter().map(|&u| asg[u]).collect();
        if let Some(&v) = memo[var].get(&key) {
            return v;
        }
        let mut best = f64::NEG_INFINITY;
        for x in 0..m.domain(var) {
            asg[var] = x;
            let mut v: f64 = b[var].iter().map(|&i| m.factors()[i].value(asg)).sum();
            for &c in t.children(var) {
                if v == f64::NEG_INFINITY {
                    break;
                }
                v += value(m, t, b, memo, c, asg);
            }
            best = best.max(v);
        }
        asg[var] = UNASSIGNED;
        memo[var].insert(key, best);
        best
    }

    let mut asg = vec![UNASSIGNED; n];
    for v in 0..n {
        let ctx = t.context(v).to_vec();
        let mut vals = vec![0usize; ctx.len()];
        loop {
            for (&u, &x) in ctx.iter().zip(&vals) {
                asg[u] = x;
            }
            value(m, t, &b, &mut memo, v, &mut asg);
            let mut i = 0;
            while i < ctx.len() {
                vals[i] += 1;
                if vals[i] < m.domain(ctx[i]) {
                    break;
                }
                vals[i] = 0;
                i += 1;
            }
            if i == ctx.len() {
                break;
            }
        }
        for &u in &ctx {
            asg[u] = UNASSIGNED;
        }
    }
    memo
}
