//! Seeded random graphical models.

use rand::seq::index::sample;
use rand::Rng;

use crate::model::GraphicalModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub vars: usize,
    /// Domains are drawn from `2..=max_domain`.
    pub max_domain: usize,
    pub factors: usize,
    pub max_arity: usize,
    /// Probability that a table entry is zero.
    pub determinism: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            vars: 10,
            max_domain: 3,
            factors: 12,
            max_arity: 3,
            determinism: 0.1,
        }
    }
}

fn table(rng: &mut impl Rng, size: usize, determinism: f64, contrast: f64) -> Vec<f64> {
    (0..size)
        .map(|_| {
            if rng.random_bool(determinism) {
                f64::NEG_INFINITY
            } else {
                // contrast 0 gives uniform tables, larger values sharper ones
                contrast * rng.random_range(-1.0..0.0)
            }
        })
        .collect()
}

fn size(domains: &[usize], scope: &[usize]) -> usize {
    scope.iter().map(|&v| domains[v]).product()
}

/// Unstructured model: every factor draws its scope uniformly. A unary
/// factor on each variable keeps all variables present.
pub fn random_model(rng: &mut impl Rng, spec: &RandomSpec) -> GraphicalModel {
    assert!(spec.vars >= 1 && spec.max_domain >= 2 && spec.max_arity >= 1);
    let domains: Vec<usize> = (0..spec.vars).map(|_| rng.random_range(2..=spec.max_domain)).collect();
    let mut factors = Vec::with_capacity(spec.vars + spec.factors);
    for (v, &d) in domains.iter().enumerate() {
        factors.push((vec![v], table(rng, d, 0.0, 2.0)));
    }
    for _ in 0..spec.factors {
        let arity = rng.random_range(1..=spec.max_arity.min(spec.vars));
        let scope = sample(rng, spec.vars, arity).into_vec();
        let t = table(rng, size(&domains, &scope), spec.determinism, 3.0);
        factors.push((scope, t));
    }
    GraphicalModel::new(domains, factors).expect("generated model is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalancedSpec {
    /// Binary variables gating every factor of the large component; they
    /// head the pseudo tree.
    pub top: usize,
    pub big_component: usize,
    /// Each large-component variable links to predecessors at most this far back.
    pub window: usize,
    /// Probability of each in-window link beyond the chain.
    pub density: f64,
    pub small_components: usize,
    pub small_size: usize,
    /// Log-contrast of factors under the hard gate value.
    pub loose: f64,
    /// Log-contrast of factors under the easy gate value.
    pub tight: f64,
    /// Zero-entry probability under the easy gate value.
    pub determinism: f64,
}

impl Default for ImbalancedSpec {
    fn default() -> Self {
        ImbalancedSpec {
            top: 2,
            big_component: 30,
            window: 5,
            density: 0.4,
            small_components: 3,
            small_size: 4,
            loose: 0.3,
            tight: 4.0,
            determinism: 0.2,
        }
    }
}

/// Model whose subproblems differ widely in size. A few top variables gate
/// the factors of one large component: under one gate value a factor is
/// nearly flat (weak bounds, large search), under the other it is sharp and
/// partly zero. Several small components hang off the same top variables.
pub fn imbalanced_model(rng: &mut impl Rng, spec: &ImbalancedSpec) -> GraphicalModel {
    assert!(spec.top >= 1 && spec.big_component >= 2 && spec.window >= 1);
    let t = spec.top;
    let n = t + spec.big_component + spec.small_components * spec.small_size;
    let domains = vec![2; n];
    let mut factors = Vec::new();

    for a in 0..t {
        factors.push((vec![a], table(rng, 2, 0.0, 1.0)));
        for b in a + 1..t {
            factors.push((vec![a, b], table(rng, 4, 0.0, 1.0)));
        }
    }
    // one hard value per gate keeps the all-hard assignment consistent
    let hard: Vec<usize> = (0..t).map(|_| rng.random_range(0..2)).collect();
    let big: Vec<usize> = (t..t + spec.big_component).collect();
    for (i, &v) in big.iter().enumerate() {
        let mut preds = Vec::new();
        if i > 0 {
            preds.push(big[i - 1]);
        }
        for back in 2..=spec.window.min(i) {
            if rng.random_bool(spec.density) {
                preds.push(big[i - back]);
            }
        }
        for u in preds.into_iter().chain(std::iter::once(v)) {
            let gate = rng.random_range(0..t);
            let pair = if u == v { 2 } else { 4 };
            let mut tab = Vec::with_capacity(2 * pair);
            for g in 0..2 {
                if g == hard[gate] {
                    tab.extend(table(rng, pair, 0.0, spec.loose));
                } else {
                    tab.extend(table(rng, pair, spec.determinism, spec.tight));
                }
            }
            let scope = if u == v { vec![gate, v] } else { vec![gate, u, v] };
            factors.push((scope, tab));
        }
    }
    let mut next = t + spec.big_component;
    for _ in 0..spec.small_components {
        let vars: Vec<usize> = (next..next + spec.small_size).collect();
        next += spec.small_size;
        for (i, &v) in vars.iter().enumerate() {
            let gate = rng.random_range(0..t);
            let mut tab = table(rng, 4, spec.determinism, spec.tight);
            tab[2 * hard[gate]] = tab[2 * hard[gate]].max(-spec.tight);
            factors.push((vec![gate, v], tab));
            if i > 0 {
                factors.push((vec![vars[i - 1], v], table(rng, 4, 0.0, spec.tight)));
            }
        }
    }
    GraphicalModel::new(domains, factors).expect("generated model is valid")
}
