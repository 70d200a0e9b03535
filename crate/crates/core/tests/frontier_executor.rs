mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use aolb_core::executor::{default_solver, execute, simulate_schedule, speedup_curve};
use aolb_core::frontier::{
    build_frontier, fixed_depth_frontier, recombine, split, write_manifest, Estimator, Frontier, FrontierOptions,
    NodeCountOracle, UniformEstimator,
};
use aolb_core::regression::RegressionError;
use aolb_core::search::{solve, SearchConfig, SubproblemHandle};
use aolb_core::{FeatureVector, GraphicalModel, Problem};
use common::*;
use proptest::prelude::*;

/// Estimates from a hash of the handle: an arbitrary but fixed selection order.
struct Scrambled(u64);

impl Estimator for Scrambled {
    fn needs_features(&self) -> bool {
        false
    }

    fn estimate(&self, _: &Problem, h: &SubproblemHandle, _: Option<&FeatureVector>) -> Result<f64, RegressionError> {
        let mut z = self.0 ^ (h.var as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for &c in &h.context {
            z = (z ^ c as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        }
        Ok((z >> 11) as f64)
    }
}

fn quiet() -> FrontierOptions {
    FrontierOptions {
        features: false,
        ..Default::default()
    }
}

fn solve_all(p: &Problem, f: &Frontier) -> Vec<u64> {
    f.entries
        .iter()
        .map(|e| solve(p, &e.handle, SearchConfig::default()).expansions)
        .collect()
}

fn exact_optima(p: &Problem, f: &Frontier) -> Vec<Option<f64>> {
    f.entries
        .iter()
        .map(|e| Some(solve(p, &e.handle, SearchConfig::default()).optimum))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_frontier_recombines_to_sequential(idx in 0usize..200, policy in 0u8..4, size in 1usize..40, salt in any::<u64>()) {
        let m = corpus(1, idx as u64 + 1000).remove(0);
        let p = problem(m, 2, 0);
        let seq = solve(&p, &p.root_handle(), SearchConfig::default()).optimum;
        let f = match policy {
            0 => fixed_depth_frontier(&p, size % (p.tree.height() + 2), &UniformEstimator, &quiet()),
            1 => build_frontier(&p, &UniformEstimator, size, &quiet()),
            2 => build_frontier(&p, &NodeCountOracle::default(), size, &quiet()),
            _ => build_frontier(&p, &Scrambled(salt), size, &quiet()),
        }
        .unwrap();
        prop_assert!(f.len() >= size.min(f.len()));
        if policy != 0 && !f.exhausted {
            prop_assert!(f.len() >= size);
        }
        let got = recombine(&f, &exact_optima(&p, &f)).unwrap();
        prop_assert!(same(got, seq, 1e-9), "{got} vs {seq}");
    }

    #[test]
    fn split_children_extend_the_context(idx in 0usize..100) {
        let m = corpus(1, idx as u64 + 5000).remove(0);
        let p = problem(m, 2, 0);
        let root = p.root_handle();
        if let Ok(branches) = split(&p, &root, None) {
            for b in &branches {
                prop_assert_eq!(b.children.len(), p.tree.children(root.var).len());
                for c in &b.children {
                    prop_assert_eq!(c.context.len(), p.tree.width(c.var));
                    prop_assert_eq!(c.path_cost, b.arc_cost);
                    prop_assert!(c.upper >= solve(&p, c, SearchConfig::default()).optimum - 1e-9);
                }
            }
        }
    }
}

#[test]
fn oracle_frontier_shrinks_the_largest_job() {
    let mut wins = 0;
    let total = 100;
    for (k, m) in corpus(total, 77).into_iter().enumerate() {
        let p = problem(m, 1, k as u64);
        let mut d = 1;
        let mut fixed = fixed_depth_frontier(&p, d, &UniformEstimator, &quiet()).unwrap();
        while fixed.len() < 4 && d <= p.tree.height() {
            d += 1;
            fixed = fixed_depth_frontier(&p, d, &UniformEstimator, &quiet()).unwrap();
        }
        let oracle = build_frontier(&p, &NodeCountOracle::default(), fixed.len(), &quiet()).unwrap();
        let max_fixed = solve_all(&p, &fixed).into_iter().max().unwrap();
        let max_oracle = solve_all(&p, &oracle).into_iter().max().unwrap();
        if max_oracle <= max_fixed {
            wins += 1;
        }
    }
    assert!(wins * 10 >= total * 7, "oracle at most as large on {wins}/{total}");
}

#[test]
fn single_worker_matches_sequential() {
    let p = six_var_problem();
    let seq = solve(&p, &p.root_handle(), SearchConfig::default()).optimum;
    let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &quiet()).unwrap();
    let r = execute(&p, &f, 1, "fixed:2", &default_solver).unwrap();
    assert_eq!(r.entries.len(), 8);
    assert!(r.entries.iter().all(|e| e.worker == 0 && e.attempts == 1));
    assert!(same(r.optimum.unwrap(), seq, 1e-12));
    let c = speedup_curve(&r, &[1]);
    assert!(c.points[0].1 <= 1.0 + 1e-12);
}

#[test]
fn many_workers_match_sequential() {
    for (k, m) in corpus(25, 303).into_iter().enumerate() {
        let p = problem(m, 2, 0);
        let seq = solve(&p, &p.root_handle(), SearchConfig::default()).optimum;
        let f = build_frontier(&p, &UniformEstimator, 6, &quiet()).unwrap();
        for w in [1, 2, 4] {
            let r = execute(&p, &f, w, "uniform", &default_solver).unwrap();
            assert!(same(r.optimum.unwrap(), seq, 1e-9), "model {k}, {w} workers");
            assert_eq!(r.entries.len(), f.len());
            assert!(r.entries.iter().map(|e| e.expansions).sum::<u64>() <= r.total_nodes);
        }
    }
}

#[test]
fn symmetric_entries_have_equal_work() {
    // A on top of three identical uniform chains
    let mut factors = vec![(vec![0], ln(&[0.5, 0.5]))];
    for c in 0..3 {
        let b = 1 + 2 * c;
        factors.push((vec![0, b], ln(&[0.25; 4])));
        factors.push((vec![b, b + 1], ln(&[0.25; 4])));
    }
    let m = GraphicalModel::new(vec![2; 7], factors).unwrap();
    let p = Problem::with_ordering(m, vec![0, 1, 3, 5, 2, 4, 6], Default::default()).unwrap();
    let f = fixed_depth_frontier(&p, 1, &UniformEstimator, &quiet()).unwrap();
    assert_eq!(f.len(), 6);
    let r = execute(&p, &f, 3, "fixed:1", &default_solver).unwrap();
    assert_eq!(r.nodes.std, 0.0);
    assert!(r.runtime.max - r.runtime.min < 0.05);
}

#[test]
fn failed_entry_retried_once() {
    let p = six_var_problem();
    let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &quiet()).unwrap();
    let calls = AtomicUsize::new(0);
    let flaky = |p: &Problem, h: &SubproblemHandle| {
        if h.context == f.entries[3].handle.context && h.var == f.entries[3].handle.var && calls.fetch_add(1, Ordering::SeqCst) == 0 {
            panic!("injected failure");
        }
        default_solver(p, h)
    };
    let r = execute(&p, &f, 2, "fixed:2", &flaky).unwrap();
    assert!(!r.aborted);
    assert_eq!(r.entries[3].attempts, 2);
    assert!(r.optimum.is_some());
}

#[test]
fn repeated_failure_aborts_with_partial_report() {
    let p = six_var_problem();
    let f = fixed_depth_frontier(&p, 2, &UniformEstimator, &quiet()).unwrap();
    let bad = f.entries[0].handle.clone();
    let broken = |p: &Problem, h: &SubproblemHandle| {
        if *h == bad {
            panic!("injected failure");
        }
        default_solver(p, h)
    };
    let r = execute(&p, &f, 1, "fixed:2", &broken).unwrap();
    assert!(r.aborted);
    assert_eq!(r.failed, vec![0]);
    assert_eq!(r.optimum, None);
    assert!(r.entries.len() < f.len());
}

#[test]
fn reruns_are_identical() {
    let m = aolb_core::generate::imbalanced_model(
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4),
        &Default::default(),
    );
    let p = problem(m, 3, 0);
    let opts = FrontierOptions {
        instance: "inst".into(),
        class: "gen".into(),
        ..Default::default()
    };
    let manifest = |f: &Frontier| {
        let mut buf = Vec::new();
        write_manifest(&mut buf, f).unwrap();
        buf
    };
    let a = build_frontier(&p, &UniformEstimator, 12, &opts).unwrap();
    let b = build_frontier(&p, &UniformEstimator, 12, &opts).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
    let ra = execute(&p, &a, 3, "x", &default_solver).unwrap();
    let rb = execute(&p, &b, 2, "x", &default_solver).unwrap();
    let n = |r: &aolb_core::executor::RunReport| r.entries.iter().map(|e| e.expansions).collect::<Vec<_>>();
    assert_eq!(n(&ra), n(&rb));
    assert_eq!(ra.nodes.percentiles.map(f64::to_bits), rb.nodes.percentiles.map(f64::to_bits));
}

proptest! {
    #[test]
    fn makespan_sandwich(costs in prop::collection::vec(0.0f64..100.0, 0..40), w in 1usize..20) {
        let ms = simulate_schedule(&costs, w);
        let max = costs.iter().copied().fold(0.0, f64::max);
        let total: f64 = costs.iter().sum();
        prop_assert!(max <= ms + 1e-9);
        prop_assert!(ms <= max.max(2.0 * total / w as f64) + 1e-9);
        if w >= costs.len() {
            prop_assert_eq!(ms, max);
        }
        if w == 1 {
            prop_assert!((ms - total).abs() <= 1e-9 * (1.0 + total));
        }
    }
}
