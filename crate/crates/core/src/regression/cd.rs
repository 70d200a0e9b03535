//! Cyclic coordinate descent for penalized least squares on standardized
//! columns and centered targets.
//!
//! Objective: `(1/m)·‖y - Zλ‖² + penalty(λ)` with
//! lasso `α·Σ|λ|`, ridge `α·Σλ²`, elastic `α·Σ|λ| + α·Σλ²`.

use super::Method;

pub(crate) const TOLERANCE: f64 = 1e-7;
pub(crate) const MAX_SWEEPS: usize = 100_000;

fn soft_threshold(c: f64, t: f64) -> f64 {
    if c > t {
        c - t
    } else if c < -t {
        c + t
    } else {
        0.0
    }
}

pub(crate) fn penalty(method: Method, alpha: f64, beta: &[f64]) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    match method {
        Method::Lasso => alpha * l1,
        Method::Ridge => alpha * l2,
        Method::Elastic => alpha * (l1 + l2),
    }
}

pub(crate) fn objective(method: Method, alpha: f64, residual: &[f64], beta: &[f64]) -> f64 {
    let m = residual.len() as f64;
    residual.iter().map(|r| r * r).sum::<f64>() / m + penalty(method, alpha, beta)
}

#[derive(Debug, Clone, Default)]
pub(crate) struct CdTrace {
    pub sweeps: usize,
    /// Objective after each sweep, starting with the initial value.
    pub objective: Vec<f64>,
}

/// Minimizes in place starting from `beta` (warm start). `cols` is
/// column-major; every column has `y.len()` entries.
pub(crate) fn coordinate_descent(
    cols: &[Vec<f64>],
    y: &[f64],
    method: Method,
    alpha: f64,
    beta: &mut [f64],
) -> CdTrace {
    debug_assert_eq!(cols.len(), beta.len());
    let m = y.len() as f64;
    let mut r = y.to_vec();
    for (col, &b) in cols.iter().zip(beta.iter()) {
        if b != 0.0 {
            for (ri, x) in r.iter_mut().zip(col) {
                *ri -= b * x;
            }
        }
    }
    let sq: Vec<f64> = cols
        .iter()
        .map(|c| 2.0 * c.iter().map(|x| x * x).sum::<f64>() / m)
        .collect();

    let mut trace = CdTrace {
        sweeps: 0,
        objective: vec![objective(method, alpha, &r, beta)],
    };
    while trace.sweeps < MAX_SWEEPS {
        trace.sweeps += 1;
        let mut max_delta = 0.0f64;
        for (j, col) in cols.iter().enumerate() {
            if sq[j] == 0.0 {
                continue;
            }
            let dot: f64 = col.iter().zip(&r).map(|(x, ri)| x * ri).sum();
            let c = 2.0 * dot / m + sq[j] * beta[j];
            let new = match method {
                Method::Lasso => soft_threshold(c, alpha) / sq[j],
                Method::Ridge => c / (sq[j] + 2.0 * alpha),
                Method::Elastic => soft_threshold(c, alpha) / (sq[j] + 2.0 * alpha),
            };
            let d = new - beta[j];
            if d != 0.0 {
                for (ri, x) in r.iter_mut().zip(col) {
                    *ri -= d * x;
                }
                beta[j] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        let obj = objective(method, alpha, &r, beta);
        let prev = *trace.objective.last().unwrap();
        // each coordinate step is an exact minimization
        assert!(
            obj <= prev + 1e-10 * (1.0 + prev.abs()),
            "objective increased from {prev} to {obj}"
        );
        trace.objective.push(obj);
        if max_delta < TOLERANCE {
            break;
        }
    }
    trace
}
