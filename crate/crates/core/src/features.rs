//! The 34 subproblem features used for complexity estimation and the sample
//! CSV format (`instance,class,f1..f34,logN`).
//!
//! Index map (1-based, as in the CSV header):
//!
//! | features | meaning |
//! |---|---|
//! | 1 | variables in the subproblem |
//! | 2-6 | domain sizes: min, max, median, mean, std. dev. |
//! | 7 | depth of the subproblem root in the pseudo tree |
//! | 8-12 | leaf depths below the subproblem root: min, max, median, mean, std. dev. |
//! | 13 | number of pseudo tree leaves in the subproblem |
//! | 14-18 | context sizes of the subproblem variables |
//! | 19-23 | the same with the conditioned ancestors removed |
//! | 24, 25, 26 | lower bound `L`, upper bound `U`, `U - L` |
//! | 27, 28, 29 | probe ratios: heuristic prunes, determinism prunes, leaf nodes |
//! | 30, 31 | probe mean terminal depth, mean node depth `d` |
//! | 32 | average branching degree `N^(1/d)` |
//! | 33 | i-bound |
//! | 34 | max context size minus i-bound |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::Problem;
use crate::search::{SearchResult, SubproblemHandle};

pub const FEATURE_COUNT: usize = 34;

/// Log-space bounds are clamped into `[-LOG_CLAMP, LOG_CLAMP]` before they
/// become features; `-inf` (no incumbent, inconsistent subproblem) would
/// otherwise poison the regression.
pub const LOG_CLAMP: f64 = 700.0;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "num_vars",
    "domain_min",
    "domain_max",
    "domain_median",
    "domain_mean",
    "domain_std",
    "root_depth",
    "leaf_depth_min",
    "leaf_depth_max",
    "leaf_depth_median",
    "leaf_depth_mean",
    "leaf_depth_std",
    "num_leaves",
    "width_min",
    "width_max",
    "width_median",
    "width_mean",
    "width_std",
    "cond_width_min",
    "cond_width_max",
    "cond_width_median",
    "cond_width_mean",
    "cond_width_std",
    "lower_bound",
    "upper_bound",
    "bound_gap",
    "ratio_pruned_heuristic",
    "ratio_pruned_determinism",
    "ratio_leaf",
    "probe_terminal_depth",
    "probe_mean_depth",
    "probe_branching",
    "ibound",
    "max_context_minus_ibound",
];

const STATIC_INDICES: [usize; 25] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 33, 34,
];
const DYNAMIC_INDICES: [usize; 9] = [24, 25, 26, 27, 28, 29, 30, 31, 32];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature f{0} set by both parts")]
    Collision(usize),
    #[error("feature f{0} missing")]
    Missing(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header lacks column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: column {column}: cannot parse {value:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
}

/// Feature values keyed by 1-based index; unset slots are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFeatures {
    values: [Option<f64>; FEATURE_COUNT],
}

impl Default for PartialFeatures {
    fn default() -> Self {
        PartialFeatures {
            values: [None; FEATURE_COUNT],
        }
    }
}

impl PartialFeatures {
    pub fn get(&self, index: usize) -> Option<f64> {
        self.values[index - 1]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index - 1] = Some(value);
    }

    pub fn clear(&mut self, index: usize) {
        self.values[index - 1] = None;
    }

    fn set_stats(&mut self, first: usize, data: &[f64]) {
        for (k, v) in summary(data).into_iter().enumerate() {
            self.set(first + k, v);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub instance: String,
    pub class: String,
    /// `values[i]` is feature `f(i+1)`.
    pub values: Vec<f64>,
    /// Natural log of the measured node count, when known.
    pub log_n: Option<f64>,
}

impl FeatureVector {
    /// Feature by 1-based index.
    pub fn f(&self, index: usize) -> f64 {
        self.values[index - 1]
    }
}

/// min, max, median, mean and population standard deviation.
pub fn summary(data: &[f64]) -> [f64; 5] {
    if data.is_empty() {
        return [0.0; 5];
    }
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    let mean = s.iter().sum::<f64>() / n as f64;
    let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    [s[0], s[n - 1], median, mean, var.sqrt()]
}

fn clamp_log(v: f64) -> f64 {
    v.clamp(-LOG_CLAMP, LOG_CLAMP)
}

/// Structural features 1-23, 33 and 34 of the subproblem below `handle`.
pub fn extract_static(p: &Problem, handle: &SubproblemHandle) -> PartialFeatures {
    let tree = &p.tree;
    let root = handle.var;
    let root_depth = tree.depth(root);
    let vars = tree.subtree(root);
    let mut out = PartialFeatures::default();

    out.set(1, vars.len() as f64);
    let doms: Vec<f64> = vars.iter().map(|&v| p.model.domain(v) as f64).collect();
    out.set_stats(2, &doms);

    out.set(7, root_depth as f64);
    let leaf_depths: Vec<f64> = vars
        .iter()
        .filter(|&&v| tree.is_leaf(v))
        .map(|&v| (tree.depth(v) - root_depth) as f64)
        .collect();
    out.set_stats(8, &leaf_depths);
    out.set(13, leaf_depths.len() as f64);

    let widths: Vec<f64> = vars.iter().map(|&v| tree.width(v) as f64).collect();
    out.set_stats(14, &widths);
    // conditioned ancestors are exactly the context members above the root
    let cond: Vec<f64> = vars
        .iter()
        .map(|&v| tree.context(v).iter().filter(|&&u| tree.depth(u) >= root_depth).count() as f64)
        .collect();
    out.set_stats(19, &cond);

    let i = p.i_bound();
    out.set(33, i as f64);
    let max_ctx = vars.iter().map(|&v| tree.width(v)).max().unwrap_or(0);
    out.set(34, max_ctx as f64 - i as f64);
    out
}

/// Bound and probe features 24-32.
pub fn extract_dynamic(probe: &SearchResult, handle: &SubproblemHandle) -> PartialFeatures {
    let mut out = PartialFeatures::default();
    let lower = clamp_log(handle.lower.max(probe.optimum));
    let upper = clamp_log(handle.upper);
    out.set(24, lower);
    out.set(25, upper);
    out.set(26, upper - lower);

    let n = probe.expansions as f64;
    let ratio = |c: u64| if probe.expansions == 0 { 0.0 } else { c as f64 / n };
    out.set(27, ratio(probe.pruned_by_heuristic));
    out.set(28, ratio(probe.pruned_by_determinism));
    out.set(29, ratio(probe.leaf_nodes));
    let terminal_depth = if probe.terminal_nodes == 0 {
        0.0
    } else {
        probe.terminal_depth_sum as f64 / probe.terminal_nodes as f64
    };
    out.set(30, terminal_depth);
    let d = probe.mean_depth();
    out.set(31, d);
    // a capped probe has N equal to the cap
    out.set(32, if d > 0.0 { n.powf(1.0 / d) } else { 1.0 });
    out
}

/// Merges the static and dynamic parts into a complete vector.
pub fn assemble(
    static_part: &PartialFeatures,
    dynamic_part: &PartialFeatures,
    instance: &str,
    class: &str,
) -> Result<FeatureVector, FeatureError> {
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    for i in 1..=FEATURE_COUNT {
        match (static_part.get(i), dynamic_part.get(i)) {
            (Some(_), Some(_)) => return Err(FeatureError::Collision(i)),
            (Some(v), None) | (None, Some(v)) => values.push(v),
            (None, None) => return Err(FeatureError::Missing(i)),
        }
    }
    Ok(FeatureVector {
        instance: instance.to_string(),
        class: class.to_string(),
        values,
        log_n: None,
    })
}

/// Indices owned by [`extract_static`].
pub fn static_indices() -> &'static [usize] {
    &STATIC_INDICES
}

/// Indices owned by [`extract_dynamic`].
pub fn dynamic_indices() -> &'static [usize] {
    &DYNAMIC_INDICES
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["instance".to_string(), "class".to_string()];
    h.extend((1..=FEATURE_COUNT).map(|i| format!("f{i}")));
    h.push("logN".to_string());
    h
}

/// Fields of one sample row, in [`csv_header`] order.
pub fn csv_fields(fv: &FeatureVector) -> Vec<String> {
    let mut row = vec![fv.instance.clone(), fv.class.clone()];
    row.extend(fv.values.iter().map(|v| v.to_string()));
    row.push(fv.log_n.map(|v| v.to_string()).unwrap_or_default());
    row
}

pub fn write_samples<W: Write>(out: W, samples: &[FeatureVector]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for s in samples {
        w.write_record(csv_fields(s))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads sample rows by column name; unknown extra columns are ignored.
pub fn read_samples<R: Read>(input: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| FeatureError::MissingColumn(name.to_string()))
    };
    let inst = col("instance")?;
    let class = col("class")?;
    let feats: Vec<usize> = (1..=FEATURE_COUNT)
        .map(|i| col(&format!("f{i}")))
        .collect::<Result<_, _>>()?;
    let logn = col("logN")?;

    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |idx: usize, name: String| -> Result<f64, FeatureError> {
            let raw = rec.get(idx).unwrap_or("").trim();
            raw.parse().map_err(|_| FeatureError::BadValue {
                row: row + 1,
                column: name,
                value: raw.to_string(),
            })
        };
        let values = feats
            .iter()
            .enumerate()
            .map(|(k, &idx)| parse(idx, format!("f{}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let log_n = match rec.get(logn).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(parse(logn, "logN".into())?),
        };
        out.push(FeatureVector {
            instance: rec.get(inst).unwrap_or("").to_string(),
            class: rec.get(class).unwrap_or("").to_string(),
            values,
            log_n,
        });
    }
    Ok(out)
}
