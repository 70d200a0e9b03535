//! Log-linear models of subproblem complexity: `log N ≈ intercept + Σ λ_i z_i`
//! over standardized (optionally pairwise-expanded) features.

mod cd;
pub mod cv;
pub mod metrics;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_COUNT};

pub use cv::{alpha_grid, cost_of_omission, cross_validate, fold_assignment, CvOptions, CvReport, Grouping};
pub use metrics::{evaluate, mse, pearson, Metrics};

/// Columns whose training standard deviation is at or below this are dropped.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("dataset is empty")]
    Empty,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("row {0}: target is not finite")]
    NonFiniteTarget(usize),
    #[error("row {0}: no measured log N")]
    MissingTarget(usize),
    #[error("row {row}: {found} features, expected {expected}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("feature vector has {found} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("alpha must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("correlation undefined: zero variance")]
    UndefinedPcc,
    #[error("{groups} groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("k must be at least 2")]
    BadK,
    #[error("model has no nonzero coefficient")]
    NoNonzero,
    #[error("unknown {kind} {value:?}")]
    UnknownName { kind: &'static str, value: String },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Ridge,
    Elastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    Linear,
    Quadratic,
}

impl FromStr for Method {
    type Err = RegressionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lasso" => Ok(Method::Lasso),
            "ridge" => Ok(Method::Ridge),
            "elastic" => Ok(Method::Elastic),
            _ => Err(RegressionError::UnknownName {
                kind: "method",
                value: s.into(),
            }),
        }
    }
}

impl FromStr for Expansion {
    type Err = RegressionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Expansion::Linear),
            "quadratic" => Ok(Expansion::Quadratic),
            _ => Err(RegressionError::UnknownName {
                kind: "expansion",
                value: s.into(),
            }),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lasso => "lasso",
            Method::Ridge => "ridge",
            Method::Elastic => "elastic",
        })
    }
}

impl fmt::Display for Expansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expansion::Linear => "linear",
            Expansion::Quadratic => "quadratic",
        })
    }
}

/// Originals first, then `x_i·x_j` for `i ≤ j` in lexicographic order.
pub fn quadratic_expand(x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut out = Vec::with_capacity(p + p * (p + 1) / 2);
    out.extend_from_slice(x);
    for i in 0..p {
        for j in i..p {
            out.push(x[i] * x[j]);
        }
    }
    out
}

pub fn expanded_names(names: &[String], expansion: Expansion) -> Vec<String> {
    let mut out = names.to_vec();
    if expansion == Expansion::Quadratic {
        for i in 0..names.len() {
            for j in i..names.len() {
                out.push(format!("{}*{}", names[i], names[j]));
            }
        }
    }
    out
}

fn expand(x: &[f64], expansion: Expansion) -> Vec<f64> {
    match expansion {
        Expansion::Linear => x.to_vec(),
        Expansion::Quadratic => quadratic_expand(x),
    }
}

/// Rows of features with log-complexity targets and grouping keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    instances: Vec<String>,
    classes: Vec<String>,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        instances: Vec<String>,
        classes: Vec<String>,
    ) -> Result<Self, RegressionError> {
        assert_eq!(rows.len(), targets.len());
        assert_eq!(rows.len(), instances.len());
        assert_eq!(rows.len(), classes.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != names.len() {
                return Err(RegressionError::RowLength {
                    row: i,
                    expected: names.len(),
                    found: r.len(),
                });
            }
        }
        if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
            return Err(RegressionError::NonFiniteTarget(i));
        }
        Ok(Dataset {
            names,
            rows,
            targets,
            instances,
            classes,
        })
    }

    /// Rows without a measured `log N` are rejected.
    pub fn from_samples(samples: &[FeatureVector]) -> Result<Self, RegressionError> {
        let names = (1..=FEATURE_COUNT).map(|i| format!("f{i}")).collect();
        let mut targets = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            targets.push(s.log_n.ok_or(RegressionError::MissingTarget(i))?);
        }
        Dataset::new(
            names,
            samples.iter().map(|s| s.values.clone()).collect(),
            targets,
            samples.iter().map(|s| s.instance.clone()).collect(),
            samples.iter().map(|s| s.class.clone()).collect(),
        )
    }

    /// Unlabelled rows: instance and class keys are the row index.
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, RegressionError> {
        let p = rows.first().map_or(0, Vec::len);
        let keys: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
        Dataset::new(
            (1..=p).map(|i| format!("f{i}")).collect(),
            rows,
            targets,
            keys.clone(),
            keys,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            instances: idx.iter().map(|&i| self.instances[i].clone()).collect(),
            classes: idx.iter().map(|&i| self.classes[i].clone()).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            ..self.clone()
        }
    }

    pub fn expand(&self, expansion: Expansion) -> Dataset {
        Dataset {
            names: expanded_names(&self.names, expansion),
            rows: self.rows.iter().map(|r| expand(r, expansion)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instances: Vec<String>,
    pub classes: Vec<String>,
    pub rows: usize,
    pub trained_unix: u64,
}

/// A fitted model. Coefficients act on standardized expanded features; only
/// columns listed in `kept` take part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// Raw input feature names, before expansion.
    pub feature_names: Vec<String>,
    pub expansion: Expansion,
    pub method: Method,
    pub alpha: f64,
    /// Indices into the expanded vector.
    pub kept: Vec<usize>,
    pub terms: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda: Vec<f64>,
    pub intercept: f64,
    /// Expanded features dropped for zero training variance.
    pub dropped: Vec<String>,
    pub provenance: Provenance,
}

impl RegressionModel {
    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, RegressionError> {
        if x.len() != self.input_dim() {
            return Err(RegressionError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let e = expand(x, self.expansion);
        Ok(self.intercept
            + self
                .kept
                .iter()
                .enumerate()
                .map(|(k, &c)| self.lambda[k] * (e[c] - self.means[k]) / self.stds[k])
                .sum::<f64>())
    }

    /// `exp` of the prediction; always positive.
    pub fn estimate_n(&self, x: &[f64]) -> Result<f64, RegressionError> {
        Ok(self.predict(x)?.exp().max(f64::MIN_POSITIVE))
    }

    /// Coefficients folded back to raw expanded features:
    /// `(intercept, [(expanded index, coefficient)])`.
    pub fn raw_coefficients(&self) -> (f64, Vec<(usize, f64)>) {
        let mut b0 = self.intercept;
        let mut out = Vec::with_capacity(self.kept.len());
        for (k, &c) in self.kept.iter().enumerate() {
            let b = self.lambda[k] / self.stds[k];
            b0 -= b * self.means[k];
            out.push((c, b));
        }
        (b0, out)
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, RegressionError> {
        if x.len() != self.input_dim() {
            return Err(RegressionError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let e = expand(x, self.expansion);
        let (b0, coefs) = self.raw_coefficients();
        Ok(b0 + coefs.iter().map(|&(c, b)| b * e[c]).sum::<f64>())
    }

    /// `(term, λ)` for every nonzero coefficient.
    pub fn nonzero(&self) -> Vec<(String, f64)> {
        self.terms
            .iter()
            .zip(&self.lambda)
            .filter(|(_, &l)| l != 0.0)
            .map(|(t, &l)| (t.clone(), l))
            .collect()
    }

    pub fn to_json(&self) -> Result<String, RegressionError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, RegressionError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegressionError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RegressionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Standardized, column-major view of an already expanded dataset.
pub(crate) struct Prepared {
    cols: Vec<Vec<f64>>,
    centered: Vec<f64>,
    mean_y: f64,
    kept: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
    dropped: Vec<usize>,
}

impl Prepared {
    pub(crate) fn new(data: &Dataset) -> Prepared {
        let m = data.len() as f64;
        let mean_y = data.targets.iter().sum::<f64>() / m;
        let centered = data.targets.iter().map(|t| t - mean_y).collect();
        let mut p = Prepared {
            cols: Vec::new(),
            centered,
            mean_y,
            kept: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
            dropped: Vec::new(),
        };
        for j in 0..data.dim() {
            let col: Vec<f64> = data.rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / m;
            let std = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m).sqrt();
            if std.is_nan() || std <= MIN_STD {
                p.dropped.push(j);
                continue;
            }
            p.cols.push(col.iter().map(|x| (x - mean) / std).collect());
            p.kept.push(j);
            p.means.push(mean);
            p.stds.push(std);
        }
        p
    }

    /// Smallest lasso `α` whose solution is all zero.
    pub(crate) fn alpha_max(&self) -> f64 {
        let m = self.centered.len() as f64;
        self.cols
            .iter()
            .map(|c| (2.0 * c.iter().zip(&self.centered).map(|(x, y)| x * y).sum::<f64>() / m).abs())
            .fold(0.0, f64::max)
    }
}

fn check(data: &Dataset, alphas: &[f64]) -> Result<(), RegressionError> {
    if data.is_empty() {
        return Err(RegressionError::Empty);
    }
    if data.len() < 2 {
        return Err(RegressionError::TooFewRows(data.len()));
    }
    if let Some(&a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(RegressionError::BadAlpha(a));
    }
    Ok(())
}

fn provenance(data: &Dataset) -> Provenance {
    let mut instances = data.instances.clone();
    instances.sort();
    instances.dedup();
    let mut classes = data.classes.clone();
    classes.sort();
    classes.dedup();
    Provenance {
        instances,
        classes,
        rows: data.len(),
        trained_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    }
}

/// Fits a model for every `α` in `alphas`, warm-starting each from the
/// previous solution. Models come back in the order of `alphas`.
pub fn fit_path(
    data: &Dataset,
    method: Method,
    alphas: &[f64],
    expansion: Expansion,
) -> Result<Vec<RegressionModel>, RegressionError> {
    check(data, alphas)?;
    let expanded = data.expand(expansion);
    let prep = Prepared::new(&expanded);
    let prov = provenance(data);
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));

    let mut beta = vec![0.0; prep.cols.len()];
    let mut out: Vec<Option<RegressionModel>> = vec![None; alphas.len()];
    for i in order {
        cd::coordinate_descent(&prep.cols, &prep.centered, method, alphas[i], &mut beta);
        out[i] = Some(RegressionModel {
            feature_names: data.names.clone(),
            expansion,
            method,
            alpha: alphas[i],
            kept: prep.kept.clone(),
            terms: prep.kept.iter().map(|&c| expanded.names[c].clone()).collect(),
            means: prep.means.clone(),
            stds: prep.stds.clone(),
            lambda: beta.clone(),
            intercept: prep.mean_y,
            dropped: prep.dropped.iter().map(|&c| expanded.names[c].clone()).collect(),
            provenance: prov.clone(),
        });
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

pub fn fit(
    data: &Dataset,
    method: Method,
    alpha: f64,
    expansion: Expansion,
) -> Result<RegressionModel, RegressionError> {
    Ok(fit_path(data, method, &[alpha], expansion)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let rows = vec![
            vec![1.0, 5.0, 2.0],
            vec![2.0, 5.0, 1.0],
            vec![3.0, 5.0, 4.0],
            vec![4.0, 5.0, 3.0],
        ];
        Dataset::from_rows(rows, vec![1.0, 2.5, 2.9, 4.4]).unwrap()
    }

    #[test]
    fn expansion_sizes() {
        assert_eq!(quadratic_expand(&[2.0]), vec![2.0, 4.0]);
        assert_eq!(quadratic_expand(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(quadratic_expand(&[0.5; 34]).len(), 629);
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(expanded_names(&names, Expansion::Quadratic), vec!["a", "b", "a*a", "a*b", "b*b"]);
    }

    #[test]
    fn constant_column_dropped() {
        let m = fit(&toy(), Method::Lasso, 0.0, Expansion::Linear).unwrap();
        assert_eq!(m.kept, vec![0, 2]);
        assert_eq!(m.dropped, vec!["f2"]);
        assert!(m.stds.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn huge_alpha_shrinks_everything() {
        let d = toy();
        for method in [Method::Lasso, Method::Ridge, Method::Elastic] {
            let m = fit(&d, method, 1e6, Expansion::Linear).unwrap();
            let mean = d.targets().iter().sum::<f64>() / 4.0;
            for r in d.rows() {
                assert!((m.predict(r).unwrap() - mean).abs() < 1e-5);
            }
            if method != Method::Ridge {
                assert!(m.lambda.iter().all(|&l| l == 0.0));
            }
        }
    }

    #[test]
    fn prediction_at_training_means_is_intercept() {
        let d = toy();
        let m = fit(&d, Method::Ridge, 0.1, Expansion::Linear).unwrap();
        let means: Vec<f64> = (0..3).map(|j| d.rows().iter().map(|r| r[j]).sum::<f64>() / 4.0).collect();
        assert!((m.predict(&means).unwrap() - m.intercept).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let m = fit(&toy(), Method::Lasso, 0.1, Expansion::Linear).unwrap();
        assert!(matches!(
            m.predict(&[1.0]),
            Err(RegressionError::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            Dataset::from_rows(vec![vec![1.0]], vec![f64::NAN]),
            Err(RegressionError::NonFiniteTarget(0))
        ));
        let one = Dataset::from_rows(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(
            fit(&one, Method::Lasso, 0.1, Expansion::Linear),
            Err(RegressionError::TooFewRows(1))
        ));
        let empty = Dataset::from_rows(vec![], vec![]).unwrap();
        assert!(matches!(fit(&empty, Method::Lasso, 0.1, Expansion::Linear), Err(RegressionError::Empty)));
        assert!(matches!(
            fit(&toy(), Method::Lasso, -1.0, Expansion::Linear),
            Err(RegressionError::BadAlpha(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = fit(&toy(), Method::Elastic, 0.01, Expansion::Quadratic).unwrap();
        let back = RegressionModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn alpha_max_zeroes_lasso() {
        let d = toy();
        let a = Prepared::new(&d).alpha_max();
        let at = fit(&d, Method::Lasso, a * (1.0 + 1e-9), Expansion::Linear).unwrap();
        assert!(at.lambda.iter().all(|&l| l == 0.0));
        let below = fit(&d, Method::Lasso, a * 0.9, Expansion::Linear).unwrap();
        assert!(below.lambda.iter().any(|&l| l != 0.0));
    }
}
