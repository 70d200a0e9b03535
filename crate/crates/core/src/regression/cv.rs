//! Grouped k-fold cross-validation, regularization selection and cost of
//! omission.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mse, pearson, predictions, Metrics};
use super::{fit, fit_path, Dataset, Expansion, Method, Prepared, RegressionError, RegressionModel};

pub const GRID_POINTS: usize = 30;
pub const GRID_SPAN: f64 = 1e-4;
pub const COO_FOLDS: usize = 5;

/// What a fold holds out: single rows, whole instances or whole classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Row,
    Instance,
    Class,
}

impl std::str::FromStr for Grouping {
    type Err = RegressionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" => Ok(Grouping::Row),
            "instance" => Ok(Grouping::Instance),
            "class" => Ok(Grouping::Class),
            _ => Err(RegressionError::UnknownName {
                kind: "grouping",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub k: usize,
    pub grouping: Grouping,
    pub method: Method,
    pub expansion: Expansion,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 5,
            grouping: Grouping::Row,
            method: Method::Lasso,
            expansion: Expansion::Linear,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Selected regularization weight.
    pub alpha: f64,
    /// Per-fold metrics at the selected weight.
    pub folds: Vec<Metrics>,
    /// `(α, mean fold MSE)` over the grid.
    pub grid: Vec<(f64, f64)>,
    pub fold_of: Vec<usize>,
    /// Held-out prediction for every row at the selected weight.
    pub predictions: Vec<f64>,
    /// Metrics over all held-out predictions together.
    pub pooled: Metrics,
}

impl CvReport {
    pub fn mean_mse_test(&self) -> f64 {
        self.folds.iter().map(|f| f.mse_test).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_mse_train(&self) -> f64 {
        self.folds.iter().filter_map(|f| f.mse_train).sum::<f64>() / self.folds.len() as f64
    }
}

fn group_keys(data: &Dataset, grouping: Grouping) -> Vec<String> {
    match grouping {
        Grouping::Row => (0..data.len()).map(|i| i.to_string()).collect(),
        Grouping::Instance => data.instances().to_vec(),
        Grouping::Class => data.classes().to_vec(),
    }
}

/// Fold index of every row. Groups are shuffled with `seed` and dealt
/// round-robin, so fold sizes differ by at most one group.
pub fn fold_assignment(
    data: &Dataset,
    k: usize,
    grouping: Grouping,
    seed: u64,
) -> Result<Vec<usize>, RegressionError> {
    if k < 2 {
        return Err(RegressionError::BadK);
    }
    let keys = group_keys(data, grouping);
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut row_group = Vec::with_capacity(keys.len());
    for key in &keys {
        let next = ids.len();
        row_group.push(*ids.entry(key.as_str()).or_insert(next));
    }
    let groups = ids.len();
    if groups < k {
        return Err(RegressionError::TooFewGroups { groups, k });
    }
    let mut perm: Vec<usize> = (0..groups).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_group = vec![0; groups];
    for (pos, &g) in perm.iter().enumerate() {
        fold_of_group[g] = pos % k;
    }
    Ok(row_group.into_iter().map(|g| fold_of_group[g]).collect())
}

/// Log-spaced weights from `α_max` down to `GRID_SPAN·α_max`, descending.
pub fn alpha_grid(data: &Dataset, expansion: Expansion) -> Result<Vec<f64>, RegressionError> {
    if data.is_empty() {
        return Err(RegressionError::Empty);
    }
    let mut amax = Prepared::new(&data.expand(expansion)).alpha_max();
    if amax.is_nan() || amax <= 0.0 {
        amax = 1.0;
    }
    let step = GRID_SPAN.ln() / (GRID_POINTS - 1) as f64;
    Ok((0..GRID_POINTS).map(|i| amax * (step * i as f64).exp()).collect())
}

fn split(fold_of: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..fold_of.len()).partition(|&i| fold_of[i] != f)
}

/// Chooses `α` from `alphas` by mean held-out MSE (ties favour the larger
/// weight) and reports per-fold metrics at that weight.
pub fn cross_validate(
    data: &Dataset,
    opts: &CvOptions,
    alphas: &[f64],
) -> Result<CvReport, RegressionError> {
    if data.is_empty() {
        return Err(RegressionError::Empty);
    }
    if alphas.is_empty() {
        return Err(RegressionError::BadAlpha(f64::NAN));
    }
    let fold_of = fold_assignment(data, opts.k, opts.grouping, opts.seed)?;
    let mut fold_models: Vec<Vec<RegressionModel>> = Vec::with_capacity(opts.k);
    let mut grid_sum = vec![0.0; alphas.len()];
    for f in 0..opts.k {
        let (train, test) = split(&fold_of, f);
        let train = data.subset(&train);
        let test = data.subset(&test);
        let models = fit_path(&train, opts.method, alphas, opts.expansion)?;
        for (a, m) in models.iter().enumerate() {
            grid_sum[a] += mse(test.targets(), &predictions(m, &test)?);
        }
        fold_models.push(models);
    }
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .zip(&grid_sum)
        .map(|(&a, &s)| (a, s / opts.k as f64))
        .collect();
    let best = (0..alphas.len())
        .min_by(|&a, &b| {
            grid[a]
                .1
                .total_cmp(&grid[b].1)
                .then(alphas[b].total_cmp(&alphas[a]))
        })
        .unwrap();

    let mut folds = Vec::with_capacity(opts.k);
    let mut pooled_pred = vec![0.0; data.len()];
    for (f, models) in fold_models.iter().enumerate() {
        let (train_idx, test_idx) = split(&fold_of, f);
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        let model = &models[best];
        let yhat = predictions(model, &test)?;
        for (&i, &p) in test_idx.iter().zip(&yhat) {
            pooled_pred[i] = p;
        }
        folds.push(Metrics {
            mse_test: mse(test.targets(), &yhat),
            mse_train: Some(mse(train.targets(), &predictions(model, &train)?)),
            pcc: pearson(test.targets(), &yhat).ok(),
            m: test.len(),
        });
    }
    let pooled = Metrics {
        mse_test: mse(data.targets(), &pooled_pred),
        mse_train: None,
        pcc: pearson(data.targets(), &pooled_pred).ok(),
        m: data.len(),
    };
    Ok(CvReport {
        alpha: alphas[best],
        folds,
        grid,
        fold_of,
        predictions: pooled_pred,
        pooled,
    })
}

/// Pooled held-out MSE of a fixed-weight fit under row-grouped folds.
fn cv_mse(data: &Dataset, method: Method, alpha: f64, seed: u64) -> Result<f64, RegressionError> {
    let fold_of = fold_assignment(data, COO_FOLDS, Grouping::Row, seed)?;
    let mut sq = 0.0;
    for f in 0..COO_FOLDS {
        let (train, test) = split(&fold_of, f);
        let model = fit(&data.subset(&train), method, alpha, Expansion::Linear)?;
        for &i in &test {
            let e = model.predict(&data.rows()[i])? - data.targets()[i];
            sq += e * e;
        }
    }
    Ok(sq / data.len() as f64)
}

/// Score in `[0, 100]` for every nonzero term of `model`: the held-out error
/// increase when that term is left out, relative to the largest increase.
pub fn cost_of_omission(
    data: &Dataset,
    model: &RegressionModel,
    seed: u64,
) -> Result<Vec<(String, f64)>, RegressionError> {
    if data.dim() != model.input_dim() {
        return Err(RegressionError::DimensionMismatch {
            expected: model.input_dim(),
            found: data.dim(),
        });
    }
    let (cols, names): (Vec<usize>, Vec<String>) = model
        .lambda
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0.0)
        .map(|(k, _)| (model.kept[k], model.terms[k].clone()))
        .unzip();
    if cols.is_empty() {
        return Err(RegressionError::NoNonzero);
    }
    let sub = data.expand(model.expansion).select_columns(&cols);
    let full = cv_mse(&sub, model.method, model.alpha, seed)?;
    let mut diffs = Vec::with_capacity(cols.len());
    for i in 0..cols.len() {
        let rest: Vec<usize> = (0..cols.len()).filter(|&j| j != i).collect();
        diffs.push(cv_mse(&sub.select_columns(&rest), model.method, model.alpha, seed)? - full);
    }
    let top = diffs.iter().copied().fold(0.0, f64::max);
    Ok(names
        .into_iter()
        .zip(diffs)
        .map(|(n, d)| (n, if top > 0.0 { 100.0 * d.max(0.0) / top } else { 0.0 }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouped(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y = rows.iter().map(|r| 0.5 * r[0] - r[1]).collect();
        Dataset::new(
            vec!["a".into(), "b".into()],
            rows,
            y,
            (0..n).map(|i| format!("inst{}", i % 6)).collect(),
            (0..n).map(|i| format!("class{}", i % 3)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn leave_one_out_partitions_rows() {
        let d = grouped(12);
        let folds = fold_assignment(&d, 12, Grouping::Row, 3).unwrap();
        let mut seen = folds.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn instance_folds_hold_out_whole_instances() {
        let d = grouped(30);
        let folds = fold_assignment(&d, 3, Grouping::Instance, 9).unwrap();
        for f in 0..3 {
            for i in (0..30).filter(|&i| folds[i] == f) {
                for j in (0..30).filter(|&j| folds[j] != f) {
                    assert_ne!(d.instances()[i], d.instances()[j]);
                }
            }
        }
    }

    #[test]
    fn too_few_groups() {
        let d = grouped(30);
        assert!(matches!(
            fold_assignment(&d, 4, Grouping::Class, 0),
            Err(RegressionError::TooFewGroups { groups: 3, k: 4 })
        ));
        assert!(matches!(fold_assignment(&d, 1, Grouping::Row, 0), Err(RegressionError::BadK)));
    }

    #[test]
    fn grid_shape() {
        let d = grouped(20);
        let g = alpha_grid(&d, Expansion::Linear).unwrap();
        assert_eq!(g.len(), GRID_POINTS);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!((g[GRID_POINTS - 1] / g[0] - GRID_SPAN).abs() < 1e-12);
    }

    #[test]
    fn cv_on_exact_linear_law() {
        let d = grouped(30);
        let grid = alpha_grid(&d, Expansion::Linear).unwrap();
        let r = cross_validate(&d, &CvOptions::default(), &grid).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.alpha, *grid.last().unwrap());
        assert!(r.pooled.pcc.unwrap() > 0.999);
        assert_eq!(r.folds.iter().map(|f| f.m).sum::<usize>(), 30);
    }

    #[test]
    fn coo_needs_nonzero() {
        let d = grouped(20);
        let m = fit(&d, Method::Lasso, 1e6, Expansion::Linear).unwrap();
        assert!(matches!(cost_of_omission(&d, &m, 0), Err(RegressionError::NoNonzero)));
    }
}
