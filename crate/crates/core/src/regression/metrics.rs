use serde::{Deserialize, Serialize};

use super::{Dataset, RegressionError, RegressionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse_test: f64,
    /// Training error of the fold model, when known.
    pub mse_train: Option<f64>,
    /// `None` when either side has zero variance.
    pub pcc: Option<f64>,
    pub m: usize,
}

pub fn mse(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len());
    y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Pearson correlation with population normalization.
pub fn pearson(y: &[f64], yhat: &[f64]) -> Result<f64, RegressionError> {
    assert_eq!(y.len(), yhat.len());
    let m = y.len() as f64;
    let my = y.iter().sum::<f64>() / m;
    let mh = yhat.iter().sum::<f64>() / m;
    let (mut cov, mut vy, mut vh) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        cov += (a - my) * (b - mh);
        vy += (a - my) * (a - my);
        vh += (b - mh) * (b - mh);
    }
    if vy <= 0.0 || vh <= 0.0 {
        return Err(RegressionError::UndefinedPcc);
    }
    Ok((cov / (vy * vh).sqrt()).clamp(-1.0, 1.0))
}

pub fn predictions(model: &RegressionModel, data: &Dataset) -> Result<Vec<f64>, RegressionError> {
    data.rows().iter().map(|r| model.predict(r)).collect()
}

pub fn evaluate(model: &RegressionModel, test: &Dataset) -> Result<Metrics, RegressionError> {
    if test.is_empty() {
        return Err(RegressionError::Empty);
    }
    let yhat = predictions(model, test)?;
    Ok(Metrics {
        mse_test: mse(test.targets(), &yhat),
        mse_train: None,
        pcc: pearson(test.targets(), &yhat).ok(),
        m: test.len(),
    })
}
