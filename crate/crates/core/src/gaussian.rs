use crate::error::{Error, Result};

/// Gaussian with diagonal covariance, stored as mean and per-dimension variance.
///
/// Coordinates are independent by construction; there is no way to express a
/// correlation with this type.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::Usage(format!(
                "mean has {} entries, variance has {}",
                mean.len(),
                variance.len()
            )));
        }
        if !mean.iter().all(|m| m.is_finite()) {
            return Err(Error::Input("gaussian mean must be finite".into()));
        }
        if !variance.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Input(
                "gaussian variances must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { mean, variance })
    }

    pub fn from_log_variance(mean: Vec<f64>, log_variance: &[f64]) -> Result<Self> {
        Self::new(mean, log_variance.iter().map(|lv| lv.exp()).collect())
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            variance: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }
}
