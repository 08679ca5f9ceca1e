//! Negative ELBO: dimension-weighted Gaussian reconstruction term plus a
//! beta-weighted KL divergence of the latent posterior to `N(0, I)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::DiagonalGaussian;
use crate::layout::ModalityLayout;
use crate::model::MultimodalVae;
use crate::nn::{Matrix, RngState};

/// `ln(2 pi)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction_loss: f64,
    pub latent_loss: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(reconstruction_loss: f64, latent_loss: f64, beta: f64) -> Self {
        Self {
            reconstruction_loss,
            latent_loss,
            beta,
            total: reconstruction_loss + beta * latent_loss,
        }
    }
}

/// Log-density of `x` under a diagonal Gaussian.
pub fn gaussian_log_density(g: &DiagonalGaussian, x: &[f64]) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::Usage(format!(
            "point has {} coordinates, density has {}",
            x.len(),
            g.dim()
        )));
    }
    Ok(g.mean()
        .iter()
        .zip(g.variance())
        .zip(x)
        .map(|((mu, var), xi)| -0.5 * (LN_2PI + var.ln() + (xi - mu).powi(2) / var))
        .sum())
}

/// Negative log-likelihood of the full target where each modality's
/// coordinates are averaged (weight `1 / (2 d_M)`), then summed over modalities.
pub fn reconstruction_loss(
    g: &DiagonalGaussian,
    target: &[f64],
    layout: &ModalityLayout,
) -> Result<f64> {
    if target.len() != layout.total_dim() || g.dim() != layout.total_dim() {
        return Err(Error::Usage(format!(
            "reconstruction over {} coordinates needs density and target of that size",
            layout.total_dim()
        )));
    }
    let mut loss = 0.0;
    for m in layout.modalities() {
        let r = layout.modality_range(m);
        let weight = 1.0 / r.len() as f64;
        let nll: f64 = r
            .map(|i| {
                let (mu, var) = (g.mean()[i], g.variance()[i]);
                0.5 * (LN_2PI + var.ln() + (target[i] - mu).powi(2) / var)
            })
            .sum();
        loss += weight * nll;
    }
    Ok(loss)
}

/// `KL(N(mean, exp(log_var)) || N(0, I))`.
pub fn latent_kl_to_prior(mean: &[f64], log_variance: &[f64]) -> f64 {
    debug_assert_eq!(mean.len(), log_variance.len());
    0.5 * mean
        .iter()
        .zip(log_variance)
        .map(|(mu, lv)| mu * mu + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Single-sample negative ELBO with one reparameterized draw from `rng`.
/// Accumulates parameter gradients of `total` into the model's buffer.
pub fn elbo_loss(
    model: &mut MultimodalVae,
    x_augmented: &[f64],
    x_target: &[f64],
    beta: f64,
    rng: &mut RngState,
) -> Result<LossBreakdown> {
    if !(beta >= 0.0) {
        return Err(Error::Usage(format!("beta must be non-negative, got {beta}")));
    }
    let noise = Matrix::row_vector(&rng.gaussian_sample(model.latent_dim()));
    let terms = model.elbo_backward(
        &Matrix::row_vector(x_augmented),
        &Matrix::row_vector(x_target),
        beta,
        &noise,
    )?;
    let out = LossBreakdown::new(terms.reconstruction[0], terms.latent[0], beta);
    if !out.total.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            sample: Some(0),
            reason: format!("non-finite loss {out:?}"),
        });
    }
    Ok(out)
}
