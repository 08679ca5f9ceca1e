//! Multimodal VAE: one encoder per modality, a shared stochastic latent
//! space, and one diagonal-Gaussian decoder per modality.
//!
//! ```text
//!  x[I(joint)]  -> enc/joint  -\                          /-> dec/joint  -> (mu, logvar)[I(joint)]
//!  x[I(vision)] -> enc/vision --+-> concat -> mu_z, logvar_z -> z --+-> dec/vision -> ...
//!  ...                         -/                          \-> ...
//! ```
//!
//! Encoders and decoders are single tanh hidden layers of width `hidden`.
//! The two latent heads are affine maps from the concatenated encoder
//! activations; log-variances at both the latent and the output heads are
//! clamped to `[LOG_VAR_MIN, LOG_VAR_MAX]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::DiagonalGaussian;
use crate::layout::{Modality, ModalityLayout};
use crate::losses::LN_2PI;
use crate::nn::{Activation, DenseLayer, GroupId, Matrix, ParameterSet, RngState};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;
pub const DEFAULT_HIDDEN: usize = 32;

#[inline]
pub(crate) fn clamp_log_var(v: f64) -> f64 {
    v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

#[inline]
fn clamp_passes_gradient(raw: f64) -> bool {
    (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw)
}

/// Which latent vector is fed to the decoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    /// Reparameterized draw `mean + exp(logvar/2) * eps`.
    Sample,
    /// The latent mean itself; deterministic.
    Mean,
}

/// Output of the encoder: parameters of `q(z|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
    /// Standard-normal draw used to build `sample`.
    pub noise: Vec<f64>,
    pub sample: Vec<f64>,
}

/// Per-sample loss terms of one batched ELBO evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchElbo {
    pub reconstruction: Vec<f64>,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MultimodalVae {
    layout: ModalityLayout,
    hidden: usize,
    params: ParameterSet,
    encoders: Vec<GroupId>,
    latent_mean: GroupId,
    latent_log_var: GroupId,
    decoder_hidden: Vec<GroupId>,
    decoder_out: Vec<GroupId>,
}

impl MultimodalVae {
    pub fn new(layout: ModalityLayout, hidden: usize, rng: &mut RngState) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        let n = layout.total_dim();
        let mut params = ParameterSet::new();
        let mut encoders = Vec::new();
        for m in layout.modalities() {
            let width = 2 * layout.dim(m);
            let layer = DenseLayer::glorot(width, hidden, Activation::Tanh, rng)?;
            encoders.push(params.add(format!("encoder/{m}/0"), layer)?);
        }
        let joint = hidden * layout.num_modalities();
        let latent_mean = params.add(
            "latent/mean",
            DenseLayer::glorot(joint, n, Activation::Identity, rng)?,
        )?;
        let latent_log_var = params.add(
            "latent/log_variance",
            DenseLayer::glorot(joint, n, Activation::Identity, rng)?,
        )?;
        let mut decoder_hidden = Vec::new();
        let mut decoder_out = Vec::new();
        for m in layout.modalities() {
            let width = 2 * layout.dim(m);
            decoder_hidden.push(params.add(
                format!("decoder/{m}/0"),
                DenseLayer::glorot(n, hidden, Activation::Tanh, rng)?,
            )?);
            // First `width` outputs are the mean, the next `width` the log-variance.
            decoder_out.push(params.add(
                format!("decoder/{m}/1"),
                DenseLayer::glorot(hidden, 2 * width, Activation::Identity, rng)?,
            )?);
        }
        Ok(Self {
            layout,
            hidden,
            params,
            encoders,
            latent_mean,
            latent_log_var,
            decoder_hidden,
            decoder_out,
        })
    }

    pub fn standard(rng: &mut RngState) -> Result<Self> {
        Self::new(ModalityLayout::standard(), DEFAULT_HIDDEN, rng)
    }

    pub fn layout(&self) -> &ModalityLayout {
        &self.layout
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn latent_dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    fn position(&self, m: Modality) -> usize {
        self.layout
            .modalities()
            .position(|mm| mm == m)
            .unwrap_or_else(|| panic!("modality {m} not in layout"))
    }

    /// Group ids of the decoder stack for `m`.
    pub fn decoder_stack(&self, m: Modality) -> [GroupId; 2] {
        let k = self.position(m);
        [self.decoder_hidden[k], self.decoder_out[k]]
    }

    pub fn encoder_group(&self, m: Modality) -> GroupId {
        self.encoders[self.position(m)]
    }

    fn check_width(&self, rows: &Matrix, what: &str) -> Result<()> {
        let n = self.layout.total_dim();
        if rows.cols() != n {
            return Err(Error::Usage(format!(
                "{what} has width {}, model expects {n}",
                rows.cols()
            )));
        }
        if !rows.is_finite() {
            return Err(Error::Input(format!("{what} contains non-finite values")));
        }
        Ok(())
    }

    /// Latent mean and clamped log-variance for each row of `x`.
    pub fn encode_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_width(x, "encoder input")?;
        let joint = self.encoder_features(x)?;
        let mean = self.params.layer(self.latent_mean).apply(&joint)?;
        let mut log_var = self.params.layer(self.latent_log_var).apply(&joint)?;
        log_var.map_inplace(clamp_log_var);
        Ok((mean, log_var))
    }

    fn encoder_features(&self, x: &Matrix) -> Result<Matrix> {
        let mut joint = Matrix::zeros(x.rows(), self.hidden * self.layout.num_modalities());
        for (k, m) in self.layout.modalities().enumerate() {
            let r = self.layout.modality_range(m);
            let slice = x.columns(r.start, r.len());
            let h = self.params.layer(self.encoders[k]).apply(&slice)?;
            joint.set_columns(k * self.hidden, &h);
        }
        Ok(joint)
    }

    pub fn encode(&self, x: &[f64]) -> Result<LatentDistribution> {
        let (mean, log_var) = self.encode_batch(&Matrix::row_vector(x))?;
        Ok(LatentDistribution {
            mean: mean.into_vec(),
            log_variance: log_var.into_vec(),
        })
    }

    /// Output mean and clamped log-variance for each latent row of `z`.
    pub fn decode_batch(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_width(z, "latent")?;
        let n = self.layout.total_dim();
        let mut mean = Matrix::zeros(z.rows(), n);
        let mut log_var = Matrix::zeros(z.rows(), n);
        for m in self.layout.modalities() {
            let (mu, lv) = self.decode_modality_batch(m, z)?;
            let r = self.layout.modality_range(m);
            mean.set_columns(r.start, &mu);
            log_var.set_columns(r.start, &lv);
        }
        Ok((mean, log_var))
    }

    /// Runs only the decoder stack of `m`; returns its `(mean, log_var)` slice.
    pub fn decode_modality_batch(&self, m: Modality, z: &Matrix) -> Result<(Matrix, Matrix)> {
        let [h_id, o_id] = self.decoder_stack(m);
        let h = self.params.layer(h_id).apply(z)?;
        let out = self.params.layer(o_id).apply(&h)?;
        let width = 2 * self.layout.dim(m);
        let mean = out.columns(0, width);
        let mut log_var = out.columns(width, width);
        log_var.map_inplace(clamp_log_var);
        Ok((mean, log_var))
    }

    pub fn decode(&self, z: &[f64]) -> Result<DiagonalGaussian> {
        let (mean, log_var) = self.decode_batch(&Matrix::row_vector(z))?;
        DiagonalGaussian::from_log_variance(mean.into_vec(), log_var.as_slice())
    }

    pub fn reparameterize(dist: &LatentDistribution, rng: &mut RngState) -> LatentCode {
        let noise = rng.gaussian_sample(dist.mean.len());
        let sample = dist
            .mean
            .iter()
            .zip(&dist.log_variance)
            .zip(&noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        LatentCode {
            mean: dist.mean.clone(),
            log_variance: dist.log_variance.clone(),
            noise,
            sample,
        }
    }

    /// Encode, pick a latent according to `mode`, decode.
    pub fn reconstruct(
        &self,
        x: &[f64],
        rng: &mut RngState,
        mode: LatentMode,
    ) -> Result<DiagonalGaussian> {
        let dist = self.encode(x)?;
        let z = match mode {
            LatentMode::Mean => dist.mean,
            LatentMode::Sample => Self::reparameterize(&dist, rng).sample,
        };
        self.decode(&z)
    }

    /// Deterministic reconstruction (`z = latent mean`) of every row of `x`.
    pub fn reconstruct_mean_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let (mean, _) = self.encode_batch(x)?;
        self.decode_batch(&mean)
    }

    /// Forward and backward pass of the dimension-weighted, beta-weighted
    /// negative ELBO over a batch, using `noise` as the reparameterization draw.
    ///
    /// Gradients of the batch-mean loss are accumulated into the parameter
    /// buffer. Returns per-sample reconstruction and latent terms.
    pub fn elbo_backward(
        &mut self,
        x_input: &Matrix,
        x_target: &Matrix,
        beta: f64,
        noise: &Matrix,
    ) -> Result<BatchElbo> {
        self.check_width(x_input, "augmented input")?;
        self.check_width(x_target, "target")?;
        let rows = x_input.rows();
        let n = self.layout.total_dim();
        if x_target.rows() != rows || noise.rows() != rows || noise.cols() != n {
            return Err(Error::Usage("batch shapes disagree".into()));
        }
        let modalities: Vec<Modality> = self.layout.modalities().collect();
        let scale = 1.0 / rows as f64;

        // Encoders.
        let mut enc_tapes = Vec::with_capacity(modalities.len());
        let mut joint = Matrix::zeros(rows, self.hidden * modalities.len());
        for (k, &m) in modalities.iter().enumerate() {
            let r = self.layout.modality_range(m);
            let (h, tape) = self
                .params
                .forward(&[self.encoders[k]], x_input.columns(r.start, r.len()))?;
            joint.set_columns(k * self.hidden, &h);
            enc_tapes.push(tape);
        }
        let (z_mean, mean_tape) = self.params.forward(&[self.latent_mean], joint.clone())?;
        let (lv_raw, lv_tape) = self.params.forward(&[self.latent_log_var], joint)?;

        let mut z = z_mean.clone();
        let mut std = Matrix::zeros(rows, n);
        let mut latent = vec![0.0; rows];
        for b in 0..rows {
            let mut kl = 0.0;
            for i in 0..n {
                let lv = clamp_log_var(lv_raw[(b, i)]);
                let mu = z_mean[(b, i)];
                let s = (0.5 * lv).exp();
                std[(b, i)] = s;
                z[(b, i)] = mu + s * noise[(b, i)];
                kl += mu * mu + s * s - 1.0 - lv;
            }
            latent[b] = 0.5 * kl;
        }

        // Decoders and output gradients.
        let mut reconstruction = vec![0.0; rows];
        let mut grad_z = Matrix::zeros(rows, n);
        for (k, &m) in modalities.iter().enumerate() {
            let r = self.layout.modality_range(m);
            let width = r.len();
            let weight = 1.0 / width as f64;
            let (out, tape) = self
                .params
                .forward(&[self.decoder_hidden[k], self.decoder_out[k]], z.clone())?;
            let mut grad_out = Matrix::zeros(rows, 2 * width);
            for b in 0..rows {
                let mut acc = 0.0;
                for j in 0..width {
                    let mu = out[(b, j)];
                    let raw = out[(b, width + j)];
                    let lv = clamp_log_var(raw);
                    let inv_var = (-lv).exp();
                    let diff = mu - x_target[(b, r.start + j)];
                    let sq = diff * diff * inv_var;
                    acc += 0.5 * (LN_2PI + lv + sq);
                    grad_out[(b, j)] = scale * weight * diff * inv_var;
                    if clamp_passes_gradient(raw) {
                        grad_out[(b, width + j)] = scale * weight * 0.5 * (1.0 - sq);
                    }
                }
                reconstruction[b] += weight * acc;
            }
            let gz = self
                .params
                .backward(&tape, grad_out, true)?
                .expect("input gradient requested");
            for (acc, g) in grad_z.as_mut_slice().iter_mut().zip(gz.as_slice()) {
                *acc += g;
            }
        }

        // Latent heads.
        let mut grad_mean = grad_z.clone();
        let mut grad_lv = Matrix::zeros(rows, n);
        for b in 0..rows {
            for i in 0..n {
                let mu = z_mean[(b, i)];
                let s = std[(b, i)];
                grad_mean[(b, i)] += scale * beta * mu;
                if clamp_passes_gradient(lv_raw[(b, i)]) {
                    grad_lv[(b, i)] = grad_z[(b, i)] * noise[(b, i)] * 0.5 * s
                        + scale * beta * 0.5 * (s * s - 1.0);
                }
            }
        }
        let mut grad_joint = self
            .params
            .backward(&mean_tape, grad_mean, true)?
            .expect("input gradient requested");
        let g2 = self
            .params
            .backward(&lv_tape, grad_lv, true)?
            .expect("input gradient requested");
        for (a, b) in grad_joint.as_mut_slice().iter_mut().zip(g2.as_slice()) {
            *a += b;
        }
        for (k, tape) in enc_tapes.iter().enumerate() {
            let g = grad_joint.columns(k * self.hidden, self.hidden);
            self.params.backward(tape, g, false)?;
        }

        Ok(BatchElbo {
            reconstruction,
            latent,
        })
    }
}
