//! KL-based multimodal integration measures.
//!
//! Every measure compares two reconstructions of the same sample `x` made with
//! the latent mean: `p` from the full input and `q` from a muted copy, and
//! averages `KL(p || q)` restricted to an index set over the evaluation set.
//!
//! | family                  | q-side input                               |
//! |-------------------------|--------------------------------------------|
//! | single-modality error Δ | everything muted except `M` at `t-1`       |
//! | loss of precision δ     | `M` muted at `t-1` and `t`, rest observed  |
//! | baseline                | everything muted                           |
//!
//! Scope `modality` restricts the KL sum to `I(M)` (both timesteps of `M`);
//! scope `all` sums over every coordinate.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskSpec};
use crate::error::{Error, Result};
use crate::gaussian::DiagonalGaussian;
use crate::layout::{Modality, ModalityLayout, Timestep};
use crate::model::MultimodalVae;
use crate::nn::Matrix;

pub const DEFAULT_EVAL_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureFamily {
    SingleModalityError,
    LossOfPrecision,
    Baseline,
}

impl MeasureFamily {
    pub fn name(self) -> &'static str {
        match self {
            MeasureFamily::SingleModalityError => "single_modality_error",
            MeasureFamily::LossOfPrecision => "loss_of_precision",
            MeasureFamily::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Subscript `M`: only the coordinates of the modality.
    Modality,
    /// Subscript `all`: every coordinate.
    All,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::Modality => "modality",
            Scope::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasureKind {
    family: MeasureFamily,
    scope: Scope,
    modality: Option<Modality>,
}

impl MeasureKind {
    /// Δ_M (scope `Modality`) or Δ_all (scope `All`).
    pub fn single_modality_error(m: Modality, scope: Scope) -> Self {
        Self {
            family: MeasureFamily::SingleModalityError,
            scope,
            modality: Some(m),
        }
    }

    /// δ_M or δ_all.
    pub fn loss_of_precision(m: Modality, scope: Scope) -> Self {
        Self {
            family: MeasureFamily::LossOfPrecision,
            scope,
            modality: Some(m),
        }
    }

    pub fn baseline() -> Self {
        Self {
            family: MeasureFamily::Baseline,
            scope: Scope::All,
            modality: None,
        }
    }

    pub fn family(&self) -> MeasureFamily {
        self.family
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn modality(&self) -> Option<Modality> {
        self.modality
    }

    /// Mask applied to the input before computing the q-side reconstruction.
    pub fn q_mask(&self) -> MaskSpec {
        match (self.family, self.modality) {
            (MeasureFamily::SingleModalityError, Some(m)) => MaskSpec::only(m, Timestep::Previous),
            (MeasureFamily::LossOfPrecision, Some(m)) => MaskSpec::modality(m),
            _ => MaskSpec::all(),
        }
    }

    pub fn index_range(&self, layout: &ModalityLayout) -> Range<usize> {
        match (self.scope, self.modality) {
            (Scope::Modality, Some(m)) => layout.modality_range(m),
            _ => 0..layout.total_dim(),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.modality {
            Some(m) => write!(f, "{}[{}]({m})", self.family.name(), self.scope.name()),
            None => f.write_str(self.family.name()),
        }
    }
}

/// `½ Σ_i [ln(σ̃²/σ²) − 1 + σ²/σ̃² + (μ̃ − μ)²/σ̃²]` over `indices`.
#[inline]
fn kl_terms(
    p_mean: &[f64],
    p_var: &[f64],
    q_mean: &[f64],
    q_var: &[f64],
    indices: impl Iterator<Item = usize>,
) -> f64 {
    let mut acc = 0.0;
    for i in indices {
        let ratio = p_var[i] / q_var[i];
        let d = q_mean[i] - p_mean[i];
        acc += -ratio.ln() - 1.0 + ratio + d * d / q_var[i];
    }
    0.5 * acc
}

/// `KL(p || q)` between diagonal Gaussians restricted to `indices`.
pub fn kl_diag(p: &DiagonalGaussian, q: &DiagonalGaussian, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Usage("kl_diag needs a non-empty index set".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::Usage(format!(
            "densities have dimensions {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= p.dim()) {
        return Err(Error::Usage(format!("index {bad} outside 0..{}", p.dim())));
    }
    Ok(kl_terms(
        p.mean(),
        p.variance(),
        q.mean(),
        q.variance(),
        indices.iter().copied(),
    ))
}

/// The four measures of one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityMeasures {
    pub modality: Modality,
    /// Δ_M(M)
    pub single_error_modality: f64,
    /// Δ_all(M)
    pub single_error_all: f64,
    /// δ_M(M)
    pub precision_modality: f64,
    /// δ_all(M)
    pub precision_all: f64,
}

impl ModalityMeasures {
    pub fn get(&self, family: MeasureFamily, scope: Scope) -> Option<f64> {
        match (family, scope) {
            (MeasureFamily::SingleModalityError, Scope::Modality) => Some(self.single_error_modality),
            (MeasureFamily::SingleModalityError, Scope::All) => Some(self.single_error_all),
            (MeasureFamily::LossOfPrecision, Scope::Modality) => Some(self.precision_modality),
            (MeasureFamily::LossOfPrecision, Scope::All) => Some(self.precision_all),
            (MeasureFamily::Baseline, _) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub epoch: usize,
    pub modalities: Vec<ModalityMeasures>,
    pub baseline: f64,
    pub prediction_error: f64,
    pub eval_set_size: usize,
}

impl MeasureReport {
    pub fn modality(&self, m: Modality) -> Option<&ModalityMeasures> {
        self.modalities.iter().find(|mm| mm.modality == m)
    }

    /// Checks non-negativity and the subset inequalities with `slack`.
    pub fn check_invariants(&self, slack: f64) -> Result<()> {
        let fail = |what: String| Err(Error::Experiment(format!("epoch {}: {what}", self.epoch)));
        for mm in &self.modalities {
            let vals = [
                mm.single_error_modality,
                mm.single_error_all,
                mm.precision_modality,
                mm.precision_all,
            ];
            if vals.iter().any(|v| !v.is_finite() || *v < -slack) {
                return fail(format!("{} has invalid measure values {vals:?}", mm.modality));
            }
            if mm.single_error_all + slack < mm.single_error_modality {
                return fail(format!("Δ_all < Δ_M for {}", mm.modality));
            }
            if mm.precision_all + slack < mm.precision_modality {
                return fail(format!("δ_all < δ_M for {}", mm.modality));
            }
        }
        if !self.baseline.is_finite() || self.baseline < -slack {
            return fail(format!("invalid baseline {}", self.baseline));
        }
        Ok(())
    }
}

/// Full-input reconstructions of an evaluation set, reused across measures.
pub struct MeasureEvaluator<'a> {
    model: &'a MultimodalVae,
    eval: &'a Dataset,
    p_mean: Matrix,
    p_var: Matrix,
}

impl<'a> MeasureEvaluator<'a> {
    /// Fails when `expected_size` is given and differs from the set's size.
    pub fn new(
        model: &'a MultimodalVae,
        eval: &'a Dataset,
        expected_size: Option<usize>,
    ) -> Result<Self> {
        if let Some(n) = expected_size {
            if eval.len() != n {
                return Err(Error::Usage(format!(
                    "evaluation set has {} samples, configured size is {n}",
                    eval.len()
                )));
            }
        }
        if eval.is_empty() {
            return Err(Error::Usage("empty evaluation set".into()));
        }
        if eval.layout() != model.layout() {
            return Err(Error::Usage("evaluation set layout differs from model".into()));
        }
        let (p_mean, mut p_var) = model.reconstruct_mean_batch(eval.samples())?;
        p_var.map_inplace(f64::exp);
        Ok(Self {
            model,
            eval,
            p_mean,
            p_var,
        })
    }

    /// Mean and variance of `p(x̂ | x)` for every evaluation sample.
    pub fn full_reconstruction(&self) -> (&Matrix, &Matrix) {
        (&self.p_mean, &self.p_var)
    }

    /// Mean and variance of the reconstructions from inputs muted by `mask`.
    pub fn masked_reconstruction(&self, mask: &MaskSpec) -> Result<(Matrix, Matrix)> {
        let layout = self.model.layout();
        let mut x = self.eval.samples().clone();
        for r in 0..x.rows() {
            mask.apply_in_place(x.row_mut(r), layout);
        }
        let (mean, mut var) = self.model.reconstruct_mean_batch(&x)?;
        var.map_inplace(f64::exp);
        Ok((mean, var))
    }

    pub fn measure(&self, kind: MeasureKind) -> Result<f64> {
        let (q_mean, q_var) = self.masked_reconstruction(&kind.q_mask())?;
        let range = kind.index_range(self.model.layout());
        Ok(self.average_kl(&q_mean, &q_var, range))
    }

    fn average_kl(&self, q_mean: &Matrix, q_var: &Matrix, range: Range<usize>) -> f64 {
        let n = self.p_mean.rows();
        let mut total = 0.0;
        for r in 0..n {
            total += kl_terms(
                self.p_mean.row(r),
                self.p_var.row(r),
                q_mean.row(r),
                q_var.row(r),
                range.clone(),
            );
        }
        total / n as f64
    }

    pub fn baseline(&self) -> Result<f64> {
        self.measure(MeasureKind::baseline())
    }

    /// Mean Euclidean distance between each sample and its full-input
    /// reconstruction mean.
    pub fn prediction_error(&self) -> f64 {
        let x = self.eval.samples();
        let n = x.rows();
        let mut total = 0.0;
        for r in 0..n {
            let sq: f64 = x
                .row(r)
                .iter()
                .zip(self.p_mean.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += sq.sqrt();
        }
        total / n as f64
    }

    /// All measures for every modality plus baseline and prediction error.
    pub fn report(&self, epoch: usize) -> Result<MeasureReport> {
        let layout = self.model.layout();
        let mut modalities = Vec::new();
        for m in layout.modalities() {
            let own = layout.modality_range(m);
            let all = 0..layout.total_dim();
            let (dm, dv) =
                self.masked_reconstruction(&MeasureKind::single_modality_error(m, Scope::All).q_mask())?;
            let (pm, pv) =
                self.masked_reconstruction(&MeasureKind::loss_of_precision(m, Scope::All).q_mask())?;
            modalities.push(ModalityMeasures {
                modality: m,
                single_error_modality: self.average_kl(&dm, &dv, own.clone()),
                single_error_all: self.average_kl(&dm, &dv, all.clone()),
                precision_modality: self.average_kl(&pm, &pv, own),
                precision_all: self.average_kl(&pm, &pv, all),
            });
        }
        Ok(MeasureReport {
            epoch,
            modalities,
            baseline: self.baseline()?,
            prediction_error: self.prediction_error(),
            eval_set_size: self.eval.len(),
        })
    }
}

pub fn measure(
    model: &MultimodalVae,
    eval_set: &Dataset,
    kind: MeasureKind,
    expected_size: Option<usize>,
) -> Result<f64> {
    MeasureEvaluator::new(model, eval_set, expected_size)?.measure(kind)
}

pub fn baseline(model: &MultimodalVae, eval_set: &Dataset, expected_size: Option<usize>) -> Result<f64> {
    MeasureEvaluator::new(model, eval_set, expected_size)?.baseline()
}

pub fn prediction_error(model: &MultimodalVae, eval_set: &Dataset) -> Result<f64> {
    Ok(MeasureEvaluator::new(model, eval_set, None)?.prediction_error())
}
