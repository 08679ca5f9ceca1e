use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) first: Vec<f64>,
    pub(crate) second: Vec<f64>,
    pub(crate) steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParameterSet) -> Self {
        let n = params.num_scalars();
        Self {
            config,
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn from_state(
        config: AdamConfig,
        first: Vec<f64>,
        second: Vec<f64>,
        steps: u64,
    ) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::Checkpoint("adam moment lengths differ".into()));
        }
        Ok(Self {
            config,
            first,
            second,
            steps,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// Applies one bias-corrected Adam update from the accumulated gradients
    /// and zeroes the gradient buffer. `epoch` is only used for diagnostics.
    pub fn step(&mut self, params: &mut ParameterSet, epoch: usize) -> Result<()> {
        if self.first.len() != params.num_scalars() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} scalars, parameter set has {}",
                self.first.len(),
                params.num_scalars()
            )));
        }
        if let Some(pos) = params.first_non_finite_gradient() {
            return Err(Error::Training {
                epoch,
                sample: None,
                reason: format!("non-finite gradient at parameter {pos}"),
            });
        }
        self.steps += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.steps as i32;
        let inv_c1 = 1.0 / (1.0 - beta1.powi(t));
        let inv_c2 = 1.0 / (1.0 - beta2.powi(t));
        let (m, v) = (&mut self.first, &mut self.second);
        let mut off = 0;
        let mut finite = true;
        params.for_each_slice_mut(|values, grads| {
            let n = values.len();
            let (m, v) = (&mut m[off..off + n], &mut v[off..off + n]);
            for i in 0..n {
                let g = grads[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                values[i] -= lr * (m[i] * inv_c1) / ((v[i] * inv_c2).sqrt() + eps);
            }
            finite &= values.iter().all(|p| p.is_finite());
            grads.fill(0.0);
            off += n;
        });
        if !finite {
            return Err(Error::Training {
                epoch,
                sample: None,
                reason: "parameters became non-finite after optimizer step".into(),
            });
        }
        Ok(())
    }
}
