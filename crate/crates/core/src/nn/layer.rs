use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use super::rng::RngState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

/// `e^x` for `x` in `[-40, 0]`: Cody-Waite reduction to `|r| <= ln2/2` and a
/// degree-13 Taylor polynomial. Branch-free so that loops over it vectorize.
#[inline]
fn exp_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Adding and subtracting 1.5 * 2^52 rounds to the nearest integer.
    const ROUND: f64 = 6_755_399_441_055_744.0;
    let x = x.max(-40.0);
    let kb = x * LOG2E + ROUND;
    let k = kb - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // The low mantissa bits of `kb` hold `k`; shifting them into the
    // exponent field builds 2^k without a float-to-int conversion.
    let scale = f64::from_bits(kb.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// `tanh` from one reduced-range `exp`; libm's version goes through `expm1`
/// and dominated the training profile.
#[inline]
pub(crate) fn fast_tanh(x: f64) -> f64 {
    let e = exp_nonpositive(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn tanh_slice(values: &mut [f64]) {
    for v in values {
        *v = fast_tanh(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_slice_avx2(values: &mut [f64]) {
    tanh_slice(values)
}

/// Elementwise `tanh`, using 256-bit vectors when the CPU has them. Every
/// lane performs the same IEEE operations, so results do not depend on the path.
pub(crate) fn tanh_inplace(values: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at runtime.
        unsafe { tanh_slice_avx2(values) };
        return;
    }
    tanh_slice(values)
}

/// Affine map followed by an elementwise activation.
///
/// `weights` is stored row-major with shape `out_size x in_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_size: usize,
    out_size: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_size: usize,
        out_size: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_size == 0 || out_size == 0 {
            return Err(Error::Config(format!(
                "dense layer must have non-zero sizes, got {in_size}->{out_size}"
            )));
        }
        if weights.len() != in_size * out_size || biases.len() != out_size {
            return Err(Error::Config(format!(
                "dense layer {in_size}->{out_size} given {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if !weights.iter().chain(&biases).all(|v| v.is_finite()) {
            return Err(Error::Config("dense layer parameters must be finite".into()));
        }
        Ok(Self {
            in_size,
            out_size,
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(in_size: usize, out_size: usize, activation: Activation) -> Result<Self> {
        Self::new(
            in_size,
            out_size,
            vec![0.0; in_size * out_size],
            vec![0.0; out_size],
            activation,
        )
    }

    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(
        in_size: usize,
        out_size: usize,
        activation: Activation,
        rng: &mut RngState,
    ) -> Result<Self> {
        let a = (6.0 / (in_size + out_size) as f64).sqrt();
        let weights = (0..in_size * out_size)
            .map(|_| rng.uniform(-a, a))
            .collect();
        Self::new(in_size, out_size, weights, vec![0.0; out_size], activation)
    }

    #[inline]
    pub fn in_size(&self) -> usize {
        self.in_size
    }

    #[inline]
    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Evaluates the layer on every row of `input`.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_size {
            return Err(Error::Config(format!(
                "layer expects {} inputs, got {}",
                self.in_size,
                input.cols()
            )));
        }
        let rows = input.rows();
        let mut data = Vec::with_capacity(rows * self.out_size);
        for _ in 0..rows {
            data.extend_from_slice(&self.biases);
        }
        let mut out = Matrix::from_vec(rows, self.out_size, data);
        gemm(
            rows,
            self.in_size,
            self.out_size,
            1.0,
            input.as_slice(),
            false,
            &self.weights,
            true,
            1.0,
            out.as_mut_slice(),
        );
        if self.activation == Activation::Tanh {
            tanh_inplace(out.as_mut_slice());
        }
        Ok(out)
    }

    /// Back-propagates `grad_out` (gradient w.r.t. this layer's output) given the
    /// forward `input` and `output`. Accumulates parameter gradients into
    /// `grad_w` / `grad_b` and optionally returns the gradient w.r.t. `input`.
    pub(crate) fn backprop(
        &self,
        input: &Matrix,
        output: &Matrix,
        mut grad_out: Matrix,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Matrix> {
        let rows = input.rows();
        if self.activation == Activation::Tanh {
            for (g, y) in grad_out.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *g *= 1.0 - y * y;
            }
        }
        // dW += dpre^T . input
        gemm(
            self.out_size,
            rows,
            self.in_size,
            1.0,
            grad_out.as_slice(),
            true,
            input.as_slice(),
            false,
            1.0,
            grad_w,
        );
        for r in 0..rows {
            for (gb, g) in grad_b.iter_mut().zip(grad_out.row(r)) {
                *gb += g;
            }
        }
        if !want_input_grad {
            return None;
        }
        let mut grad_in = Matrix::zeros(rows, self.in_size);
        gemm(
            rows,
            self.out_size,
            self.in_size,
            1.0,
            grad_out.as_slice(),
            false,
            &self.weights,
            false,
            0.0,
            grad_in.as_mut_slice(),
        );
        Some(grad_in)
    }
}
