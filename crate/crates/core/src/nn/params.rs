use super::layer::DenseLayer;
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Index of a layer inside a [`ParameterSet`].
pub type GroupId = usize;

#[derive(Debug, Clone)]
struct ParamGroup {
    path: String,
    layer: DenseLayer,
    grad_weights: Vec<f64>,
    grad_biases: Vec<f64>,
}

/// Every trainable layer of a model, addressable by path, with a gradient
/// buffer of identical shape.
///
/// Parameters are enumerated in a fixed flat order: groups in insertion order,
/// and within a group all weights (row-major) followed by all biases.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    groups: Vec<ParamGroup>,
    generation: u64,
}

/// Activations recorded by [`ParameterSet::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    steps: Vec<TapeStep>,
}

#[derive(Debug, Clone)]
struct TapeStep {
    group: GroupId,
    input: Matrix,
    output: Matrix,
}

impl Tape {
    /// The input the stack was evaluated on.
    pub fn input(&self) -> &Matrix {
        &self.steps[0].input
    }

    pub fn output(&self) -> &Matrix {
        &self.steps[self.steps.len() - 1].output
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<String>, layer: DenseLayer) -> Result<GroupId> {
        let path = path.into();
        if self.find(&path).is_some() {
            return Err(Error::Config(format!("duplicate parameter path {path}")));
        }
        let grad_weights = vec![0.0; layer.weights.len()];
        let grad_biases = vec![0.0; layer.biases.len()];
        self.groups.push(ParamGroup {
            path,
            layer,
            grad_weights,
            grad_biases,
        });
        self.generation += 1;
        Ok(self.groups.len() - 1)
    }

    pub fn find(&self, path: &str) -> Option<GroupId> {
        self.groups.iter().position(|g| g.path == path)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn path(&self, id: GroupId) -> &str {
        &self.groups[id].path
    }

    pub fn layer(&self, id: GroupId) -> &DenseLayer {
        &self.groups[id].layer
    }

    /// Mutable access invalidates any outstanding tapes.
    pub fn layer_mut(&mut self, id: GroupId) -> &mut DenseLayer {
        self.generation += 1;
        &mut self.groups[id].layer
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, &DenseLayer)> {
        self.groups.iter().map(|g| (g.path.as_str(), &g.layer))
    }

    pub fn num_scalars(&self) -> usize {
        self.groups.iter().map(|g| g.layer.num_params()).sum()
    }

    /// Flat copy of all parameters.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for g in &self.groups {
            out.extend_from_slice(&g.layer.weights);
            out.extend_from_slice(&g.layer.biases);
        }
        out
    }

    /// Flat copy of the gradient buffer, same order as [`Self::values`].
    pub fn gradients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for g in &self.groups {
            out.extend_from_slice(&g.grad_weights);
            out.extend_from_slice(&g.grad_biases);
        }
        out
    }

    /// Flat index of the first NaN or infinite gradient entry.
    pub fn first_non_finite_gradient(&self) -> Option<usize> {
        let mut off = 0;
        for g in &self.groups {
            for part in [&g.grad_weights, &g.grad_biases] {
                if let Some(i) = part.iter().position(|v| !v.is_finite()) {
                    return Some(off + i);
                }
                off += part.len();
            }
        }
        None
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_scalars() {
            return Err(Error::Usage(format!(
                "expected {} parameter values, got {}",
                self.num_scalars(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Usage("parameter values must be finite".into()));
        }
        let mut off = 0;
        for g in &mut self.groups {
            let nw = g.layer.weights.len();
            let nb = g.layer.biases.len();
            g.layer.weights.copy_from_slice(&values[off..off + nw]);
            g.layer.biases.copy_from_slice(&values[off + nw..off + nw + nb]);
            off += nw + nb;
        }
        self.generation += 1;
        Ok(())
    }

    /// Reads the scalar at flat index `i`.
    pub fn get(&self, i: usize) -> f64 {
        let (g, local) = self.locate(i);
        let layer = &self.groups[g].layer;
        if local < layer.weights.len() {
            layer.weights[local]
        } else {
            layer.biases[local - layer.weights.len()]
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let (g, local) = self.locate(i);
        let layer = &mut self.groups[g].layer;
        if local < layer.weights.len() {
            layer.weights[local] = value;
        } else {
            let nw = layer.weights.len();
            layer.biases[local - nw] = value;
        }
        self.generation += 1;
    }

    fn locate(&self, mut i: usize) -> (GroupId, usize) {
        for (g, group) in self.groups.iter().enumerate() {
            let n = group.layer.num_params();
            if i < n {
                return (g, i);
            }
            i -= n;
        }
        panic!("parameter index out of range");
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.groups {
            g.grad_weights.fill(0.0);
            g.grad_biases.fill(0.0);
        }
    }

    /// Visits `(parameter, gradient)` slices group by group in flat order.
    pub(crate) fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64], &mut [f64])) {
        for g in &mut self.groups {
            f(&mut g.layer.weights, &mut g.grad_weights);
            f(&mut g.layer.biases, &mut g.grad_biases);
        }
        self.generation += 1;
    }

    /// Evaluates the layer stack `stack` on each row of `input`.
    pub fn forward(&self, stack: &[GroupId], input: Matrix) -> Result<(Matrix, Tape)> {
        if stack.is_empty() {
            return Err(Error::Config("empty layer stack".into()));
        }
        let mut steps = Vec::with_capacity(stack.len());
        let mut current = input;
        for &id in stack {
            let layer = &self
                .groups
                .get(id)
                .ok_or_else(|| Error::Config(format!("unknown parameter group {id}")))?
                .layer;
            let out = layer.apply(&current)?;
            steps.push(TapeStep {
                group: id,
                input: current,
                output: out.clone(),
            });
            current = out;
        }
        Ok((
            current,
            Tape {
                generation: self.generation,
                steps,
            },
        ))
    }

    /// Single-vector convenience wrapper around [`Self::forward`].
    pub fn forward_vector(&self, stack: &[GroupId], input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let (out, tape) = self.forward(stack, Matrix::row_vector(input))?;
        Ok((out.into_vec(), tape))
    }

    /// Accumulates `d loss / d parameter` for every layer on `tape` into the
    /// gradient buffer. Returns the gradient w.r.t. the stack input when
    /// `want_input_grad` is set.
    pub fn backward(
        &mut self,
        tape: &Tape,
        grad_output: Matrix,
        want_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        if tape.generation != self.generation {
            return Err(Error::Usage(
                "tape is stale: parameters changed since the forward pass".into(),
            ));
        }
        let out = tape.output();
        if grad_output.rows() != out.rows() || grad_output.cols() != out.cols() {
            return Err(Error::Usage(format!(
                "output gradient is {}x{}, tape output is {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grad = grad_output;
        for (pos, step) in tape.steps.iter().enumerate().rev() {
            let need = pos > 0 || want_input_grad;
            let g = &mut self.groups[step.group];
            let next = g.layer.backprop(
                &step.input,
                &step.output,
                grad,
                &mut g.grad_weights,
                &mut g.grad_biases,
                need,
            );
            match next {
                Some(m) => grad = m,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    /// Vector form of [`Self::backward`].
    pub fn backward_vector(&mut self, tape: &Tape, grad_output: &[f64]) -> Result<Vec<f64>> {
        let g = self.backward(tape, Matrix::row_vector(grad_output), true)?;
        Ok(g.expect("input gradient requested").into_vec())
    }
}
