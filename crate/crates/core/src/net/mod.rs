//! Feed-forward network with the two reverse-mode paths needed here:
//! gradients with respect to the weights and with respect to the inputs.

mod checkpoint;
mod optim;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Normalization;
use crate::error::{Error, Result};

pub use checkpoint::{load_model, save_model};
pub use optim::{Adam, Optimizer, OptimizerConfig, SgdMomentum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Softplus,
}

impl Activation {
    /// Value and derivative at the pre-activation `z`. ReLU'(0) = 0.
    fn eval(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Softplus => {
                // log(1 + e^z) without overflow
                let e = (-z.abs()).exp();
                let s = 1.0 / (1.0 + e);
                if z >= 0.0 {
                    (z + e.ln_1p(), s)
                } else {
                    (e.ln_1p(), e * s)
                }
            }
        }
    }
}

/// Multilayer perceptron `F_θ(x, α)` with a flat parameter vector. Layer `l`
/// stores `W_l` (`in × out`, row-major) followed by `b_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    pub params: Vec<f64>,
    pub activation: Activation,
    /// First input column holding a system parameter.
    pub input_split: usize,
    pub normalization: Option<Normalization>,
}

/// Number of weights and biases for the given layer sizes.
pub fn parameter_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// He-uniform weights (`U(±√(6/fan_in))`), zero biases.
pub fn init_model(layer_dims: &[usize], activation: Activation, input_split: usize, seed: u64) -> Result<MlpModel> {
    if layer_dims.len() < 3 {
        return Err(Error::arg("network needs at least one hidden layer"));
    }
    let mut model = MlpModel::from_parts(layer_dims.to_vec(), vec![0.0; parameter_count(layer_dims)], activation, input_split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = 0;
    for w in layer_dims.windows(2) {
        let bound = (6.0 / w[0] as f64).sqrt();
        for p in &mut model.params[offset..offset + w[0] * w[1]] {
            *p = rng.random_range(-bound..bound);
        }
        offset += w[0] * w[1] + w[1];
    }
    Ok(model)
}

/// Intermediate values kept for the backward pass.
struct Tape {
    /// Layer inputs: `acts[0]` is the batch, `acts[l]` the output of hidden layer `l`.
    acts: Vec<Array2<f64>>,
    /// Activation slopes of hidden layers.
    slopes: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpModel {
    pub fn from_parts(layer_dims: Vec<usize>, params: Vec<f64>, activation: Activation, input_split: usize) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::arg(format!("invalid layer sizes {layer_dims:?}")));
        }
        if params.len() != parameter_count(&layer_dims) {
            return Err(Error::shape(format!(
                "{} parameters given, layers {layer_dims:?} need {}",
                params.len(),
                parameter_count(&layer_dims)
            )));
        }
        if input_split > layer_dims[0] {
            return Err(Error::arg(format!("input split {input_split} exceeds input width {}", layer_dims[0])));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::arg("non-finite weight"));
        }
        Ok(Self { layer_dims, params, activation, input_split, normalization: None })
    }

    pub fn with_normalization(mut self, normalization: Option<Normalization>) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }

    pub fn param_input_dim(&self) -> usize {
        self.input_dim() - self.input_split
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn offsets(&self, l: usize) -> (usize, usize, usize) {
        let start: usize = self.layer_dims[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        (start, start + i * o, start + i * o + o)
    }

    fn weight(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (w, b, end) = self.offsets(l);
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        (
            ArrayView2::from_shape((i, o), &self.params[w..b]).expect("weight shape"),
            ArrayView1::from(&self.params[b..end]),
        )
    }

    /// Checks the model maps `input_dim` columns to `output_dim`.
    pub fn expect_dims(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        if self.input_dim() != input_dim || self.output_dim() != output_dim {
            return Err(Error::shape(format!(
                "model maps {} → {}, expected {input_dim} → {output_dim}",
                self.input_dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(format!("batch has {} columns, model expects {}", batch.ncols(), self.input_dim())));
        }
        Ok(())
    }

    fn run(&self, batch: ArrayView2<f64>) -> Tape {
        let mut acts = Vec::with_capacity(self.layers());
        let mut slopes = Vec::with_capacity(self.layers() - 1);
        let mut x = batch.to_owned();
        for l in 0..self.layers() {
            let (w, b) = self.weight(l);
            let mut z = x.dot(&w);
            z += &b;
            acts.push(x);
            if l + 1 == self.layers() {
                return Tape { acts, slopes, output: z };
            }
            let act = self.activation;
            let mut slope = Array2::zeros(z.raw_dim());
            Zip::from(&mut z).and(&mut slope).for_each(|v, d| {
                let (a, da) = act.eval(*v);
                *v = a;
                *d = da;
            });
            slopes.push(slope);
            x = z;
        }
        unreachable!("at least one layer")
    }

    /// `B × out` outputs; hidden layers use the activation, the output layer is linear.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(batch)?;
        Ok(self.run(batch).output)
    }

    /// Backpropagates `output_grad` through a recorded pass. Returns the input
    /// gradient, and accumulates the weight gradient when `weights` is given.
    fn pullback(&self, tape: &Tape, output_grad: ArrayView2<f64>, mut weights: Option<&mut [f64]>) -> Array2<f64> {
        let mut delta = output_grad.to_owned();
        for l in (0..self.layers()).rev() {
            let (w, _) = self.weight(l);
            if let Some(g) = weights.as_deref_mut() {
                let (wo, bo, end) = self.offsets(l);
                let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
                let mut gw = ArrayViewMut2::from_shape((i, o), &mut g[wo..bo]).expect("weight shape");
                gw += &tape.acts[l].t().dot(&delta);
                for (gb, col) in g[bo..end].iter_mut().zip(delta.columns()) {
                    *gb += col.sum();
                }
            }
            let mut back = delta.dot(&w.t());
            if l > 0 {
                back *= &tape.slopes[l - 1];
            }
            delta = back;
        }
        delta
    }

    fn check_output_grad(&self, batch: ArrayView2<f64>, output_grad: ArrayView2<f64>) -> Result<()> {
        self.check_batch(batch)?;
        if output_grad.dim() != (batch.nrows(), self.output_dim()) {
            return Err(Error::shape(format!(
                "output gradient is {:?}, expected {:?}",
                output_grad.dim(),
                (batch.nrows(), self.output_dim())
            )));
        }
        Ok(())
    }

    /// Gradient of `Σ_b ⟨F(x_b), G_b⟩` with respect to the flat parameters.
    pub fn backward_weights(&self, batch: ArrayView2<f64>, output_grad: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_output_grad(batch, output_grad)?;
        let tape = self.run(batch);
        let mut g = vec![0.0; self.params.len()];
        self.pullback(&tape, output_grad, Some(&mut g));
        Ok(g)
    }

    /// Gradient of `Σ_b ⟨F(x_b), G_b⟩` with respect to every input column.
    pub fn input_gradient(&self, batch: ArrayView2<f64>, output_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_output_grad(batch, output_grad)?;
        let tape = self.run(batch);
        Ok(self.pullback(&tape, output_grad, None))
    }

    /// As [`input_gradient`](Self::input_gradient), restricted to the
    /// parameter columns (`≥ input_split`).
    pub fn backward_input(&self, batch: ArrayView2<f64>, output_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.input_gradient(batch, output_grad)?.slice(s![.., self.input_split..]).to_owned())
    }

    /// Mean squared error over rows and outputs together with its weight gradient.
    pub fn mse_and_weight_grad(&self, batch: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        self.check_output_grad(batch, targets)?;
        let tape = self.run(batch);
        let count = (targets.len()).max(1) as f64;
        let resid = &tape.output - &targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / count;
        let grad_out = resid * (2.0 / count);
        let mut g = vec![0.0; self.params.len()];
        self.pullback(&tape, grad_out.view(), Some(&mut g));
        Ok((loss, g))
    }

    /// Mean squared error over rows and outputs together with the gradient
    /// with respect to every input column.
    pub fn mse_and_input_grad(&self, batch: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        self.check_output_grad(batch, targets)?;
        let tape = self.run(batch);
        let count = (targets.len()).max(1) as f64;
        let resid = &tape.output - &targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / count;
        let grad_out = resid * (2.0 / count);
        Ok((loss, self.pullback(&tape, grad_out.view(), None)))
    }

    pub fn mse(&self, batch: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        self.check_output_grad(batch, targets)?;
        let out = self.run(batch).output;
        Ok(out.iter().zip(targets.iter()).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / targets.len().max(1) as f64)
    }
}

/// Raw weights of layer `l` as `(W, b)`; for tests and inspection.
pub fn layer_weights(model: &MlpModel, l: usize) -> (Array2<f64>, Vec<f64>) {
    let (w, b) = model.weight(l);
    (w.to_owned(), b.to_vec())
}
