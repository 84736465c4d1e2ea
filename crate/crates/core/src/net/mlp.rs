//! Fully-connected tanh network with hand-written backpropagation.
//!
//! Every hidden layer computes `a = tanh(W x + b)`; the last layer is affine
//! (`y = W x + b`). Weights are row-major with shape `(out, in)`. All
//! parameters live in one flat buffer laid out layer by layer as
//! `[W_0, b_0, W_1, b_1, ...]`, so optimizers and gradient buffers are plain
//! `f64` slices.
//!
//! The batched paths take row-major `(rows, width)` matrices and go through
//! `matrixmultiply`; a single sample is a batch of one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Ordered layer widths, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a network needs at least 2 layer widths, got {}",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be >= 1, got {sizes:?}"
            )));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Cached activations of one forward pass over `rows` inputs.
///
/// `acts[0]` is the input, `acts[depth]` the output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    sizes: Vec<usize>,
    rows: usize,
    acts: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    /// Row-major `(rows, output_width)` network output.
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.acts.pop().unwrap()
    }
}

/// Network parameters: a [`LayerSpec`] plus the flat weight/bias buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: LayerSpec,
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn glorot(spec: LayerSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(spec);
        for l in 0..net.spec.depth() {
            let (fan_in, fan_out) = (net.spec.sizes[l], net.spec.sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in net.weights_mut(l) {
                *w = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        let params = vec![0.0; spec.param_count()];
        Self { spec, params }
    }

    pub fn from_params(spec: LayerSpec, params: Vec<f64>) -> Result<Self> {
        check_len("network parameters", spec.param_count(), params.len())?;
        crate::error::check_finite("network parameters", &params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.spec.sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(layer);
        start..start + self.spec.sizes[layer] * self.spec.sizes[layer + 1]
    }

    fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let end = self.weight_range(layer).end;
        end..end + self.spec.sizes[layer + 1]
    }

    /// Row-major `(out, in)` weights of `layer`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.weight_range(layer)]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.weight_range(layer);
        &mut self.params[r]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.params[self.bias_range(layer)]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.bias_range(layer);
        &mut self.params[r]
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
        let trace = self.forward_batch(input, 1)?;
        Ok((trace.output().to_vec(), trace))
    }

    /// Forward pass for `rows` inputs stored row-major in `inputs`.
    pub fn forward_batch(&self, inputs: &[f64], rows: usize) -> Result<ForwardTrace> {
        check_len(
            "network input",
            rows * self.spec.input_width(),
            inputs.len(),
        )?;
        let depth = self.spec.depth();
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(inputs.to_vec());
        for l in 0..depth {
            let (n_in, n_out) = (self.spec.sizes[l], self.spec.sizes[l + 1]);
            let mut z = Vec::with_capacity(rows * n_out);
            let b = self.biases(l);
            for _ in 0..rows {
                z.extend_from_slice(b);
            }
            // z += X W^T
            gemm(
                rows,
                n_in,
                n_out,
                &acts[l],
                (n_in, 1),
                self.weights(l),
                (1, n_in),
                1.0,
                &mut z,
                (n_out, 1),
            );
            if l + 1 < depth {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(ForwardTrace {
            sizes: self.spec.sizes.clone(),
            rows,
            acts,
        })
    }

    /// Gradients of `output_grad · output` with respect to every parameter
    /// and to the input, for a single-sample trace.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("trace rows", 1, trace.rows)?;
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_batch(trace, output_grad, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Batched backward pass.
    ///
    /// Parameter gradients, summed over rows, are *added* into `param_grads`
    /// when given. Returns the row-major `(rows, input_width)` input
    /// gradients.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        output_grads: &[f64],
        mut param_grads: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        if trace.sizes != self.spec.sizes {
            return Err(Error::InvalidConfig(format!(
                "trace was produced by a network with widths {:?}, not {:?}",
                trace.sizes, self.spec.sizes
            )));
        }
        let rows = trace.rows;
        check_len(
            "output gradient",
            rows * self.spec.output_width(),
            output_grads.len(),
        )?;
        if let Some(g) = param_grads.as_deref() {
            check_len("parameter gradient buffer", self.params.len(), g.len())?;
        }

        let depth = self.spec.depth();
        let mut delta = output_grads.to_vec();
        for l in (0..depth).rev() {
            let (n_in, n_out) = (self.spec.sizes[l], self.spec.sizes[l + 1]);
            if l + 1 < depth {
                // through tanh: d/dz = (1 - a^2)
                for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            if let Some(g) = param_grads.as_deref_mut() {
                let wr = self.weight_range(l);
                // dW += dZ^T X
                gemm(
                    n_out,
                    rows,
                    n_in,
                    &delta,
                    (1, n_out),
                    &trace.acts[l],
                    (n_in, 1),
                    1.0,
                    &mut g[wr],
                    (n_in, 1),
                );
                let br = self.bias_range(l);
                for row in delta.chunks_exact(n_out) {
                    for (gb, d) in g[br.clone()].iter_mut().zip(row) {
                        *gb += d;
                    }
                }
            }
            // dX = dZ W
            let mut prev = vec![0.0; rows * n_in];
            gemm(
                rows,
                n_out,
                n_in,
                &delta,
                (n_out, 1),
                self.weights(l),
                (n_in, 1),
                0.0,
                &mut prev,
                (n_in, 1),
            );
            delta = prev;
        }
        Ok(delta)
    }
}

/// `C = A B + beta C` on strided row/column layouts, `A: m×k`, `B: k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent =
        |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(k == 0 || a.len() >= extent(m, k, rsa, csa));
    assert!(k == 0 || b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
