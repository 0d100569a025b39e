//! Dense feed-forward networks with hand-written backpropagation.
//!
//! All parameters of a network live in one flat buffer so the optimizer,
//! target averaging and checkpointing can treat a net as a plain slice.
//! Layer `l` occupies `weights (out x in, row-major)` followed by `bias (out)`.
//!
//! Batched passes run through `ndarray` matrix products; a batch is a matrix
//! with one sample per row.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// A multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Per-layer outputs recorded by [`DenseNet::forward_tape`]; index 0 is the input.
#[derive(Debug, Clone)]
pub struct Tape {
    outputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("tape holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.outputs[0]
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// Builds a net with the given layer widths (input first, output last).
    /// Hidden layers use `hidden`, the final layer uses `output`.
    ///
    /// Weights and biases are drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, output)?;
        let mut offset = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let n_layers = widths.len() - 1;
        let mut activations = vec![hidden; n_layers];
        activations[n_layers - 1] = output;
        Ok(Self {
            widths: widths.to_vec(),
            activations,
            params: vec![0.0; param_count(widths)],
        })
    }

    /// Rebuilds a net from an explicit parameter vector.
    pub fn from_params(
        widths: &[usize],
        activations: &[Activation],
        params: Vec<f64>,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config("invalid layer widths".into()));
        }
        check_dim("activation list", widths.len() - 1, activations.len())?;
        check_dim("parameter vector", param_count(widths), params.len())?;
        Ok(Self {
            widths: widths.to_vec(),
            activations: activations.to_vec(),
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l` inside the flat parameter buffer.
    pub fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.widths[..=l])
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let off = self.layer_offset(l);
        ArrayView2::from_shape((fan_out, fan_in), &self.params[off..off + fan_in * fan_out])
            .expect("layer shape matches parameter layout")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let off = self.layer_offset(l) + fan_in * fan_out;
        ArrayView1::from(&self.params[off..off + fan_out])
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.in_dim(), input.len())?;
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            let w = self.weight(l);
            let b = self.bias(l);
            let act = self.activations[l];
            x = w
                .outer_iter()
                .zip(b.iter())
                .map(|(row, &bj)| {
                    let z = row.iter().zip(&x).fold(bj, |acc, (wi, xi)| acc + wi * xi);
                    act.apply(z)
                })
                .collect();
        }
        Ok(x)
    }

    /// Batched forward pass; one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim("network input", self.in_dim(), x.ncols())?;
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            h = self.layer_forward(l, h.view());
        }
        Ok(h)
    }

    /// Batched forward pass keeping every layer output for [`DenseNet::backward`].
    pub fn forward_tape(&self, x: ArrayView2<'_, f64>) -> Result<Tape> {
        check_dim("network input", self.in_dim(), x.ncols())?;
        let mut outputs = Vec::with_capacity(self.n_layers() + 1);
        outputs.push(x.to_owned());
        for l in 0..self.n_layers() {
            let next = self.layer_forward(l, outputs[l].view());
            outputs.push(next);
        }
        Ok(Tape { outputs })
    }

    fn layer_forward(&self, l: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let w = self.weight(l);
        let b = self.bias(l);
        let mut z = Array2::from_shape_fn((x.nrows(), w.nrows()), |(_, j)| b[j]);
        general_mat_mul(1.0, &x, &w.t(), 1.0, &mut z);
        let act = self.activations[l];
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    /// Backpropagates `upstream` (dL/d output, one row per sample) through a
    /// recorded tape. Parameter gradients are summed over the batch and
    /// accumulated into `grads` when given; the input gradient is returned.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: ArrayView2<'_, f64>,
        mut grads: Option<&mut [f64]>,
    ) -> Result<Array2<f64>> {
        check_dim("tape depth", self.n_layers() + 1, tape.outputs.len())?;
        check_dim("upstream gradient width", self.out_dim(), upstream.ncols())?;
        check_dim("upstream batch", tape.input().nrows(), upstream.nrows())?;
        if let Some(g) = grads.as_deref() {
            check_dim("gradient buffer", self.num_params(), g.len())?;
        }

        let mut delta = upstream.to_owned();
        for l in (0..self.n_layers()).rev() {
            let act = self.activations[l];
            if act != Activation::Identity {
                ndarray::Zip::from(&mut delta)
                    .and(&tape.outputs[l + 1])
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
            }
            let x = &tape.outputs[l];
            if let Some(g) = grads.as_deref_mut() {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let off = self.layer_offset(l);
                let (gw, gb) = g[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw)
                    .expect("layer shape matches parameter layout");
                general_mat_mul(1.0, &delta.t(), x, 1.0, &mut gw);
                for (gbj, col) in gb.iter_mut().zip(delta.axis_iter(Axis(1))) {
                    *gbj += col.sum();
                }
            }
            let w = self.weight(l);
            let mut prev = Array2::zeros((delta.nrows(), w.ncols()));
            general_mat_mul(1.0, &delta, &w, 0.0, &mut prev);
            delta = prev;
        }
        Ok(delta)
    }

    /// Single-sample backward pass: returns (parameter gradients, input gradient).
    pub fn backward_one(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("network input", self.in_dim(), input.len())?;
        check_dim("upstream gradient width", self.out_dim(), upstream.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).unwrap();
        let tape = self.forward_tape(x)?;
        let mut grads = vec![0.0; self.num_params()];
        let dx = self.backward(&tape, up, Some(&mut grads))?;
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straightforward loop implementation of a forward pass.
    fn naive_forward(net: &DenseNet, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in 0..net.n_layers() {
            let (fan_in, fan_out) = (net.widths()[l], net.widths()[l + 1]);
            let off = net.layer_offset(l);
            let p = net.params();
            let mut y = vec![0.0; fan_out];
            for j in 0..fan_out {
                let mut z = p[off + fan_in * fan_out + j];
                for i in 0..fan_in {
                    z += p[off + j * fan_in + i] * x[i];
                }
                y[j] = match net.activations()[l] {
                    Activation::Identity => z,
                    Activation::Relu => {
                        if z > 0.0 {
                            z
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => z.tanh(),
                };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 4, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let net = DenseNet::from_params(&[2, 2], &[Activation::Identity], params).unwrap();
        assert_eq!(net.forward(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = [0.4, -1.3];
        let got = net.forward(&x).unwrap();
        let want = naive_forward(&net, &x);
        assert!((got[0] - want[0]).abs() < 1e-12);

        let batch = ndarray::arr2(&[[0.4, -1.3], [2.0, 0.5]]);
        let out = net.forward_batch(batch.view()).unwrap();
        assert!((out[[0, 0]] - want[0]).abs() < 1e-12);
        assert!((out[[1, 0]] - naive_forward(&net, &[2.0, 0.5])[0]).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = DenseNet::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(DenseNet::zeros(&[3], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn linear_layer_gradients() {
        // y = W x + b with W 2x3
        let params = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -0.5];
        let net = DenseNet::from_params(&[3, 2], &[Activation::Identity], params).unwrap();
        let x = [1.0, -1.0, 2.0];
        let g = [0.5, -2.0];
        let (grads, dx) = net.backward_one(&x, &g).unwrap();
        let want_w = [0.5, -0.5, 1.0, -2.0, 2.0, -4.0];
        assert_eq!(&grads[..6], &want_w);
        assert_eq!(&grads[6..], &g);
        // dx = W^T g
        assert_eq!(dx, vec![0.5 - 8.0, 1.0 - 10.0, 1.5 - 12.0]);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        // single hidden unit with pre-activation -1
        let params = vec![1.0, -2.0, /* out layer */ 3.0, 0.0];
        let net = DenseNet::from_params(
            &[1, 1, 1],
            &[Activation::Relu, Activation::Identity],
            params,
        )
        .unwrap();
        let (grads, dx) = net.backward_one(&[1.0], &[1.0]).unwrap();
        assert_eq!(grads[0], 0.0);
        assert_eq!(grads[1], 0.0);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(&[5, 16, 16, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4, 0.5];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::new(&[16, 4], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(net.params().iter().all(|p| p.abs() <= 0.25));
    }
}
