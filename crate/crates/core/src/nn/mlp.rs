//! Dense feed-forward network with exact reverse- and forward-mode derivatives.
//!
//! Parameters live in one flat buffer. Layer `l` maps `sizes[l]` inputs to
//! `sizes[l + 1]` outputs and occupies `in * out` weights stored input-major
//! (`w[k * out + j]` is the weight from input `k` to output `j`) followed by
//! `out` biases. That layout lets every affine map run as a sequence of
//! contiguous axpy updates, and each output accumulates its terms in input
//! order regardless of batching, so batched and single-sample evaluation agree
//! bit for bit.
//!
//! Shape mismatches are programmer errors and panic.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dual::{silu, silu_prime, Dual};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => silu(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => silu_prime(z),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; the final entry is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("cache holds at least the input")
    }
}

/// Row-major batch activations, `rows × width` per layer.
#[derive(Debug, Clone)]
pub struct BatchCache {
    rows: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl BatchCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Flattened `rows × output_dim` outputs.
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("cache holds at least the input")
    }
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

const ROW_BLOCK: usize = 8;

/// `z[r] = bias + x[r] · W` for every row, written into `z` (rows × out).
fn affine_rows(w: &[f64], bias: Option<&[f64]>, n_in: usize, n_out: usize, x: &[f64], z: &mut [f64]) {
    let rows = x.len() / n_in;
    debug_assert_eq!(z.len(), rows * n_out);
    for chunk in (0..rows).step_by(ROW_BLOCK) {
        let end = (chunk + ROW_BLOCK).min(rows);
        for r in chunk..end {
            let zr = &mut z[r * n_out..(r + 1) * n_out];
            match bias {
                Some(b) => zr.copy_from_slice(b),
                None => zr.iter_mut().for_each(|v| *v = 0.0),
            }
        }
        for k in 0..n_in {
            let wk = &w[k * n_out..(k + 1) * n_out];
            for r in chunk..end {
                let a = x[r * n_in + k];
                if a == 0.0 {
                    continue;
                }
                let zr = &mut z[r * n_out..(r + 1) * n_out];
                for (zj, &wj) in zr.iter_mut().zip(wk) {
                    *zj += a * wj;
                }
            }
        }
    }
}

/// Four-lane dot product with a fixed summation order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], hidden: Activation, seed: u64) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least an input and an output size");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let (offsets, total) = layer_offsets(sizes);
        let mut params = vec![0.0; total];
        let mut rng = rng::stream(seed, rng::STREAM_INIT, 0);
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let start = offsets[l];
            for p in &mut params[start..start + n_in * n_out] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Mlp {
            sizes: sizes.to_vec(),
            hidden,
            params,
            offsets,
        }
    }

    pub fn from_params(sizes: &[usize], hidden: Activation, params: Vec<f64>) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least an input and an output size");
        let (offsets, total) = layer_offsets(sizes);
        assert_eq!(params.len(), total, "parameter count does not match layer sizes");
        Mlp {
            sizes: sizes.to_vec(),
            hidden,
            params,
            offsets,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
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

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            self.hidden
        }
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64], usize, usize) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        let w = &self.params[start..start + n_in * n_out];
        let b = &self.params[start + n_in * n_out..start + n_in * n_out + n_out];
        (w, b, n_in, n_out)
    }

    /// Weight from input `k` to output `j` of layer `l`.
    pub fn weight(&self, l: usize, j: usize, k: usize) -> f64 {
        let n_out = self.sizes[l + 1];
        self.params[self.offsets[l] + k * n_out + j]
    }

    pub fn set_weight(&mut self, l: usize, j: usize, k: usize, value: f64) {
        let n_out = self.sizes[l + 1];
        let idx = self.offsets[l] + k * n_out + j;
        self.params[idx] = value;
    }

    pub fn set_bias(&mut self, l: usize, j: usize, value: f64) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let idx = self.offsets[l] + n_in * n_out + j;
        self.params[idx] = value;
    }

    /// Zeroes every weight and bias of layer `l`.
    pub fn zero_layer(&mut self, l: usize) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        self.params[start..start + n_in * n_out + n_out]
            .iter_mut()
            .for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.check_input(input.len());
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let (w, b, n_in, n_out) = self.layer(l);
            let mut z = vec![0.0; n_out];
            affine_rows(w, Some(b), n_in, n_out, &x, &mut z);
            let act = self.activation(l);
            if act != Activation::Identity {
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            x = z;
        }
        x
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let cache = self.forward_batch(input);
        ForwardCache {
            inputs: cache.inputs,
            pre: cache.pre,
        }
    }

    /// Forward pass over `rows` concatenated inputs.
    pub fn forward_batch(&self, inputs: &[f64]) -> BatchCache {
        let n0 = self.input_dim();
        assert!(
            !inputs.is_empty() && inputs.len().is_multiple_of(n0),
            "batch length {} is not a positive multiple of input_dim {n0}",
            inputs.len()
        );
        let rows = inputs.len() / n0;
        let mut cache = BatchCache {
            rows,
            inputs: Vec::with_capacity(self.num_layers() + 1),
            pre: Vec::with_capacity(self.num_layers()),
        };
        cache.inputs.push(inputs.to_vec());
        for l in 0..self.num_layers() {
            let (w, b, n_in, n_out) = self.layer(l);
            let mut z = vec![0.0; rows * n_out];
            affine_rows(w, Some(b), n_in, n_out, &cache.inputs[l], &mut z);
            let act = self.activation(l);
            let a = if act == Activation::Identity {
                z.clone()
            } else {
                z.iter().map(|&v| act.apply(v)).collect()
            };
            cache.pre.push(z);
            cache.inputs.push(a);
        }
        cache
    }

    /// Reverse-mode gradients of `⟨cotangent, forward(input)⟩`.
    ///
    /// Returns `(parameter gradients, input gradient)`.
    pub fn backward(&self, cache: &ForwardCache, cotangent: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grads = vec![0.0; self.num_params()];
        let batch = BatchCache {
            rows: 1,
            inputs: cache.inputs.clone(),
            pre: cache.pre.clone(),
        };
        let dx = self.backward_batch(&batch, cotangent, Some(&mut grads));
        (grads, dx)
    }

    /// Input gradient only; skips parameter gradients.
    pub fn input_gradient(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let cache = self.forward_batch(input);
        self.backward_batch(&cache, cotangent, None)
    }

    /// Batched reverse pass. `cotangents` is `rows × output_dim`. Parameter
    /// gradients are summed over rows and accumulated into `grads` when given.
    /// Returns the `rows × input_dim` input gradients.
    pub fn backward_batch(&self, cache: &BatchCache, cotangents: &[f64], mut grads: Option<&mut [f64]>) -> Vec<f64> {
        let rows = cache.rows;
        assert_eq!(
            cotangents.len(),
            rows * self.output_dim(),
            "cotangent length does not match batch × output_dim"
        );
        if let Some(g) = grads.as_deref() {
            assert_eq!(g.len(), self.num_params(), "gradient buffer has wrong length");
        }
        let mut delta = cotangents.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (w, _, n_in, n_out) = self.layer(l);
            let act = self.activation(l);
            if act != Activation::Identity {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= act.derivative(z);
                }
            }
            let x = &cache.inputs[l];
            if let Some(g) = grads.as_deref_mut() {
                let start = self.offsets[l];
                let (gw, gb) = g[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for chunk in (0..rows).step_by(ROW_BLOCK) {
                    let end = (chunk + ROW_BLOCK).min(rows);
                    for k in 0..n_in {
                        let gk = &mut gw[k * n_out..(k + 1) * n_out];
                        for r in chunk..end {
                            let a = x[r * n_in + k];
                            if a == 0.0 {
                                continue;
                            }
                            let dr = &delta[r * n_out..(r + 1) * n_out];
                            for (gj, &dj) in gk.iter_mut().zip(dr) {
                                *gj += a * dj;
                            }
                        }
                    }
                    for r in chunk..end {
                        let dr = &delta[r * n_out..(r + 1) * n_out];
                        for (gj, &dj) in gb.iter_mut().zip(dr) {
                            *gj += dj;
                        }
                    }
                }
            }
            let mut dx = vec![0.0; rows * n_in];
            for r in 0..rows {
                let dr = &delta[r * n_out..(r + 1) * n_out];
                for k in 0..n_in {
                    dx[r * n_in + k] = dot(&w[k * n_out..(k + 1) * n_out], dr);
                }
            }
            delta = dx;
        }
        delta
    }

    /// Forward evaluation on dual numbers: values and one directional
    /// derivative propagated together.
    pub fn forward_dual(&self, input: &[Dual]) -> Vec<Dual> {
        self.check_input(input.len());
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let (w, b, n_in, n_out) = self.layer(l);
            let mut z: Vec<Dual> = b.iter().map(|&bj| Dual::constant(bj)).collect();
            for k in 0..n_in {
                let a = x[k];
                if a.v == 0.0 && a.t == 0.0 {
                    continue;
                }
                let wk = &w[k * n_out..(k + 1) * n_out];
                for (zj, &wj) in z.iter_mut().zip(wk) {
                    zj.v += a.v * wj;
                    zj.t += a.t * wj;
                }
            }
            if self.activation(l) == Activation::Silu {
                z.iter_mut().for_each(|d| *d = d.silu());
            }
            x = z;
        }
        x
    }

    /// Jacobian-vector product: `(forward(x), J(x) · v)`.
    pub fn jvp(&self, input: &[f64], tangent: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(input.len(), tangent.len(), "input and tangent lengths differ");
        let out = self.forward_dual(&super::dual::zip(input, tangent));
        super::dual::unzip(&out)
    }

    /// Several directional derivatives sharing one value pass. `tangents` is
    /// `k × input_dim`; returns the value and `k × output_dim` tangents.
    pub fn jvp_multi(&self, input: &[f64], tangents: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.check_input(input.len());
        let n0 = self.input_dim();
        assert_eq!(tangents.len() % n0, 0, "tangent block is not a multiple of input_dim");
        let k = tangents.len() / n0;
        let mut x = input.to_vec();
        let mut dx = tangents.to_vec();
        for l in 0..self.num_layers() {
            let (w, b, n_in, n_out) = self.layer(l);
            let mut z = vec![0.0; n_out];
            affine_rows(w, Some(b), n_in, n_out, &x, &mut z);
            let mut dz = vec![0.0; k * n_out];
            if k > 0 {
                affine_rows(w, None, n_in, n_out, &dx, &mut dz);
            }
            let act = self.activation(l);
            if act != Activation::Identity {
                let slope: Vec<f64> = z.iter().map(|&v| act.derivative(v)).collect();
                for row in dz.chunks_mut(n_out) {
                    for (d, &s) in row.iter_mut().zip(&slope) {
                        *d *= s;
                    }
                }
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            x = z;
            dx = dz;
        }
        (x, dx)
    }

    fn check_input(&self, len: usize) {
        assert_eq!(
            len,
            self.input_dim(),
            "input len {len} does not match model input_dim {}",
            self.input_dim()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straightforward reference evaluator over explicit matrices.
    fn reference_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes()[l], net.sizes()[l + 1]);
            let b_off = net.offsets[l] + n_in * n_out;
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut z = net.params()[b_off + j];
                for (k, xk) in x.iter().enumerate() {
                    z += net.weight(l, j, k) * xk;
                }
                let last = l + 1 == net.num_layers();
                next.push(if last { z } else { z / (1.0 + (-z).exp()) });
            }
            x = next;
        }
        x
    }

    fn random_net(seed: u64) -> Mlp {
        let mut net = Mlp::new(&[5, 7, 6, 3], Activation::Silu, seed);
        // Non-zero biases so the bias path is exercised.
        let mut r = rng::rng_from(seed + 100);
        for l in 0..net.num_layers() {
            for j in 0..net.sizes()[l + 1] {
                net.set_bias(l, j, r.random_range(-0.5..0.5));
            }
        }
        net
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn single_linear_layer() {
        let net = Mlp::from_params(&[1, 1], Activation::Silu, vec![2.0, 1.0]);
        assert_eq!(net.forward(&[3.0]), vec![7.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut net = Mlp::new(&[3, 4, 2], Activation::Silu, 1);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        net.set_bias(1, 0, 0.25);
        net.set_bias(1, 1, -1.5);
        for x in [[0.0, 0.0, 0.0], [4.0, -2.0, 9.0]] {
            assert_eq!(net.forward(&x), vec![0.25, -1.5]);
        }
    }

    #[test]
    fn matches_reference_evaluator() {
        for seed in 0..5 {
            let net = random_net(seed);
            let x = [0.3, -1.2, 0.8, 2.0, -0.1];
            let got = net.forward(&x);
            let want = reference_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn batch_rows_equal_single_evaluation_bitwise() {
        let net = Mlp::new(&[4, 16, 16, 2], Activation::Silu, 9);
        let rows: Vec<f64> = (0..4 * 11).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = net.forward_batch(&rows);
        for r in 0..11 {
            let single = net.forward(&rows[r * 4..(r + 1) * 4]);
            assert_eq!(&batch.output()[r * 2..(r + 1) * 2], single.as_slice());
        }
    }

    #[test]
    fn linear_layer_adjoint() {
        let params = vec![1.0, 3.0, 2.0, -1.0, 0.5, 0.5]; // W = [[1,2],[3,-1]] input-major
        let net = Mlp::from_params(&[2, 2], Activation::Silu, params);
        let cache = net.forward_cached(&[0.4, -0.7]);
        let (_, dx) = net.backward(&cache, &[1.0, 2.0]);
        // Wᵀ c = [1*1 + 3*2, 2*1 + (-1)*2]
        assert_eq!(dx, vec![7.0, 0.0]);
        let (_, t) = net.jvp(&[0.4, -0.7], &[1.0, 2.0]);
        // W v = [1 + 4, 3 - 2]
        assert_eq!(t, vec![5.0, 1.0]);
    }

    #[test]
    fn zero_cotangent_and_zero_tangent() {
        let net = random_net(3);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let (g, dx) = net.backward(&net.forward_cached(&x), &[0.0; 3]);
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
        let (_, t) = net.jvp(&x, &[0.0; 5]);
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..3 {
            let net = random_net(seed);
            let x = vec![0.5, -0.3, 1.1, -0.9, 0.2];
            let c = vec![0.7, -1.3, 0.4];
            let objective = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).iter().zip(&c).map(|(o, ci)| o * ci).sum() };
            let (g, dx) = net.backward(&net.forward_cached(&x), &c);
            for p in 0..net.num_params() {
                let mut plus = net.clone();
                plus.params_mut()[p] += h;
                let mut minus = net.clone();
                minus.params_mut()[p] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                assert!(rel_err(g[p], fd) < 1e-5, "param {p}: {} vs {fd}", g[p]);
            }
            for k in 0..x.len() {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
                assert!(rel_err(dx[k], fd) < 1e-5, "input {k}: {} vs {fd}", dx[k]);
            }
        }
    }

    #[test]
    fn jvp_matches_central_differences() {
        let h = 1e-5;
        let net = random_net(11);
        let x = vec![0.2, 0.4, -0.6, 0.8, -1.0];
        let v = vec![1.0, -0.5, 0.25, 0.3, -2.0];
        let (_, t) = net.jvp(&x, &v);
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let (fp, fm) = (net.forward(&xp), net.forward(&xm));
        for j in 0..3 {
            let fd = (fp[j] - fm[j]) / (2.0 * h);
            assert!(rel_err(t[j], fd) < 1e-5, "out {j}: {} vs {fd}", t[j]);
        }
    }

    #[test]
    fn jvp_is_transpose_of_backward() {
        let net = random_net(5);
        let x = vec![0.9, -0.1, 0.3, 0.0, -0.4];
        let v = vec![0.3, 0.1, -0.7, 1.2, 0.5];
        let (_, t) = net.jvp(&x, &v);
        let cache = net.forward_cached(&x);
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            let (_, dx) = net.backward(&cache, &e);
            let via_vjp: f64 = dx.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((via_vjp - t[j]).abs() < 1e-12, "{via_vjp} vs {}", t[j]);
        }
    }

    #[test]
    fn jvp_multi_matches_single_jvps() {
        let net = random_net(8);
        let x = vec![0.1, -0.2, 0.3, -0.4, 0.5];
        let mut block = Vec::new();
        for i in 0..5 {
            let mut e = vec![0.0; 5];
            e[i] = 1.0;
            block.extend(e);
        }
        let (value, tangents) = net.jvp_multi(&x, &block);
        assert_eq!(value, net.forward(&x));
        for i in 0..5 {
            let (_, t) = net.jvp(&x, &block[i * 5..(i + 1) * 5]);
            for j in 0..3 {
                assert!((t[j] - tangents[i * 3 + j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bias_free_linear_layer_is_homogeneous() {
        let mut net = Mlp::new(&[4, 3], Activation::Silu, 2);
        for j in 0..3 {
            net.set_bias(0, j, 0.0);
        }
        let x = [0.5, -1.0, 2.0, 0.25];
        let scaled: Vec<f64> = x.iter().map(|v| v * 4.0).collect();
        let a = net.forward(&scaled);
        let b: Vec<f64> = net.forward(&x).iter().map(|v| v * 4.0).collect();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "does not match model input_dim")]
    fn dimension_mismatch_panics() {
        Mlp::new(&[3, 2], Activation::Silu, 0).forward(&[1.0, 2.0]);
    }
}
