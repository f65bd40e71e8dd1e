use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
#[allow(unused_imports)]
use num_traits::Float;

/// Fully connected network with tanh on every hidden layer and a linear
/// output. Parameters are one flat vector: per layer, the row-major
/// `out x in` weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from a forward pass, input included.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least the input")
    }
}

impl Mlp {
    /// All-zero network with the given layer widths.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; count] }
    }

    /// Orthogonal weights (unit gain), zero biases; the last layer's weights
    /// are multiplied by `final_scale`.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], final_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let n_layers = net.num_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let w = orthogonal_matrix(fan_out, fan_in, rng);
            let scale = if l + 1 == n_layers { final_scale } else { 1.0 };
            let (w_off, _) = net.layer_offsets(l);
            for (dst, src) in net.params[w_off..w_off + fan_in * fan_out].iter_mut().zip(w) {
                *dst = src * scale;
            }
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        let net = Self::zeros(&sizes);
        (net.params.len() == params.len()).then_some(Mlp { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offsets of the weight matrix and the bias of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Weight matrix of layer `l`, row-major `out x in`.
    pub fn weight(&self, l: usize) -> &[f64] {
        let (w, b) = self.layer_offsets(l);
        &self.params[w..b]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(l);
        &self.params[b..b + self.sizes[l + 1]]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in 0..self.num_layers() {
            cur = self.layer_forward(l, &cur);
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> Activations {
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(x.to_vec());
        for l in 0..self.num_layers() {
            let next = self.layer_forward(l, layers.last().expect("non-empty"));
            layers.push(next);
        }
        Activations { layers }
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        debug_assert_eq!(x.len(), fan_in);
        let (w_off, b_off) = self.layer_offsets(l);
        let w = &self.params[w_off..b_off];
        let b = &self.params[b_off..b_off + fan_out];
        let hidden = l + 1 < self.num_layers();
        w.chunks_exact(fan_in)
            .zip(b)
            .map(|(row, bias)| {
                let z = bias + dot(row, x);
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, acts: &Activations, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.num_layers() {
                // through tanh: d/dz = 1 - y^2
                for (gi, y) in g.iter_mut().zip(&acts.layers[l + 1]) {
                    *gi *= 1.0 - y * y;
                }
            }
            let input = &acts.layers[l];
            let (w_off, b_off) = self.layer_offsets(l);
            let w = &self.params[w_off..b_off];
            let mut g_in = vec![0.0; fan_in];
            {
                let (gw, gb) = grad[w_off..b_off + fan_out].split_at_mut(fan_in * fan_out);
                for (o, &go) in g.iter().enumerate() {
                    gb[o] += go;
                    if go == 0.0 {
                        continue;
                    }
                    axpy(go, input, &mut gw[o * fan_in..(o + 1) * fan_in]);
                    if l > 0 {
                        axpy(go, &w[o * fan_in..(o + 1) * fan_in], &mut g_in);
                    }
                }
            }
            g = g_in;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `rows x cols` matrix with orthonormal rows (rows <= cols) or orthonormal
/// columns (rows > cols), from Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // k vectors of length n
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        // two passes of modified Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &v);
                axpy(-proj, q, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}
