//! Fixed-topology multilayer perceptron with reverse-mode gradients.
//!
//! Architecture: dense layers with ELU (alpha = 1) after every hidden layer
//! and a linear output layer. Forward passes record a tape of layer inputs
//! and pre-activations; [`backward_batch`] replays it to produce gradients
//! with respect to every parameter and to the input.
//!
//! Parameters flatten to a single `Vec<f64>` (layer by layer, weights
//! row-major then bias) so one optimizer state covers a whole network;
//! `from_flat` inverts `flatten` bit-exactly.

use super::matrix::Matrix;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Network topology: `input_dim -> hidden[0] -> ... -> output_dim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
        }
    }

    /// (fan_in, fan_out) for each layer, in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument(format!(
                "MlpSpec dims must be positive: {self:?}"
            )));
        }
        // Guards decoded headers from absurd allocations.
        if self.param_count() > 50_000_000 {
            return Err(Error::InvalidArgument(format!(
                "MlpSpec too large: {} parameters",
                self.param_count()
            )));
        }
        Ok(())
    }
}

/// One dense layer; `w` is (out x in) row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// All parameters of an MLP, layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    /// Glorot-uniform init: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
    /// biases zero. Deterministic given the RNG state.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng) -> Self {
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                Layer {
                    w: Matrix::from_vec(fan_out, fan_in, data),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpParams { layers }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| Layer {
                w: Matrix::zeros(fan_out, fan_in),
                b: vec![0.0; fan_out],
            })
            .collect();
        MlpParams { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// Layer-by-layer flattening: weights row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend_from_slice(l.w.data());
            flat.extend_from_slice(&l.b);
        }
        flat
    }

    /// Inverse of [`flatten`]; errors if the length does not match `spec`.
    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::shape(
                "MlpParams::from_flat",
                spec.param_count(),
                flat.len(),
            ));
        }
        let mut layers = Vec::with_capacity(spec.hidden.len() + 1);
        let mut off = 0;
        for (fan_in, fan_out) in spec.layer_dims() {
            let wlen = fan_in * fan_out;
            let w = Matrix::from_vec(fan_out, fan_in, flat[off..off + wlen].to_vec());
            off += wlen;
            let b = flat[off..off + fan_out].to_vec();
            off += fan_out;
            layers.push(Layer { w, b });
        }
        Ok(MlpParams { layers })
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            l.w.ensure_finite(&format!("{context}: layer {i} weights"))?;
            if !l.b.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("{context}: layer {i} bias")));
            }
        }
        Ok(())
    }

    /// Checks structural agreement with `spec`; panics on mismatch (this is a
    /// programmer error on hot paths).
    fn assert_matches(&self, spec: &MlpSpec) {
        let dims = spec.layer_dims();
        assert_eq!(self.layers.len(), dims.len(), "params/spec layer count");
        for (l, (fan_in, fan_out)) in self.layers.iter().zip(dims) {
            assert_eq!((l.w.rows(), l.w.cols()), (fan_out, fan_in), "layer shape");
            assert_eq!(l.b.len(), fan_out, "bias shape");
        }
    }
}

/// ELU with alpha = 1.
#[inline]
pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

/// Derivative of [`elu`]; continuous at 0 (both sides give 1).
#[inline]
pub fn elu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Everything backward needs from a forward pass: the input batch, each
/// layer's pre-activation, and each hidden layer's post-activation.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardTape {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

/// Batched forward pass; rows of `x` are independent samples.
///
/// Panics on shape mismatch or non-finite input (callers own parameter
/// finiteness via `ensure_finite` at update boundaries).
pub fn forward_batch(spec: &MlpSpec, params: &MlpParams, x: &Matrix) -> (Matrix, ForwardTape) {
    params.assert_matches(spec);
    assert_eq!(x.cols(), spec.input_dim, "forward_batch: input width");
    assert!(
        x.data().iter().all(|v| v.is_finite()),
        "forward_batch: non-finite input"
    );
    let n_layers = spec.hidden.len() + 1;
    let mut pre = Vec::with_capacity(n_layers);
    let mut post = Vec::with_capacity(spec.hidden.len());
    let mut h = x.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = h.matmul_tb(&layer.w);
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.b) {
                *v += b;
            }
        }
        pre.push(z.clone());
        if li + 1 < n_layers {
            for v in z.data_mut().iter_mut() {
                *v = elu(*v);
            }
            post.push(z.clone());
            h = z;
        } else {
            h = z;
        }
    }
    let tape = ForwardTape {
        input: x.clone(),
        pre,
        post,
    };
    (h, tape)
}

/// Batched reverse pass. `dy` holds the loss gradient with respect to the
/// network output for every sample in the tape's batch. Returns the flat
/// parameter gradient (same layout as [`MlpParams::flatten`]) and the
/// gradient with respect to the input batch.
///
/// Gradients are *sums* over the batch; divide upstream if a mean is wanted.
pub fn backward_batch(
    spec: &MlpSpec,
    params: &MlpParams,
    tape: &ForwardTape,
    dy: &Matrix,
) -> (Vec<f64>, Matrix) {
    params.assert_matches(spec);
    let n_layers = params.layers.len();
    assert_eq!(dy.cols(), spec.output_dim, "backward_batch: dy width");
    assert_eq!(dy.rows(), tape.input.rows(), "backward_batch: dy batch");

    let mut layer_grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(n_layers);
    let mut g = dy.clone();
    for li in (0..n_layers).rev() {
        let h_prev = if li == 0 { &tape.input } else { &tape.post[li - 1] };
        let dw = g.matmul_ta(h_prev);
        let mut db = vec![0.0; g.cols()];
        for r in 0..g.rows() {
            for (acc, &v) in db.iter_mut().zip(g.row(r)) {
                *acc += v;
            }
        }
        layer_grads.push((dw, db));
        // Propagate into the previous layer's activation.
        let mut dh = g.matmul(&params.layers[li].w);
        if li > 0 {
            let z = &tape.pre[li - 1];
            for (v, &zv) in dh.data_mut().iter_mut().zip(z.data()) {
                *v *= elu_prime(zv);
            }
        }
        g = dh;
    }
    layer_grads.reverse();

    let mut flat = Vec::with_capacity(spec.param_count());
    for (dw, db) in layer_grads {
        flat.extend_from_slice(dw.data());
        flat.extend_from_slice(&db);
    }
    (flat, g)
}

/// Single-sample forward: returns the output vector and the tape.
pub fn mlp_forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> (Vec<f64>, ForwardTape) {
    let xm = Matrix::from_vec(1, x.len(), x.to_vec());
    let (y, tape) = forward_batch(spec, params, &xm);
    (y.data().to_vec(), tape)
}

/// Single-sample reverse pass matching [`mlp_forward`].
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &MlpParams,
    tape: &ForwardTape,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let dym = Matrix::from_vec(1, dy.len(), dy.to_vec());
    let (flat, dx) = backward_batch(spec, params, tape, &dym);
    (flat, dx.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::fd::central_difference_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!(
            (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
            "{what}: {a} vs {b}"
        );
    }

    /// Deliberately naive scalar re-implementation used as an oracle: plain
    /// nested loops over Vec<Vec<f64>>, no shared code with the fast path.
    fn naive_forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = x.to_vec();
        let n_layers = params.layers().len();
        for (li, layer) in params.layers().iter().enumerate() {
            let mut z = vec![0.0; layer.b.len()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut acc = layer.b[o];
                for (i, &hv) in h.iter().enumerate() {
                    acc += layer.w.get(o, i) * hv;
                }
                *zo = acc;
            }
            if li + 1 < n_layers {
                for zo in z.iter_mut() {
                    *zo = if *zo > 0.0 { *zo } else { zo.exp() - 1.0 };
                }
            }
            h = z;
        }
        h
    }

    fn unit_params(spec: &MlpSpec) -> MlpParams {
        let mut p = MlpParams::zeros(spec);
        for l in p.layers_mut() {
            let (r, c) = (l.w.rows(), l.w.cols());
            for i in 0..r {
                for j in 0..c {
                    l.w.set(i, j, 1.0);
                }
            }
        }
        p
    }

    #[test]
    fn all_ones_single_hidden_unit() {
        // f(x) = elu(x) through 1-1-1 weights: f(1) = 1, f(-1) = e^-1 - 1.
        let spec = MlpSpec::new(1, vec![1], 1);
        let p = unit_params(&spec);
        let (y, _) = mlp_forward(&spec, &p, &[1.0]);
        assert!((y[0] - 1.0).abs() < 1e-15);
        let (y, _) = mlp_forward(&spec, &p, &[-1.0]);
        assert!((y[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let spec = MlpSpec::new(
                1 + case % 5,
                vec![3 + case % 4, 2 + case % 3],
                1 + case % 4,
            );
            let params = MlpParams::init(&spec, &mut rng);
            let x: Vec<f64> = (0..spec.input_dim)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let (fast, _) = mlp_forward(&spec, &params, &x);
            let slow = naive_forward(&params, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert_close(*a, *b, 1e-12, "forward vs naive oracle");
            }
        }
    }

    #[test]
    fn batch_rows_match_single_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = MlpSpec::new(3, vec![6, 5], 2);
        let params = MlpParams::init(&spec, &mut rng);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let x = Matrix::from_rows(&rows);
        let (y, _) = forward_batch(&spec, &params, &x);
        for (r, row) in rows.iter().enumerate() {
            let (yi, _) = mlp_forward(&spec, &params, row);
            for (a, b) in y.row(r).iter().zip(&yi) {
                assert_eq!(a, b, "batch row differs from single-sample forward");
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec::new(4, vec![8], 3);
        let params = MlpParams::init(&spec, &mut rng);
        let x = [0.3, -0.7, 1.1, 0.0];
        let (y1, _) = mlp_forward(&spec, &params, &x);
        let (y2, _) = mlp_forward(&spec, &params, &x);
        assert_eq!(y1, y2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let spec = MlpSpec::new(3, vec![5, 4], 2);
            let params = MlpParams::init(&spec, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Scalar objective: c . f(x), random c.
            let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, tape) = mlp_forward(&spec, &params, &x);
            let (an_param, an_input) = mlp_backward(&spec, &params, &tape, &c);

            let flat = params.flatten();
            let fd_param = central_difference_gradient(
                |theta| {
                    let p = MlpParams::from_flat(&spec, theta).unwrap();
                    let (y, _) = mlp_forward(&spec, &p, &x);
                    y.iter().zip(&c).map(|(a, b)| a * b).sum()
                },
                &flat,
            );
            for (a, f) in an_param.iter().zip(&fd_param) {
                assert!(
                    (a - f).abs() <= 1e-4 * a.abs().max(f.abs()).max(1e-4),
                    "param grad mismatch: analytic {a} vs fd {f}"
                );
            }
            let fd_input = central_difference_gradient(
                |xi| {
                    let (y, _) = mlp_forward(&spec, &params, xi);
                    y.iter().zip(&c).map(|(a, b)| a * b).sum()
                },
                &x,
            );
            for (a, f) in an_input.iter().zip(&fd_input) {
                assert!(
                    (a - f).abs() <= 1e-4 * a.abs().max(f.abs()).max(1e-4),
                    "input grad mismatch: analytic {a} vs fd {f}"
                );
            }
        }
    }

    #[test]
    fn flatten_roundtrip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = MlpSpec::new(5, vec![7, 6], 4);
        let params = MlpParams::init(&spec, &mut rng);
        let flat = params.flatten();
        assert_eq!(flat.len(), spec.param_count());
        let back = MlpParams::from_flat(&spec, &flat).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn from_flat_wrong_length_errors() {
        let spec = MlpSpec::new(2, vec![3], 1);
        assert!(MlpParams::from_flat(&spec, &[0.0; 3]).is_err());
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = MlpSpec::new(10, vec![20], 5);
        let params = MlpParams::init(&spec, &mut rng);
        for l in params.layers() {
            let limit = (6.0 / (l.w.cols() + l.w.rows()) as f64).sqrt();
            assert!(l.w.data().iter().all(|w| w.abs() < limit));
            assert!(l.b.iter().all(|&b| b == 0.0));
        }
        // Seeded determinism.
        let mut rng2 = ChaCha8Rng::seed_from_u64(17);
        assert_eq!(params, MlpParams::init(&spec, &mut rng2));
    }

    #[test]
    fn param_count_formula() {
        let spec = MlpSpec::new(4, vec![32, 32], 4);
        assert_eq!(spec.param_count(), 4 * 32 + 32 + 32 * 32 + 32 + 32 * 4 + 4);
    }
}
