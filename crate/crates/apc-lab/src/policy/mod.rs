//! Diagonal Gaussian policies.
//!
//! A policy head outputs `2 x action_dim` values, split into the mean and a
//! raw scale; the standard deviation is `softplus(raw) + SIGMA_MIN`, so it
//! is strictly positive everywhere and the network can still drive it
//! arbitrarily close to the floor. Log-probability, entropy, and the
//! cross-entropy between two diagonal Gaussians have closed forms, as do
//! their gradients; cross-entropy gradients flow only into the second
//! (student) argument.
//!
//! [`PolicyNet`] is the parametric student: an optional learned linear
//! embedding for the grid channel (followed by ELU), concatenated with the
//! selected state features, through an ELU torso into the head.

use crate::envs::obs::{feature_dim, feature_matrix, Channel, GridShape, ObsLayout, Observation};
use crate::numcore::{backward_batch, elu, elu_prime, forward_batch, ForwardTape, Matrix, MlpParams, MlpSpec};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Floor added to softplus so standard deviations are bounded away from 0.
pub const SIGMA_MIN: f64 = 1e-4;

pub const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Numerically stable softplus: ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inv needs y > 0, got {y}");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One diagonal Gaussian action distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead {
    pub mu: Vec<f64>,
    /// Pre-softplus scale outputs.
    pub raw_sigma: Vec<f64>,
    /// `softplus(raw_sigma) + SIGMA_MIN`, elementwise.
    pub sigma: Vec<f64>,
}

impl GaussianHead {
    pub fn from_raw(mu: Vec<f64>, raw_sigma: Vec<f64>) -> Self {
        assert_eq!(mu.len(), raw_sigma.len(), "GaussianHead: dim mismatch");
        let sigma: Vec<f64> = raw_sigma.iter().map(|&r| softplus(r) + SIGMA_MIN).collect();
        debug_assert!(sigma.iter().all(|&s| s >= SIGMA_MIN));
        GaussianHead {
            mu,
            raw_sigma,
            sigma,
        }
    }

    /// Build a head with an explicit sigma (must exceed the floor), as
    /// analytic experts do.
    pub fn from_mu_sigma(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert!(
            sigma.iter().all(|&s| s > SIGMA_MIN),
            "GaussianHead: sigma must exceed SIGMA_MIN"
        );
        let raw_sigma = sigma.iter().map(|&s| softplus_inv(s - SIGMA_MIN)).collect();
        GaussianHead {
            mu,
            raw_sigma,
            sigma,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// log N(a; mu, diag(sigma^2)).
pub fn log_prob(head: &GaussianHead, action: &[f64]) -> f64 {
    assert_eq!(action.len(), head.dim(), "log_prob: action dim");
    let mut acc = 0.0;
    for i in 0..head.dim() {
        let z = (action[i] - head.mu[i]) / head.sigma[i];
        acc -= head.sigma[i].ln() + 0.5 * LN_2PI + 0.5 * z * z;
    }
    acc
}

/// Gradient of [`log_prob`] with respect to (mu, sigma).
pub fn dlog_prob(head: &GaussianHead, action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = head.dim();
    let mut dmu = vec![0.0; d];
    let mut dsigma = vec![0.0; d];
    for i in 0..d {
        let s = head.sigma[i];
        let diff = action[i] - head.mu[i];
        dmu[i] = diff / (s * s);
        dsigma[i] = -1.0 / s + diff * diff / (s * s * s);
    }
    (dmu, dsigma)
}

/// Differential entropy of a diagonal Gaussian.
pub fn entropy(head: &GaussianHead) -> f64 {
    head.sigma
        .iter()
        .map(|s| 0.5 + 0.5 * LN_2PI + s.ln())
        .sum()
}

/// Analytic cross-entropy H(p, q) = -E_{a~p}[log q(a)] for diagonal
/// Gaussians; per dimension
/// `ln(sqrt(2 pi) q.sigma) + (p.sigma^2 + (p.mu - q.mu)^2) / (2 q.sigma^2)`.
pub fn cross_entropy(p: &GaussianHead, q: &GaussianHead) -> f64 {
    assert_eq!(p.dim(), q.dim(), "cross_entropy: dim mismatch");
    let mut acc = 0.0;
    for i in 0..p.dim() {
        let (sp, sq) = (p.sigma[i], q.sigma[i]);
        let dm = p.mu[i] - q.mu[i];
        acc += sq.ln() + 0.5 * LN_2PI + (sp * sp + dm * dm) / (2.0 * sq * sq);
    }
    acc
}

/// Gradient of [`cross_entropy`] with respect to the *student* head `q`
/// (the expert side is a constant).
pub fn dcross_entropy_dq(p: &GaussianHead, q: &GaussianHead) -> (Vec<f64>, Vec<f64>) {
    let d = p.dim();
    let mut dmu = vec![0.0; d];
    let mut dsigma = vec![0.0; d];
    for i in 0..d {
        let (sp, sq) = (p.sigma[i], q.sigma[i]);
        let dm = q.mu[i] - p.mu[i];
        dmu[i] = dm / (sq * sq);
        dsigma[i] = 1.0 / sq - (sp * sp + dm * dm) / (sq * sq * sq);
    }
    (dmu, dsigma)
}

/// Draw `mu + sigma * z`, with `z` standard normal per dimension.
pub fn sample(head: &GaussianHead, rng: &mut impl Rng) -> Vec<f64> {
    head.mu
        .iter()
        .zip(&head.sigma)
        .map(|(&m, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        })
        .collect()
}

/// Anything that maps an observation to a Gaussian action distribution:
/// parametric students, analytic experts, trained experts.
pub trait GaussianActor {
    fn action_dim(&self) -> usize;
    fn head(&self, obs: &Observation) -> GaussianHead;
    /// Sample an action; the default samples the head.
    fn act(&self, obs: &Observation, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        sample(&self.head(obs), &mut &mut *rng)
    }
}

/// Wraps an actor, replacing its scale with a fixed constant at act time.
/// `sigma = 0` yields deterministic mean actions.
pub struct FixedNoise<'a, A: GaussianActor + ?Sized> {
    pub base: &'a A,
    pub sigma: f64,
}

impl<'a, A: GaussianActor + ?Sized> FixedNoise<'a, A> {
    pub fn new(base: &'a A, sigma: f64) -> Self {
        assert!(sigma >= 0.0, "FixedNoise: sigma must be >= 0");
        FixedNoise { base, sigma }
    }
}

impl<A: GaussianActor + ?Sized> GaussianActor for FixedNoise<'_, A> {
    fn action_dim(&self) -> usize {
        self.base.action_dim()
    }

    fn head(&self, obs: &Observation) -> GaussianHead {
        self.base.head(obs)
    }

    fn act(&self, obs: &Observation, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let head = self.base.head(obs);
        if self.sigma == 0.0 {
            return head.mu;
        }
        head.mu
            .iter()
            .map(|&m| {
                let z: f64 = (&mut *rng).sample(StandardNormal);
                m + self.sigma * z
            })
            .collect()
    }
}

/// Which channels a policy consumes and how the grid is embedded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSpec {
    pub channels: Vec<Channel>,
    pub layout: ObsLayout,
    /// Width of the learned linear grid embedding (ignored without a grid
    /// channel).
    pub grid_embed: usize,
}

impl ObsSpec {
    pub fn new(channels: Vec<Channel>, layout: ObsLayout, grid_embed: usize) -> Self {
        ObsSpec {
            channels,
            layout,
            grid_embed,
        }
    }

    pub fn uses_grid(&self) -> bool {
        self.channels.contains(&Channel::Grid)
    }

    pub fn feature_channels(&self) -> Vec<Channel> {
        self.channels
            .iter()
            .copied()
            .filter(|c| *c != Channel::Grid)
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(&self.layout, &self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.channels.is_empty() {
            return Err(Error::InvalidArgument("ObsSpec: no channels".into()));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(Error::InvalidArgument(format!(
                    "ObsSpec: duplicate channel {c:?}"
                )));
            }
        }
        if self.uses_grid() {
            if self.layout.grid.is_none() {
                return Err(Error::InvalidArgument(
                    "ObsSpec: grid channel without grid layout".into(),
                ));
            }
            if self.grid_embed == 0 {
                return Err(Error::InvalidArgument("ObsSpec: grid_embed must be > 0".into()));
            }
        }
        Ok(())
    }

    fn grid_shape(&self) -> Option<GridShape> {
        if self.uses_grid() {
            self.layout.grid
        } else {
            None
        }
    }
}

/// Batched head outputs; matrices are (batch x action_dim).
#[derive(Clone, Debug)]
pub struct HeadBatch {
    pub mu: Matrix,
    pub raw: Matrix,
    pub sigma: Matrix,
}

impl HeadBatch {
    pub fn len(&self) -> usize {
        self.mu.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.rows() == 0
    }

    pub fn head(&self, i: usize) -> GaussianHead {
        GaussianHead {
            mu: self.mu.row(i).to_vec(),
            raw_sigma: self.raw.row(i).to_vec(),
            sigma: self.sigma.row(i).to_vec(),
        }
    }
}

/// Tape for [`PolicyNet::backward`].
pub struct PolicyTape {
    torso_tape: ForwardTape,
    enc: Option<(ForwardTape, Matrix)>, // (encoder tape, encoder pre-activation z)
    raw: Matrix,
}

/// Parametric Gaussian policy: optional grid embedding, ELU torso, linear
/// head producing `[mu | raw_sigma]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    obs: ObsSpec,
    action_dim: usize,
    torso_hidden: Vec<usize>,
    enc_spec: Option<MlpSpec>,
    enc_params: Option<MlpParams>,
    torso_spec: MlpSpec,
    torso_params: MlpParams,
}

impl PolicyNet {
    pub fn new(
        obs: ObsSpec,
        torso_hidden: Vec<usize>,
        action_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        obs.validate()?;
        if action_dim == 0 {
            return Err(Error::InvalidArgument("PolicyNet: action_dim 0".into()));
        }
        let (enc_spec, enc_params) = match obs.grid_shape() {
            Some(shape) => {
                let spec = MlpSpec::new(shape.cells(), vec![], obs.grid_embed);
                let params = MlpParams::init(&spec, rng);
                (Some(spec), Some(params))
            }
            None => (None, None),
        };
        let torso_in = obs.feature_dim() + enc_spec.as_ref().map_or(0, |s| s.output_dim);
        if torso_in == 0 {
            return Err(Error::InvalidArgument("PolicyNet: empty input".into()));
        }
        let torso_spec = MlpSpec::new(torso_in, torso_hidden.clone(), 2 * action_dim);
        torso_spec.validate()?;
        let torso_params = MlpParams::init(&torso_spec, rng);
        Ok(PolicyNet {
            obs,
            action_dim,
            torso_hidden,
            enc_spec,
            enc_params,
            torso_spec,
            torso_params,
        })
    }

    pub fn obs_spec(&self) -> &ObsSpec {
        &self.obs
    }

    pub fn torso_hidden(&self) -> &[usize] {
        &self.torso_hidden
    }

    pub fn param_count(&self) -> usize {
        self.enc_spec.as_ref().map_or(0, |s| s.param_count()) + self.torso_spec.param_count()
    }

    /// Flat view: encoder parameters (if any) then torso parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        if let Some(p) = &self.enc_params {
            flat.extend(p.flatten());
        }
        flat.extend(self.torso_params.flatten());
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape("PolicyNet::set_flat_params", self.param_count(), flat.len()));
        }
        let mut off = 0;
        if let Some(spec) = &self.enc_spec {
            let n = spec.param_count();
            self.enc_params = Some(MlpParams::from_flat(spec, &flat[off..off + n])?);
            off += n;
        }
        self.torso_params = MlpParams::from_flat(&self.torso_spec, &flat[off..])?;
        Ok(())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if let Some(p) = &self.enc_params {
            p.ensure_finite(&format!("{context}: grid encoder"))?;
        }
        self.torso_params.ensure_finite(&format!("{context}: torso"))
    }

    /// Forward on pre-built inputs: `feats` is (batch x feature_dim), `grids`
    /// (batch x cells) when the policy consumes a grid.
    pub fn forward_features(&self, feats: &Matrix, grids: Option<&Matrix>) -> (HeadBatch, PolicyTape) {
        assert_eq!(feats.cols(), self.obs.feature_dim(), "forward_features: feature width");
        let (torso_input, enc) = match (&self.enc_spec, &self.enc_params) {
            (Some(spec), Some(params)) => {
                let g = grids.expect("forward_features: policy consumes a grid");
                assert_eq!(g.rows(), feats.rows(), "forward_features: grid batch");
                let (z, tape) = forward_batch(spec, params, g);
                // ELU on the embedding, then concat features | embedding.
                let mut input = Matrix::zeros(feats.rows(), feats.cols() + z.cols());
                for r in 0..feats.rows() {
                    let row = input.row_mut(r);
                    row[..feats.cols()].copy_from_slice(feats.row(r));
                    for (o, &zv) in row[feats.cols()..].iter_mut().zip(z.row(r)) {
                        *o = elu(zv);
                    }
                }
                (input, Some((tape, z)))
            }
            _ => {
                assert!(grids.is_none(), "forward_features: policy has no grid channel");
                (feats.clone(), None)
            }
        };
        let (out, torso_tape) = forward_batch(&self.torso_spec, &self.torso_params, &torso_input);
        let n = out.rows();
        let a = self.action_dim;
        let mut mu = Matrix::zeros(n, a);
        let mut raw = Matrix::zeros(n, a);
        let mut sigma = Matrix::zeros(n, a);
        for r in 0..n {
            let row = out.row(r);
            mu.row_mut(r).copy_from_slice(&row[..a]);
            raw.row_mut(r).copy_from_slice(&row[a..]);
            for (s, &rv) in sigma.row_mut(r).iter_mut().zip(&row[a..]) {
                *s = softplus(rv) + SIGMA_MIN;
            }
        }
        debug_assert!(sigma.data().iter().all(|&s| s >= SIGMA_MIN));
        let tape = PolicyTape {
            torso_tape,
            enc,
            raw: raw.clone(),
        };
        (HeadBatch { mu, raw, sigma }, tape)
    }

    /// Forward on observations (feature building included).
    pub fn forward_obs(&self, obs: &[&Observation]) -> (HeadBatch, PolicyTape) {
        let states = Matrix::from_rows(
            &obs.iter().map(|o| o.state.clone()).collect::<Vec<_>>(),
        );
        let feats = feature_matrix(&states, &self.obs.layout, &self.obs.feature_channels());
        let grids = if self.obs.uses_grid() {
            let rows: Vec<Vec<f64>> = obs
                .iter()
                .map(|o| {
                    o.grid
                        .as_ref()
                        .expect("observation lacks the grid this policy consumes")
                        .data
                        .clone()
                })
                .collect();
            Some(Matrix::from_rows(&rows))
        } else {
            None
        };
        self.forward_features(&feats, grids.as_ref())
    }

    /// Reverse pass: given per-sample gradients with respect to mu and sigma
    /// (both (batch x action_dim)), produce the flat parameter gradient.
    /// Gradients are sums over the batch.
    pub fn backward(&self, tape: &PolicyTape, dmu: &Matrix, dsigma: &Matrix) -> Vec<f64> {
        let n = dmu.rows();
        let a = self.action_dim;
        assert_eq!((dmu.rows(), dmu.cols()), (n, a), "backward: dmu shape");
        assert_eq!((dsigma.rows(), dsigma.cols()), (n, a), "backward: dsigma shape");
        // d(raw) = d(sigma) * sigmoid(raw); head output = [mu | raw].
        let mut dout = Matrix::zeros(n, 2 * a);
        for r in 0..n {
            let row = dout.row_mut(r);
            row[..a].copy_from_slice(dmu.row(r));
            for j in 0..a {
                row[a + j] = dsigma.get(r, j) * sigmoid(tape.raw.get(r, j));
            }
        }
        let (torso_grad, dinput) =
            backward_batch(&self.torso_spec, &self.torso_params, &tape.torso_tape, &dout);
        let mut flat = Vec::with_capacity(self.param_count());
        if let (Some(spec), Some(params), Some((enc_tape, z))) =
            (&self.enc_spec, &self.enc_params, &tape.enc)
        {
            let fd = self.obs.feature_dim();
            let mut dz = Matrix::zeros(n, z.cols());
            for r in 0..n {
                for (j, d) in dz.row_mut(r).iter_mut().enumerate() {
                    *d = dinput.get(r, fd + j) * elu_prime(z.get(r, j));
                }
            }
            let (enc_grad, _) = backward_batch(spec, params, enc_tape, &dz);
            flat.extend(enc_grad);
        }
        flat.extend(torso_grad);
        flat
    }

    // ---- checkpointing -------------------------------------------------

    /// Architecture description embedded in checkpoint headers; everything
    /// [`PolicyNet::from_decoded`] needs to rebuild the network shape.
    pub fn structural_meta(&self) -> serde_json::Value {
        serde_json::json!({
            "obs": self.obs,
            "action_dim": self.action_dim,
            "torso_hidden": self.torso_hidden,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        crate::numcore::checkpoint::encode("policy", &self.structural_meta(), &self.flat_params())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let d = crate::numcore::checkpoint::decode(bytes)?;
        if d.kind != "policy" {
            return Err(Error::Format(format!("expected kind \"policy\", got {:?}", d.kind)));
        }
        Self::from_decoded(&d.meta, &d.params)
    }

    /// Rebuild from a decoded header + flat params (shared with the expert
    /// checkpoint format, which wraps the same payload).
    pub fn from_decoded(meta: &serde_json::Value, params: &[f64]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            obs: ObsSpec,
            action_dim: usize,
            torso_hidden: Vec<usize>,
        }
        let m: Meta = serde_json::from_value(meta.clone())
            .map_err(|e| Error::Format(format!("policy meta: {e}")))?;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = PolicyNet::new(m.obs, m.torso_hidden, m.action_dim, &mut rng)
            .map_err(|e| Error::Format(format!("policy construction: {e}")))?;
        net.set_flat_params(params)
            .map_err(|e| Error::Format(format!("policy params: {e}")))?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::numcore::checkpoint::save_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::numcore::checkpoint::load_file(path)?)
    }
}

impl GaussianActor for PolicyNet {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn head(&self, obs: &Observation) -> GaussianHead {
        let (batch, _) = self.forward_obs(&[obs]);
        batch.head(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::obs::Span;
    use crate::numcore::fd::{central_difference_gradient, gradients_match};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain_layout(dim: usize) -> ObsLayout {
        ObsLayout {
            state_dim: dim,
            common: Span::new(0, dim),
            privileged: Span::new(dim, dim),
            grid: None,
        }
    }

    fn grid_layout() -> ObsLayout {
        ObsLayout {
            state_dim: 8,
            common: Span::new(0, 4),
            privileged: Span::new(4, 8),
            grid: Some(GridShape { h: 4, w: 4 }),
        }
    }

    #[test]
    fn softplus_at_zero() {
        let h = GaussianHead::from_raw(vec![0.0], vec![0.0]);
        assert!((h.sigma[0] - (2.0f64.ln() + SIGMA_MIN)).abs() < 1e-15);
    }

    #[test]
    fn softplus_inverse_roundtrip() {
        for y in [0.01, 0.2, 1.0, 5.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
    }

    #[test]
    fn log_prob_standard_normal_at_mean() {
        let h = GaussianHead::from_mu_sigma(vec![0.0], vec![1.0]);
        assert!((log_prob(&h, &[0.0]) + 0.9189385332046727).abs() < 1e-12);
    }

    #[test]
    fn entropy_standard_normal() {
        let h = GaussianHead::from_mu_sigma(vec![0.0], vec![1.0]);
        assert!((entropy(&h) - 1.4189385332046727).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hand_cases() {
        let p = GaussianHead::from_mu_sigma(vec![0.0], vec![1.0]);
        let q = GaussianHead::from_mu_sigma(vec![1.0], vec![1.0]);
        // 0.5 ln(2 pi) + (1 + 1)/2
        assert!((cross_entropy(&p, &q) - (0.5 * LN_2PI + 1.0)).abs() < 1e-12);
        // H(p, p) equals entropy exactly.
        assert!((cross_entropy(&p, &p) - entropy(&p)).abs() < 1e-12);
    }

    #[test]
    fn quadrature_normalizes_density() {
        // Simpson integration of exp(log_prob) over +-10 sigma ~ 1.
        let h = GaussianHead::from_mu_sigma(vec![0.7], vec![0.6]);
        let (lo, hi) = (0.7 - 6.0, 0.7 + 6.0);
        let n = 20_000usize; // even
        let step = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * step;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * log_prob(&h, &[x]).exp();
        }
        acc *= step / 3.0;
        assert!((acc - 1.0).abs() < 1e-6, "integral = {acc}");
    }

    #[test]
    fn sample_moments() {
        let h = GaussianHead::from_mu_sigma(vec![1.5, -2.0], vec![0.5, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mut mean = [0.0f64; 2];
        let mut m2 = [0.0f64; 2];
        for _ in 0..n {
            let a = sample(&h, &mut rng);
            for i in 0..2 {
                mean[i] += a[i];
                m2[i] += a[i] * a[i];
            }
        }
        for i in 0..2 {
            mean[i] /= n as f64;
            let var = m2[i] / n as f64 - mean[i] * mean[i];
            assert!((mean[i] - h.mu[i]).abs() < 0.02 * h.sigma[i].max(1.0));
            assert!((var.sqrt() - h.sigma[i]).abs() < 0.02 * h.sigma[i]);
        }
    }

    #[test]
    fn gibbs_inequality_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let d = 1 + (rng.gen::<usize>() % 3);
            let mk = |rng: &mut ChaCha8Rng| {
                let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let s: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..2.0)).collect();
                GaussianHead::from_mu_sigma(mu, s)
            };
            let p = mk(&mut rng);
            let q = mk(&mut rng);
            assert!(cross_entropy(&p, &q) >= entropy(&p) - 1e-12);
        }
    }

    #[test]
    fn closed_form_gradients_match_fd() {
        let p = GaussianHead::from_mu_sigma(vec![0.3, -0.8], vec![0.7, 1.3]);
        let a = [0.1, 0.4];
        let (dmu, dsigma) = dlog_prob(&p, &a);
        let both: Vec<f64> = p.mu.iter().chain(&p.sigma).copied().collect();
        let fd = central_difference_gradient(
            |v| {
                let h = GaussianHead::from_mu_sigma(v[..2].to_vec(), v[2..].to_vec());
                log_prob(&h, &a)
            },
            &both,
        );
        let analytic: Vec<f64> = dmu.iter().chain(&dsigma).copied().collect();
        assert!(gradients_match(&analytic, &fd, 1e-6, 1e-8));

        let q = GaussianHead::from_mu_sigma(vec![-0.2, 0.5], vec![0.4, 0.9]);
        let (dmu_q, dsigma_q) = dcross_entropy_dq(&p, &q);
        let bothq: Vec<f64> = q.mu.iter().chain(&q.sigma).copied().collect();
        let fdq = central_difference_gradient(
            |v| {
                let h = GaussianHead::from_mu_sigma(v[..2].to_vec(), v[2..].to_vec());
                cross_entropy(&p, &h)
            },
            &bothq,
        );
        let analyticq: Vec<f64> = dmu_q.iter().chain(&dsigma_q).copied().collect();
        assert!(gradients_match(&analyticq, &fdq, 1e-6, 1e-8));
    }

    #[test]
    fn policy_head_splits_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = plain_layout(3);
        let obs_spec = ObsSpec::new(vec![Channel::State], layout, 0);
        let net = PolicyNet::new(obs_spec, vec![8], 2, &mut rng).unwrap();
        let obs = Observation::state_only(vec![0.2, -0.4, 1.0]);
        let head = net.head(&obs);
        assert_eq!(head.dim(), 2);
        for (s, r) in head.sigma.iter().zip(&head.raw_sigma) {
            assert!((s - (softplus(*r) + SIGMA_MIN)).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_noise_zero_is_mean_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs_spec = ObsSpec::new(vec![Channel::State], plain_layout(3), 0);
        let net = PolicyNet::new(obs_spec, vec![8], 2, &mut rng).unwrap();
        let obs = Observation::state_only(vec![0.2, -0.4, 1.0]);
        let det = FixedNoise::new(&net, 0.0);
        let a = det.act(&obs, &mut rng);
        assert_eq!(a, net.head(&obs).mu);
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let obs_spec = ObsSpec::new(vec![Channel::Common, Channel::Grid], grid_layout(), 6);
        let mut net = PolicyNet::new(obs_spec, vec![10], 2, &mut rng).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        let copy = net.clone();
        net.set_flat_params(&flat).unwrap();
        assert_eq!(net, copy);
    }

    #[test]
    fn policy_checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let obs_spec = ObsSpec::new(vec![Channel::Common, Channel::Grid], grid_layout(), 6);
        let net = PolicyNet::new(obs_spec, vec![10, 5], 2, &mut rng).unwrap();
        let bytes = net.to_bytes();
        let back = PolicyNet::from_bytes(&bytes).unwrap();
        assert_eq!(net, back);
    }

    /// Full-policy gradient check through grid encoder, torso, head split and
    /// softplus chain, on a log-prob objective.
    #[test]
    fn policy_gradient_matches_fd_through_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let obs_spec = ObsSpec::new(vec![Channel::Common, Channel::Grid], grid_layout(), 5);
        let net = PolicyNet::new(obs_spec, vec![6], 2, &mut rng).unwrap();
        let mut grid = crate::envs::obs::Grid::zeros(GridShape { h: 4, w: 4 });
        grid.set(1, 2, 1.0);
        grid.set(3, 0, 0.5);
        let obs = Observation {
            state: (0..8).map(|i| 0.1 * i as f64 - 0.3).collect(),
            grid: Some(grid),
        };
        let action = [0.3, -0.6];

        let (heads, tape) = net.forward_obs(&[&obs]);
        let h = heads.head(0);
        let (dmu_v, dsigma_v) = dlog_prob(&h, &action);
        let dmu = Matrix::from_rows(&[dmu_v]);
        let dsigma = Matrix::from_rows(&[dsigma_v]);
        let analytic = net.backward(&tape, &dmu, &dsigma);

        let flat = net.flat_params();
        let mut probe = net.clone();
        let fd = central_difference_gradient(
            |theta| {
                probe.set_flat_params(theta).unwrap();
                log_prob(&probe.head(&obs), &action)
            },
            &flat,
        );
        assert!(
            gradients_match(&analytic, &fd, 1e-4, 1e-6),
            "policy gradient mismatch"
        );
    }
}
