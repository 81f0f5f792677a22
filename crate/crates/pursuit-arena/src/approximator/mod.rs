//! Small fully-connected function approximators with exact reverse-mode
//! gradients.
//!
//! The topology is fixed (affine layers + tanh/relu/linear activations), so
//! gradients are hand-derived and testable against finite differences to
//! machine-level agreement — no autodiff graph.

pub mod checkpoint;

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the post-activation value where
    /// possible (tanh' = 1 − y², relu' = [y > 0]).
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One affine layer: `out_dim × in_dim` weights in row-major order plus a
/// bias per output, followed by the activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Build a net with the given layer sizes; hidden layers use
    /// `hidden_act`, the final layer `final_act`. Seeded initialization:
    /// hidden layers uniform in ±√(6/fan_in) so activations keep order-one
    /// magnitude through the relu stack, the final layer uniform in
    /// ±1/√fan_in so initial outputs start near zero.
    pub fn new<R: Rng>(
        dims: &[usize],
        hidden_act: Activation,
        final_act: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (k, w) in dims.windows(2).enumerate() {
            let (in_dim, out_dim) = (w[0], w[1]);
            let last = k + 2 == dims.len();
            let bound = if last {
                1.0 / (in_dim as f64).sqrt()
            } else {
                (6.0 / in_dim as f64).sqrt()
            };
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
            let activation = if layers.len() + 2 == dims.len() {
                final_act
            } else {
                hidden_act
            };
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                bias,
                activation,
            });
        }
        MlpParams { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn shape_congruent(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }
}

fn layer_forward(layer: &Layer, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut z = layer.bias[o];
        for (w, x) in row.iter().zip(input) {
            z += w * x;
        }
        out.push(layer.activation.apply(z));
    }
}

/// Deterministic forward pass.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "forward: input has {} entries, net expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let mut cur = input.to_vec();
    let mut next = Vec::new();
    for layer in &params.layers {
        layer_forward(layer, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Gradients shaped exactly like their `MlpParams`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &MlpParams) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for x in &mut l.weights {
                *x *= factor;
            }
            for x in &mut l.bias {
                *x *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for l in &self.layers {
            for x in l.weights.iter().chain(&l.bias) {
                sq += x * x;
            }
        }
        sq.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

/// Reusable buffers for fused traced forward/backward passes; the training
/// loop's batch iterations allocate nothing per sample.
#[derive(Default, Clone, Debug)]
pub struct Scratch {
    activations: Vec<Vec<f64>>,
    dz: Vec<f64>,
    dy: Vec<f64>,
}

impl Scratch {
    /// Output of the latest `forward_traced`.
    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |v| v)
    }

    /// Input gradient from the latest `backward_traced`.
    pub fn input_gradient(&self) -> &[f64] {
        &self.dy
    }
}

/// Forward pass that records activations into `scratch` for a following
/// `backward_traced`.
pub fn forward_traced(params: &MlpParams, input: &[f64], scratch: &mut Scratch) -> Result<()> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "forward: input has {} entries, net expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    scratch.activations.resize(params.layers.len() + 1, Vec::new());
    scratch.activations[0].clear();
    scratch.activations[0].extend_from_slice(input);
    for k in 0..params.layers.len() {
        let (head, tail) = scratch.activations.split_at_mut(k + 1);
        layer_forward(&params.layers[k], &head[k], &mut tail[0]);
    }
    Ok(())
}

/// Reverse pass over the trace left by `forward_traced`: accumulates
/// `weight · ∇_θ (output · upstream)` into `acc` and leaves the input
/// gradient (also scaled by `weight`) in the scratch.
pub fn backward_traced(
    params: &MlpParams,
    scratch: &mut Scratch,
    upstream: &[f64],
    mut acc: Option<&mut GradientSet>,
    weight: f64,
) -> Result<()> {
    if upstream.len() != params.output_dim() {
        return Err(Error::Shape(format!(
            "backward: upstream has {} entries, net emits {}",
            upstream.len(),
            params.output_dim()
        )));
    }
    scratch.dy.clear();
    scratch.dy.extend(upstream.iter().map(|u| u * weight));
    for (k, layer) in params.layers.iter().enumerate().rev() {
        let y = &scratch.activations[k + 1];
        let x = &scratch.activations[k];
        scratch.dz.clear();
        scratch
            .dz
            .extend(scratch.dy.iter().zip(y).map(|(g, &y)| {
                g * layer.activation.derivative_from_output(y)
            }));
        if let Some(acc) = acc.as_deref_mut() {
            let lg = &mut acc.layers[k];
            for o in 0..layer.out_dim {
                let dz = scratch.dz[o];
                lg.bias[o] += dz;
                let row = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (i, slot) in row.iter_mut().enumerate() {
                    *slot += dz * x[i];
                }
            }
        }
        scratch.dy.clear();
        scratch.dy.resize(layer.in_dim, 0.0);
        for o in 0..layer.out_dim {
            let dz = scratch.dz[o];
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (i, w) in row.iter().enumerate() {
                scratch.dy[i] += w * dz;
            }
        }
    }
    Ok(())
}

/// Reverse-mode gradients of `forward(params, input) · upstream` with
/// respect to every parameter, plus the gradient with respect to the input.
pub fn backward(
    params: &MlpParams,
    input: &[f64],
    upstream: &[f64],
) -> Result<(GradientSet, Vec<f64>)> {
    let mut scratch = Scratch::default();
    let mut grads = GradientSet::zeros_like(params);
    forward_traced(params, input, &mut scratch)?;
    backward_traced(params, &mut scratch, upstream, Some(&mut grads), 1.0)?;
    Ok((grads, scratch.dy))
}

/// Polyak blend: every parameter becomes τ·online + (1−τ)·target.
pub fn soft_update(target: &MlpParams, online: &MlpParams, tau: f64) -> Result<MlpParams> {
    if !target.shape_congruent(online) {
        return Err(Error::Shape("soft_update: nets not shape-congruent".into()));
    }
    let mut out = target.clone();
    for (t, o) in out.layers.iter_mut().zip(&online.layers) {
        for (tw, ow) in t.weights.iter_mut().zip(&o.weights) {
            *tw = tau * ow + (1.0 - tau) * *tw;
        }
        for (tb, ob) in t.bias.iter_mut().zip(&o.bias) {
            *tb = tau * ob + (1.0 - tau) * *tb;
        }
    }
    Ok(out)
}

/// θ ← θ + scale·g (scale is −lr for descent, +lr for ascent).
pub fn apply_gradient(params: &mut MlpParams, grads: &GradientSet, scale: f64) {
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
            *w += scale * gw;
        }
        for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
            *b += scale * gb;
        }
    }
}

/// First/second gradient moments for Adam, shape-congruent with the net
/// they condition.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn zeros_like(params: &MlpParams) -> Self {
        AdamState {
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
            t: 0,
        }
    }
}

/// One Adam step with bias correction; `scale` is −lr for descent, +lr for
/// ascent. Gradients themselves are left untouched (they stay exactly what
/// `backward` produced).
pub fn adam_step(params: &mut MlpParams, grads: &GradientSet, state: &mut AdamState, scale: f64) {
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for ((l, g), (m, v)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut().zip(&mut state.v.layers))
    {
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += scale * m_hat / (v_hat.sqrt() + ADAM_EPS);
        };
        for i in 0..l.weights.len() {
            update(&mut l.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i]);
        }
        for i in 0..l.bias.len() {
            update(&mut l.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i]);
        }
    }
}
