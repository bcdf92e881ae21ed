//! Implicit-process prior samplers `g_θ(x, z)`.
//!
//! Two families are provided:
//!
//! * [`BnnPrior`]: a Bayesian neural network with `tanh` hidden units.
//!   Weights and biases are drawn by reparameterization,
//!   `w = mean + exp(log_var / 2) * z`, so sampled function values stay
//!   differentiable in the prior parameters. In the default constrained
//!   form every network layer has one shared weight mean, weight
//!   log-variance, bias mean and bias log-variance.
//! * [`CosinePrior`]: a wide single-hidden-layer network with cosine
//!   activations whose sample functions approximate a GP with an RBF
//!   kernel `amplitude² · exp(-‖(x - x')/ℓ‖² / 2)`. Frequencies and phases
//!   are drawn once at construction; output weights are drawn per sample,
//!   and the output is scaled by `amplitude · sqrt(2 / width)`.

use std::f64::consts::PI;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{self, Domain};
use crate::tensor::Tensor;

/// Identifies the noise draws `z_s` used for one prior evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PriorKey {
    pub seed: u64,
    /// Training iteration, or [`rng::FIXED`] for draws shared across iterations.
    pub counter: u64,
    /// Index of the model layer the prior belongs to.
    pub layer: u64,
}

/// Noise draws behind a [`PriorSampleSet`].
#[derive(Clone, Debug, PartialEq)]
pub enum PriorNoise {
    /// Per network layer: weight noise `S x in x out` and bias noise `S x 1 x out`.
    Bnn(Vec<(Tensor, Tensor)>),
    /// Output weights `width x S`.
    Cosine(Tensor),
}

/// `S` prior functions evaluated on a batch of `B` inputs.
pub struct PriorSampleSet<'t> {
    /// `S x B` function values; row `s` is `f_s` on the batch.
    pub values: Var<'t>,
    pub noise: PriorNoise,
    pub key: PriorKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnLayerParams {
    pub w_mean: ParamId,
    pub w_log_var: ParamId,
    pub b_mean: ParamId,
    pub b_log_var: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnPrior {
    /// Layer widths including input and output, e.g. `[D, 10, 10, 1]`.
    pub widths: Vec<usize>,
    pub layers: Vec<BnnLayerParams>,
    pub unconstrained: bool,
}

impl BnnPrior {
    /// Registers parameters under `prefix`, initialized to zero means and
    /// unit variances.
    pub fn register(store: &mut ParamStore, prefix: &str, widths: &[usize], unconstrained: bool) -> Self {
        assert!(widths.len() >= 2, "a BNN prior needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (wshape, bshape) = if unconstrained { (vec![w[0], w[1]], vec![1, w[1]]) } else { (vec![1], vec![1]) };
                BnnLayerParams {
                    w_mean: store.add(format!("{prefix}.bnn{k}.w_mean"), Tensor::zeros(wshape.clone())),
                    w_log_var: store.add(format!("{prefix}.bnn{k}.w_log_var"), Tensor::zeros(wshape)),
                    b_mean: store.add(format!("{prefix}.bnn{k}.b_mean"), Tensor::zeros(bshape.clone())),
                    b_log_var: store.add(format!("{prefix}.bnn{k}.b_log_var"), Tensor::zeros(bshape)),
                }
            })
            .collect();
        Self { widths: widths.to_vec(), layers, unconstrained }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn draw_noise(&self, num_samples: usize, key: PriorKey) -> PriorNoise {
        let mut r = rng::stream(key.seed, Domain::PriorNoise, &[key.counter, key.layer]);
        let noise = self
            .widths
            .windows(2)
            .map(|w| {
                let zw = Tensor::from_shape([num_samples, w[0], w[1]], rng::normals(&mut r, num_samples * w[0] * w[1]));
                let zb = Tensor::from_shape([num_samples, 1, w[1]], rng::normals(&mut r, num_samples * w[1]));
                (zw, zb)
            })
            .collect();
        PriorNoise::Bnn(noise)
    }

    /// Evaluates `num_samples` sampled networks on `inputs` (`B x D`).
    pub fn sample<'t>(
        &self,
        params: &Bound<'t>,
        inputs: Var<'t>,
        num_samples: usize,
        key: PriorKey,
    ) -> Result<PriorSampleSet<'t>> {
        check_inputs(&inputs.shape(), self.input_dim(), num_samples)?;
        let noise = self.draw_noise(num_samples, key);
        let values = self.forward(params, inputs, &noise);
        Ok(PriorSampleSet { values, noise, key })
    }

    /// Network output for explicit noise draws.
    pub fn forward<'t>(&self, params: &Bound<'t>, inputs: Var<'t>, noise: &PriorNoise) -> Var<'t> {
        let PriorNoise::Bnn(draws) = noise else { panic!("BNN prior needs BNN noise") };
        let tape = inputs.tape();
        let batch = inputs.shape()[0];
        let num_samples = draws[0].0.shape()[0];
        let last = self.layers.len() - 1;
        let mut h = inputs;
        for (k, (layer, (zw, zb))) in self.layers.iter().zip(draws).enumerate() {
            let w = params[layer.w_mean] + params[layer.w_log_var].scale(0.5).exp() * tape.constant(zw.clone());
            let b = params[layer.b_mean] + params[layer.b_log_var].scale(0.5).exp() * tape.constant(zb.clone());
            let pre = h.matmul(w) + b;
            h = if k < last { pre.tanh() } else { pre };
        }
        // S x B x 1 -> S x B
        h.reshape(&[num_samples, batch])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosinePrior {
    pub input_dim: usize,
    pub width: usize,
    /// `1 x D` log lengthscales.
    pub log_lengthscale: ParamId,
    /// `[1]` log amplitude.
    pub log_amplitude: ParamId,
    /// `D x W`, drawn from `N(0, 1)` at construction.
    pub frequencies: Tensor,
    /// `1 x W`, drawn from `Uniform[0, 2π)` at construction.
    pub phases: Tensor,
}

impl CosinePrior {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, width: usize, seed: u64, layer: u64) -> Result<Self> {
        if width < 1 {
            return Err(Error::Contract("cosine prior width must be at least 1".into()));
        }
        let mut r = rng::stream(seed, Domain::CosineFeatures, &[layer]);
        let frequencies = Tensor::from_shape([input_dim, width], rng::normals(&mut r, input_dim * width));
        let phases = Tensor::from_shape([1, width], (0..width).map(|_| r.random::<f64>() * 2.0 * PI).collect());
        Ok(Self {
            input_dim,
            width,
            log_lengthscale: store.add(format!("{prefix}.cos.log_lengthscale"), Tensor::zeros([1, input_dim])),
            log_amplitude: store.add(format!("{prefix}.cos.log_amplitude"), Tensor::zeros([1])),
            frequencies,
            phases,
        })
    }

    pub fn draw_noise(&self, num_samples: usize, key: PriorKey) -> PriorNoise {
        let mut r = rng::stream(key.seed, Domain::PriorNoise, &[key.counter, key.layer]);
        PriorNoise::Cosine(Tensor::from_shape([self.width, num_samples], rng::normals(&mut r, self.width * num_samples)))
    }

    pub fn sample<'t>(
        &self,
        params: &Bound<'t>,
        inputs: Var<'t>,
        num_samples: usize,
        key: PriorKey,
    ) -> Result<PriorSampleSet<'t>> {
        check_inputs(&inputs.shape(), self.input_dim, num_samples)?;
        let noise = self.draw_noise(num_samples, key);
        let values = self.forward(params, inputs, &noise);
        Ok(PriorSampleSet { values, noise, key })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, inputs: Var<'t>, noise: &PriorNoise) -> Var<'t> {
        let PriorNoise::Cosine(weights) = noise else { panic!("cosine prior needs cosine noise") };
        let tape = inputs.tape();
        let scaled = inputs * params[self.log_lengthscale].neg().exp();
        let features = (scaled.matmul(tape.constant(self.frequencies.clone())) + tape.constant(self.phases.clone())).cos();
        let f = features.matmul(tape.constant(weights.clone())) * (2.0 / self.width as f64).sqrt();
        (f * params[self.log_amplitude].exp()).t()
    }
}

/// The prior family of one model layer. All units of the layer share it.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    Bnn(BnnPrior),
    Cosine(CosinePrior),
}

impl Prior {
    pub fn input_dim(&self) -> usize {
        match self {
            Prior::Bnn(p) => p.input_dim(),
            Prior::Cosine(p) => p.input_dim,
        }
    }

    pub fn sample<'t>(
        &self,
        params: &Bound<'t>,
        inputs: Var<'t>,
        num_samples: usize,
        key: PriorKey,
    ) -> Result<PriorSampleSet<'t>> {
        match self {
            Prior::Bnn(p) => p.sample(params, inputs, num_samples, key),
            Prior::Cosine(p) => p.sample(params, inputs, num_samples, key),
        }
    }

    /// Samples on a fresh tape and returns the plain `S x B` values.
    pub fn sample_values(&self, store: &ParamStore, inputs: &Tensor, num_samples: usize, key: PriorKey) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let x = tape.constant(inputs.clone());
        Ok(self.sample(&bound, x, num_samples, key)?.values.value())
    }
}

fn check_inputs(shape: &[usize], input_dim: usize, num_samples: usize) -> Result<()> {
    if num_samples < 1 {
        return Err(Error::Contract("need at least one prior sample".into()));
    }
    if shape.len() != 2 || shape[0] < 1 {
        return Err(Error::Shape(format!("prior inputs must be a non-empty B x D matrix, got {shape:?}")));
    }
    if shape[1] != input_dim {
        return Err(Error::Shape(format!("prior expects {input_dim} input columns, got {}", shape[1])));
    }
    Ok(())
}
