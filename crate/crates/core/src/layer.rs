//! One layer of implicit-process units.
//!
//! The `S` prior functions of a layer define an empirical mean
//! `m*(x) = (1/S) Σ_s f_s(x)` and a feature map
//! `φ(x) = (f_1(x) - m*(x), ..., f_S(x) - m*(x)) / √S`, so that
//! `φ(x)ᵀφ(x')` is the empirical prior covariance. Each unit `h` is the
//! linear model `f_h(x) = φ(x)ᵀ a_h + m*(x)` with `a_h ~ q = N(m_h, L_h L_hᵀ)`.
//! Integrating `a_h` out gives a Gaussian with
//!
//! ```text
//! mean = φ(x)ᵀ m_h + m*(x) (+ previous-layer value when propagating inputs)
//! var  = ‖L_hᵀ φ(x)‖² + σ²_h
//! ```
//!
//! All units of a layer share the prior (and so `φ` and `m*`); they have
//! their own `q` and latent noise variance `σ²_h`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::priors::{Prior, PriorKey};
use crate::tensor::Tensor;

/// Initial scale of the Cholesky factor of `q`.
pub const INIT_CHOL_SCALE: f64 = 1e-2;
/// Initial latent noise variance of inner layers.
pub const INIT_NOISE_VAR: f64 = 1e-2;

pub struct EmpiricalMoments<'t> {
    /// `B x 1` empirical prior mean.
    pub mean: Var<'t>,
    /// `B x S`; row `n` is `φ(x_n)`.
    pub features: Var<'t>,
}

/// Mean and feature map of `S x B` prior sample values.
pub fn empirical_moments(samples: Var<'_>) -> EmpiricalMoments<'_> {
    let shape = samples.shape();
    let (s, b) = (shape[0], shape[1]);
    let mean_row = samples.mean_axis(0).reshape(&[1, b]);
    let features = (samples - mean_row).t().scale(1.0 / (s as f64).sqrt());
    EmpiricalMoments { mean: mean_row.t(), features }
}

/// Variational coefficients of all units of a layer, as plain values.
///
/// `mean` is `S x H` (column `h` is `m_h`). `chol_raw` is `H x S x S`: its
/// strictly lower triangle is the lower triangle of `L_h` and its diagonal
/// holds `log diag(L_h)`. The upper triangle is unused.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalCoefficients {
    pub mean: Tensor,
    pub chol_raw: Tensor,
}

impl VariationalCoefficients {
    pub fn prior(samples: usize, units: usize) -> Self {
        Self { mean: Tensor::zeros([samples, units]), chol_raw: Tensor::zeros([units, samples, samples]) }
    }

    /// `m = 0`, `L = scale · I`.
    pub fn isotropic(samples: usize, units: usize, scale: f64) -> Self {
        let mut chol_raw = Tensor::zeros([units, samples, samples]);
        for h in 0..units {
            for i in 0..samples {
                chol_raw.data_mut()[(h * samples + i) * samples + i] = scale.ln();
            }
        }
        Self { mean: Tensor::zeros([samples, units]), chol_raw }
    }

    pub fn samples(&self) -> usize {
        self.mean.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.mean.shape()[1]
    }

    /// Lower-triangular `L_h` as a dense `S x S` matrix.
    pub fn cholesky(&self, h: usize) -> Tensor {
        let s = self.samples();
        let raw = &self.chol_raw.data()[h * s * s..(h + 1) * s * s];
        Tensor::from_fn2(s, s, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => raw[i * s + j],
            std::cmp::Ordering::Equal => raw[i * s + j].exp(),
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn covariance(&self, h: usize) -> Tensor {
        let l = self.cholesky(h);
        l.matmul(&l.transpose()).expect("square")
    }

    pub fn unit_mean(&self, h: usize) -> Vec<f64> {
        let s = self.samples();
        (0..s).map(|i| self.mean.at2(i, h)).collect()
    }
}

/// `L_h` for every unit, `H x S x S`, from the raw parameter block.
pub fn cholesky_factor<'t>(chol_raw: Var<'t>) -> Var<'t> {
    let s = chol_raw.shape()[1];
    let eye = chol_raw.tape().constant(Tensor::eye(s));
    chol_raw.tril_mask(true) + chol_raw.exp() * eye
}

/// `Σ_h KL(N(m_h, L_h L_hᵀ) ‖ N(0, I))` in nats.
pub fn kl_to_prior<'t>(mean: Var<'t>, chol_raw: Var<'t>) -> Var<'t> {
    let shape = chol_raw.shape();
    let (units, s) = (shape[0], shape[1]);
    let eye = chol_raw.tape().constant(Tensor::eye(s));
    let l = cholesky_factor(chol_raw);
    let trace = l.square().sum();
    let log_det = (chol_raw * eye).sum().scale(2.0);
    (trace + mean.square().sum() - log_det - (units * s) as f64).scale(0.5)
}

/// Gaussian conditional of every unit given the layer's moments.
///
/// Returns `B x H` means and variances. `noise_var` is `1 x H` (absent for
/// the last layer) and `prev_input` is the `B x H` value added to the mean
/// when input propagation is active.
pub fn conditional<'t>(
    moments: &EmpiricalMoments<'t>,
    mean: Var<'t>,
    chol_raw: Var<'t>,
    noise_var: Option<Var<'t>>,
    prev_input: Option<Var<'t>>,
) -> (Var<'t>, Var<'t>) {
    let mut means = moments.features.matmul(mean) + moments.mean;
    if let Some(prev) = prev_input {
        means = means + prev;
    }
    let l = cholesky_factor(chol_raw);
    // (B x S) · (H x S x S) -> H x B x S; row n of slice h is (L_hᵀ φ_n)ᵀ
    let projected = moments.features.matmul(l);
    let mut vars = projected.square().sum_axis(2).t();
    if let Some(noise) = noise_var {
        vars = vars + noise;
    }
    (means, vars)
}

/// `mean + sqrt(var) · ε`.
pub fn sample_output<'t>(means: Var<'t>, vars: Var<'t>, eps: Var<'t>) -> Var<'t> {
    means + vars.sqrt() * eps
}

/// Structural description of a layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub samples: usize,
    /// Only inner layers carry latent noise.
    pub latent_noise: bool,
    pub propagate_input: bool,
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 || self.input_dim < 1 || self.output_dim < 1 {
            return Err(Error::Contract(format!("degenerate layer {self:?}")));
        }
        if self.propagate_input && self.input_dim != self.output_dim {
            return Err(Error::Contract("input propagation needs equal input and output widths".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VipLayer {
    pub index: usize,
    pub config: LayerConfig,
    pub prior: Prior,
    pub q_mean: ParamId,
    pub q_chol: ParamId,
    pub log_noise_var: Option<ParamId>,
}

pub struct LayerOutput<'t> {
    pub moments: EmpiricalMoments<'t>,
    pub means: Var<'t>,
    pub vars: Var<'t>,
}

impl VipLayer {
    pub fn register(store: &mut ParamStore, index: usize, config: LayerConfig, prior: Prior) -> Result<Self> {
        config.validate()?;
        if prior.input_dim() != config.input_dim {
            return Err(Error::Shape(format!(
                "layer {index}: prior takes {} inputs, layer has {}",
                prior.input_dim(),
                config.input_dim
            )));
        }
        let q = VariationalCoefficients::isotropic(config.samples, config.output_dim, INIT_CHOL_SCALE);
        let q_mean = store.add(format!("layer{index}.q_mean"), q.mean);
        let q_chol = store.add(format!("layer{index}.q_chol"), q.chol_raw);
        let log_noise_var = config
            .latent_noise
            .then(|| store.add(format!("layer{index}.log_noise_var"), Tensor::full([1, config.output_dim], INIT_NOISE_VAR.ln())));
        Ok(Self { index, config, prior, q_mean, q_chol, log_noise_var })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, input: Var<'t>, key: PriorKey) -> Result<LayerOutput<'t>> {
        let samples = self.prior.sample(params, input, self.config.samples, key)?;
        let moments = empirical_moments(samples.values);
        let noise = self.log_noise_var.map(|id| params[id].exp());
        let prev = self.config.propagate_input.then_some(input);
        let (means, vars) = conditional(&moments, params[self.q_mean], params[self.q_chol], noise, prev);
        Ok(LayerOutput { moments, means, vars })
    }

    pub fn kl<'t>(&self, params: &Bound<'t>) -> Var<'t> {
        kl_to_prior(params[self.q_mean], params[self.q_chol])
    }
}

/// Plain-value moments, mainly for inspection.
pub fn moments_of(samples: &Tensor) -> (Tensor, Tensor) {
    let tape = Tape::new();
    let m = empirical_moments(tape.constant(samples.clone()));
    (m.mean.value(), m.features.value())
}
