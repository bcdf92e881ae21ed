//! The stacked DVIP model.
//!
//! Layer `l` maps the sampled outputs of layer `l - 1` (the data for
//! `l = 1`) through its implicit-process units. Inner layers are sampled
//! by reparameterization; the last layer returns its Gaussian parameters.
//! Every Gaussian draw is keyed by the data point it belongs to, so the
//! computation for one point never depends on the rest of the batch.

use std::fmt::Write as _;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layer::{sample_output, LayerConfig, VipLayer};
use crate::likelihood::{Likelihood, DEFAULT_QUADRATURE_ORDER};
use crate::params::{Bound, ParamStore};
use crate::priors::{BnnPrior, CosinePrior, Prior, PriorKey};
use crate::rng::{self, Domain, FIXED};
use crate::special::{log_gaussian, log_sum_exp};
use crate::tensor::Tensor;

/// Default hidden widths of the BNN prior network.
pub const DEFAULT_BNN_HIDDEN: [usize; 2] = [10, 10];
/// Upper bound on the default inner-layer width.
pub const MAX_INNER_WIDTH: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub enum PriorSpec {
    Bnn { hidden: Vec<usize>, unconstrained: bool },
    Cosine { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LikelihoodKind {
    Gaussian,
    Probit,
}

/// Architecture of a model. Everything needed to rebuild it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub depth: usize,
    /// Width of every inner layer; `None` means `min(input_dim, 30)`.
    pub inner_width: Option<usize>,
    /// Prior samples `S` per layer.
    pub samples: usize,
    pub prior: PriorSpec,
    pub likelihood: LikelihoodKind,
    pub quadrature_order: usize,
    pub propagate_input: bool,
    /// Seed for the fixed random features of cosine priors.
    pub feature_seed: u64,
}

impl ModelSpec {
    pub fn new(input_dim: usize, depth: usize) -> Self {
        Self {
            input_dim,
            depth,
            inner_width: None,
            samples: 20,
            prior: PriorSpec::Bnn { hidden: DEFAULT_BNN_HIDDEN.to_vec(), unconstrained: false },
            likelihood: LikelihoodKind::Gaussian,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            propagate_input: true,
            feature_seed: 0,
        }
    }

    pub fn inner_width(&self) -> usize {
        self.inner_width.unwrap_or(self.input_dim.min(MAX_INNER_WIDTH))
    }

    /// `[D, H, ..., H, 1]`, one entry per layer boundary.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat(self.inner_width()).take(self.depth - 1));
        w.push(1);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.depth < 1 || self.samples < 1 || self.inner_width() < 1 {
            return Err(Error::Contract(format!("input_dim, depth, samples and inner width must be positive: {self:?}")));
        }
        match &self.prior {
            PriorSpec::Bnn { hidden, .. } if hidden.contains(&0) => {
                Err(Error::Contract("BNN prior hidden widths must be positive".into()))
            }
            PriorSpec::Cosine { width: 0 } => Err(Error::Contract("cosine prior width must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Text form stored in checkpoints, one `key=value` per line.
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_dim={}", self.input_dim);
        let _ = writeln!(s, "depth={}", self.depth);
        let _ = writeln!(s, "inner_width={}", self.inner_width());
        let _ = writeln!(s, "samples={}", self.samples);
        match &self.prior {
            PriorSpec::Bnn { hidden, unconstrained } => {
                let h: Vec<String> = hidden.iter().map(usize::to_string).collect();
                let _ = writeln!(s, "prior=bnn");
                let _ = writeln!(s, "bnn_hidden={}", h.join(","));
                let _ = writeln!(s, "unconstrained_prior={unconstrained}");
            }
            PriorSpec::Cosine { width } => {
                let _ = writeln!(s, "prior=cosine");
                let _ = writeln!(s, "cosine_width={width}");
            }
        }
        let lik = match self.likelihood {
            LikelihoodKind::Gaussian => "gaussian",
            LikelihoodKind::Probit => "probit",
        };
        let _ = writeln!(s, "likelihood={lik}");
        let _ = writeln!(s, "quadrature_order={}", self.quadrature_order);
        let _ = writeln!(s, "propagate_input={}", self.propagate_input);
        let _ = writeln!(s, "feature_seed={}", self.feature_seed);
        s
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(m);
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed descriptor line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(format!("descriptor lacks `{k}`")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad value for `{k}`"))) };
        let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|_| bad(format!("bad value for `{k}`"))) };
        let prior = match get("prior")?.as_str() {
            "bnn" => PriorSpec::Bnn { hidden: parse_widths(&get("bnn_hidden")?)?, unconstrained: flag("unconstrained_prior")? },
            "cosine" => PriorSpec::Cosine { width: num("cosine_width")? as usize },
            other => return Err(bad(format!("unknown prior `{other}`"))),
        };
        let likelihood = match get("likelihood")?.as_str() {
            "gaussian" => LikelihoodKind::Gaussian,
            "probit" => LikelihoodKind::Probit,
            other => return Err(bad(format!("unknown likelihood `{other}`"))),
        };
        let spec = Self {
            input_dim: num("input_dim")? as usize,
            depth: num("depth")? as usize,
            inner_width: Some(num("inner_width")? as usize),
            samples: num("samples")? as usize,
            prior,
            likelihood,
            quadrature_order: num("quadrature_order")? as usize,
            propagate_input: flag("propagate_input")?,
            feature_seed: num("feature_seed")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a comma-separated width list such as `10,10`.
pub fn parse_widths(text: &str) -> Result<Vec<usize>> {
    text.split(',').map(|w| w.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad width list `{text}`")))).collect()
}

/// Identifies every random draw of one model evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleKey {
    pub seed: u64,
    /// Training iteration, or [`FIXED`] at prediction time.
    pub iteration: u64,
    /// Index of the sample path when several are propagated.
    pub pass: u64,
    /// Reuse the same prior functions at every iteration.
    pub fixed_prior: bool,
}

impl SampleKey {
    pub fn training(seed: u64, iteration: u64, fixed_prior: bool) -> Self {
        Self { seed, iteration, pass: 0, fixed_prior }
    }

    pub fn prediction(seed: u64, pass: u64) -> Self {
        Self { seed, iteration: FIXED, pass, fixed_prior: true }
    }

    fn prior_key(&self, layer: usize) -> PriorKey {
        let counter = if self.fixed_prior { FIXED } else { self.iteration };
        PriorKey { seed: self.seed, counter, layer: layer as u64 }
    }
}

/// Result of propagating one sample path through the model.
pub struct Forward<'t> {
    /// Sampled outputs `f̂^l` of every inner layer, `B x H`.
    pub samples: Vec<Var<'t>>,
    /// Final-layer Gaussian, `B x 1` each.
    pub means: Var<'t>,
    pub vars: Var<'t>,
}

/// Objective value with its two components.
pub struct Objective<'t> {
    pub value: Var<'t>,
    /// Minibatch-scaled expected log-likelihood.
    pub loglik: Var<'t>,
    pub kl: Var<'t>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvipModel {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub layers: Vec<VipLayer>,
    pub likelihood: Likelihood,
    /// Training-set size `N`, used to scale minibatch likelihoods.
    pub train_size: usize,
}

impl DvipModel {
    pub fn new(mut spec: ModelSpec, train_size: usize) -> Result<Self> {
        spec.validate()?;
        spec.inner_width = Some(spec.inner_width());
        if train_size < 1 {
            return Err(Error::Contract("training-set size must be positive".into()));
        }
        let mut store = ParamStore::new();
        let widths = spec.widths();
        let mut layers = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let (input_dim, output_dim) = (widths[l], widths[l + 1]);
            let last = l + 1 == spec.depth;
            let prefix = format!("layer{l}.prior");
            let prior = match &spec.prior {
                PriorSpec::Bnn { hidden, unconstrained } => {
                    let mut net = vec![input_dim];
                    net.extend(hidden);
                    net.push(1);
                    Prior::Bnn(BnnPrior::register(&mut store, &prefix, &net, *unconstrained))
                }
                PriorSpec::Cosine { width } => {
                    Prior::Cosine(CosinePrior::register(&mut store, &prefix, input_dim, *width, spec.feature_seed, l as u64)?)
                }
            };
            let config = LayerConfig {
                input_dim,
                output_dim,
                samples: spec.samples,
                latent_noise: !last,
                propagate_input: spec.propagate_input && !last && input_dim == output_dim,
            };
            layers.push(VipLayer::register(&mut store, l, config, prior)?);
        }
        let likelihood = match spec.likelihood {
            LikelihoodKind::Gaussian => Likelihood::gaussian(&mut store),
            LikelihoodKind::Probit => Likelihood::probit(spec.quadrature_order)?,
        };
        Ok(Self { spec, store, layers, likelihood, train_size })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Draws one sample path for the `B x D` inputs `x`.
    ///
    /// `ids` names each row; the layer noise of a row is drawn from a
    /// stream keyed by its id.
    pub fn forward_sample<'t>(&self, params: &Bound<'t>, x: Var<'t>, ids: &[u64], key: SampleKey) -> Result<Forward<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.spec.input_dim {
            return Err(Error::Shape(format!("model expects B x {} inputs, got {shape:?}", self.spec.input_dim)));
        }
        if shape[0] != ids.len() || ids.is_empty() {
            return Err(Error::Shape(format!("{} rows but {} point ids", shape[0], ids.len())));
        }
        let tape = x.tape();
        let mut input = x;
        let mut samples = Vec::with_capacity(self.depth() - 1);
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(params, input, key.prior_key(l))?;
            if l + 1 == self.depth() {
                return Ok(Forward { samples, means: out.means, vars: out.vars });
            }
            let eps = tape.constant(self.layer_noise(ids, l, layer.config.output_dim, key));
            input = sample_output(out.means, out.vars, eps);
            samples.push(input);
        }
        unreachable!("a model has at least one layer")
    }

    fn layer_noise(&self, ids: &[u64], layer: usize, width: usize, key: SampleKey) -> Tensor {
        let mut data = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            let mut r = rng::stream(key.seed, Domain::LayerNoise, &[key.iteration, key.pass, layer as u64, id]);
            data.extend(rng::normals(&mut r, width));
        }
        Tensor::from_shape([ids.len(), width], data)
    }

    pub fn kl<'t>(&self, params: &Bound<'t>) -> Var<'t> {
        let mut total = self.layers[0].kl(params);
        for layer in &self.layers[1..] {
            total = total + layer.kl(params);
        }
        total
    }

    /// Evidence lower bound on a minibatch: `(N/B) Σ E[log p(y|f^L)] − KL`.
    pub fn elbo<'t>(&self, params: &Bound<'t>, x: Var<'t>, y: Var<'t>, ids: &[u64], key: SampleKey) -> Result<Objective<'t>> {
        let fwd = self.forward_sample(params, x, ids, key)?;
        let per_point = self.likelihood.expected_loglik(params, fwd.means, fwd.vars, y);
        self.combine(per_point, params, ids.len(), key)
    }

    /// α-energy of a single-layer model with a Gaussian likelihood.
    pub fn alpha_energy<'t>(
        &self,
        params: &Bound<'t>,
        x: Var<'t>,
        y: Var<'t>,
        ids: &[u64],
        key: SampleKey,
        alpha: f64,
    ) -> Result<Objective<'t>> {
        if self.depth() != 1 {
            return Err(Error::Contract("the α-energy is defined for single-layer models only".into()));
        }
        let fwd = self.forward_sample(params, x, ids, key)?;
        let per_point = self.likelihood.alpha_term(params, fwd.means, fwd.vars, y, alpha)?;
        self.combine(per_point, params, ids.len(), key)
    }

    fn combine<'t>(&self, per_point: Var<'t>, params: &Bound<'t>, batch: usize, key: SampleKey) -> Result<Objective<'t>> {
        let loglik = per_point.sum().scale(self.train_size as f64 / batch as f64);
        let kl = self.kl(params);
        for (component, v) in [("likelihood", loglik), ("kl", kl)] {
            if !v.item().is_finite() {
                return Err(Error::NonFinite { component: component.into(), iteration: key.iteration });
            }
        }
        Ok(Objective { value: loglik - kl, loglik, kl })
    }

    /// Final-layer Gaussian for one sample path, as plain values.
    pub fn forward_values(&self, x: &Tensor, ids: &[u64], key: SampleKey) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let params = self.store.bind(&tape);
        let fwd = self.forward_sample(&params, tape.constant(x.clone()), ids, key)?;
        Ok((fwd.means.value(), fwd.vars.value()))
    }

    /// Predictive mixture from `passes` independent sample paths.
    pub fn predict(&self, x: &Tensor, passes: usize, seed: u64) -> Result<PredictiveMixture> {
        if passes < 1 {
            return Err(Error::Contract("prediction needs at least one sample path".into()));
        }
        let b = x.shape().first().copied().unwrap_or(0);
        let ids: Vec<u64> = (0..b as u64).collect();
        let mut means = vec![0.0; b * passes];
        let mut vars = vec![0.0; b * passes];
        for r in 0..passes {
            let (m, v) = self.forward_values(x, &ids, SampleKey::prediction(seed, r as u64))?;
            for n in 0..b {
                means[n * passes + r] = m.data()[n];
                vars[n * passes + r] = v.data()[n];
            }
        }
        Ok(PredictiveMixture { means: Tensor::from_shape([b, passes], means), vars: Tensor::from_shape([b, passes], vars) })
    }

    /// Likelihood noise variance, for Gaussian models.
    pub fn noise_var(&self) -> Option<f64> {
        self.likelihood.noise_var(&self.store)
    }
}

/// Equally weighted Gaussian mixture over the latent output, per test point.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveMixture {
    /// `B x R` component means.
    pub means: Tensor,
    /// `B x R` component variances.
    pub vars: Tensor,
}

impl PredictiveMixture {
    pub fn len(&self) -> usize {
        self.means.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> usize {
        self.means.shape()[1]
    }

    pub fn point(&self, n: usize) -> (&[f64], &[f64]) {
        let r = self.components();
        (&self.means.data()[n * r..(n + 1) * r], &self.vars.data()[n * r..(n + 1) * r])
    }

    /// Mixture mean per point.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.point(n).0.iter().sum::<f64>() / self.components() as f64).collect()
    }

    /// `log (1/R) Σ_r N(y | m_r, v_r + noise_var)` at point `n`.
    pub fn log_density_at(&self, n: usize, y: f64, noise_var: f64) -> f64 {
        let (m, v) = self.point(n);
        let terms: Vec<f64> = m.iter().zip(v).map(|(m, v)| log_gaussian(y, *m, v + noise_var)).collect();
        log_sum_exp(terms) - (m.len() as f64).ln()
    }

    /// Predictive log density of every target.
    pub fn log_density(&self, y: &[f64], noise_var: f64) -> Result<Vec<f64>> {
        if y.len() != self.len() {
            return Err(Error::Data(crate::error::DataError::Length(y.len(), self.len())));
        }
        Ok(y.iter().enumerate().map(|(n, &yn)| self.log_density_at(n, yn, noise_var)).collect())
    }

    /// Mixture-averaged probit class-1 probability per point.
    pub fn class_probability(&self) -> Vec<f64> {
        (0..self.len())
            .map(|n| {
                let (m, v) = self.point(n);
                m.iter().zip(v).map(|(m, v)| crate::likelihood::probit_class_probability(*m, *v)).sum::<f64>() / m.len() as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::gaussian_log_density;

    fn toy_inputs(b: usize, d: usize, seed: u64) -> Tensor {
        let z = rng::normals(&mut rng::stream(seed, Domain::Test, &[b as u64, d as u64]), b * d);
        Tensor::from_shape([b, d], z)
    }

    fn ids(b: usize) -> Vec<u64> {
        (0..b as u64).collect()
    }

    /// Raw Cholesky block whose factor is exactly zero.
    fn collapsed_chol(units: usize, s: usize) -> Tensor {
        let mut t = Tensor::zeros([units, s, s]);
        for h in 0..units {
            for i in 0..s {
                t.data_mut()[(h * s + i) * s + i] = -1e3;
            }
        }
        t
    }

    #[test]
    fn widths_follow_input_dim() {
        assert_eq!(ModelSpec::new(8, 3).widths(), vec![8, 8, 8, 1]);
        assert_eq!(ModelSpec::new(50, 2).widths(), vec![50, 30, 1]);
        assert_eq!(ModelSpec::new(4, 1).widths(), vec![4, 1]);
    }

    #[test]
    fn descriptor_round_trip() {
        let mut spec = ModelSpec::new(5, 3);
        spec.prior = PriorSpec::Cosine { width: 64 };
        spec.likelihood = LikelihoodKind::Probit;
        spec.feature_seed = 9;
        let back = ModelSpec::from_descriptor(&spec.descriptor()).unwrap();
        assert_eq!(back.widths(), spec.widths());
        assert_eq!(back.descriptor(), spec.descriptor());
    }

    #[test]
    fn single_layer_collapses_to_prior_mean() {
        let model = DvipModel::new(ModelSpec { samples: 6, ..ModelSpec::new(2, 1) }, 10).unwrap();
        let x = toy_inputs(4, 2, 1);
        let mut quiet = model.clone();
        let chol = quiet.layers[0].q_chol;
        quiet.store.set(chol, collapsed_chol(1, 6));
        let key = SampleKey::training(3, 0, false);
        let (means, vars) = quiet.forward_values(&x, &ids(4), key).unwrap();
        let prior = quiet.layers[0].prior.sample_values(&quiet.store, &x, 6, key.prior_key(0)).unwrap();
        for n in 0..4 {
            let mstar: f64 = (0..6).map(|s| prior.at2(s, n)).sum::<f64>() / 6.0;
            assert!((means.data()[n] - mstar).abs() < 1e-14);
            assert_eq!(vars.data()[n], 0.0);
        }
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let model = DvipModel::new(ModelSpec { samples: 5, ..ModelSpec::new(3, 3) }, 50).unwrap();
        let x = toy_inputs(6, 3, 2);
        let key = SampleKey::training(4, 7, false);
        let (m, v) = model.forward_values(&x, &ids(6), key).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let xp = Tensor::from_shape([6, 3], perm.iter().flat_map(|&p| x.data()[p * 3..p * 3 + 3].to_vec()).collect());
        let idp: Vec<u64> = perm.iter().map(|&p| p as u64).collect();
        let (mp, vp) = model.forward_values(&xp, &idp, key).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(mp.data()[i], m.data()[p]);
            assert_eq!(vp.data()[i], v.data()[p]);
        }
    }

    #[test]
    fn zero_variance_two_layers_compose_mean_functions() {
        let mut model = DvipModel::new(ModelSpec { samples: 4, ..ModelSpec::new(2, 2) }, 10).unwrap();
        for l in 0..2 {
            let c = model.layers[l].q_chol;
            let units = model.store.get(c).shape()[0];
            model.store.set(c, collapsed_chol(units, 4));
            let m = model.layers[l].q_mean;
            let shape = model.store.get(m).shape().to_vec();
            let vals = rng::normals(&mut rng::stream(5, Domain::Test, &[l as u64]), shape.iter().product());
            model.store.set(m, Tensor::from_shape(shape, vals));
        }
        let noise = model.layers[0].log_noise_var.unwrap();
        model.store.set(noise, Tensor::full([1, 2], -1e3));
        let x = toy_inputs(3, 2, 6);
        let key = SampleKey::training(1, 0, true);
        let (means, vars) = model.forward_values(&x, &ids(3), key).unwrap();

        // one point at a time through explicit mean functions
        let mean_fn = |l: usize, input: &Tensor| -> Tensor {
            let layer = &model.layers[l];
            let f = layer.prior.sample_values(&model.store, input, 4, key.prior_key(l)).unwrap();
            let mstar: f64 = f.data().iter().sum::<f64>() / 4.0;
            let q = model.store.get(layer.q_mean);
            let h = q.shape()[1];
            Tensor::from_shape(
                [1, h],
                (0..h)
                    .map(|u| {
                        let lin: f64 = (0..4).map(|s| (f.data()[s] - mstar) / 2.0 * q.at2(s, u)).sum();
                        let skip = if layer.config.propagate_input { input.data()[u] } else { 0.0 };
                        lin + mstar + skip
                    })
                    .collect(),
            )
        };
        for n in 0..3 {
            let xn = Tensor::from_shape([1, 2], x.data()[n * 2..n * 2 + 2].to_vec());
            let out = mean_fn(1, &mean_fn(0, &xn));
            assert!((out.item() - means.data()[n]).abs() < 1e-12);
            assert_eq!(vars.data()[n], 0.0);
        }
    }

    #[test]
    fn elbo_at_prior_is_scaled_likelihood() {
        let mut model = DvipModel::new(ModelSpec { samples: 3, ..ModelSpec::new(1, 1) }, 20).unwrap();
        let c = model.layers[0].q_chol;
        model.store.set(c, Tensor::zeros([1, 3, 3]));
        let x = toy_inputs(4, 1, 8);
        let y = Tensor::from_shape([4, 1], vec![0.1, -0.2, 0.3, 0.0]);
        let key = SampleKey::training(2, 0, false);
        let tape = Tape::new();
        let params = model.store.bind(&tape);
        let obj = model.elbo(&params, tape.constant(x.clone()), tape.constant(y.clone()), &ids(4), key).unwrap();
        assert_eq!(obj.kl.item(), 0.0);
        let (m, v) = model.forward_values(&x, &ids(4), key).unwrap();
        let direct: f64 = (0..4).map(|n| gaussian_log_density(y.data()[n], m.data()[n], v.data()[n], 0.1)).sum();
        assert!((obj.value.item() - 5.0 * direct).abs() < 1e-10);
    }

    #[test]
    fn alpha_energy_requires_single_layer() {
        let model = DvipModel::new(ModelSpec::new(2, 2), 10).unwrap();
        let tape = Tape::new();
        let params = model.store.bind(&tape);
        let x = tape.constant(toy_inputs(2, 2, 1));
        let y = tape.constant(Tensor::zeros([2, 1]));
        let r = model.alpha_energy(&params, x, y, &ids(2), SampleKey::training(0, 0, false), 0.5);
        assert!(r.is_err());
    }

    #[test]
    fn single_layer_prediction_has_identical_components() {
        let model = DvipModel::new(ModelSpec { samples: 5, ..ModelSpec::new(2, 1) }, 10).unwrap();
        let mix = model.predict(&toy_inputs(3, 2, 4), 4, 11).unwrap();
        for n in 0..3 {
            let (m, v) = mix.point(n);
            assert!(m.iter().all(|&x| x == m[0]) && v.iter().all(|&x| x == v[0]));
        }
    }

    #[test]
    fn mixture_density_single_component() {
        let mix = PredictiveMixture { means: Tensor::from_shape([1, 1], vec![0.4]), vars: Tensor::from_shape([1, 1], vec![0.3]) };
        let d = mix.log_density_at(0, 1.0, 0.2);
        assert!((d - log_gaussian(1.0, 0.4, 0.5)).abs() < 1e-15);
        let twin = PredictiveMixture {
            means: Tensor::from_shape([1, 2], vec![0.4, 0.4]),
            vars: Tensor::from_shape([1, 2], vec![0.3, 0.3]),
        };
        assert!((twin.log_density_at(0, 1.0, 0.2) - d).abs() < 1e-15);
    }

    #[test]
    fn input_width_mismatch_is_reported() {
        let model = DvipModel::new(ModelSpec::new(3, 2), 10).unwrap();
        assert!(model.forward_values(&toy_inputs(2, 4, 0), &ids(2), SampleKey::prediction(0, 0)).is_err());
    }
}
