//! Run configuration and its `key=value` file format.
//!
//! One setting per line; blank lines and lines starting with `#` are
//! ignored. Keys (defaults in brackets):
//!
//! | key | meaning |
//! |-----|---------|
//! | `iterations` | optimization steps [150000] |
//! | `batch_size` | minibatch size [100] |
//! | `samples` | prior samples `S` per layer [20] |
//! | `learning_rate` | Adam step size [0.001] |
//! | `seed` | seed for every model draw [0] |
//! | `depth` | number of layers `L` [2] |
//! | `inner_width` | inner layer width, or `auto` for `min(D, 30)` [auto] |
//! | `prior` | `bnn` or `cosine` [bnn] |
//! | `bnn_hidden` | comma-separated BNN hidden widths [10,10] |
//! | `unconstrained_prior` | per-weight BNN prior parameters [false] |
//! | `prior_log_var` | initial log-variance of BNN prior weights and biases [0] |
//! | `cosine_width` | random features of the cosine prior [100] |
//! | `likelihood` | `gaussian` or `probit` [gaussian] |
//! | `quadrature_order` | Gauss–Hermite nodes for probit [20] |
//! | `propagate_input` | add layer inputs to inner-layer means [true] |
//! | `fixed_prior_noise` | reuse one set of prior functions at every step [true] |
//! | `objective` | `elbo` or `alpha_energy` [elbo] |
//! | `alpha` | α of the α-energy [0.5] |
//! | `train_passes` | sample paths per training objective [1] |
//! | `test_passes` | mixture components at prediction [100] |
//! | `split` | train/test split index [0] |
//! | `split_seed` | seed of the split permutation [0] |
//! | `test_fraction` | share of rows held out [0.1] |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::model::{parse_widths, DvipModel, LikelihoodKind, ModelSpec, PriorSpec, DEFAULT_BNN_HIDDEN};
use crate::optim::DEFAULT_LEARNING_RATE;
use crate::priors::Prior;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObjectiveKind {
    Elbo,
    AlphaEnergy { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub samples: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub depth: usize,
    pub inner_width: Option<usize>,
    pub prior: PriorSpec,
    pub likelihood: LikelihoodKind,
    pub quadrature_order: usize,
    pub propagate_input: bool,
    pub fixed_prior_noise: bool,
    pub objective: ObjectiveKind,
    pub train_passes: usize,
    pub test_passes: usize,
    pub split: SplitSpec,
    /// Initial log-variance of every BNN prior weight and bias.
    pub prior_log_var: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 150_000,
            batch_size: 100,
            samples: 20,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            depth: 2,
            inner_width: None,
            prior: PriorSpec::Bnn { hidden: DEFAULT_BNN_HIDDEN.to_vec(), unconstrained: false },
            likelihood: LikelihoodKind::Gaussian,
            quadrature_order: 20,
            propagate_input: true,
            fixed_prior_noise: true,
            objective: ObjectiveKind::Elbo,
            train_passes: 1,
            test_passes: 100,
            split: SplitSpec::default(),
            prior_log_var: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (bnn_hidden, unconstrained) = match &self.prior {
            PriorSpec::Bnn { hidden, unconstrained } => (hidden.clone(), *unconstrained),
            PriorSpec::Cosine { .. } => (DEFAULT_BNN_HIDDEN.to_vec(), false),
        };
        match key {
            "iterations" => self.iterations = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "inner_width" => self.inner_width = if value == "auto" { None } else { Some(parse(key, value)?) },
            "prior" => {
                self.prior = match value {
                    "bnn" => PriorSpec::Bnn { hidden: bnn_hidden, unconstrained },
                    "cosine" => PriorSpec::Cosine { width: self.cosine_width() },
                    _ => return Err(Error::Config(format!("unknown prior `{value}`"))),
                }
            }
            "bnn_hidden" => {
                let hidden = parse_widths(value)?;
                if let PriorSpec::Bnn { hidden: h, .. } = &mut self.prior {
                    *h = hidden;
                }
            }
            "unconstrained_prior" => {
                let flag = parse(key, value)?;
                if let PriorSpec::Bnn { unconstrained, .. } = &mut self.prior {
                    *unconstrained = flag;
                }
            }
            "cosine_width" => {
                let w = parse(key, value)?;
                if let PriorSpec::Cosine { width } = &mut self.prior {
                    *width = w;
                }
            }
            "likelihood" => {
                self.likelihood = match value {
                    "gaussian" => LikelihoodKind::Gaussian,
                    "probit" => LikelihoodKind::Probit,
                    _ => return Err(Error::Config(format!("unknown likelihood `{value}`"))),
                }
            }
            "quadrature_order" => self.quadrature_order = parse(key, value)?,
            "propagate_input" => self.propagate_input = parse(key, value)?,
            "fixed_prior_noise" => self.fixed_prior_noise = parse(key, value)?,
            "objective" => {
                self.objective = match value {
                    "elbo" => ObjectiveKind::Elbo,
                    "alpha_energy" => ObjectiveKind::AlphaEnergy { alpha: self.alpha() },
                    _ => return Err(Error::Config(format!("unknown objective `{value}`"))),
                }
            }
            "alpha" => {
                let a = parse(key, value)?;
                if let ObjectiveKind::AlphaEnergy { alpha } = &mut self.objective {
                    *alpha = a;
                }
            }
            "train_passes" => self.train_passes = parse(key, value)?,
            "test_passes" => self.test_passes = parse(key, value)?,
            "split" => self.split.index = parse(key, value)?,
            "split_seed" => self.split.seed = parse(key, value)?,
            "test_fraction" => self.split.test_fraction = parse(key, value)?,
            "prior_log_var" => self.prior_log_var = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn cosine_width(&self) -> usize {
        match self.prior {
            PriorSpec::Cosine { width } => width,
            PriorSpec::Bnn { .. } => 100,
        }
    }

    fn alpha(&self) -> f64 {
        match self.objective {
            ObjectiveKind::AlphaEnergy { alpha } => alpha,
            ObjectiveKind::Elbo => 0.5,
        }
    }

    /// Parses a whole file body. Later lines override earlier ones.
    ///
    /// Settings that pick a variant (`prior`, `objective`) are applied
    /// before settings that tune it, regardless of line order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    /// Applies settings, variant selectors first.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let selector = |k: &str| k == "prior" || k == "objective";
        for (k, v) in pairs.iter().filter(|(k, _)| selector(k)) {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| !selector(k)) {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.samples < 1 || self.depth < 1 || self.train_passes < 1 || self.test_passes < 1 {
            return Err(Error::Config("batch_size, samples, depth and pass counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if let ObjectiveKind::AlphaEnergy { alpha } = self.objective {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
            }
            if self.depth != 1 {
                return Err(Error::Config("the alpha_energy objective needs depth=1".into()));
            }
            if self.likelihood != LikelihoodKind::Gaussian {
                return Err(Error::Config("the alpha_energy objective needs a gaussian likelihood".into()));
            }
        }
        if self.prior_log_var.is_nan() {
            return Err(Error::Config("prior_log_var must be a number".into()));
        }
        if self.inner_width == Some(0) {
            return Err(Error::Config("inner_width must be positive".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self, input_dim: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            depth: self.depth,
            inner_width: self.inner_width,
            samples: self.samples,
            prior: self.prior.clone(),
            likelihood: self.likelihood,
            quadrature_order: self.quadrature_order,
            propagate_input: self.propagate_input,
            feature_seed: self.seed,
        }
    }

    /// A freshly initialized model for `input_dim` features and `train_size` rows.
    pub fn build_model(&self, input_dim: usize, train_size: usize) -> Result<DvipModel> {
        let mut model = DvipModel::new(self.model_spec(input_dim), train_size)?;
        if self.prior_log_var != 0.0 {
            for layer in &model.layers {
                if let Prior::Bnn(bnn) = &layer.prior {
                    for p in &bnn.layers {
                        for id in [p.w_log_var, p.b_log_var] {
                            model.store.get_mut(id).data_mut().fill(self.prior_log_var);
                        }
                    }
                }
            }
        }
        Ok(model)
    }

    /// The full configuration in file form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("iterations", self.iterations.to_string());
        put("batch_size", self.batch_size.to_string());
        put("samples", self.samples.to_string());
        put("learning_rate", format!("{:?}", self.learning_rate));
        put("seed", self.seed.to_string());
        put("depth", self.depth.to_string());
        put("inner_width", self.inner_width.map_or("auto".into(), |w| w.to_string()));
        match &self.prior {
            PriorSpec::Bnn { hidden, unconstrained } => {
                put("prior", "bnn".into());
                put("bnn_hidden", hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
                put("unconstrained_prior", unconstrained.to_string());
            }
            PriorSpec::Cosine { width } => {
                put("prior", "cosine".into());
                put("cosine_width", width.to_string());
            }
        }
        put("likelihood", if self.likelihood == LikelihoodKind::Gaussian { "gaussian" } else { "probit" }.into());
        put("quadrature_order", self.quadrature_order.to_string());
        put("propagate_input", self.propagate_input.to_string());
        put("fixed_prior_noise", self.fixed_prior_noise.to_string());
        match self.objective {
            ObjectiveKind::Elbo => put("objective", "elbo".into()),
            ObjectiveKind::AlphaEnergy { alpha } => {
                put("objective", "alpha_energy".into());
                put("alpha", format!("{alpha:?}"));
            }
        }
        put("train_passes", self.train_passes.to_string());
        put("test_passes", self.test_passes.to_string());
        put("split", self.split.index.to_string());
        put("split_seed", self.split.seed.to_string());
        put("test_fraction", format!("{:?}", self.split.test_fraction));
        put("prior_log_var", format!("{:?}", self.prior_log_var));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let c = TrainConfig::default();
        assert_eq!((c.iterations, c.batch_size, c.samples, c.test_passes), (150_000, 100, 20, 100));
        assert_eq!(c.learning_rate, 1e-3);
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "# toy\ndepth=3\nsamples = 10\ncosine_width=64\nprior=cosine\nobjective=elbo\nseed=42\n";
        let c = TrainConfig::parse(text).unwrap();
        assert_eq!(c.depth, 3);
        assert_eq!(c.samples, 10);
        assert_eq!(c.prior, PriorSpec::Cosine { width: 64 });
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        let a = TrainConfig::parse("depth=1\nalpha=0.25\nobjective=alpha_energy\n").unwrap();
        assert_eq!(a.objective, ObjectiveKind::AlphaEnergy { alpha: 0.25 });
        assert_eq!(TrainConfig::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(matches!(TrainConfig::parse("depht=3"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::parse("depth=three"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::parse("no equals sign"), Err(Error::Config(_))));
        assert!(TrainConfig::parse("objective=alpha_energy\ndepth=2").is_err());
        assert!(TrainConfig::parse("batch_size=0").is_err());
    }

    #[test]
    fn prior_log_var_reaches_every_bnn_variance() {
        let c = TrainConfig::parse("prior_log_var=-2.5\ndepth=2").unwrap();
        let model = c.build_model(3, 10).unwrap();
        let mut seen = 0;
        for (name, t) in model.store.iter() {
            if name.ends_with("_log_var") && name.contains(".prior.") {
                assert!(t.data().iter().all(|&v| v == -2.5), "{name}");
                seen += 1;
            }
        }
        assert_eq!(seen, 2 * 2 * 3);
        let fresh = TrainConfig::default().build_model(3, 10).unwrap();
        assert_eq!(fresh.store, DvipModel::new(TrainConfig::default().model_spec(3), 10).unwrap().store);
    }
}
