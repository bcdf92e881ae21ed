//! Stochastic optimization of the training objective.
//!
//! Minibatches come from shuffled epochs. The permutation of epoch `e` is
//! a pure function of `(seed, e)` and model noise is keyed by iteration,
//! so any iteration can be replayed from the iteration counter alone.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::config::{ObjectiveKind, TrainConfig};
use crate::data::{make_split, Dataset, Standardizer, Task};
use crate::error::{Error, Result};
use crate::metrics::{binary_metrics, regression_metrics, BinaryMetrics, RegressionMetrics};
use crate::model::{DvipModel, LikelihoodKind, Objective, SampleKey};
use crate::optim::Adam;
use crate::params::Bound;
use crate::rng::{self, Domain};
use crate::tensor::Tensor;

/// Optimizer state and position in the iteration sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Iterations completed.
    pub iteration: u64,
    pub adam: Adam,
}

impl TrainState {
    pub fn new(model: &DvipModel, learning_rate: f64) -> Self {
        Self { iteration: 0, adam: Adam::new(&model.store, learning_rate) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: u64,
    pub objective: f64,
    pub loglik: f64,
    pub kl: f64,
}

/// Rows of the minibatch used at `iteration`.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let b = batch_size.min(n);
    let per_epoch = n.div_ceil(b) as u64;
    let (epoch, k) = (iteration / per_epoch, (iteration % per_epoch) as usize);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, Domain::Shuffle, &[epoch]));
    perm[k * b..((k + 1) * b).min(n)].to_vec()
}

/// The configured objective on rows `idx` of `data`.
pub fn objective<'t>(
    model: &DvipModel,
    params: &Bound<'t>,
    data: &Dataset,
    idx: &[usize],
    config: &TrainConfig,
    iteration: u64,
) -> Result<Objective<'t>> {
    let tape = params.vars()[0].tape();
    let (x, y) = data.batch(idx);
    let (x, y) = (tape.constant(x), tape.constant(y));
    let ids: Vec<u64> = idx.iter().map(|&i| i as u64).collect();
    let mut parts = Vec::with_capacity(config.train_passes);
    for pass in 0..config.train_passes as u64 {
        let key = SampleKey { pass, ..SampleKey::training(config.seed, iteration, config.fixed_prior_noise) };
        parts.push(match config.objective {
            ObjectiveKind::Elbo => model.elbo(params, x, y, &ids, key)?,
            ObjectiveKind::AlphaEnergy { alpha } => model.alpha_energy(params, x, y, &ids, key, alpha)?,
        });
    }
    if parts.len() == 1 {
        return Ok(parts.pop().expect("one pass"));
    }
    let scale = 1.0 / parts.len() as f64;
    let mut loglik = parts[0].loglik;
    for p in &parts[1..] {
        loglik = loglik + p.loglik;
    }
    let loglik = loglik.scale(scale);
    let kl = parts[0].kl;
    Ok(Objective { value: loglik - kl, loglik, kl })
}

/// Objective value and its gradient for every parameter block.
pub fn objective_and_gradients(
    model: &DvipModel,
    data: &Dataset,
    idx: &[usize],
    config: &TrainConfig,
    iteration: u64,
) -> Result<(HistoryRow, Vec<Tensor>)> {
    let tape = Tape::new();
    let params = model.store.bind(&tape);
    let obj = objective(model, &params, data, idx, config, iteration)?;
    let mut grads = tape.backward(obj.value)?;
    let g = params.vars().iter().map(|v| grads.take_id(v.id())).collect();
    let row = HistoryRow { iteration, objective: obj.value.item(), loglik: obj.loglik.item(), kl: obj.kl.item() };
    Ok((row, g))
}

/// One Adam step on the next minibatch.
pub fn step(model: &mut DvipModel, state: &mut TrainState, data: &Dataset, config: &TrainConfig) -> Result<HistoryRow> {
    let it = state.iteration;
    let idx = batch_indices(data.len(), config.batch_size, config.seed, it);
    let (row, grads) = objective_and_gradients(model, data, &idx, config, it)?;
    state.adam.step(&mut model.store, &grads)?;
    state.iteration += 1;
    Ok(row)
}

/// Trains until `state.iteration == until`; returns one row per step.
pub fn train(
    model: &mut DvipModel,
    state: &mut TrainState,
    data: &Dataset,
    config: &TrainConfig,
    until: u64,
) -> Result<Vec<HistoryRow>> {
    check_data(model, data)?;
    let mut history = Vec::with_capacity(until.saturating_sub(state.iteration) as usize);
    while state.iteration < until {
        history.push(step(model, state, data, config)?);
    }
    Ok(history)
}

fn check_data(model: &DvipModel, data: &Dataset) -> Result<()> {
    if data.dim() != model.spec.input_dim {
        return Err(Error::Shape(format!("model takes {} features, dataset has {}", model.spec.input_dim, data.dim())));
    }
    let expected = match model.spec.likelihood {
        LikelihoodKind::Gaussian => Task::Regression,
        LikelihoodKind::Probit => Task::Binary,
    };
    if data.task != expected {
        return Err(Error::Contract(format!("{:?} likelihood cannot fit a {:?} dataset", model.spec.likelihood, data.task)));
    }
    Ok(())
}

/// A trained model with everything needed to evaluate it on raw data.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: DvipModel,
    pub state: TrainState,
    pub standardizer: Standardizer,
    pub history: Vec<HistoryRow>,
    /// Wall time of the optimization loop only.
    pub train_seconds: f64,
}

/// Standardizes `train` on itself, builds a model and trains it.
pub fn fit(config: &TrainConfig, train_raw: &Dataset) -> Result<Fitted> {
    config.validate()?;
    let standardizer = Standardizer::fit(train_raw);
    let data = standardizer.transform(train_raw);
    let mut model = config.build_model(data.dim(), data.len())?;
    let mut state = TrainState::new(&model, config.learning_rate);
    let start = Instant::now();
    let history = train(&mut model, &mut state, &data, config, config.iterations)?;
    let train_seconds = start.elapsed().as_secs_f64();
    Ok(Fitted { model, state, standardizer, history, train_seconds })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evaluation {
    Regression(RegressionMetrics),
    Binary(BinaryMetrics),
}

impl Evaluation {
    /// Metric names and values in reporting order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        match self {
            Evaluation::Regression(m) => vec![("rmse", m.rmse), ("nll", m.nll), ("crps", m.crps)],
            Evaluation::Binary(m) => vec![("accuracy", m.accuracy), ("log_likelihood", m.mean_log_likelihood)],
        }
    }

    /// Metric names for datasets of `task`.
    pub fn names(task: Task) -> &'static [&'static str] {
        match task {
            Task::Regression => &["rmse", "nll", "crps"],
            Task::Binary => &["accuracy", "log_likelihood"],
        }
    }
}

/// Fits on the training rows of split `config.split` and evaluates on its
/// test rows with `config.test_passes` mixture components.
pub fn run_split(data: &Dataset, config: &TrainConfig) -> Result<(Fitted, Evaluation)> {
    let (train_idx, test_idx) = make_split(data.len(), config.split)?;
    let fitted = fit(config, &data.subset(&train_idx))?;
    let eval = evaluate(&fitted.model, &fitted.standardizer, &data.subset(&test_idx), config.test_passes, config.seed)?;
    Ok((fitted, eval))
}

/// Metrics on raw (unstandardized) test data with `passes` mixture components.
pub fn evaluate(
    model: &DvipModel,
    standardizer: &Standardizer,
    test_raw: &Dataset,
    passes: usize,
    seed: u64,
) -> Result<Evaluation> {
    let test = standardizer.transform(test_raw);
    check_data(model, &test)?;
    let mix = model.predict(&test.x, passes, seed)?;
    match model.spec.likelihood {
        LikelihoodKind::Gaussian => {
            let noise = model.noise_var().expect("gaussian likelihood has a noise variance");
            Ok(Evaluation::Regression(regression_metrics(&mix, &test.y, noise, standardizer.y_mean, standardizer.y_scale)?))
        }
        LikelihoodKind::Probit => Ok(Evaluation::Binary(binary_metrics(&mix.class_probability(), &test.y)?)),
    }
}
