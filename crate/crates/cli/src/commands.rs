//! One function per subcommand.

use std::time::Instant;

use anyhow::{Context, Result};
use dvip::checkpoint::Checkpoint;
use dvip::config::TrainConfig;
use dvip::data::{make_split, Dataset, Standardizer};
use dvip::metrics::mean_and_standard_error;
use dvip::model::DvipModel;
use dvip::priors::PriorKey;
use dvip::rng::FIXED;
use dvip::tensor::Tensor;
use dvip::train::{evaluate, run_split, Evaluation, TrainState};

use crate::io::{
    dataset_name, load_config, load_dataset, out_path, require_checkpoint, single_dataset, strings, task_of, write_csv,
};
use crate::{AblateArgs, BenchmarkArgs, Common, EvalArgs, Rows, Usage};

const MODEL_LABEL: &str = "DVIP";
const PRIOR_GRID_POINTS: usize = 200;
const PRIOR_GRID_HALF_WIDTH: f64 = 3.0;

fn metric_header(task: dvip::data::Task, leading: &[&str]) -> Vec<String> {
    let mut h = strings(leading);
    h.extend(strings(Evaluation::names(task)));
    h.push("train_seconds".into());
    h
}

fn metric_values(eval: &Evaluation) -> Vec<String> {
    eval.named().iter().map(|(_, v)| v.to_string()).collect()
}

/// Rows of `data` selected by `rows` under the configured split.
fn select_rows(data: &Dataset, config: &TrainConfig, rows: Rows) -> Result<Dataset> {
    if rows == Rows::All {
        return Ok(data.clone());
    }
    let (train, test) = make_split(data.len(), config.split)?;
    Ok(data.subset(if rows == Rows::Train { &train } else { &test }))
}

/// Loads a checkpoint; a stored standardizer wins over refitting on the split.
fn load_checkpoint(c: &Common, data: &Dataset, config: &TrainConfig) -> Result<(Checkpoint, Standardizer)> {
    let path = require_checkpoint(c)?;
    let ck = Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
    let standardizer = match &ck.standardizer {
        Some(s) => s.clone(),
        None => Standardizer::fit(&select_rows(data, config, Rows::Train)?),
    };
    if ck.model.spec.input_dim != data.dim() {
        return Err(dvip::Error::Shape(format!(
            "checkpoint model takes {} features, dataset has {}",
            ck.model.spec.input_dim,
            data.dim()
        ))
        .into());
    }
    Ok((ck, standardizer))
}

pub fn train(c: &Common) -> Result<()> {
    let mut config = load_config(c)?;
    let spec = single_dataset(c)?;
    let data = load_dataset(spec, task_of(&config))?;
    let train_raw = select_rows(&data, &config, Rows::Train)?;
    let (mut model, mut state, standardizer) = if c.checkpoint.is_some() {
        let (ck, standardizer) = load_checkpoint(c, &data, &config)?;
        if c.seed.is_some_and(|s| s != ck.seed) {
            return Err(Usage(format!("checkpoint was trained with seed {}", ck.seed)).into());
        }
        config.seed = ck.seed;
        (ck.model, ck.state, standardizer)
    } else {
        let standardizer = Standardizer::fit(&train_raw);
        let model = config.build_model(train_raw.dim(), train_raw.len())?;
        let state = TrainState::new(&model, config.learning_rate);
        (model, state, standardizer)
    };

    let train_std = standardizer.transform(&train_raw);
    let start = Instant::now();
    let history = dvip::train::train(&mut model, &mut state, &train_std, &config, config.iterations)?;
    let seconds = start.elapsed().as_secs_f64();

    let eval = evaluate(&model, &standardizer, &train_raw, config.test_passes, config.seed)?;
    let depth = model.depth();
    let samples = model.spec.samples;
    let ck = Checkpoint { model, state, seed: config.seed, standardizer: Some(standardizer) };
    ck.save(out_path(c, "checkpoint.dvip")?)?;

    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| vec![h.iteration.to_string(), h.objective.to_string(), h.loglik.to_string(), h.kl.to_string()])
        .collect();
    write_csv(&out_path(c, "history.csv")?, &strings(&["iteration", "objective", "loglik", "kl"]), &rows)?;

    let mut header = strings(&["dataset", "model", "depth", "samples", "seed", "iterations", "train_seconds"]);
    header.extend(Evaluation::names(data.task).iter().map(|n| format!("train_{n}")));
    let mut row = vec![
        dataset_name(spec),
        MODEL_LABEL.into(),
        depth.to_string(),
        samples.to_string(),
        config.seed.to_string(),
        ck.state.iteration.to_string(),
        seconds.to_string(),
    ];
    row.extend(metric_values(&eval));
    write_csv(&out_path(c, "summary.csv")?, &header, &[row])?;
    println!(
        "dataset={} L={depth} S={samples} seed={} iterations={} seconds={seconds:.2}",
        dataset_name(spec),
        config.seed,
        ck.state.iteration
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let c = &a.common;
    let config = load_config(c)?;
    let spec = single_dataset(c)?;
    let data = load_dataset(spec, task_of(&config))?;
    let (ck, standardizer) = load_checkpoint(c, &data, &config)?;
    let rows = select_rows(&data, &config, a.rows)?;
    let seed = c.seed.unwrap_or(ck.seed);
    let eval = evaluate(&ck.model, &standardizer, &rows, config.test_passes, seed)?;
    let mut row = vec![dataset_name(spec), MODEL_LABEL.into(), ck.model.depth().to_string(), config.split.index.to_string()];
    row.extend(metric_values(&eval));
    row.push(String::new());
    write_csv(&out_path(c, "metrics.csv")?, &metric_header(data.task, &["dataset", "model", "depth", "split"]), &[row])?;
    let shown: Vec<String> = eval.named().iter().map(|(n, v)| format!("{n}={v:.4}")).collect();
    println!("{}", shown.join(" "));
    Ok(())
}

pub fn predict(a: &EvalArgs) -> Result<()> {
    let c = &a.common;
    let config = load_config(c)?;
    let spec = single_dataset(c)?;
    let data = load_dataset(spec, task_of(&config))?;
    let (ck, standardizer) = load_checkpoint(c, &data, &config)?;
    let rows = standardizer.transform(&select_rows(&data, &config, a.rows)?);
    let seed = c.seed.unwrap_or(ck.seed);
    let mix = ck.model.predict(&rows.x, config.test_passes, seed)?;
    // component variances include the likelihood noise for regression
    let noise = ck.model.noise_var().unwrap_or(0.0);
    let (mu, scale) = (standardizer.y_mean, standardizer.y_scale);
    let r = mix.components();
    let mut header = vec!["target".to_string()];
    header.extend((1..=r).map(|k| format!("mean_{k}")));
    header.extend((1..=r).map(|k| format!("var_{k}")));
    let out: Vec<Vec<String>> = (0..mix.len())
        .map(|n| {
            let (m, v) = mix.point(n);
            let mut row = vec![standardizer.inverse_y(rows.y[n]).to_string()];
            row.extend(m.iter().map(|m| (m * scale + mu).to_string()));
            row.extend(v.iter().map(|v| ((v + noise) * scale * scale).to_string()));
            row
        })
        .collect();
    write_csv(&out_path(c, "predictions.csv")?, &header, &out)?;
    println!("{} points, {r} components", mix.len());
    Ok(())
}

pub fn sample_prior(c: &Common) -> Result<()> {
    let config = load_config(c)?;
    let (model, standardizer, seed) = if c.checkpoint.is_some() {
        let path = require_checkpoint(c)?;
        let ck = Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
        let st = ck.standardizer.clone().unwrap_or_else(|| Standardizer::identity(ck.model.spec.input_dim));
        (ck.model, st, c.seed.unwrap_or(ck.seed))
    } else {
        (config.build_model(1, 1)?, Standardizer::identity(1), config.seed)
    };
    if model.spec.input_dim != 1 {
        return Err(Usage(format!("sample-prior needs a 1-D input model, this one takes {}", model.spec.input_dim)).into());
    }
    let samples = c.samples.unwrap_or(model.spec.samples);
    let step = 2.0 * PRIOR_GRID_HALF_WIDTH / (PRIOR_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..PRIOR_GRID_POINTS).map(|i| -PRIOR_GRID_HALF_WIDTH + step * i as f64).collect();
    let inputs = Tensor::from_shape([PRIOR_GRID_POINTS, 1], grid.clone());
    let draws = prior_draws(&model, &inputs, samples, seed)?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=samples).map(|s| format!("f_{s}")));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(b, z)| {
            let mut row = vec![(z * standardizer.x_scale[0] + standardizer.x_mean[0]).to_string()];
            row.extend((0..samples).map(|s| draws.data()[s * PRIOR_GRID_POINTS + b].to_string()));
            row
        })
        .collect();
    write_csv(&out_path(c, "prior_samples.csv")?, &header, &rows)?;
    println!("{samples} prior functions on {PRIOR_GRID_POINTS} grid points");
    Ok(())
}

/// `S x B` draws of the first layer's prior, shared with prediction.
fn prior_draws(model: &DvipModel, inputs: &Tensor, samples: usize, seed: u64) -> Result<Tensor> {
    let key = PriorKey { seed, counter: FIXED, layer: 0 };
    Ok(model.layers[0].prior.sample_values(&model.store, inputs, samples, key)?)
}

struct Variant {
    label: String,
    config: TrainConfig,
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let depths = if a.depths.is_empty() { vec![config.depth] } else { a.depths.clone() };
    let mut variants = Vec::new();
    for depth in depths {
        let mut cfg = config.clone();
        cfg.depth = depth;
        cfg.validate()?;
        variants.push(Variant { label: MODEL_LABEL.into(), config: cfg });
    }
    run_grid(&a.common, &variants, a.splits)
}

pub fn ablate_samples(a: &AblateArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let mut variants = Vec::new();
    for &s in &a.sample_counts {
        let mut cfg = config.clone();
        cfg.samples = s;
        cfg.validate()?;
        variants.push(Variant { label: format!("{MODEL_LABEL}(S={s})"), config: cfg });
    }
    run_grid(&a.common, &variants, a.splits)
}

/// Runs every (dataset, variant, split) cell; failed cells are recorded
/// and the remaining cells still run.
fn run_grid(c: &Common, variants: &[Variant], splits: u64) -> Result<()> {
    if c.dataset.is_empty() {
        return Err(Usage("at least one --dataset is required".into()).into());
    }
    if splits == 0 {
        return Err(Usage("--splits must be positive".into()).into());
    }
    let task = task_of(&variants[0].config);
    let datasets: Vec<(String, Dataset)> =
        c.dataset.iter().map(|s| Ok((dataset_name(s), load_dataset(s, task)?))).collect::<Result<_>>()?;

    let names = Evaluation::names(task);
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (name, data) in &datasets {
        for v in variants {
            let mut per_metric: Vec<Vec<f64>> = vec![Vec::new(); names.len() + 1];
            for split in 0..splits {
                let mut cfg = v.config.clone();
                cfg.split.index = split;
                let key = vec![name.clone(), v.label.clone(), cfg.depth.to_string(), split.to_string()];
                match run_split(data, &cfg) {
                    Ok((fitted, eval)) => {
                        for (k, (_, value)) in eval.named().iter().enumerate() {
                            per_metric[k].push(*value);
                        }
                        per_metric[names.len()].push(fitted.train_seconds);
                        let mut row = key;
                        row.extend(metric_values(&eval));
                        row.push(fitted.train_seconds.to_string());
                        cells.push(row);
                    }
                    Err(e) => {
                        eprintln!("cell {} failed: {e}", key.join("/"));
                        let mut row = key;
                        row.push(e.to_string());
                        failures.push(row);
                        first_error.get_or_insert(e);
                    }
                }
            }
            let mut row = vec![name.clone(), v.label.clone(), v.config.depth.to_string(), per_metric[0].len().to_string()];
            let mut shown = Vec::new();
            for (k, values) in per_metric.iter().enumerate() {
                let (m, se) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_standard_error(values) };
                row.push(m.to_string());
                row.push(se.to_string());
                let metric = names.get(k).copied().unwrap_or("train_seconds");
                shown.push(format!("{metric} {m:.4} ± {se:.4}"));
            }
            println!("{name} {} L={}: {}", v.label, v.config.depth, shown.join(", "));
            summary.push(row);
        }
    }

    write_csv(&out_path(c, "metrics.csv")?, &metric_header(task, &["dataset", "model", "depth", "split"]), &cells)?;
    let mut header = strings(&["dataset", "model", "depth", "completed"]);
    for n in names.iter().copied().chain(["train_seconds"]) {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_se"));
    }
    write_csv(&out_path(c, "summary.csv")?, &header, &summary)?;
    write_csv(&out_path(c, "failures.csv")?, &strings(&["dataset", "model", "depth", "split", "error"]), &failures)?;
    match first_error {
        None => Ok(()),
        Some(e) => {
            Err(anyhow::Error::new(e).context(format!("{} of {} cells failed", failures.len(), failures.len() + cells.len())))
        }
    }
}
