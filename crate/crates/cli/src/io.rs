//! Dataset resolution, configuration loading and CSV output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dvip::config::TrainConfig;
use dvip::data::{load_csv, toy_sine, two_moons, Dataset, Task};
use dvip::model::LikelihoodKind;

use crate::{Common, Usage};

pub const SINE_POINTS: usize = 200;
pub const SINE_NOISE: f64 = 0.1;
pub const MOONS_POINTS: usize = 500;
pub const MOONS_NOISE: f64 = 0.2;

/// Defaults, then the config file, then `--set` pairs, then dedicated flags.
pub fn load_config(c: &Common) -> Result<TrainConfig> {
    let mut config = match &c.config {
        Some(path) => {
            if !path.exists() {
                return Err(Usage(format!("config file {} does not exist", path.display())).into());
            }
            TrainConfig::from_file(path)?
        }
        None => TrainConfig::default(),
    };
    let mut pairs = Vec::new();
    for s in &c.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = c.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    if let Some(depth) = c.depth {
        pairs.push(("depth".into(), depth.to_string()));
    }
    if let Some(samples) = c.samples {
        pairs.push(("samples".into(), samples.to_string()));
    }
    config.apply(&pairs)?;
    Ok(config)
}

pub fn task_of(config: &TrainConfig) -> Task {
    match config.likelihood {
        LikelihoodKind::Gaussian => Task::Regression,
        LikelihoodKind::Probit => Task::Binary,
    }
}

/// Short name used in output tables.
pub fn dataset_name(spec: &str) -> String {
    match spec.strip_prefix("synthetic:") {
        Some(name) => name.to_string(),
        None => Path::new(spec).file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned()),
    }
}

/// Loads a CSV file or generates a named synthetic dataset.
pub fn load_dataset(spec: &str, task: Task) -> Result<Dataset> {
    let data = match spec {
        "synthetic:sine" => toy_sine(SINE_POINTS, SINE_NOISE, 0),
        "synthetic:moons" => two_moons(MOONS_POINTS, MOONS_NOISE, 0),
        _ if spec.starts_with("synthetic:") => return Err(Usage(format!("unknown synthetic dataset `{spec}`")).into()),
        _ => {
            if !Path::new(spec).exists() {
                return Err(Usage(format!("dataset file {spec} does not exist")).into());
            }
            return load_csv(spec, task).with_context(|| format!("loading {spec}"));
        }
    };
    if data.task != task {
        return Err(Usage(format!("`{spec}` is a {:?} dataset; set the likelihood to match", data.task)).into());
    }
    Ok(data)
}

pub fn single_dataset(c: &Common) -> Result<&str> {
    match c.dataset.as_slice() {
        [one] => Ok(one),
        [] => Err(Usage("--dataset is required".into()).into()),
        _ => Err(Usage("this command takes exactly one --dataset".into()).into()),
    }
}

pub fn require_checkpoint(c: &Common) -> Result<&Path> {
    let path = c.checkpoint.as_deref().ok_or_else(|| Usage("--checkpoint is required".into()))?;
    if !path.exists() {
        return Err(Usage(format!("checkpoint {} does not exist", path.display())).into());
    }
    Ok(path)
}

pub fn out_path(c: &Common, file: &str) -> Result<PathBuf> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(c.out.join(file))
}

/// Writes `header` and `rows` as CSV.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn strings<S: ToString>(items: &[S]) -> Vec<String> {
    items.iter().map(ToString::to_string).collect()
}
