//! Shared fixtures for the benchmarks.

use dvip::config::TrainConfig;
use dvip::data::{toy_sine, Dataset, Standardizer};
use dvip::model::DvipModel;
use dvip::train::batch_indices;

/// A standardized toy regression problem with a freshly built model.
pub struct Fixture {
    pub model: DvipModel,
    pub data: Dataset,
    pub config: TrainConfig,
    pub batch: Vec<usize>,
}

/// `rows` points, minibatch `batch_size`, `samples` prior draws, `depth` layers.
pub fn fixture(rows: usize, batch_size: usize, samples: usize, depth: usize) -> Fixture {
    let raw = toy_sine(rows, 0.1, 0);
    let data = Standardizer::fit(&raw).transform(&raw);
    let config = TrainConfig { batch_size, samples, depth, ..TrainConfig::default() };
    let model = config.build_model(data.dim(), data.len()).expect("valid fixture config");
    let batch = batch_indices(data.len(), batch_size, config.seed, 0);
    Fixture { model, data, config, batch }
}
