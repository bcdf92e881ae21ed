//! Binary checkpoint format.
//!
//! All integers and floats are little-endian. Layout:
//!
//! ```text
//! magic        4 bytes, "DVIP"
//! version      u32
//! descriptor   u32 length + UTF-8 text (model architecture, key=value lines)
//! parameters   u32 count + blocks
//! buffers      u32 count + blocks (data standardization)
//! optimizer    u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps,
//!              u32 count + blocks (`adam.m.<name>`, `adam.v.<name>`)
//! rng          u64 seed, u64 iteration
//! ```
//!
//! A block is `u32 name length`, name bytes, `u32 rank`, `rank` u64 dims,
//! then the values as raw f64. Saving a loaded checkpoint reproduces the
//! input file byte for byte.

use std::path::Path;

use crate::data::Standardizer;
use crate::error::{CheckpointError, Result};
use crate::model::{DvipModel, ModelSpec};
use crate::optim::Adam;
use crate::tensor::Tensor;
use crate::train::TrainState;

pub const MAGIC: &[u8; 4] = b"DVIP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: DvipModel,
    pub state: TrainState,
    /// Seed of every model draw; fixes the prior functions used at prediction.
    pub seed: u64,
    pub standardizer: Option<Standardizer>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn text(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn block(&mut self, name: &str, t: &Tensor) {
        self.text(name);
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("invalid UTF-8".into()))
    }

    fn block(&mut self) -> Result<(String, Tensor), CheckpointError> {
        let name = self.text()?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Malformed(format!("block `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(self.u64()?).map_err(|_| CheckpointError::Malformed("dimension overflow".into()))?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed("dimension overflow".into()))?;
        if len.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(CheckpointError::Truncated);
        }
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok((name, Tensor::from_shape(shape, data)))
    }

    fn blocks(&mut self) -> Result<Vec<(String, Tensor)>, CheckpointError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.block()).collect()
    }
}

/// Moves named blocks into `targets` (name, current value) in order,
/// checking that the set of names and every shape agree.
fn match_blocks(mut blocks: Vec<(String, Tensor)>, targets: &[(String, Vec<usize>)]) -> Result<Vec<Tensor>, CheckpointError> {
    let mut out = Vec::with_capacity(targets.len());
    for (name, shape) in targets {
        let pos = blocks.iter().position(|(n, _)| n == name).ok_or_else(|| CheckpointError::MissingBlock(name.clone()))?;
        let (_, t) = blocks.swap_remove(pos);
        if t.shape() != shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                found: t.shape().to_vec(),
            });
        }
        out.push(t);
    }
    if let Some((extra, _)) = blocks.first() {
        return Err(CheckpointError::Malformed(format!("unexpected block `{extra}`")));
    }
    Ok(out)
}

impl Checkpoint {
    pub fn descriptor(&self) -> String {
        format!("{}train_size={}\n", self.model.spec.descriptor(), self.model.train_size)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.text(&self.descriptor());

        w.u32(self.model.store.len() as u32);
        for (name, t) in self.model.store.iter() {
            w.block(name, t);
        }

        match &self.standardizer {
            Some(s) => {
                w.u32(3);
                w.block("standardizer.x_mean", &Tensor::vector(s.x_mean.clone()));
                w.block("standardizer.x_scale", &Tensor::vector(s.x_scale.clone()));
                w.block("standardizer.y", &Tensor::vector(vec![s.y_mean, s.y_scale]));
            }
            None => w.u32(0),
        }

        let adam = &self.state.adam;
        w.u64(adam.t);
        for v in [adam.lr, adam.beta1, adam.beta2, adam.eps] {
            w.f64(v);
        }
        w.u32(2 * self.model.store.len() as u32);
        for ((name, _), (m, v)) in self.model.store.iter().zip(adam.m.iter().zip(&adam.v)) {
            w.block(&format!("adam.m.{name}"), m);
            w.block(&format!("adam.v.{name}"), v);
        }

        w.u64(self.seed);
        w.u64(self.state.iteration);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version, expected: VERSION }.into());
        }
        let descriptor = r.text()?;
        let train_size = descriptor
            .lines()
            .find_map(|l| l.strip_prefix("train_size="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CheckpointError::Malformed("descriptor lacks train_size".into()))?;
        let spec = ModelSpec::from_descriptor(&descriptor).map_err(|e| CheckpointError::Malformed(format!("descriptor: {e}")))?;
        let mut model = DvipModel::new(spec, train_size)?;

        let names: Vec<(String, Vec<usize>)> = model.store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
        let params = match_blocks(r.blocks()?, &names)?;
        for (id, t) in model.store.ids().collect::<Vec<_>>().into_iter().zip(params) {
            model.store.set(id, t);
        }

        let buffers = r.blocks()?;
        let standardizer = if buffers.is_empty() {
            None
        } else {
            let d = model.spec.input_dim;
            let b = match_blocks(
                buffers,
                &[
                    ("standardizer.x_mean".into(), vec![d]),
                    ("standardizer.x_scale".into(), vec![d]),
                    ("standardizer.y".into(), vec![2]),
                ],
            )?;
            Some(Standardizer {
                x_mean: b[0].data().to_vec(),
                x_scale: b[1].data().to_vec(),
                y_mean: b[2].data()[0],
                y_scale: b[2].data()[1],
            })
        };

        let t = r.u64()?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let moments: Vec<(String, Vec<usize>)> =
            names.iter().flat_map(|(n, s)| [(format!("adam.m.{n}"), s.clone()), (format!("adam.v.{n}"), s.clone())]).collect();
        let mut mv = match_blocks(r.blocks()?, &moments)?.into_iter();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        while let (Some(a), Some(b)) = (mv.next(), mv.next()) {
            m.push(a);
            v.push(b);
        }
        let adam = Adam { lr, beta1, beta2, eps, t, m, v };

        let seed = r.u64()?;
        let iteration = r.u64()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into());
        }
        Ok(Self { model, state: TrainState { iteration, adam }, seed, standardizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::data::toy_sine;
    use crate::error::Error;
    use crate::model::PriorSpec;
    use crate::train::fit;

    fn trained(prior: PriorSpec) -> Checkpoint {
        let config = TrainConfig { iterations: 5, batch_size: 10, samples: 4, seed: 8, prior, ..TrainConfig::default() };
        let f = fit(&config, &toy_sine(30, 0.1, 1)).unwrap();
        Checkpoint { model: f.model, state: f.state, seed: config.seed, standardizer: Some(f.standardizer) }
    }

    fn code(e: Error) -> u8 {
        match e {
            Error::Checkpoint(c) => c.code(),
            other => panic!("not a checkpoint error: {other}"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for prior in [PriorSpec::Bnn { hidden: vec![10, 10], unconstrained: false }, PriorSpec::Cosine { width: 16 }] {
            let ck = trained(prior);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corrupted_files_give_distinct_errors() {
        let bytes = trained(PriorSpec::Bnn { hidden: vec![10, 10], unconstrained: false }).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(code(Checkpoint::from_bytes(&bad).unwrap_err()), 1);
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(code(Checkpoint::from_bytes(&bad).unwrap_err()), 2);
        assert_eq!(code(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err()), 3);
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(code(Checkpoint::from_bytes(&extra).unwrap_err()), 4);
    }

    #[test]
    fn missing_and_misshapen_blocks() {
        let ck = trained(PriorSpec::Bnn { hidden: vec![10, 10], unconstrained: false });
        let bytes = ck.to_bytes();
        let rename = |from: &str, to: &str| -> Vec<u8> {
            assert_eq!(from.len(), to.len());
            let pos = bytes.windows(from.len()).position(|w| w == from.as_bytes()).unwrap();
            let mut b = bytes.clone();
            b[pos..pos + to.len()].copy_from_slice(to.as_bytes());
            b
        };
        assert_eq!(code(Checkpoint::from_bytes(&rename("lik.log_var", "lik.log_vat")).unwrap_err()), 5);
        // widen the descriptor's hidden layer so stored blocks no longer fit
        let mut spec = ck.model.spec.clone();
        spec.prior = PriorSpec::Bnn { hidden: vec![10, 10], unconstrained: true };
        let wider = Checkpoint { model: DvipModel::new(spec, ck.model.train_size).unwrap(), ..ck.clone() };
        let mut mixed = wider.to_bytes();
        let head = 8 + 4 + wider.descriptor().len();
        let old_head = 8 + 4 + ck.descriptor().len();
        mixed.truncate(head);
        mixed.extend_from_slice(&bytes[old_head..]);
        assert_eq!(code(Checkpoint::from_bytes(&mixed).unwrap_err()), 6);
    }
}
