//! Dense row-major `f64` arrays with shape metadata.
//!
//! Broadcasting follows trailing-dimension alignment: shapes are compared
//! from the last axis backwards, and a pair of axes is compatible when the
//! sizes agree or one of them is 1. A lower-rank operand is treated as if
//! it had leading axes of size 1.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!("shape {:?} needs {} elements, got {}", shape, expected, data.len())));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor, panicking if the element count does not match.
    pub fn from_shape(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Self {
        Self::new(shape, data).expect("tensor shape/data mismatch")
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds an `rows x cols` matrix from a row-major closure.
    pub fn from_fn2(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { shape: vec![rows, cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Swaps the last two axes (rank 2 or 3).
    pub fn transpose(&self) -> Self {
        let r = self.rank();
        assert!(r == 2 || r == 3, "transpose needs rank 2 or 3, got {:?}", self.shape);
        let (batch, m, n) = batch_dims(&self.shape);
        let mut out = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * m * n..(b + 1) * m * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Self { shape, data: out }
    }

    /// Elementwise binary operation with broadcasting.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Self { shape: self.shape.clone(), data });
        }
        let out_shape = broadcast_shape(&self.shape, &other.shape)
            .ok_or_else(|| Error::Shape(format!("cannot broadcast {:?} with {:?}", self.shape, other.shape)))?;
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let n: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut walker = IndexWalker::new(&out_shape);
        for _ in 0..n {
            let (ia, ib) = walker.offsets2(&sa, &sb);
            data.push(f(self.data[ia], other.data[ib]));
            walker.advance();
        }
        Ok(Self { shape: out_shape, data })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        match broadcast_shape(&self.shape, shape) {
            Some(s) if s == shape => {}
            _ => return Err(Error::Shape(format!("cannot broadcast {:?} to {:?}", self.shape, shape))),
        }
        let strides = broadcast_strides(&self.shape, shape);
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut walker = IndexWalker::new(shape);
        for _ in 0..n {
            data.push(self.data[walker.offset(&strides)]);
            walker.advance();
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Sums a broadcast result back down to `shape` (the adjoint of `broadcast_to`).
    pub fn sum_to_shape(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let strides = broadcast_strides(shape, &self.shape);
        let mut out = vec![0.0; shape.iter().product()];
        let mut walker = IndexWalker::new(&self.shape);
        for &v in &self.data {
            out[walker.offset(&strides)] += v;
            walker.advance();
        }
        Self { shape: shape.to_vec(), data: out }
    }

    /// Sums over one axis, removing it.
    pub fn sum_axis(&self, axis: usize) -> Self {
        assert!(axis < self.rank(), "axis {} out of range for {:?}", axis, self.shape);
        let outer: usize = self.shape[..axis].iter().product();
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..len {
                let src = &self.data[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Self { shape, data: out }
    }

    /// Re-inserts a reduced axis of length `len` by repetition.
    pub fn expand_axis(&self, axis: usize, len: usize) -> Self {
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let src = &self.data[o * inner..(o + 1) * inner];
            for _ in 0..len {
                data.extend_from_slice(src);
            }
        }
        let mut shape = self.shape.clone();
        shape.insert(axis, len);
        Self { shape, data }
    }

    /// Matrix product over the last two axes, with an optional leading batch
    /// axis. A rank-2 operand, or a batch of size 1, is shared across the
    /// other operand's batch.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (ba, m, k) = batch_dims_checked(&self.shape)?;
        let (bb, k2, n) = batch_dims_checked(&other.shape)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner dimensions differ: {:?} x {:?}", self.shape, other.shape)));
        }
        let batch = match (ba, bb) {
            (a, b) if a == b => a,
            (1, b) => b,
            (a, 1) => a,
            _ => return Err(Error::Shape(format!("matmul batch sizes differ: {:?} x {:?}", self.shape, other.shape))),
        };
        let mut out = vec![0.0; batch * m * n];
        for b in 0..batch {
            let a = &self.data[(if ba == 1 { 0 } else { b }) * m * k..][..m * k];
            let bm = &other.data[(if bb == 1 { 0 } else { b }) * k * n..][..k * n];
            gemm_acc(a, bm, &mut out[b * m * n..(b + 1) * m * n], m, k, n);
        }
        let shape = if self.rank() == 3 || other.rank() == 3 { vec![batch, m, n] } else { vec![m, n] };
        Ok(Self { shape, data: out })
    }
}

/// `c += a * b` for row-major `a: m x k`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (ci, arow) in c.iter_mut().zip(a.chunks_exact(k)) {
            *ci += arow.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
        return;
    }
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

fn batch_dims(shape: &[usize]) -> (usize, usize, usize) {
    match shape.len() {
        2 => (1, shape[0], shape[1]),
        3 => (shape[0], shape[1], shape[2]),
        _ => panic!("expected rank 2 or 3, got {:?}", shape),
    }
}

fn batch_dims_checked(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 | 3 => Ok(batch_dims(shape)),
        _ => Err(Error::Shape(format!("matmul needs rank 2 or 3, got {:?}", shape))),
    }
}

/// Result shape of broadcasting `a` against `b`, if compatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i < r - a.len() { 1 } else { a[i - (r - a.len())] };
        let db = if i < r - b.len() { 1 } else { b[i - (r - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` laid over `out_shape`, with 0 on broadcast axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let r = out_shape.len();
    let offset = r - shape.len();
    let mut strides = vec![0; r];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

struct IndexWalker<'a> {
    shape: &'a [usize],
    index: Vec<usize>,
}

impl<'a> IndexWalker<'a> {
    fn new(shape: &'a [usize]) -> Self {
        Self { shape, index: vec![0; shape.len()] }
    }

    fn offset(&self, strides: &[usize]) -> usize {
        self.index.iter().zip(strides).map(|(i, s)| i * s).sum()
    }

    fn offsets2(&self, sa: &[usize], sb: &[usize]) -> (usize, usize) {
        let mut a = 0;
        let mut b = 0;
        for (k, &i) in self.index.iter().enumerate() {
            a += i * sa[k];
            b += i * sb[k];
        }
        (a, b)
    }

    fn advance(&mut self) {
        for axis in (0..self.shape.len()).rev() {
            self.index[axis] += 1;
            if self.index[axis] < self.shape[axis] {
                return;
            }
            self.index[axis] = 0;
        }
    }
}
