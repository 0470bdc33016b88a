//! Dense row-major f64 tensors and the numeric kernels built on them.
//!
//! Shapes are explicit and every binary op validates them up front; a shape
//! bug surfaces as [`Error::ShapeMismatch`] naming both operands instead of a
//! silent mislabeled read. A tensor optionally carries a gradient buffer of
//! the same length, filled in by the tape during backprop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Train enables dropout; Eval makes every stochastic layer the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || expect != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor.new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![x],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Filled by drawing every entry from `rng.uniform(lo, hi)`.
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a matrix, or the length of a vector.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a matrix; errors are caught earlier by shape checks.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, g: Vec<f64>) {
        debug_assert_eq!(g.len(), self.data.len());
        self.grad = Some(g);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `[m,k] x [k,n] -> [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a.data[i * k..(i + 1) * k];
        for (t, &av) in ar.iter().enumerate() {
            let br = &b.data[t * n..(t + 1) * n];
            let or = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                or[j] += av * br[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `[m,k] x [n,k]^T -> [m,n]`; saves materializing the transpose.
pub fn matmul_transpose_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1] {
        return Err(Error::ShapeMismatch {
            op: "matmul_transpose_b",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[0]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = dot(ar, br);
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `[m,k] x [k] -> [m]`.
pub fn matvec(a: &Tensor, v: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || v.rank() != 1 || a.shape[1] != v.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matvec",
            left: a.shape.clone(),
            right: v.shape.clone(),
        });
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let out = (0..m).map(|i| dot(&a.data[i * k..(i + 1) * k], &v.data)).collect();
    Ok(Tensor::vector(out))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax over a vector (max-subtraction before exp).
pub fn softmax(v: &Tensor) -> Result<Tensor> {
    if v.is_empty() {
        return Err(Error::domain("softmax", "empty input"));
    }
    let max = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.data.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor {
        shape: v.shape.clone(),
        data: exps.into_iter().map(|e| e / sum).collect(),
        grad: None,
    })
}

/// Three-segment max pooling over the rows of `[rows, channels]`.
///
/// Segments are the closed row ranges `[0, lo]`, `[lo, hi]`, `[hi, rows-1]`,
/// so the boundary rows belong to two segments and no segment is empty.
/// Returns the pooled `[3*channels]` vector plus, per output slot, the row
/// index that won (the first row on ties, which is where gradient is routed).
pub fn piecewise_max_pool(
    features: &Tensor,
    lo: usize,
    hi: usize,
) -> Result<(Tensor, Vec<usize>)> {
    if features.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "piecewise_max_pool",
            left: features.shape.clone(),
            right: vec![],
        });
    }
    let (rows, channels) = (features.shape[0], features.shape[1]);
    if rows == 0 || channels == 0 {
        return Err(Error::domain("piecewise_max_pool", "empty feature matrix"));
    }
    if !(lo <= hi && hi < rows) {
        return Err(Error::domain(
            "piecewise_max_pool",
            format!("boundaries ({lo}, {hi}) out of order for {rows} rows"),
        ));
    }
    let segments = [(0, lo), (lo, hi), (hi, rows - 1)];
    let mut out = vec![0.0; 3 * channels];
    let mut argmax = vec![0usize; 3 * channels];
    for (s, &(a, b)) in segments.iter().enumerate() {
        for c in 0..channels {
            let mut best = f64::NEG_INFINITY;
            let mut best_row = a;
            for r in a..=b {
                let v = features.at(r, c);
                if v > best {
                    best = v;
                    best_row = r;
                }
            }
            out[s * channels + c] = best;
            argmax[s * channels + c] = best_row;
        }
    }
    Ok((Tensor::vector(out), argmax))
}

pub fn tanh(x: &Tensor) -> Tensor {
    map(x, f64::tanh)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, |v| 1.0 / (1.0 + (-v).exp()))
}

pub fn one_minus(x: &Tensor) -> Tensor {
    map(x, |v| 1.0 - v)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| f(v)).collect(),
        grad: None,
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("mul", a, b, |x, y| x * y)
}

fn zip(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        grad: None,
    })
}

/// Inverted dropout. In train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`, so the expectation is
/// unchanged and eval needs no rescaling. Returns the scaled keep-mask used,
/// which is exactly the local gradient. Eval mode is the identity.
pub fn dropout(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(
            "dropout",
            format!("rate {rate} outside [0, 1)"),
        ));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .data
        .iter()
        .map(|_| if rng.unit() < rate { 0.0 } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data,
            grad: None,
        },
        Some(mask),
    ))
}
