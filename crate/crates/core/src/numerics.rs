//! Dense tensors, the handful of kernels the models need, and seeded
//! random streams.
//!
//! Everything here is a pure function of its inputs. Tensors are row-major
//! `f64` arrays; the last axis varies fastest.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a length/shape mismatch and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {expected} values but {} were given",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for kernel outputs whose shape is correct by
    /// construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a vector.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// 2-D tensor from nested rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows in matrix literal"));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Element of a 2-D tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    /// Row `i` of a 2-D tensor, or sample `i` of any tensor whose first axis
    /// is the batch axis.
    pub fn row(&self, i: usize) -> &[f64] {
        let width = self.data.len() / self.shape[0].max(1);
        &self.data[i * width..(i + 1) * width]
    }

    pub fn transpose(&self) -> Result<Self> {
        let [rows, cols] = self.dims2("transpose")?;
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = self.data[i * cols + j];
            }
        }
        Ok(Self::from_parts(vec![cols, rows], out))
    }

    fn dims2(&self, op: &str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [r, c] => Ok([r, c]),
            _ => Err(Error::shape(format!(
                "{op} expects a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    fn dims3(&self, op: &str) -> Result<[usize; 3]> {
        match self.shape[..] {
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::shape(format!(
                "{op} expects a 3-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }
}

/// `c[i,j] = Σ_t a[i,t]·b[t,j]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, k] = a.dims2("matmul")?;
    let [k2, n] = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (t, &av) in a_row.iter().enumerate() {
            let b_row = &b.data[t * n..(t + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Valid (unpadded, stride 1) cross-correlation of an `h×w×c` input with
/// `kh×kw×c×f` kernels, plus one bias per filter.
pub fn conv2d_valid(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [h, w, c] = input.dims3("conv2d input")?;
    let (kh, kw, kc, f) = match kernels.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(format!(
                "conv2d kernels must be 4-D, got {:?}",
                kernels.shape
            )))
        }
    };
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input {:?}, kernels {:?}",
            input.shape, kernels.shape
        )));
    }
    if kh > h || kw > w {
        return Err(Error::shape(format!(
            "conv2d kernel {:?} larger than input {:?}",
            kernels.shape, input.shape
        )));
    }
    if bias.shape != [f] {
        return Err(Error::shape(format!(
            "conv2d bias shape {:?} does not match {f} filters",
            bias.shape
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow * f];
    for y in 0..oh {
        for x in 0..ow {
            let cell = &mut out[(y * ow + x) * f..(y * ow + x + 1) * f];
            cell.copy_from_slice(&bias.data);
            for dy in 0..kh {
                for dx in 0..kw {
                    for ch in 0..c {
                        let v = input.data[((y + dy) * w + (x + dx)) * c + ch];
                        let k_base = ((dy * kw + dx) * c + ch) * f;
                        for (o, &k) in cell.iter_mut().zip(&kernels.data[k_base..k_base + f]) {
                            *o += v * k;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![oh, ow, f], out))
}

/// 2×2 non-overlapping max pooling over an `h×w×f` tensor. A trailing odd
/// row or column is dropped.
pub fn maxpool2(input: &Tensor) -> Result<Tensor> {
    maxpool2_with_argmax(input).map(|(out, _)| out)
}

/// Max pooling that also reports, for every output cell, the flat input
/// index that supplied the maximum (first in row-major window order on ties).
pub fn maxpool2_with_argmax(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [h, w, f] = input.dims3("maxpool2")?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "maxpool2 needs at least 2x2 spatial extent, got {:?}",
            input.shape
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * f);
    let mut arg = Vec::with_capacity(oh * ow * f);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..f {
                let mut best_idx = ((2 * y) * w + 2 * x) * f + ch;
                let mut best = input.data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + 2 * x + dx) * f + ch;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    Ok((Tensor::from_parts(vec![oh, ow, f], out), arg))
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_parts(
        x.shape.clone(),
        x.data.iter().map(|&v| v.max(0.0)).collect(),
    )
}

/// Subgradient of [`relu`]: 1 where `x > 0`, otherwise 0 (including at 0).
pub fn relu_grad(x: &Tensor) -> Tensor {
    Tensor::from_parts(
        x.shape.clone(),
        x.data
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Numerically stable softmax of a non-empty 1-D slice.
pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.shape.len() != 1 || logits.data.is_empty() {
        return Err(Error::shape(format!(
            "softmax expects a non-empty vector, got shape {:?}",
            logits.shape
        )));
    }
    Ok(Tensor::from_parts(
        logits.shape.clone(),
        softmax_slice(&logits.data),
    ))
}

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let [rows, cols] = logits.dims2("softmax_rows")?;
    if cols == 0 {
        return Err(Error::shape("softmax over zero classes"));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend(softmax_slice(&logits.data[r * cols..(r + 1) * cols]));
    }
    Ok(Tensor::from_parts(vec![rows, cols], out))
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A reproducible random stream: ChaCha8 keyed by `seed` with the ChaCha
/// stream counter set to `stream_id`.
///
/// Uniforms take the top 53 bits of each 64-bit word, normals use the
/// Box-Muller transform (both variates of a pair are used), and bounded
/// integers use Lemire's multiply-and-reject method. These choices are
/// frozen; `tests/fixtures` carries the reference draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// `n` draws from Normal(mean, std).
pub fn rng_normal(rng: &mut RngStream, n: usize, mean: f64, std: f64) -> Result<Tensor> {
    if !(std.is_finite() && std >= 0.0 && mean.is_finite()) {
        return Err(Error::arg(format!(
            "rng_normal needs finite mean and std >= 0 (mean {mean}, std {std})"
        )));
    }
    let data = (0..n)
        .map(|_| {
            let z = rng.standard_normal();
            mean + std * z
        })
        .collect();
    Ok(Tensor::from_parts(vec![n], data))
}

/// SplitMix64 finalizer; used to derive independent seeds from a root seed.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
