//! Dense row-major tensors and the handful of linear-algebra kernels the
//! spiking layers need.
//!
//! Weight matrices for feed-forward maps are stored `[in × out]`, so a
//! spike in input row `e` adds one contiguous row to the output current.
//! Binary spike inputs are mostly zero, and the kernels skip zero rows.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape("Tensor::from_vec", &[len], &[data.len()]));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Uniform initialisation in `[-bound, bound]`, rounded to f32 so the
    /// tensor survives a checkpoint round trip unchanged.
    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(dims);
        if bound > 0.0 {
            for v in &mut t.data {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        t.quantize_f32();
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(1)
    }

    /// Product of all trailing dims; the row stride.
    pub fn cols(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Round every element to the nearest f32. Persistent state (weights,
    /// optimiser moments) is kept f32-representable so checkpoints, which
    /// store f32 values, reload bit-exactly.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub fn is_f32_exact(&self) -> bool {
        self.data.iter().all(|&v| (v as f32 as f64).to_bits() == v.to_bits())
    }
}

/// `out[o] += Σ_e x[e] · w[e][o]` for a `[in × out]` weight matrix.
pub fn accumulate_forward(w: &Tensor, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.rows(), x.len());
    debug_assert_eq!(w.cols(), out.len());
    for (e, &xe) in x.iter().enumerate() {
        if xe == 0.0 {
            continue;
        }
        for (o, &we) in out.iter_mut().zip(w.row(e)) {
            *o += xe * we;
        }
    }
}

/// `g_in[e] += Σ_o w[e][o] · g_out[o]`.
pub fn accumulate_input_grad(w: &Tensor, g_out: &[f64], g_in: &mut [f64]) {
    for (e, gi) in g_in.iter_mut().enumerate() {
        *gi += dot(w.row(e), g_out);
    }
}

/// `grad[e][o] += x[e] · g_out[o]`.
pub fn accumulate_outer(grad: &mut Tensor, x: &[f64], g_out: &[f64]) {
    for (e, &xe) in x.iter().enumerate() {
        if xe == 0.0 {
            continue;
        }
        for (g, &go) in grad.row_mut(e).iter_mut().zip(g_out) {
            *g += xe * go;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
