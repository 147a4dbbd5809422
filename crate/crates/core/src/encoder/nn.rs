//! Minimal forward-only layers on `nalgebra` matrices. Feature vectors are
//! columns unless stated otherwise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Standard-normal weights, drawn row by row from `rng`.
pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl RngCore) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

/// Fully connected layer `y = W x + b` acting on columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Linear {
    pub fn seeded(input: usize, output: usize, rng: &mut impl RngCore) -> Self {
        Self {
            weight: normal_matrix(output, input, rng),
            bias: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Applies the layer to every column of `x`.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.weight * x;
        for mut col in y.column_iter_mut() {
            col += &self.bias;
        }
        y
    }
}

/// Layer normalization over the feature axis of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: DVector<f64>,
    pub bias: DVector<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: DVector::from_element(dim, 1.0),
            bias: DVector::zeros(dim),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        let n = x.nrows() as f64;
        for mut col in y.column_iter_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (i, v) in col.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gain[i] + self.bias[i];
            }
        }
        y
    }
}

pub fn relu(x: &mut DMatrix<f64>) {
    x.apply(|v| *v = v.max(0.0));
}

/// Tanh approximation of the Gaussian error linear unit.
pub fn gelu(x: &mut DMatrix<f64>) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    x.apply(|v| *v = 0.5 * *v * (1.0 + (C * (*v + 0.044_715 * *v * *v * *v)).tanh()));
}

/// Keep-mask with each unit dropped independently with probability `rate`.
pub fn dropout_mask<R: RngCore + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| !rng.random_bool(rate)).collect()
}

/// Inverted dropout: dropped units become zero, kept units are scaled by
/// `1 / (1 - rate)`.
pub fn dropout<R: RngCore + ?Sized>(x: &mut DMatrix<f64>, rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let scale = 1.0 / (1.0 - rate);
    for (v, keep) in x.iter_mut().zip(mask) {
        *v = if keep { *v * scale } else { 0.0 };
    }
}

/// Row-wise softmax, in place.
pub fn softmax_rows(x: &mut DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
}
