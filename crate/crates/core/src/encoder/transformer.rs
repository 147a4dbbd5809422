//! Pre-LN transformer over the joint tokens of one block. Tokens are rows:
//! `Z` is `(1 + J) x d`, row 0 being the class token.

use nalgebra::{DMatrix, RowDVector};
use rand::RngCore;

use super::nn::{gelu, normal_matrix, softmax_rows, LayerNorm};
use super::{EncoderError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerConfig {
    pub depth: usize,
    /// Width of the feed-forward hidden layer.
    pub hidden: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ln_attn: LayerNorm,
    w_q: DMatrix<f64>,
    w_k: DMatrix<f64>,
    w_v: DMatrix<f64>,
    w_o: DMatrix<f64>,
    ln_mlp: LayerNorm,
    w_1: DMatrix<f64>,
    w_2: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub config: TransformerConfig,
    pub dim: usize,
    pub token: RowDVector<f64>,
    /// Positional table for the token and up to `J` joints.
    pub positions: DMatrix<f64>,
    blocks: Vec<Block>,
    final_ln: LayerNorm,
}

/// Sinusoidal table: even columns `sin(p / 10000^(2i/d))`, odd columns the
/// matching cosine.
pub fn sinusoidal_positions(rows: usize, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, dim, |p, c| {
        let i = (c / 2) as f64;
        let angle = p as f64 / 10_000f64.powf(2.0 * i / dim as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Row-wise layer norm via the column implementation.
fn ln_rows(ln: &LayerNorm, z: &DMatrix<f64>) -> DMatrix<f64> {
    ln.forward(&z.transpose()).transpose()
}

impl TransformerParams {
    pub fn new(
        config: TransformerConfig,
        dim: usize,
        joints: usize,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        if config.heads == 0 || !dim.is_multiple_of(config.heads) {
            return Err(EncoderError::IndivisibleHeads {
                dim,
                heads: config.heads,
            });
        }
        if config.hidden == 0 {
            return Err(EncoderError::InvalidParams(
                "transformer hidden size must be >= 1".into(),
            ));
        }
        let token = RowDVector::from_iterator(dim, normal_matrix(1, dim, rng).iter().copied());
        let blocks = (0..config.depth)
            .map(|_| Block {
                ln_attn: LayerNorm::new(dim),
                w_q: normal_matrix(dim, dim, rng),
                w_k: normal_matrix(dim, dim, rng),
                w_v: normal_matrix(dim, dim, rng),
                w_o: normal_matrix(dim, dim, rng),
                ln_mlp: LayerNorm::new(dim),
                w_1: normal_matrix(dim, config.hidden, rng),
                w_2: normal_matrix(config.hidden, dim, rng),
            })
            .collect();
        Ok(Self {
            config,
            dim,
            token,
            positions: sinusoidal_positions(joints + 1, dim),
            blocks,
            final_ln: LayerNorm::new(dim),
        })
    }
}

fn attention(z: &DMatrix<f64>, b: &Block, heads: usize) -> DMatrix<f64> {
    let (q, k, v) = (z * &b.w_q, z * &b.w_k, z * &b.w_v);
    let head_dim = z.ncols() / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for h in 0..heads {
        let cols = h * head_dim;
        let qh = q.columns(cols, head_dim);
        let kh = k.columns(cols, head_dim);
        let vh = v.columns(cols, head_dim);
        let mut scores = qh * kh.transpose() * scale;
        softmax_rows(&mut scores);
        out.columns_mut(cols, head_dim).copy_from(&(scores * vh));
    }
    out * &b.w_o
}

/// Encodes `J x d` joint features into the `d`-dimensional class-token
/// output.
pub fn transformer_encode(x: &DMatrix<f64>, params: &TransformerParams) -> Result<Vec<f64>> {
    let rows = x.nrows() + 1;
    if params.positions.nrows() < rows {
        return Err(EncoderError::ShapeMismatch(format!(
            "positional table has {} rows, need {rows}",
            params.positions.nrows()
        )));
    }
    let positions = params.positions.rows(0, rows).into_owned();
    transformer_encode_with_positions(x, params, &positions)
}

/// As [`transformer_encode`] with an explicit `(1 + J) x d` positional
/// table.
pub fn transformer_encode_with_positions(
    x: &DMatrix<f64>,
    params: &TransformerParams,
    positions: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let d = params.dim;
    if x.ncols() != d || positions.ncols() != d || positions.nrows() != x.nrows() + 1 {
        return Err(EncoderError::ShapeMismatch(format!(
            "tokens {}x{}, positions {}x{}, model width {d}",
            x.nrows(),
            x.ncols(),
            positions.nrows(),
            positions.ncols()
        )));
    }
    let mut z = DMatrix::zeros(x.nrows() + 1, d);
    z.row_mut(0).copy_from(&params.token);
    z.rows_mut(1, x.nrows()).copy_from(x);
    z += positions;

    for b in &params.blocks {
        let attended = attention(&ln_rows(&b.ln_attn, &z), b, params.config.heads);
        z += attended;
        let mut hidden = ln_rows(&b.ln_mlp, &z) * &b.w_1;
        gelu(&mut hidden);
        z += hidden * &b.w_2;
    }
    let token = DMatrix::from_iterator(d, 1, z.row(0).iter().copied());
    let y = params.final_ln.forward(&token);
    Ok(y.iter().copied().collect())
}
