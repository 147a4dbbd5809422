//! Spectral propagation over the joint graph. Inputs and outputs are
//! `J x d` (one row per joint).

use nalgebra::DMatrix;
use rand::RngCore;

use super::nn::normal_matrix;
use super::{EncoderError, JointGraph, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backbone {
    Gcn,
    Sgc,
    Appnp,
    #[default]
    S2gc,
}

impl Backbone {
    pub fn name(&self) -> &'static str {
        match self {
            Backbone::Gcn => "gcn",
            Backbone::Sgc => "sgc",
            Backbone::Appnp => "appnp",
            Backbone::S2gc => "s2gc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Backbone::Gcn,
            Backbone::Sgc,
            Backbone::Appnp,
            Backbone::S2gc,
        ]
        .into_iter()
        .find(|b| b.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub backbone: Backbone,
    pub layers: usize,
    /// Teleport probability (APPNP, S2GC).
    pub alpha: f64,
    /// Per-layer `d x d` weights; only GCN has them, the other variants act
    /// with identity weights.
    pub weights: Vec<DMatrix<f64>>,
}

impl GnnParams {
    pub fn new(
        backbone: Backbone,
        layers: usize,
        alpha: f64,
        dim: usize,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(EncoderError::InvalidParams(
                "graph layers must be >= 1".into(),
            ));
        }
        if !(alpha > 0.0 && alpha <= 1.0) && backbone != Backbone::Sgc && backbone != Backbone::Gcn
        {
            return Err(EncoderError::InvalidParams(format!(
                "alpha {alpha} outside (0, 1]"
            )));
        }
        let weights = match backbone {
            Backbone::Gcn => (0..layers).map(|_| normal_matrix(dim, dim, rng)).collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            backbone,
            layers,
            alpha,
            weights,
        })
    }
}

pub fn gnn_forward(
    x: &DMatrix<f64>,
    graph: &JointGraph,
    params: &GnnParams,
) -> Result<DMatrix<f64>> {
    let s = &graph.normalized;
    if x.nrows() != s.nrows() {
        return Err(EncoderError::ShapeMismatch(format!(
            "{} joint rows for a {}-joint graph",
            x.nrows(),
            s.nrows()
        )));
    }
    let (l, alpha) = (params.layers, params.alpha);
    let out = match params.backbone {
        Backbone::Gcn => {
            if params.weights.len() != l
                || params
                    .weights
                    .iter()
                    .any(|w| w.nrows() != x.ncols() || w.ncols() != x.ncols())
            {
                return Err(EncoderError::ShapeMismatch(
                    "GCN weights do not match the feature size".into(),
                ));
            }
            let mut h = x.clone();
            for (i, theta) in params.weights.iter().enumerate() {
                h = s * &h * theta;
                if i + 1 < l {
                    h.apply(|v| *v = v.max(0.0));
                }
            }
            h
        }
        Backbone::Sgc => {
            let mut h = x.clone();
            for _ in 0..l {
                h = s * &h;
            }
            h
        }
        Backbone::Appnp => {
            let mut h = x.clone();
            for _ in 0..l {
                h = (s * &h) * (1.0 - alpha) + x * alpha;
            }
            h
        }
        Backbone::S2gc => {
            let mut hop = x.clone();
            let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
            for _ in 0..l {
                hop = s * &hop;
                acc += &hop * (1.0 - alpha) + x * alpha;
            }
            acc / l as f64
        }
    };
    Ok(out)
}
