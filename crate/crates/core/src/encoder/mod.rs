//! Forward-only encoding network: per-block MLP, graph propagation over the
//! joints, optional transformer, and a final projection to `d'` features
//! per temporal block.

mod feature_map;
mod gnn;
mod graph;
pub mod nn;
mod transformer;

pub use feature_map::FeatureMap;
pub use gnn::{gnn_forward, Backbone, GnnParams};
pub use graph::{normalized_adjacency, JointGraph, SkeletonLayout};
pub use transformer::{
    sinusoidal_positions, transformer_encode, transformer_encode_with_positions, TransformerConfig,
    TransformerParams,
};

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::ViewSet;
use crate::skeleton::{
    aggregate_subjects, split_blocks, BlockingParams, SkeletonError, SkeletonSequence,
    TemporalBlock,
};
use nn::{dropout, relu, LayerNorm, Linear};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model width {dim} is not divisible by {heads} heads")]
    IndivisibleHeads { dim: usize, heads: usize },
    #[error("adjacency matrix is not symmetric")]
    AsymmetricInput,
    #[error("invalid encoder parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite feature value")]
    NonFinite,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Frames per temporal block (`M`).
    pub block_size: usize,
    /// Per-joint feature size `d` leaving the MLP.
    pub feature_dim: usize,
    /// Per-block output size `d'`.
    pub out_dim: usize,
    pub backbone: Backbone,
    pub layers: usize,
    pub alpha: f64,
    pub transformer: Option<TransformerConfig>,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            block_size: 8,
            feature_dim: 32,
            out_dim: 50,
            backbone: Backbone::S2gc,
            layers: 6,
            alpha: 0.5,
            transformer: None,
            dropout: 0.5,
            seed: 0,
        }
    }
}

/// `3M -> 6M -> 9M -> d` unit: FC, LN, ReLU, FC, LN, ReLU, Dropout, FC, LN.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    fc1: Linear,
    ln1: LayerNorm,
    fc2: Linear,
    ln2: LayerNorm,
    fc3: Linear,
    ln3: LayerNorm,
}

impl Mlp {
    fn seeded(block_size: usize, out: usize, rng: &mut impl RngCore) -> Self {
        let (m3, m6, m9) = (3 * block_size, 6 * block_size, 9 * block_size);
        Self {
            fc1: Linear::seeded(m3, m6, rng),
            ln1: LayerNorm::new(m6),
            fc2: Linear::seeded(m6, m9, rng),
            ln2: LayerNorm::new(m9),
            fc3: Linear::seeded(m9, out, rng),
            ln3: LayerNorm::new(out),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fc1.input_dim()
    }
}

/// Seeded weights for the whole network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub graph: JointGraph,
    pub mlp: Mlp,
    pub gnn: GnnParams,
    pub transformer: Option<TransformerParams>,
    pub projection: Linear,
}

// Independent generator streams per component.
const STREAM_MLP: u64 = 1;
const STREAM_GNN: u64 = 2;
const STREAM_TRANSFORMER: u64 = 3;
const STREAM_PROJECTION: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl EncoderParams {
    pub fn new(config: EncoderConfig, graph: JointGraph) -> Result<Self> {
        if config.block_size == 0 || config.feature_dim == 0 || config.out_dim == 0 {
            return Err(EncoderError::InvalidParams(
                "dimensions must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(EncoderError::InvalidParams(format!(
                "dropout {} outside [0, 1)",
                config.dropout
            )));
        }
        let d = config.feature_dim;
        let mlp = Mlp::seeded(config.block_size, d, &mut stream(config.seed, STREAM_MLP));
        let gnn = GnnParams::new(
            config.backbone,
            config.layers,
            config.alpha,
            d,
            &mut stream(config.seed, STREAM_GNN),
        )?;
        let transformer = config
            .transformer
            .map(|t| {
                TransformerParams::new(
                    t,
                    d,
                    graph.joints(),
                    &mut stream(config.seed, STREAM_TRANSFORMER),
                )
            })
            .transpose()?;
        let projection = Linear::seeded(
            d,
            config.out_dim,
            &mut stream(config.seed, STREAM_PROJECTION),
        );
        Ok(Self {
            config,
            graph,
            mlp,
            gnn,
            transformer,
            projection,
        })
    }

    /// Per-joint MLP features, `d x J`. Dropout only runs when a training
    /// generator is supplied.
    pub fn mlp_encode(
        &self,
        block: &TemporalBlock,
        training: Option<&mut dyn RngCore>,
    ) -> Result<DMatrix<f64>> {
        if block.num_frames() != self.config.block_size {
            return Err(EncoderError::ShapeMismatch(format!(
                "block of {} frames, encoder expects {}",
                block.num_frames(),
                self.config.block_size
            )));
        }
        let j = block.num_joints();
        let mut x = DMatrix::zeros(self.mlp.input_dim(), j);
        for joint in 0..j {
            x.set_column(
                joint,
                &nalgebra::DVector::from_vec(block.joint_trajectory(joint)),
            );
        }
        let m = &self.mlp;
        let mut h = m.ln1.forward(&m.fc1.forward(&x));
        relu(&mut h);
        let mut h = m.ln2.forward(&m.fc2.forward(&h));
        relu(&mut h);
        if let Some(rng) = training {
            dropout(&mut h, self.config.dropout, rng);
        }
        Ok(m.ln3.forward(&m.fc3.forward(&h)))
    }

    /// `J x d` graph features of one block of one subject.
    fn joint_features(
        &self,
        block: &TemporalBlock,
        training: Option<&mut dyn RngCore>,
    ) -> Result<DMatrix<f64>> {
        let x = self.mlp_encode(block, training)?.transpose();
        gnn_forward(&x, &self.graph, &self.gnn)
    }

    /// Projects pooled joint features to the `d'` block descriptor.
    fn head(&self, joints: &DMatrix<f64>) -> Result<Vec<f64>> {
        let pooled: Vec<f64> = match &self.transformer {
            Some(t) => transformer_encode(joints, t)?,
            None => joints.row_mean().iter().copied().collect(),
        };
        let y = self
            .projection
            .forward(&DMatrix::from_column_slice(pooled.len(), 1, &pooled));
        Ok(y.iter().copied().collect())
    }
}

/// Anything that maps one (single-view) sequence to per-block columns.
pub trait BlockEncoder: Sync {
    fn encode(&self, seq: &SkeletonSequence, blocking: BlockingParams) -> Result<Vec<Vec<f64>>>;
}

impl BlockEncoder for EncoderParams {
    /// Subjects are encoded separately through the graph stage and averaged
    /// before the head.
    fn encode(&self, seq: &SkeletonSequence, blocking: BlockingParams) -> Result<Vec<Vec<f64>>> {
        let subjects = seq.split_subjects()?;
        let per_subject: Vec<Vec<TemporalBlock>> = subjects
            .iter()
            .map(|s| split_blocks(s, blocking))
            .collect::<std::result::Result<_, _>>()?;
        let tau = per_subject[0].len();
        (0..tau)
            .map(|t| {
                let feats: Vec<DMatrix<f64>> = per_subject
                    .iter()
                    .map(|blocks| self.joint_features(&blocks[t], None))
                    .collect::<Result<_>>()?;
                let shape = feats[0].shape();
                let flat: Vec<Vec<f64>> = feats.iter().map(|f| f.as_slice().to_vec()).collect();
                let pooled = DMatrix::from_vec(shape.0, shape.1, aggregate_subjects(&flat)?);
                self.head(&pooled)
            })
            .collect()
    }
}

/// Untrained features: each block flattened to its `3 * J * M` coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawBlockEncoder;

impl BlockEncoder for RawBlockEncoder {
    fn encode(&self, seq: &SkeletonSequence, blocking: BlockingParams) -> Result<Vec<Vec<f64>>> {
        Ok(split_blocks(seq, blocking)?
            .into_iter()
            .map(|b| b.as_slice().to_vec())
            .collect())
    }
}

/// Encodes every view of a grid: column `(k, k', t)` is block `t` of view
/// `(k, k')`.
pub fn encode_sequence(
    views: &ViewSet,
    blocking: BlockingParams,
    encoder: &dyn BlockEncoder,
) -> Result<FeatureMap> {
    let first = views
        .first()
        .and_then(|row| row.first())
        .ok_or_else(|| EncoderError::ShapeMismatch("empty view grid".into()))?;
    let (frames, joints) = (first.num_frames(), first.num_joints());
    let cols = views
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    if v.num_frames() != frames || v.num_joints() != joints {
                        return Err(EncoderError::ShapeMismatch(
                            "views differ in frames or joints".into(),
                        ));
                    }
                    encoder.encode(v, blocking)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMap::from_views(cols)
}

/// Single-view (support) map.
pub fn encode_support(
    seq: &SkeletonSequence,
    blocking: BlockingParams,
    encoder: &dyn BlockEncoder,
) -> Result<FeatureMap> {
    FeatureMap::support(encoder.encode(seq, blocking)?)
}
