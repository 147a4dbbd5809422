//! Episodic N-way Z-shot machinery: the similarity loss with detached top-k
//! targets, nearest-support classification, episode sampling and a
//! synthetic labelled corpus.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::alignment::{
    distance_tensor, fvm, jeanie, soft_dtw, view_pair_tensor, AlignmentError, AlignmentParams,
    Method,
};
use crate::encoder::{encode_sequence, encode_support, BlockEncoder, EncoderError, FeatureMap};
use crate::geometry::{generate_view_grid, CameraModel, GeometryError, ViewGrid, ViewShift};
use crate::skeleton::{
    center_by_torso, normalize_range, BlockingParams, Point3, SkeletonError, SkeletonSequence,
};

#[derive(Debug, Error)]
pub enum FewShotError {
    #[error("distance vector is empty")]
    EmptyVector,
    #[error("beta {beta} outside [1, {len}]")]
    BetaOutOfRange { beta: usize, len: usize },
    #[error("corpus has {found} classes, episode needs {needed}")]
    InsufficientClasses { needed: usize, found: usize },
    #[error("class {class:?} has {found} sequences, episode needs {needed}")]
    InsufficientSamples {
        class: String,
        needed: usize,
        found: usize,
    },
    #[error("invalid episode parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

pub type Result<T> = std::result::Result<T, FewShotError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossParams {
    /// Size of the hardest within-class set; `N * Z * beta` hardest
    /// between-class distances form the other target.
    pub beta: usize,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { beta: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_dplus: Vec<f64>,
    pub grad_dminus: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of the `k` smallest (`largest = false`) or largest entries.
fn extreme_mean(v: &[f64], k: usize, largest: bool) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    if largest {
        sorted.reverse();
    }
    mean(&sorted[..k])
}

/// `(mean(d+) - topmin)^2 + (mean(d-) - topmax)^2` with both targets held
/// constant under differentiation.
pub fn episode_loss(
    dplus: &[f64],
    dminus: &[f64],
    params: LossParams,
    n: usize,
    z: usize,
) -> Result<LossResult> {
    if dplus.is_empty() || dminus.is_empty() {
        return Err(FewShotError::EmptyVector);
    }
    let beta = params.beta;
    if beta == 0 || beta > dplus.len() {
        return Err(FewShotError::BetaOutOfRange {
            beta,
            len: dplus.len(),
        });
    }
    let k_minus = (n * z * beta).clamp(1, dminus.len());
    let target_plus = extreme_mean(dplus, beta, false);
    let target_minus = extreme_mean(dminus, k_minus, true);
    let gap_plus = mean(dplus) - target_plus;
    let gap_minus = mean(dminus) - target_minus;
    let gp = 2.0 * gap_plus / dplus.len() as f64;
    let gm = 2.0 * gap_minus / dminus.len() as f64;
    Ok(LossResult {
        value: gap_plus * gap_plus + gap_minus * gap_minus,
        grad_dplus: vec![gp; dplus.len()],
        grad_dminus: vec![gm; dminus.len()],
    })
}

/// Distance between a (possibly view-expanded) query and a support under
/// the chosen method. Soft-DTW compares the query's center view only.
pub fn pair_distance(
    query: &FeatureMap,
    support: &FeatureMap,
    params: &AlignmentParams,
    method: Method,
) -> Result<f64> {
    let d = match method {
        Method::SoftDtw => {
            let d = distance_tensor(&query.center_view(), support, params.base)?;
            soft_dtw(&d.view(0, 0), params.gamma)?.distance
        }
        Method::Fvm => {
            fvm(
                &view_pair_tensor(query, support, params.base)?,
                params.gamma,
            )?
            .distance
        }
        Method::Jeanie => jeanie(&distance_tensor(query, support, params.base)?, params)?.distance,
    };
    Ok(d)
}

/// Index of the smallest distance; the lowest index wins ties.
pub fn argmin(distances: &[f64]) -> Option<usize> {
    distances
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &d)| match best {
            Some((_, b)) if b <= d => best,
            _ => Some((i, d)),
        })
        .map(|(i, _)| i)
}

/// Nearest support under `method`.
pub fn one_shot_classify(
    query: &FeatureMap,
    supports: &[FeatureMap],
    params: &AlignmentParams,
    method: Method,
) -> Result<usize> {
    let distances = supports
        .iter()
        .map(|s| pair_distance(query, s, params, method))
        .collect::<Result<Vec<_>>>()?;
    argmin(&distances).ok_or(FewShotError::EmptyVector)
}

/// One batch element: corpus indices of the query and its `N x Z`
/// supports. Slot 0 always holds the query's class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeItem {
    pub query: usize,
    pub classes: Vec<String>,
    pub supports: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub items: Vec<EpisodeItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeShape {
    pub n_way: usize,
    pub z_shot: usize,
    pub batch: usize,
}

/// Deterministic episode generator over a labelled corpus. Unlabelled
/// sequences are ignored.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    classes: Vec<(String, Vec<usize>)>,
    shape: EpisodeShape,
    rng: ChaCha8Rng,
}

impl EpisodeSampler {
    pub fn new(corpus: &[SkeletonSequence], shape: EpisodeShape, seed: u64) -> Result<Self> {
        if shape.n_way < 2 || shape.z_shot == 0 || shape.batch == 0 {
            return Err(FewShotError::InvalidParams(format!(
                "need N >= 2, Z >= 1, B >= 1 (got {}, {}, {})",
                shape.n_way, shape.z_shot, shape.batch
            )));
        }
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, seq) in corpus.iter().enumerate() {
            if let Some(label) = &seq.label {
                by_label.entry(label.clone()).or_default().push(i);
            }
        }
        if by_label.len() < shape.n_way {
            return Err(FewShotError::InsufficientClasses {
                needed: shape.n_way,
                found: by_label.len(),
            });
        }
        if let Some((class, members)) = by_label.iter().find(|(_, m)| m.len() < shape.z_shot + 1) {
            return Err(FewShotError::InsufficientSamples {
                class: class.clone(),
                needed: shape.z_shot + 1,
                found: members.len(),
            });
        }
        Ok(Self {
            classes: by_label.into_iter().collect(),
            shape,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn next_episode(&mut self) -> Episode {
        let items = (0..self.shape.batch).map(|_| self.next_item()).collect();
        Episode { items }
    }

    fn next_item(&mut self) -> EpisodeItem {
        let EpisodeShape { n_way, z_shot, .. } = self.shape;
        let picked = sample(&mut self.rng, self.classes.len(), n_way).into_vec();
        let mut classes = Vec::with_capacity(n_way);
        let mut supports = Vec::with_capacity(n_way);
        let mut query = 0;
        for (slot, &c) in picked.iter().enumerate() {
            let (label, members) = &self.classes[c];
            let draw = if slot == 0 { z_shot + 1 } else { z_shot };
            let chosen: Vec<usize> = sample(&mut self.rng, members.len(), draw)
                .into_iter()
                .map(|i| members[i])
                .collect();
            if slot == 0 {
                query = chosen[0];
                supports.push(chosen[1..].to_vec());
            } else {
                supports.push(chosen);
            }
            classes.push(label.clone());
        }
        EpisodeItem {
            query,
            classes,
            supports,
        }
    }
}

/// One episode drawn from a fresh sampler seeded with `seed`.
pub fn sample_episode(
    corpus: &[SkeletonSequence],
    shape: EpisodeShape,
    seed: u64,
) -> Result<Episode> {
    Ok(EpisodeSampler::new(corpus, shape, seed)?.next_episode())
}

/// Feature maps of every corpus sequence: the view-expanded query form and
/// the support form (single view unless support expansion is enabled).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCorpus {
    pub queries: Vec<FeatureMap>,
    pub supports: Vec<FeatureMap>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Encodes one sequence in query form and support form.
pub fn encode_pair(
    seq: &SkeletonSequence,
    grid: &ViewGrid,
    cam: Option<&CameraModel>,
    blocking: BlockingParams,
    encoder: &dyn BlockEncoder,
    expand_support: bool,
) -> Result<(FeatureMap, FeatureMap)> {
    let query = encode_sequence(&generate_view_grid(grid, seq, cam)?, blocking, encoder)?;
    let support = if expand_support {
        query.clone()
    } else {
        encode_support(seq, blocking, encoder)?
    };
    Ok((query, support))
}

pub fn encode_corpus(
    corpus: &[SkeletonSequence],
    grid: &ViewGrid,
    cam: Option<&CameraModel>,
    blocking: BlockingParams,
    encoder: &dyn BlockEncoder,
    expand_support: bool,
) -> Result<EncodedCorpus> {
    let (queries, supports) = corpus
        .iter()
        .map(|seq| encode_pair(seq, grid, cam, blocking, encoder, expand_support))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(EncodedCorpus { queries, supports })
}

/// Result of classifying one episode item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemOutcome {
    /// Predicted class slot; slot 0 is correct.
    pub predicted: usize,
    /// Per-slot distance: the nearest of the slot's `Z` supports.
    pub distances: Vec<f64>,
}

impl ItemOutcome {
    pub fn correct(&self) -> bool {
        self.predicted == 0
    }
}

pub fn evaluate_item(
    encoded: &EncodedCorpus,
    item: &EpisodeItem,
    params: &AlignmentParams,
    method: Method,
) -> Result<ItemOutcome> {
    let query = &encoded.queries[item.query];
    let distances = item
        .supports
        .iter()
        .map(|shots| {
            shots.iter().try_fold(f64::INFINITY, |best, &i| {
                Ok::<_, FewShotError>(best.min(pair_distance(
                    query,
                    &encoded.supports[i],
                    params,
                    method,
                )?))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted = argmin(&distances).ok_or(FewShotError::EmptyVector)?;
    Ok(ItemOutcome {
        predicted,
        distances,
    })
}

/// Fraction of correctly classified items in an episode.
pub fn evaluate_episode(
    encoded: &EncodedCorpus,
    episode: &Episode,
    params: &AlignmentParams,
    method: Method,
) -> Result<f64> {
    let mut correct = 0usize;
    for item in &episode.items {
        correct += evaluate_item(encoded, item, params, method)?.correct() as usize;
    }
    Ok(correct as f64 / episode.items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_classes: usize,
    pub per_class: usize,
    pub joints: usize,
    pub frames: usize,
    pub seed: u64,
    /// Instances are rotated by an azimuth uniform in `[-v, v]` degrees.
    pub view_noise_deg: f64,
    /// Standard deviation of the coordinate noise added after
    /// normalization.
    pub coord_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_classes: 10,
            per_class: 20,
            joints: 15,
            frames: 40,
            seed: 0,
            view_noise_deg: 45.0,
            coord_noise: 0.01,
        }
    }
}

const HARMONICS: usize = 2;

/// Class-specific motion: for each joint and axis, two sinusoids with
/// class-level frequencies and per-joint amplitudes and phases around a
/// shared rest pose.
struct ClassMotion {
    freqs: [f64; HARMONICS],
    amp: Vec<[[f64; HARMONICS]; 3]>,
    phase: Vec<[[f64; HARMONICS]; 3]>,
}

impl ClassMotion {
    fn draw(joints: usize, rng: &mut ChaCha8Rng) -> Self {
        let freqs = [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)];
        let mut amp = Vec::with_capacity(joints);
        let mut phase = Vec::with_capacity(joints);
        for _ in 0..joints {
            let mut a = [[0.0; HARMONICS]; 3];
            let mut p = [[0.0; HARMONICS]; 3];
            for axis in 0..3 {
                for h in 0..HARMONICS {
                    a[axis][h] = rng.random_range(0.0..0.1);
                    p[axis][h] = rng.random_range(0.0..std::f64::consts::TAU);
                }
            }
            amp.push(a);
            phase.push(p);
        }
        Self { freqs, amp, phase }
    }

    fn position(&self, rest: Point3, joint: usize, s: f64) -> Point3 {
        let mut p = rest;
        for (axis, coord) in p.iter_mut().enumerate() {
            for h in 0..HARMONICS {
                let w = std::f64::consts::TAU * self.freqs[h] * s;
                *coord += self.amp[joint][axis][h] * (w + self.phase[joint][axis][h]).sin();
            }
        }
        p
    }
}

/// Upright rest pose: joint 0 is the hip, the rest spread over a body-sized
/// box (wide in x, tall in y, shallow in z).
fn rest_pose(joints: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..joints)
        .map(|j| {
            if j == 0 {
                [0.0; 3]
            } else {
                [
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.2..0.2),
                ]
            }
        })
        .collect()
}

/// Labelled synthetic corpus, `per_class` instances of each of `n_classes`
/// motion families, ordered class by class. Each instance is centered on
/// joint 0 and range-normalized in its canonical frame, then rotated about
/// the vertical axis and perturbed by Gaussian coordinate noise.
pub fn synth_corpus(params: &SynthParams) -> Result<Vec<SkeletonSequence>> {
    let SynthParams {
        n_classes,
        per_class,
        joints,
        frames,
        seed,
        view_noise_deg,
        coord_noise,
    } = *params;
    if n_classes == 0 || per_class == 0 || joints == 0 || frames == 0 {
        return Err(FewShotError::InvalidParams(
            "synthetic corpus counts must be >= 1".into(),
        ));
    }
    if !(view_noise_deg.is_finite()
        && view_noise_deg >= 0.0
        && coord_noise.is_finite()
        && coord_noise >= 0.0)
    {
        return Err(FewShotError::InvalidParams(
            "noise levels must be finite and nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rest = rest_pose(joints, &mut rng);
    let motions: Vec<ClassMotion> = (0..n_classes)
        .map(|_| ClassMotion::draw(joints, &mut rng))
        .collect();

    let mut corpus = Vec::with_capacity(n_classes * per_class);
    for (c, motion) in motions.iter().enumerate() {
        let canonical: Vec<Vec<Point3>> = (0..frames)
            .map(|t| {
                let s = t as f64 / frames as f64;
                (0..joints)
                    .map(|j| motion.position(rest[j], j, s))
                    .collect()
            })
            .collect();
        let canonical = normalize_range(&center_by_torso(&SkeletonSequence::new(canonical)?, 0)?)?;
        for _ in 0..per_class {
            let azimuth = if view_noise_deg > 0.0 {
                rng.random_range(-view_noise_deg..=view_noise_deg)
            } else {
                0.0
            };
            let rotation = ViewShift::new(azimuth, 0.0).rotation();
            let noise = Normal::new(0.0, coord_noise).expect("finite nonnegative sigma");
            let seq = canonical.map_points(|p| {
                let q = rotation.apply(p);
                if coord_noise > 0.0 {
                    [
                        q[0] + rng.sample(noise),
                        q[1] + rng.sample(noise),
                        q[2] + rng.sample(noise),
                    ]
                } else {
                    q
                }
            });
            corpus.push(seq.with_label(format!("class_{c:02}")));
        }
    }
    Ok(corpus)
}
