//! Skeleton sequences: ingestion, torso centering, range normalization and
//! temporal blocking.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("sequence has no frames or no joints")]
    EmptySequence,
    #[error("frame {frame} has {found} joints, expected {expected}")]
    RaggedFrame {
        frame: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-finite coordinate at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: usize },
    #[error("joint index {index} out of range for {joints} joints")]
    IndexOutOfRange { index: usize, joints: usize },
    #[error("every coordinate axis is identically zero")]
    DegenerateAxis,
    #[error("sequence has {frames} frames, fewer than the block size {block_size}")]
    SequenceTooShort { frames: usize, block_size: usize },
    #[error("invalid blocking: block size {block_size}, stride {stride} (need 1 <= stride <= block size)")]
    InvalidBlocking { block_size: usize, stride: usize },
    #[error("empty list")]
    EmptyList,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SkeletonError>;

/// A joint coordinate triple.
pub type Point3 = [f64; 3];

/// Metadata attached to simulated views when they are written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub azimuth: f64,
    pub altitude: f64,
    pub mode: String,
}

/// T frames of J joints, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    joints: usize,
    coords: Vec<Point3>,
    pub label: Option<String>,
    pub fps: Option<f64>,
    /// Per-subject joint-index partitions for multi-person recordings.
    pub subjects: Option<Vec<Vec<usize>>>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<Point3>>) -> Result<Self> {
        let joints = frames.first().map(Vec::len).unwrap_or(0);
        if joints == 0 {
            return Err(SkeletonError::EmptySequence);
        }
        let mut coords = Vec::with_capacity(frames.len() * joints);
        for (f, frame) in frames.into_iter().enumerate() {
            if frame.len() != joints {
                return Err(SkeletonError::RaggedFrame {
                    frame: f,
                    found: frame.len(),
                    expected: joints,
                });
            }
            coords.extend(frame);
        }
        Self::from_flat(joints, coords)
    }

    /// Builds a sequence from frame-major flat storage (`T * J` points).
    pub fn from_flat(joints: usize, coords: Vec<Point3>) -> Result<Self> {
        if joints == 0 || coords.is_empty() {
            return Err(SkeletonError::EmptySequence);
        }
        if !coords.len().is_multiple_of(joints) {
            return Err(SkeletonError::ShapeMismatch(format!(
                "{} points is not a multiple of {joints} joints",
                coords.len()
            )));
        }
        for (i, p) in coords.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(SkeletonError::NonFinite {
                    frame: i / joints,
                    joint: i % joints,
                });
            }
        }
        Ok(Self {
            joints,
            coords,
            label: None,
            fps: None,
            subjects: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn num_frames(&self) -> usize {
        self.coords.len() / self.joints
    }

    pub fn num_joints(&self) -> usize {
        self.joints
    }

    pub fn frame(&self, t: usize) -> &[Point3] {
        &self.coords[t * self.joints..(t + 1) * self.joints]
    }

    pub fn joint(&self, t: usize, j: usize) -> Point3 {
        self.coords[t * self.joints + j]
    }

    pub fn points(&self) -> &[Point3] {
        &self.coords
    }

    pub fn frames(&self) -> impl Iterator<Item = &[Point3]> {
        self.coords.chunks(self.joints)
    }

    /// Applies `f` to every joint, keeping labels and subject partitions.
    pub fn map_points(&self, mut f: impl FnMut(Point3) -> Point3) -> Self {
        Self {
            joints: self.joints,
            coords: self.coords.iter().map(|&p| f(p)).collect(),
            label: self.label.clone(),
            fps: self.fps,
            subjects: self.subjects.clone(),
        }
    }

    /// Restricts the sequence to the listed joints (in the listed order).
    pub fn select_joints(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(SkeletonError::EmptyList);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.joints) {
            return Err(SkeletonError::IndexOutOfRange {
                index: bad,
                joints: self.joints,
            });
        }
        let coords = self
            .frames()
            .flat_map(|frame| indices.iter().map(move |&i| frame[i]))
            .collect();
        let mut out = Self::from_flat(indices.len(), coords)?;
        out.label = self.label.clone();
        out.fps = self.fps;
        Ok(out)
    }

    /// Splits a multi-subject sequence into one sequence per subject; a
    /// sequence without partitions is returned as its own single subject.
    pub fn split_subjects(&self) -> Result<Vec<Self>> {
        match &self.subjects {
            None => Ok(vec![self.clone()]),
            Some(parts) if parts.is_empty() => Err(SkeletonError::EmptyList),
            Some(parts) => parts.iter().map(|p| self.select_joints(p)).collect(),
        }
    }
}

/// Subtracts the torso joint from every joint, frame by frame.
pub fn center_by_torso(seq: &SkeletonSequence, torso_index: usize) -> Result<SkeletonSequence> {
    let joints = seq.num_joints();
    if torso_index >= joints {
        return Err(SkeletonError::IndexOutOfRange {
            index: torso_index,
            joints,
        });
    }
    let coords = seq
        .frames()
        .flat_map(|frame| {
            let c = frame[torso_index];
            frame
                .iter()
                .map(move |p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        })
        .collect();
    let mut out = SkeletonSequence::from_flat(joints, coords)?;
    out.label = seq.label.clone();
    out.fps = seq.fps;
    out.subjects = seq.subjects.clone();
    Ok(out)
}

/// Divides each axis by its maximum absolute value over all frames and
/// joints. Axes that are identically zero are left untouched; if all three
/// are zero the sequence carries no geometry and `DegenerateAxis` is
/// returned.
pub fn normalize_range(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let mut max_abs = [0.0f64; 3];
    for p in seq.points() {
        for a in 0..3 {
            max_abs[a] = max_abs[a].max(p[a].abs());
        }
    }
    if max_abs.iter().all(|&m| m == 0.0) {
        return Err(SkeletonError::DegenerateAxis);
    }
    let scale = max_abs.map(|m| if m > 0.0 { Some(m) } else { None });
    Ok(seq.map_points(|p| {
        let mut q = p;
        for a in 0..3 {
            if let Some(m) = scale[a] {
                q[a] = p[a] / m;
            }
        }
        q
    }))
}

/// Centers and normalizes each subject independently; the subject
/// partitions are preserved in the output.
pub fn preprocess(seq: &SkeletonSequence, torso_index: usize) -> Result<SkeletonSequence> {
    let Some(parts) = &seq.subjects else {
        return normalize_range(&center_by_torso(seq, torso_index)?);
    };
    let mut coords = seq.points().to_vec();
    for part in parts {
        let sub = seq.select_joints(part)?;
        let torso = part_local(torso_index, part.len())?;
        let sub = normalize_range(&center_by_torso(&sub, torso)?)?;
        for (t, frame) in sub.frames().enumerate() {
            for (local, &global) in part.iter().enumerate() {
                coords[t * seq.num_joints() + global] = frame[local];
            }
        }
    }
    let mut out = SkeletonSequence::from_flat(seq.num_joints(), coords)?;
    out.label = seq.label.clone();
    out.fps = seq.fps;
    out.subjects = seq.subjects.clone();
    Ok(out)
}

fn part_local(torso_index: usize, len: usize) -> Result<usize> {
    if torso_index < len {
        Ok(torso_index)
    } else {
        Err(SkeletonError::IndexOutOfRange {
            index: torso_index,
            joints: len,
        })
    }
}

/// Block size `M` and stride `S` of the temporal blocking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockingParams {
    pub block_size: usize,
    pub stride: usize,
}

impl BlockingParams {
    pub fn new(block_size: usize, stride: usize) -> Result<Self> {
        if stride == 0 || stride > block_size {
            return Err(SkeletonError::InvalidBlocking { block_size, stride });
        }
        Ok(Self { block_size, stride })
    }

    /// Stride expressed as a fraction of the block size, rounded to the
    /// nearest frame count (at least one frame).
    pub fn from_ratio(block_size: usize, ratio: f64) -> Result<Self> {
        let stride = ((block_size as f64) * ratio).round().max(1.0) as usize;
        Self::new(block_size, stride)
    }

    /// Number of blocks a sequence of `frames` frames yields.
    pub fn num_blocks(&self, frames: usize) -> usize {
        if frames < self.block_size {
            0
        } else {
            (frames - self.block_size) / self.stride + 1
        }
    }
}

impl Default for BlockingParams {
    fn default() -> Self {
        Self::from_ratio(8, 0.6).expect("default blocking is valid")
    }
}

/// `M` consecutive frames of a sequence, stored as 3 x J x M (axis-major,
/// then joint, then frame).
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBlock {
    joints: usize,
    frames: usize,
    data: Vec<f64>,
}

impl TemporalBlock {
    pub fn from_frames(frames: &[&[Point3]]) -> Result<Self> {
        let m = frames.len();
        let joints = frames
            .first()
            .map(|f| f.len())
            .ok_or(SkeletonError::EmptyList)?;
        let mut data = vec![0.0; 3 * joints * m];
        for (f, frame) in frames.iter().enumerate() {
            if frame.len() != joints {
                return Err(SkeletonError::ShapeMismatch("ragged block".into()));
            }
            for (j, p) in frame.iter().enumerate() {
                for a in 0..3 {
                    data[(a * joints + j) * m + f] = p[a];
                }
            }
        }
        Ok(Self {
            joints,
            frames: m,
            data,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.joints
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn get(&self, axis: usize, joint: usize, frame: usize) -> f64 {
        self.data[(axis * self.joints + joint) * self.frames + frame]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Trajectory of one joint laid out as `[x_1..x_M, y_1..y_M, z_1..z_M]`.
    pub fn joint_trajectory(&self, joint: usize) -> Vec<f64> {
        (0..3)
            .flat_map(|a| {
                let start = (a * self.joints + joint) * self.frames;
                self.data[start..start + self.frames].iter().copied()
            })
            .collect()
    }
}

/// Cuts a sequence into `floor((T - M) / S) + 1` blocks; block `i` covers
/// frames `[i*S, i*S + M)`. Trailing frames past the last block are dropped.
pub fn split_blocks(seq: &SkeletonSequence, params: BlockingParams) -> Result<Vec<TemporalBlock>> {
    let frames = seq.num_frames();
    if frames < params.block_size {
        return Err(SkeletonError::SequenceTooShort {
            frames,
            block_size: params.block_size,
        });
    }
    (0..params.num_blocks(frames))
        .map(|i| {
            let start = i * params.stride;
            let window: Vec<&[Point3]> = (start..start + params.block_size)
                .map(|t| seq.frame(t))
                .collect();
            TemporalBlock::from_frames(&window)
        })
        .collect()
}

/// Elementwise mean of equally-shaped feature arrays.
pub fn aggregate_subjects(features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = features.first().ok_or(SkeletonError::EmptyList)?;
    if let Some(bad) = features.iter().find(|f| f.len() != first.len()) {
        return Err(SkeletonError::ShapeMismatch(format!(
            "feature length {} vs {}",
            bad.len(),
            first.len()
        )));
    }
    let n = features.len() as f64;
    Ok((0..first.len())
        .map(|i| features.iter().map(|f| f[i]).sum::<f64>() / n)
        .collect())
}

/// On-disk document: one sequence per JSON document, frames nested as
/// `[[[x, y, z]; J]; T]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDocument {
    #[serde(default)]
    pub label: Option<String>,
    pub joints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjects: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewMeta>,
    pub frames: Vec<Vec<Point3>>,
}

impl SequenceDocument {
    pub fn into_sequence(self) -> Result<SkeletonSequence> {
        if let Some((f, frame)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, fr)| fr.len() != self.joints)
        {
            return Err(SkeletonError::RaggedFrame {
                frame: f,
                found: frame.len(),
                expected: self.joints,
            });
        }
        let mut seq = SkeletonSequence::new(self.frames)?;
        if let Some(parts) = &self.subjects {
            for &i in parts.iter().flatten() {
                if i >= seq.num_joints() {
                    return Err(SkeletonError::IndexOutOfRange {
                        index: i,
                        joints: seq.num_joints(),
                    });
                }
            }
        }
        seq.label = self.label;
        seq.fps = self.fps;
        seq.subjects = self.subjects;
        Ok(seq)
    }

    pub fn from_sequence(seq: &SkeletonSequence, view: Option<ViewMeta>) -> Self {
        Self {
            label: seq.label.clone(),
            joints: seq.num_joints(),
            fps: seq.fps,
            subjects: seq.subjects.clone(),
            view,
            frames: seq.frames().map(<[Point3]>::to_vec).collect(),
        }
    }
}

/// Parses a single JSON sequence document.
pub fn parse_sequence(text: &str) -> Result<SkeletonSequence> {
    let doc: SequenceDocument = serde_json::from_str(text).map_err(|e| SkeletonError::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    doc.into_sequence()
}

/// Parses a JSON-lines corpus (one sequence per non-blank line). Errors name
/// the 1-based line of the offending document.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<SkeletonSequence>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let doc: SequenceDocument =
            serde_json::from_str(&line).map_err(|e| SkeletonError::Format {
                line: lineno,
                message: e.to_string(),
            })?;
        out.push(doc.into_sequence().map_err(|e| SkeletonError::Format {
            line: lineno,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads either a single pretty-printed document or a JSON-lines corpus.
pub fn load_sequences(path: &Path) -> Result<Vec<SkeletonSequence>> {
    let text = std::fs::read_to_string(path)?;
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SkeletonError::Format {
            line: 1,
            message: "empty file".into(),
        });
    }
    if let Ok(doc) = serde_json::from_str::<SequenceDocument>(trimmed) {
        return Ok(vec![doc.into_sequence()?]);
    }
    read_corpus(text.as_bytes())
}

pub fn to_json_line(seq: &SkeletonSequence, view: Option<ViewMeta>) -> String {
    serde_json::to_string(&SequenceDocument::from_sequence(seq, view))
        .expect("sequence documents always serialize")
}
