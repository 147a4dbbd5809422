//! Body-joint graphs and their symmetric normalization.

use nalgebra::DMatrix;

use super::{EncoderError, Result};

/// Built-in joint layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkeletonLayout {
    /// Kinect v2, 25 joints.
    Ntu25,
    /// Kinect v1, 20 joints.
    Kinect20,
    /// OpenPose COCO keypoints, 18 joints.
    OpenPose18,
    /// OpenNI tracker, 15 joints.
    OpenNi15,
}

// 0-based edge lists.
#[rustfmt::skip]
const NTU25_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 20), (2, 20), (3, 2), (4, 20), (5, 4), (6, 5), (7, 6),
    (8, 20), (9, 8), (10, 9), (11, 10), (12, 0), (13, 12), (14, 13), (15, 14),
    (16, 0), (17, 16), (18, 17), (19, 18), (21, 22), (22, 7), (23, 24), (24, 11),
];

#[rustfmt::skip]
const KINECT20_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (2, 3), (2, 4), (4, 5), (5, 6), (6, 7), (2, 8), (8, 9),
    (9, 10), (10, 11), (0, 12), (12, 13), (13, 14), (14, 15), (0, 16), (16, 17),
    (17, 18), (18, 19),
];

#[rustfmt::skip]
const OPENPOSE18_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7), (1, 8), (8, 9),
    (9, 10), (1, 11), (11, 12), (12, 13), (0, 14), (0, 15), (14, 16), (15, 17),
];

#[rustfmt::skip]
const OPENNI15_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 8), (2, 9),
    (9, 10), (10, 11), (2, 12), (12, 13), (13, 14),
];

impl SkeletonLayout {
    pub const ALL: [SkeletonLayout; 4] = [
        SkeletonLayout::Ntu25,
        SkeletonLayout::Kinect20,
        SkeletonLayout::OpenPose18,
        SkeletonLayout::OpenNi15,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SkeletonLayout::Ntu25 => "ntu25",
            SkeletonLayout::Kinect20 => "kinect20",
            SkeletonLayout::OpenPose18 => "openpose18",
            SkeletonLayout::OpenNi15 => "openni15",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn joints(&self) -> usize {
        match self {
            SkeletonLayout::Ntu25 => 25,
            SkeletonLayout::Kinect20 => 20,
            SkeletonLayout::OpenPose18 => 18,
            SkeletonLayout::OpenNi15 => 15,
        }
    }

    pub fn edges(&self) -> &'static [(usize, usize)] {
        match self {
            SkeletonLayout::Ntu25 => NTU25_EDGES,
            SkeletonLayout::Kinect20 => KINECT20_EDGES,
            SkeletonLayout::OpenPose18 => OPENPOSE18_EDGES,
            SkeletonLayout::OpenNi15 => OPENNI15_EDGES,
        }
    }

    /// Joint used as the centering origin.
    pub fn torso(&self) -> usize {
        match self {
            SkeletonLayout::Ntu25 => 1,
            SkeletonLayout::Kinect20 => 1,
            SkeletonLayout::OpenPose18 => 1,
            SkeletonLayout::OpenNi15 => 2,
        }
    }

    pub fn for_joints(joints: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.joints() == joints)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGraph {
    pub adjacency: DMatrix<f64>,
    /// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
    pub normalized: DMatrix<f64>,
}

impl JointGraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        let normalized = normalized_adjacency(&adjacency)?;
        Ok(Self {
            adjacency,
            normalized,
        })
    }

    pub fn from_edges(joints: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(joints, joints);
        for &(i, j) in edges {
            if i >= joints || j >= joints || i == j {
                return Err(EncoderError::InvalidParams(format!("bad edge ({i}, {j})")));
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Self::new(a)
    }

    pub fn layout(layout: SkeletonLayout) -> Self {
        Self::from_edges(layout.joints(), layout.edges()).expect("built-in layouts are valid")
    }

    /// Built-in layout when one matches `joints`, otherwise a chain.
    pub fn for_joints(joints: usize) -> Self {
        match SkeletonLayout::for_joints(joints) {
            Some(l) => Self::layout(l),
            None => {
                let edges: Vec<_> = (1..joints).map(|j| (j - 1, j)).collect();
                Self::from_edges(joints, &edges).expect("chain graph is valid")
            }
        }
    }

    pub fn joints(&self) -> usize {
        self.adjacency.nrows()
    }
}

pub fn normalized_adjacency(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n || n == 0 {
        return Err(EncoderError::ShapeMismatch(
            "adjacency must be square and nonempty".into(),
        ));
    }
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(EncoderError::InvalidParams(
                "adjacency diagonal must be zero".into(),
            ));
        }
        for j in 0..i {
            if adjacency[(i, j)] != adjacency[(j, i)] {
                return Err(EncoderError::AsymmetricInput);
            }
        }
    }
    let a_tilde = adjacency + DMatrix::identity(n, n);
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a_tilde.row(i).sum().sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        a_tilde[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    }))
}
