//! Soft-min dynamic programming over temporal and viewpoint axes.
//!
//! The central object is a [`DistanceTensor`] of base distances between every
//! simulated view `(k, k')` of every query block `t` and every support block
//! `t'`. [`jeanie`] runs the joint temporal/viewpoint recursion over it,
//! [`soft_dtw`] the classical temporal-only recursion, and [`fvm`] the
//! free-viewpoint baseline that collapses views before warping time.

mod dtw;
mod jeanie;
mod oracle;
mod softmin;
mod tensor;

pub use dtw::{fixed_view_soft_dtw, soft_dtw};
pub use jeanie::{jeanie, jeanie_grad, jeanie_hard_path, jeanie_with_grad};
pub use oracle::{brute_force_jeanie, count_paths, MAX_ORACLE_PATHS};
pub use softmin::softmin;
pub use tensor::{
    base_distance, distance_tensor, view_pair_tensor, CostMatrix, DistanceTensor, ViewPairTensor,
};

pub(crate) use softmin::softmin_unchecked;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("soft-min of an empty list")]
    EmptyInput,
    #[error("gamma must be positive and finite, got {0}")]
    NonpositiveGamma(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty distance matrix")]
    EmptyMatrix,
    #[error("distance entries must be finite and nonnegative")]
    InvalidDistance,
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("{paths} admissible paths exceed the enumeration limit {limit}")]
    TooLarge { paths: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, AlignmentError>;

/// Frame-level distance between two feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseDistance {
    Euclidean,
    /// Distance induced by the Gaussian kernel of bandwidth `sigma`.
    Rbf {
        sigma: f64,
    },
}

impl Default for BaseDistance {
    fn default() -> Self {
        BaseDistance::Rbf { sigma: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    /// Soft-min temperature.
    pub gamma: f64,
    /// Largest per-step viewpoint move along each grid axis.
    pub iota: usize,
    pub base: BaseDistance,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            iota: 2,
            base: BaseDistance::default(),
        }
    }
}

impl AlignmentParams {
    pub fn new(gamma: f64, iota: usize) -> Self {
        Self {
            gamma,
            iota,
            ..Self::default()
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if let BaseDistance::Rbf { sigma } = self.base {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(AlignmentError::InvalidSigma(sigma));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(AlignmentError::NonpositiveGamma(gamma))
    }
}

/// One cell visited by an alignment path: view `(k, k')`, query block `t`,
/// support block `t'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathStep {
    pub k: usize,
    pub k_prime: usize,
    pub t: usize,
    pub t_prime: usize,
}

impl PathStep {
    pub fn as_array(&self) -> [usize; 4] {
        [self.k, self.k_prime, self.t, self.t_prime]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub distance: f64,
    /// Derivative of `distance` with respect to every base distance.
    pub gradient: Option<DistanceTensor>,
    pub hard_path: Option<Vec<PathStep>>,
}

impl AlignmentResult {
    pub(crate) fn scalar(distance: f64) -> Self {
        Self {
            distance,
            gradient: None,
            hard_path: None,
        }
    }
}

/// Temporal moves `(dt, dt')`, in the order predecessors are accumulated.
pub(crate) const TEMPORAL_STEPS: [(usize, usize); 3] = [(0, 1), (1, 0), (1, 1)];

/// Alignment method selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SoftDtw,
    Fvm,
    Jeanie,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SoftDtw, Method::Fvm, Method::Jeanie];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SoftDtw => "softdtw",
            Method::Fvm => "fvm",
            Method::Jeanie => "jeanie",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "softdtw" => Ok(Method::SoftDtw),
            "fvm" => Ok(Method::Fvm),
            "jeanie" => Ok(Method::Jeanie),
            other => Err(format!("unknown method {other:?} (softdtw, fvm, jeanie)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Free-viewpoint matching: every `(t, t')` cell is collapsed by a soft-min
/// over all query/support view pairs, then soft-DTW warps the resulting
/// matrix. The hard path reports the best query view at each step.
pub fn fvm(pairs: &ViewPairTensor, gamma: f64) -> Result<AlignmentResult> {
    check_gamma(gamma)?;
    let collapsed = pairs.collapse(gamma);
    let mut result = soft_dtw(&collapsed, gamma)?;
    if let Some(path) = result.hard_path.as_mut() {
        for step in path.iter_mut() {
            let (k, kp) = pairs.best_query_view(step.t, step.t_prime);
            step.k = k;
            step.k_prime = kp;
        }
    }
    Ok(result)
}
