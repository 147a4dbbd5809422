//! Viewpoint simulation: Euler rotations, stereo-rig epipolar geometry and
//! the camera-orbit view generator.
//!
//! Angles are degrees at every public boundary and radians internally.
//! The single-axis matrices use the "frame rotation" sign convention:
//!
//! ```text
//! R_x = [1 0 0; 0 c s; 0 -s c]   R_y = [c 0 -s; 0 1 0; s 0 c]   R_z = [c s 0; -s c 0; 0 0 1]
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{Point3, SkeletonSequence};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("intrinsics matrix is singular")]
    SingularIntrinsics,
    #[error("camera-orbit view simulation requires a camera model")]
    MissingCamera,
    #[error("sequence is empty")]
    EmptySequence,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid view grid: {0}")]
    InvalidGrid(String),
    #[error("camera file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Multiplication order of the three single-axis matrices. `Xyz` is the
/// product `R_x * R_y * R_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisOrder {
    #[default]
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    Zyx,
}

/// A proper rotation (orthogonal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let v = self.0 * Vector3::from(p);
        [v.x, v.y, v.z]
    }

    /// Accepts a matrix only if it is orthogonal with unit determinant
    /// within `tol`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Option<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        if ortho <= tol && (m.determinant() - 1.0).abs() <= tol {
            Some(Self(m))
        } else {
            None
        }
    }
}

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Ordered product of the three single-axis rotations.
pub fn euler_rotation(
    theta_x: f64,
    theta_y: f64,
    theta_z: f64,
    order: AxisOrder,
) -> RotationMatrix {
    let (x, y, z) = (rot_x(theta_x), rot_y(theta_y), rot_z(theta_z));
    let m = match order {
        AxisOrder::Xyz => x * y * z,
        AxisOrder::Xzy => x * z * y,
        AxisOrder::Yxz => y * x * z,
        AxisOrder::Yzx => y * z * x,
        AxisOrder::Zxy => z * x * y,
        AxisOrder::Zyx => z * y * x,
    };
    RotationMatrix(m)
}

/// Matrix `S` with `S * p = p x t` for every `p`.
pub fn skew_symmetric(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, t.z, -t.y, -t.z, 0.0, t.x, t.y, -t.x, 0.0)
}

/// Two pinhole cameras related by `p_r = R (p_l - t)`, plus the distance
/// from the left camera to the recorded subject.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics_left: Matrix3<f64>,
    pub intrinsics_right: Matrix3<f64>,
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDocument {
    intrinsics_left: [[f64; 3]; 3],
    intrinsics_right: [[f64; 3]; 3],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    distance_m: f64,
}

fn from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

impl CameraModel {
    /// Rig with identical intrinsics on both sides and no relative motion.
    pub fn monocular(intrinsics: Matrix3<f64>, distance_m: f64) -> Self {
        Self {
            intrinsics_left: intrinsics,
            intrinsics_right: intrinsics,
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
            distance_m,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CameraDocument =
            serde_json::from_str(text).map_err(|e| GeometryError::Format(e.to_string()))?;
        let rotation =
            RotationMatrix::try_from_matrix(from_rows(&doc.rotation), 1e-6).ok_or_else(|| {
                GeometryError::InvalidCamera("rotation is not a proper rotation".into())
            })?;
        if !(doc.distance_m.is_finite() && doc.distance_m > 0.0) {
            return Err(GeometryError::InvalidCamera(
                "distance_m must be positive".into(),
            ));
        }
        Ok(Self {
            intrinsics_left: from_rows(&doc.intrinsics_left),
            intrinsics_right: from_rows(&doc.intrinsics_right),
            rotation,
            translation: Vector3::from(doc.translation),
            distance_m: doc.distance_m,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let doc = CameraDocument {
            intrinsics_left: to_rows(&self.intrinsics_left),
            intrinsics_right: to_rows(&self.intrinsics_right),
            rotation: to_rows(self.rotation.matrix()),
            translation: [self.translation.x, self.translation.y, self.translation.z],
            distance_m: self.distance_m,
        };
        serde_json::to_string_pretty(&doc).expect("camera documents always serialize")
    }
}

/// `E = R S` where `S` is the skew matrix of the translation.
pub fn essential_matrix(cam: &CameraModel) -> Matrix3<f64> {
    cam.rotation.matrix() * skew_symmetric(&cam.translation)
}

fn invert_intrinsics(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if m.determinant().abs() <= 1e-12 {
        return Err(GeometryError::SingularIntrinsics);
    }
    m.try_inverse().ok_or(GeometryError::SingularIntrinsics)
}

/// `F = M_r^{-T} E M_l^{-1}`, relating pixel points: `p_r^T F p_l = 0`.
pub fn fundamental_matrix(cam: &CameraModel) -> Result<Matrix3<f64>> {
    let ml_inv = invert_intrinsics(&cam.intrinsics_left)?;
    let mr_inv = invert_intrinsics(&cam.intrinsics_right)?;
    Ok(mr_inv.transpose() * essential_matrix(cam) * ml_inv)
}

/// Homogeneous pixel coordinates `M p` of a camera-frame point.
pub fn project(intrinsics: &Matrix3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let h = intrinsics * p;
    h / h.z
}

/// Bilinear epipolar residual `p_r^T F p_l` after scaling both points and
/// `F` to unit norm.
pub fn epipolar_residual(
    f: &Matrix3<f64>,
    pixel_left: &Vector3<f64>,
    pixel_right: &Vector3<f64>,
) -> f64 {
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return 0.0;
    }
    let l = pixel_left / pixel_left.norm();
    let r = pixel_right / pixel_right.norm();
    (r.transpose() * (f / fnorm) * l)[(0, 0)].abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewMode {
    /// Rotate the skeleton about its hip center.
    #[default]
    Euler,
    /// Move a virtual camera around the subject and re-express the joints.
    CamVpc,
}

impl ViewMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewMode::Euler => "euler",
            ViewMode::CamVpc => "camvpc",
        }
    }
}

impl std::str::FromStr for ViewMode {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(ViewMode::Euler),
            "camvpc" => Ok(ViewMode::CamVpc),
            other => Err(GeometryError::InvalidGrid(format!(
                "unknown view mode {other:?}"
            ))),
        }
    }
}

/// Azimuth / altitude offset in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ViewShift {
    pub azimuth: f64,
    pub altitude: f64,
}

impl ViewShift {
    pub fn new(azimuth: f64, altitude: f64) -> Self {
        Self { azimuth, altitude }
    }

    /// Rotation applied to hip-centered joints: altitude about x, azimuth
    /// about y, multiplied as `R_x(alt) * R_y(az)`.
    pub fn rotation(&self) -> RotationMatrix {
        euler_rotation(self.altitude, self.azimuth, 0.0, AxisOrder::Xyz)
    }
}

/// Places a virtual camera on the sphere of radius `distance_m` around the
/// subject (which sits `distance_m` in front of the base camera), shifted by
/// `shift`, looking at the subject. The returned rig maps base-camera
/// coordinates into the virtual camera frame.
pub fn orbit_camera(base: &CameraModel, shift: ViewShift) -> Result<CameraModel> {
    if !(base.distance_m.is_finite() && base.distance_m > 0.0) {
        return Err(GeometryError::InvalidCamera(
            "distance_m must be positive".into(),
        ));
    }
    let rotation = shift.rotation();
    let center = Vector3::new(0.0, 0.0, base.distance_m);
    let translation = center - rotation.matrix().transpose() * center;
    Ok(CameraModel {
        intrinsics_left: base.intrinsics_left,
        intrinsics_right: base.intrinsics_left,
        rotation,
        translation,
        distance_m: base.distance_m,
    })
}

/// Re-renders hip-centered joints from a shifted viewpoint. Output keeps the
/// frame and joint counts of the input.
pub fn simulate_view(
    seq: &SkeletonSequence,
    shift: ViewShift,
    mode: ViewMode,
    cam: Option<&CameraModel>,
) -> Result<SkeletonSequence> {
    if seq.points().is_empty() {
        return Err(GeometryError::EmptySequence);
    }
    match mode {
        ViewMode::Euler => {
            if shift == ViewShift::default() {
                return Ok(seq.clone());
            }
            let r = shift.rotation();
            Ok(seq.map_points(|p| r.apply(p)))
        }
        ViewMode::CamVpc => {
            let cam = cam.ok_or(GeometryError::MissingCamera)?;
            if shift == ViewShift::default() {
                return Ok(seq.clone());
            }
            let rig = orbit_camera(cam, shift)?;
            let center = Vector3::new(0.0, 0.0, cam.distance_m);
            let r = *rig.rotation.matrix();
            Ok(seq.map_points(|p| {
                let p_left = Vector3::from(p) + center;
                let p_right = r * (p_left - rig.translation) - center;
                [p_right.x, p_right.y, p_right.z]
            }))
        }
    }
}

/// Symmetric grid of `(2 * azimuth_steps + 1) x (2 * altitude_steps + 1)`
/// viewpoint shifts with spacing `step_deg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGrid {
    pub azimuth_steps: usize,
    pub altitude_steps: usize,
    pub step_deg: f64,
    pub mode: ViewMode,
}

impl Default for ViewGrid {
    fn default() -> Self {
        Self {
            azimuth_steps: 3,
            altitude_steps: 3,
            step_deg: 15.0,
            mode: ViewMode::Euler,
        }
    }
}

impl ViewGrid {
    pub fn single() -> Self {
        Self {
            azimuth_steps: 0,
            altitude_steps: 0,
            ..Self::default()
        }
    }

    /// K, the number of azimuth cells.
    pub fn k(&self) -> usize {
        2 * self.azimuth_steps + 1
    }

    /// K', the number of altitude cells.
    pub fn k_prime(&self) -> usize {
        2 * self.altitude_steps + 1
    }

    pub fn center(&self) -> (usize, usize) {
        (self.azimuth_steps, self.altitude_steps)
    }

    pub fn shift(&self, k: usize, kp: usize) -> ViewShift {
        ViewShift {
            azimuth: (k as f64 - self.azimuth_steps as f64) * self.step_deg,
            altitude: (kp as f64 - self.altitude_steps as f64) * self.step_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_deg.is_finite() && self.step_deg > 0.0) {
            return Err(GeometryError::InvalidGrid(
                "step_deg must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// All simulated views of one sequence, indexed `[k][k']`.
pub type ViewSet = Vec<Vec<SkeletonSequence>>;

pub fn generate_view_grid(
    grid: &ViewGrid,
    seq: &SkeletonSequence,
    cam: Option<&CameraModel>,
) -> Result<ViewSet> {
    grid.validate()?;
    (0..grid.k())
        .map(|k| {
            (0..grid.k_prime())
                .map(|kp| simulate_view(seq, grid.shift(k, kp), grid.mode, cam))
                .collect()
        })
        .collect()
}
