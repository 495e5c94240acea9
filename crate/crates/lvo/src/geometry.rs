//! Rigid-body geometry: camera intrinsics, SE(3) poses, Euler conventions,
//! trajectory accumulation, and depth back-projection.
//!
//! Conventions follow the KITTI camera frame: x right, y down, z forward.
//! Euler angles are intrinsic Z-Y-X, i.e. `R = Rz(e_z) * Ry(e_y) * Rx(e_x)`,
//! and all geometry is computed in `f64`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::flow::DepthMap;

/// Pinhole camera intrinsics with optional axis skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        let all_finite =
            fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite() && skew.is_finite();
        if !all_finite {
            return Err(Error::invalid("camera intrinsics must be finite"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, skew })
    }
}

/// Tolerance for accepting a rotation matrix as orthonormal.
pub const ROTATION_TOL: f64 = 1e-9;

/// A rigid transform: `p_world = R * p_local + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Max absolute entry of `R^T R - I`.
pub fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Nearest-ish rotation via Gram-Schmidt on the columns. Adequate for the
/// small drift tolerated by pose-file loading.
pub fn orthonormalize_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let mut c1 = r.column(1) - c0 * r.column(1).dot(&c0);
    c1.normalize_mut();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

impl SE3Pose {
    /// Validates that `rotation` is orthonormal with determinant +1
    /// (both within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let drift = orthonormality_drift(&rotation);
        if drift > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (max |R^T R - I| = {drift:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "rotation determinant must be +1, got {det}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(SE3Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        SE3Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: apply `other` in the local frame of `self`.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let rt = self.rotation.transpose();
        SE3Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Inter-frame motion: translation plus intrinsic Z-Y-X Euler angles
/// `[e_z, e_y, e_x]`, each in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub translation: Vector3<f64>,
    pub euler_zyx: [f64; 3],
}

impl RelativePose {
    pub fn new(translation: Vector3<f64>, euler_zyx: [f64; 3]) -> Self {
        RelativePose {
            translation,
            euler_zyx: [
                normalize_angle(euler_zyx[0]),
                normalize_angle(euler_zyx[1]),
                normalize_angle(euler_zyx[2]),
            ],
        }
    }

    pub fn identity() -> Self {
        RelativePose {
            translation: Vector3::zeros(),
            euler_zyx: [0.0; 3],
        }
    }

    pub fn to_se3(&self) -> SE3Pose {
        SE3Pose {
            rotation: euler_to_rotation(self.euler_zyx[0], self.euler_zyx[1], self.euler_zyx[2]),
            translation: self.translation,
        }
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi);
    if r == 0.0 {
        std::f64::consts::PI
    } else {
        r - std::f64::consts::PI
    }
}

/// `R = Rz(e_z) * Ry(e_y) * Rx(e_x)`.
pub fn euler_to_rotation(e_z: f64, e_y: f64, e_x: f64) -> Matrix3<f64> {
    let (sz, cz) = e_z.sin_cos();
    let (sy, cy) = e_y.sin_cos();
    let (sx, cx) = e_x.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Inverse of [`euler_to_rotation`]. Requires an orthonormal input (within
/// 1e-6). At gimbal lock (`|e_y| = pi/2`) the x-rotation is fixed to zero and
/// the z-rotation absorbs the remaining freedom.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Result<[f64; 3]> {
    let drift = orthonormality_drift(r);
    if drift > 1e-6 {
        return Err(Error::invalid(format!(
            "rotation_to_euler needs an orthonormal matrix (max |R^T R - I| = {drift:.3e})"
        )));
    }
    if r.determinant() < 0.0 {
        return Err(Error::invalid(
            "rotation_to_euler needs a proper rotation (det = +1)",
        ));
    }
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let e_y = sy.asin();
    // cos(e_y) ~ 0: columns for e_z and e_x collapse onto each other.
    if sy.abs() >= 1.0 - 1e-12 {
        let e_z = f64::atan2(-r[(0, 1)], r[(1, 1)]);
        Ok([normalize_angle(e_z), e_y, 0.0])
    } else {
        let e_z = f64::atan2(r[(1, 0)], r[(0, 0)]);
        let e_x = f64::atan2(r[(2, 1)], r[(2, 2)]);
        Ok([normalize_angle(e_z), e_y, normalize_angle(e_x)])
    }
}

/// A sequence of world-from-camera poses. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<SE3Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<SE3Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("a trajectory must contain at least one pose"));
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[SE3Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced non-empty at construction
    }
}

/// Chain relative motions starting from the identity pose:
/// `pose[k+1] = pose[k] ∘ rel[k]`. N inputs produce N+1 poses.
pub fn accumulate_trajectory(relatives: &[RelativePose]) -> Trajectory {
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    poses.push(SE3Pose::identity());
    for rel in relatives {
        let next = poses.last().unwrap().compose(&rel.to_se3());
        poses.push(next);
    }
    Trajectory { poses }
}

/// Inverse of [`accumulate_trajectory`] up to the starting pose:
/// `rel[k] = pose[k]^-1 ∘ pose[k+1]`, with rotations re-expressed as Euler
/// angles. Errors if the trajectory has fewer than two poses.
pub fn relative_from_absolute(traj: &Trajectory) -> Result<Vec<RelativePose>> {
    if traj.len() < 2 {
        return Err(Error::invalid(
            "need at least two poses to form relative motions",
        ));
    }
    let poses = traj.poses();
    let mut rels = Vec::with_capacity(poses.len() - 1);
    for pair in poses.windows(2) {
        let delta = pair[0].inverse().compose(&pair[1]);
        let euler = rotation_to_euler(delta.rotation())?;
        rels.push(RelativePose {
            translation: *delta.translation(),
            euler_zyx: euler,
        });
    }
    Ok(rels)
}

/// An RGB image used only to color map points.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` entries.
    pub rgb: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, rgb: Vec<[u8; 3]>) -> Result<Self> {
        if rgb.len() != width * height {
            return Err(Error::shape(format!(
                "color image buffer holds {} pixels, expected {}x{}",
                rgb.len(),
                width,
                height
            )));
        }
        Ok(ColorImage { width, height, rgb })
    }
}

/// 3D points in the camera frame, optionally colored.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// When present, exactly one color per point.
    pub colors: Option<Vec<[u8; 3]>>,
}

/// Lift one pixel to a camera-frame point given its depth.
///
/// Solves `d * [u, v, 1]^T = K * [X, Y, Z]^T` for the intrinsics matrix
/// `K = [[fx, skew, cx], [0, fy, cy], [0, 0, 1]]`, so `Z = d`,
/// `Y = (v - cy) * d / fy`, `X = (u - skew * Y / d - cx) * d / fx`.
pub fn backproject_pixel(intr: &CameraIntrinsics, u: f64, v: f64, d: f64) -> Vector3<f64> {
    let z = d;
    let y = (v - intr.cy) * d / intr.fy;
    let x = (u - intr.skew * y / d - intr.cx) * d / intr.fx;
    Vector3::new(x, y, z)
}

/// Back-project a depth map into a camera-frame point cloud. Pixels with
/// non-finite or non-positive depth are skipped. When `rgb` is given its
/// dimensions must match the depth map; each emitted point then carries the
/// color of its source pixel.
pub fn backproject(
    intr: &CameraIntrinsics,
    depth: &DepthMap,
    rgb: Option<&ColorImage>,
) -> Result<PointCloud> {
    if let Some(img) = rgb {
        if img.width != depth.width || img.height != depth.height {
            return Err(Error::shape(format!(
                "color image is {}x{} but depth map is {}x{}",
                img.width, img.height, depth.width, depth.height
            )));
        }
    }
    let mut points = Vec::new();
    let mut colors = rgb.map(|_| Vec::new());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.data[v * depth.width + u] as f64;
            if !d.is_finite() || d <= 0.0 {
                continue;
            }
            points.push(backproject_pixel(intr, u as f64, v as f64, d));
            if let (Some(out), Some(img)) = (colors.as_mut(), rgb) {
                out.push(img.rgb[v * depth.width + u]);
            }
        }
    }
    Ok(PointCloud { points, colors })
}
