//! Planar poses with Gaussian uncertainty and first-order propagation of sensor points.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Rotation2, SymmetricEigen, Vector2, Vector3};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

fn min_eigenvalue2(m: &Matrix2<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

fn is_symmetric<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

/// Estimated robot pose `(x, y, θ)` with covariance.
///
/// The covariance may be singular (an exactly known pose is allowed); it must be
/// symmetric with no negative eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64, covariance: Matrix3<f64>) -> Result<Self> {
        if !is_symmetric(&covariance) || SymmetricEigen::new(covariance).eigenvalues.min() < -1e-15 {
            return Err(Error::NotPositiveDefinite("pose covariance"));
        }
        Ok(Self { mean: Vector3::new(x, y, wrap_angle(theta)), covariance })
    }

    /// Pose with zero uncertainty.
    pub fn exact(x: f64, y: f64, theta: f64) -> Self {
        Self { mean: Vector3::new(x, y, wrap_angle(theta)), covariance: Matrix3::zeros() }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean.x, self.mean.y)
    }

    pub fn heading(&self) -> f64 {
        self.mean.z
    }
}

/// A sensed point in world coordinates with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedPoint {
    pub position: Vector2<f64>,
    pub covariance: Matrix2<f64>,
}

impl ObservedPoint {
    pub fn new(position: Vector2<f64>, covariance: Matrix2<f64>) -> Result<Self> {
        if !is_symmetric(&covariance) || min_eigenvalue2(&covariance) <= 0.0 {
            return Err(Error::NotPositiveDefinite("point covariance"));
        }
        Ok(Self { position, covariance })
    }

    /// Isotropic covariance `σ²I`.
    pub fn isotropic(position: Vector2<f64>, sigma: f64) -> Result<Self> {
        Self::new(position, Matrix2::identity() * sigma * sigma)
    }
}

/// Maps a sensor-frame point into the world frame and propagates both pose and
/// measurement covariance to first order.
pub fn propagate_point(pose: &PlanarPose, local: Vector2<f64>, local_cov: &Matrix2<f64>) -> Result<ObservedPoint> {
    if !is_symmetric(local_cov) || min_eigenvalue2(local_cov) <= 0.0 {
        return Err(Error::NotPositiveDefinite("local covariance"));
    }
    let theta = pose.heading();
    let rot = *Rotation2::new(theta).matrix();
    let (s, c) = theta.sin_cos();
    // d(R·l)/dθ
    let drot = Vector2::new(-s * local.x - c * local.y, c * local.x - s * local.y);
    let jac = Matrix2x3::new(1.0, 0.0, drot.x, 0.0, 1.0, drot.y);
    let mut cov = jac * pose.covariance * jac.transpose() + rot * local_cov * rot.transpose();
    cov = (cov + cov.transpose()) * 0.5;
    ObservedPoint::new(rot * local + pose.position(), cov)
}
