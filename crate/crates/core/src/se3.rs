//! Rigid transforms in SE(3) and their tangent-space algebra.
//!
//! Poses are stored as a rotation matrix plus translation vector. Tangent
//! vectors ([`Twist`]) are ordered `(rho, theta)`: translational part first,
//! rotational part second. All perturbations are right-multiplicative,
//! `T ⊞ dx = T * exp(dx)`, so Jacobians live in the body frame.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Angle below which `exp`/`log` switch to truncated series.
const SMALL_ANGLE: f64 = 1e-8;

/// Margin kept between accepted rotation angles and the pi boundary.
const LOG_BOUNDARY_MARGIN: f64 = 1e-6;

/// Rigid transform: orthonormal rotation (det +1) and translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Tangent vector of SE(3): `rho` translational (meters), `theta` rotational
/// (radians, axis scaled by angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub theta: Vector3<f64>,
}

/// Skew-symmetric cross-product matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Twist {
    pub fn new(rho: Vector3<f64>, theta: Vector3<f64>) -> Self {
        Twist { rho, theta }
    }

    pub fn zero() -> Self {
        Twist::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        v.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        v
    }
}

/// Rodrigues coefficients `A = sin(t)/t`, `B = (1-cos(t))/t^2`,
/// `C = (t-sin(t))/t^3`, with series fallbacks near zero.
fn rodrigues_coeffs(angle: f64) -> (f64, f64, f64) {
    if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (1.0 - a2 / 6.0, 0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0)
    } else {
        let a2 = angle * angle;
        let half_sin = (0.5 * angle).sin();
        // 1 - cos t = 2 sin^2(t/2); avoids cancellation at small angles.
        let one_minus_cos = 2.0 * half_sin * half_sin;
        (
            angle.sin() / angle,
            one_minus_cos / a2,
            (angle - angle.sin()) / (a2 * angle),
        )
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose::new(Matrix3::identity(), translation)
    }

    /// Group composition `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Apply the transform to a point.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, in `[0, pi]`.
    ///
    /// Recovered via `atan2` of the skew and trace parts, which stays well
    /// conditioned for small angles where `acos` loses half the digits.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let skew_part = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        let sin = 0.5 * skew_part.norm();
        let cos = 0.5 * (r.trace() - 1.0);
        sin.atan2(cos)
    }

    /// Exponential map: twist to pose. Total; `theta = 0` gives a pure
    /// translation.
    pub fn exp(xi: &Twist) -> Pose {
        let angle = xi.theta.norm();
        let (a, b, c) = rodrigues_coeffs(angle);
        let th = skew(&xi.theta);
        let th2 = th * th;
        let rotation = Matrix3::identity() + th * a + th2 * b;
        // Left Jacobian of SO(3) maps rho to the translation part.
        let v = Matrix3::identity() + th * b + th2 * c;
        Pose {
            rotation,
            translation: v * xi.rho,
        }
    }

    /// Logarithm map: pose to twist. Fails for rotation angles within
    /// `1e-6` of pi, where the axis is not unique.
    pub fn log(&self) -> Result<Twist> {
        let angle = self.rotation_angle();
        if angle >= std::f64::consts::PI - LOG_BOUNDARY_MARGIN {
            return Err(Error::AngleAtBoundary { angle });
        }
        let r = &self.rotation;
        let skew_part = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        // skew_part = 2 sin(angle) * axis.
        let theta = if angle < SMALL_ANGLE {
            skew_part * 0.5
        } else {
            skew_part * (angle / (2.0 * angle.sin()))
        };
        let th = skew(&theta);
        let th2 = th * th;
        // V^{-1} = I - Theta/2 + d * Theta^2 with
        // d = (1 - (t/2) cot(t/2)) / t^2, series 1/12 + t^2/720 near zero.
        let d = if angle < 1e-4 {
            1.0 / 12.0 + angle * angle / 720.0
        } else {
            let half = 0.5 * angle;
            (1.0 - half * half.cos() / half.sin()) / (angle * angle)
        };
        let v_inv = Matrix3::identity() - th * 0.5 + th2 * d;
        Ok(Twist {
            rho: v_inv * self.translation,
            theta,
        })
    }

    /// Right perturbation `self * exp(dx)`.
    pub fn boxplus(&self, dx: &Twist) -> Pose {
        self.compose(&Pose::exp(dx))
    }

    /// Adjoint matrix mapping body-frame twists across this transform,
    /// in `(rho, theta)` block order.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut adj = Matrix6::zeros();
        adj.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        adj.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * self.rotation));
        adj.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        adj
    }
}

impl std::ops::Mul for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Translation (meters) and rotation (degrees) magnitude of the relative
/// transform `a^-1 b`. Symmetric in its arguments.
pub fn displacement(a: &Pose, b: &Pose) -> (f64, f64) {
    let rel = a.inverse().compose(b);
    (rel.translation.norm(), rel.rotation_angle().to_degrees())
}
