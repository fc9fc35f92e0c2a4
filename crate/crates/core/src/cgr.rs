//! Cayley-Gibbs-Rodriguez rotation parameterization.
//!
//! A rotation by angle θ about unit axis `u` maps to `s = tan(θ/2) u`, a
//! minimal three-parameter representation. The 180° rotation has no finite
//! `s` and is rejected explicitly.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};

/// CGR parameter vector with `‖s‖ = tan(θ/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgrVector(pub Vec3);

impl CgrVector {
    pub fn new(s1: f64, s2: f64, s3: f64) -> Self {
        Self(Vec3::new(s1, s2, s3))
    }

    /// Rotation matrix `((1 − sᵀs) I + 2 [s]× + 2 s sᵀ) / (1 + sᵀs)`.
    pub fn to_rotation(&self) -> Mat3 {
        let s = self.0;
        let ss = s.norm_squared();
        let skew = Mat3::new(
            0.0, -s[2], s[1],
            s[2], 0.0, -s[0],
            -s[1], s[0], 0.0,
        );
        (Mat3::identity() * (1.0 - ss) + skew * 2.0 + s * s.transpose() * 2.0) / (1.0 + ss)
    }

    /// Inverts [`CgrVector::to_rotation`] via the unit quaternion with
    /// nonnegative scalar part: `s` is the vector part over the scalar part.
    ///
    /// Fails when the rotation angle is at or near 180° (`trace ≤ −1 + 1e-9`),
    /// where the scalar part vanishes.
    pub fn from_rotation(r: &Mat3) -> Result<Self> {
        let trace = r.trace();
        if trace <= -1.0 + 1e-9 {
            return Err(Error::SingularParameterization);
        }
        // w = cos(θ/2) > 0; vector part / w = tan(θ/2) u
        let w = 0.5 * (1.0 + trace).sqrt();
        let v = Vec3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        ) * 0.25 / w;
        Ok(Self(v / w))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}
