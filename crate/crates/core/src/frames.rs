//! Coordinate transforms between the ECEF, orbital and Hill frames.
//!
//! ECEF is treated as inertial (no Earth rotation). The orbital frame is
//! perifocal: `x_o` toward periapsis, `z_o` along the orbit normal. The Hill
//! frame is centered on a point of a circular reference orbit with `x_H`
//! radial (outward), `y_H` along the orbital velocity and `z_H` along the
//! orbit normal; this is the orientation in which the Clohessy-Wiltshire
//! equations of [`crate::dynamics`] hold.
//!
//! Matrices are `nalgebra::Matrix3`; element `(r, c)` is row `r`, column `c`
//! of the row-major form written in the docs.

use nalgebra::{Matrix3, Vector3};

use crate::constants::MU_EARTH;
use crate::error::{domain, Result};
use crate::scalar::Real;

/// Near-circular orbit described by five classical elements.
///
/// Eccentricity is implicitly zero. Angles are stored wrapped to `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements<T: Real> {
    /// Inclination (rad).
    pub inclination: T,
    /// Argument of periapsis (rad).
    pub arg_periapsis: T,
    /// Right ascension of the ascending node (rad).
    pub raan: T,
    /// Semi-major axis (km).
    pub semi_major_axis: T,
    /// Mean anomaly at the reference epoch (rad).
    pub mean_anomaly: T,
}

impl<T: Real> OrbitalElements<T> {
    pub fn new(inclination: T, arg_periapsis: T, raan: T, semi_major_axis: T, mean_anomaly: T) -> Result<Self> {
        let finite = [inclination, arg_periapsis, raan, semi_major_axis, mean_anomaly]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(domain("orbital elements must be finite"));
        }
        if semi_major_axis <= T::zero() {
            return Err(domain(format!(
                "semi-major axis must be positive, got {}",
                semi_major_axis.as_f64()
            )));
        }
        Ok(Self {
            inclination: wrap_angle(inclination),
            arg_periapsis: wrap_angle(arg_periapsis),
            raan: wrap_angle(raan),
            semi_major_axis,
            mean_anomaly: wrap_angle(mean_anomaly),
        })
    }

    /// Equatorial circular orbit of radius `a` with the reference point at
    /// in-plane angle `mean_anomaly`.
    pub fn equatorial(a: T, mean_anomaly: T) -> Result<Self> {
        Self::new(T::zero(), T::zero(), T::zero(), a, mean_anomaly)
    }

    /// Same orbit with a different mean anomaly.
    pub fn with_mean_anomaly(&self, mean_anomaly: T) -> Self {
        Self {
            mean_anomaly: wrap_angle(mean_anomaly),
            ..*self
        }
    }

    /// Mean motion `sqrt(mu / a^3)` (rad/s).
    pub fn mean_motion(&self) -> T {
        (T::lit(MU_EARTH) / self.semi_major_axis.powi(3)).sqrt()
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    let two_pi = T::two_pi();
    let mut wrapped = angle % two_pi;
    if wrapped < T::zero() {
        wrapped += two_pi;
    }
    // `x % 2pi` of a tiny negative can round back up to exactly 2pi.
    if wrapped >= two_pi {
        wrapped -= two_pi;
    }
    wrapped
}

/// Rotation taking ECEF coordinates to the perifocal orbital frame.
///
/// ```text
/// [ cO cw - sO ci sw    sO cw + cO ci sw    si sw ]
/// [ -cO sw - sO ci cw  -sO sw + cO ci cw    si cw ]
/// [ sO si              -cO si               ci    ]
/// ```
pub fn rotation_ecef_to_orbital<T: Real>(elems: &OrbitalElements<T>) -> Matrix3<T> {
    let (s_o, c_o) = elems.raan.sin_cos();
    let (s_w, c_w) = elems.arg_periapsis.sin_cos();
    let (s_i, c_i) = elems.inclination.sin_cos();
    Matrix3::new(
        c_o * c_w - s_o * c_i * s_w,
        s_o * c_w + c_o * c_i * s_w,
        s_i * s_w,
        -c_o * s_w - s_o * c_i * c_w,
        -s_o * s_w + c_o * c_i * c_w,
        s_i * c_w,
        s_o * s_i,
        -c_o * s_i,
        c_i,
    )
}

/// Rotation taking orbital-frame coordinates to the Hill frame of the point
/// at in-plane angle `mean_anomaly`.
///
/// ```text
/// [  cM  sM  0 ]
/// [ -sM  cM  0 ]
/// [  0   0   1 ]
/// ```
///
/// This maps the reference point itself onto `+x_H` and its velocity onto
/// `+y_H`.
pub fn rotation_orbital_to_hill<T: Real>(mean_anomaly: T) -> Matrix3<T> {
    let (s, c) = mean_anomaly.sin_cos();
    Matrix3::new(c, s, T::zero(), -s, c, T::zero(), T::zero(), T::zero(), T::one())
}

/// Full ECEF to Hill rotation `R_OH * R_EO`.
pub fn rotation_ecef_to_hill<T: Real>(origin: &OrbitalElements<T>) -> Matrix3<T> {
    rotation_orbital_to_hill(origin.mean_anomaly) * rotation_ecef_to_orbital(origin)
}

/// ECEF position of the Hill-frame origin.
pub fn hill_origin<T: Real>(origin: &OrbitalElements<T>) -> Vector3<T> {
    let (s, c) = origin.mean_anomaly.sin_cos();
    let in_plane = Vector3::new(c, s, T::zero()) * origin.semi_major_axis;
    rotation_ecef_to_orbital(origin).transpose() * in_plane
}

/// `p_H = R_OH R_EO (p_E - p_O)`.
pub fn ecef_to_hill<T: Real>(p_ecef: &Vector3<T>, origin: &OrbitalElements<T>) -> Vector3<T> {
    rotation_ecef_to_hill(origin) * (p_ecef - hill_origin(origin))
}

/// Inverse of [`ecef_to_hill`].
pub fn hill_to_ecef<T: Real>(p_hill: &Vector3<T>, origin: &OrbitalElements<T>) -> Vector3<T> {
    rotation_ecef_to_hill(origin).transpose() * p_hill + hill_origin(origin)
}

/// Converts an ECEF position/velocity pair into Hill-frame relative position
/// and velocity, accounting for the frame rotating at the mean motion.
pub fn ecef_state_to_hill<T: Real>(
    pos: &Vector3<T>,
    vel: &Vector3<T>,
    origin: &OrbitalElements<T>,
) -> (Vector3<T>, Vector3<T>) {
    let rot = rotation_ecef_to_hill(origin);
    let n = origin.mean_motion();
    let v_origin = origin_velocity(origin);
    let rho = rot * (pos - hill_origin(origin));
    let omega = Vector3::new(T::zero(), T::zero(), n);
    let rho_dot = rot * (vel - v_origin) - omega.cross(&rho);
    (rho, rho_dot)
}

/// Inverse of [`ecef_state_to_hill`].
pub fn hill_state_to_ecef<T: Real>(
    rho: &Vector3<T>,
    rho_dot: &Vector3<T>,
    origin: &OrbitalElements<T>,
) -> (Vector3<T>, Vector3<T>) {
    let rot_t = rotation_ecef_to_hill(origin).transpose();
    let n = origin.mean_motion();
    let omega = Vector3::new(T::zero(), T::zero(), n);
    let pos = rot_t * rho + hill_origin(origin);
    let vel = origin_velocity(origin) + rot_t * (rho_dot + omega.cross(rho));
    (pos, vel)
}

fn origin_velocity<T: Real>(origin: &OrbitalElements<T>) -> Vector3<T> {
    let (s, c) = origin.mean_anomaly.sin_cos();
    let speed = (T::lit(MU_EARTH) / origin.semi_major_axis).sqrt();
    rotation_ecef_to_orbital(origin).transpose() * (Vector3::new(-s, c, T::zero()) * speed)
}
