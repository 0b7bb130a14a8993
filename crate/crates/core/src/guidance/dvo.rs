//! Single-burn delta-v optimization for a guaranteed miss distance.
//!
//! A burn `dv` at the origin drifts to `phi12 dv` after `t_fix` seconds. The
//! miss perpendicular to the threat direction `e` is `|P phi12 dv|` with
//! `P = I - e e^T`, so the cheapest burn reaching miss `D` points along the
//! top eigenvector of `phi12^T P phi12` with magnitude `sqrt(D^2 / lambda_max)`.

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};

use crate::dynamics::velocity_response;
use crate::error::{domain, Result};
use crate::scalar::Real;

/// Burn chosen for one threat direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvoBurn<T: Real> {
    /// Impulsive velocity change (km/s).
    pub delta_v: Vector3<T>,
    pub magnitude: T,
    /// Unit threat-avoidance direction the burn was computed for.
    pub direction: Vector3<T>,
}

/// Minimal burn that produces miss distance `d` perpendicular to `e` after
/// `t_fix` seconds of free drift.
pub fn dvo_delta_v<T: Real>(e: &Vector3<T>, d: T, t_fix: T, n: T) -> Result<DvoBurn<T>> {
    if !(d >= T::zero()) {
        return Err(domain("miss distance must be non-negative"));
    }
    if !(t_fix > T::zero()) {
        return Err(domain("fix time must be positive"));
    }
    let en = e.norm();
    if !(en > T::zero()) {
        return Err(domain("threat direction must be nonzero"));
    }
    let e = e / en;
    let phi = velocity_response(n, t_fix);
    let proj = Matrix3::identity() - e * e.transpose();
    let m = phi.transpose() * proj * phi;
    let eig = SymmetricEigen::new((m + m.transpose()) / T::lit(2.0));
    let (idx, lambda) =
        eig.eigenvalues.iter().enumerate().fold(
            (0, T::min_value().unwrap()),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        );
    if !(lambda > T::zero()) {
        return Err(domain("degenerate threat direction: no perpendicular drift"));
    }
    let mut dir: Vector3<T> = eig.eigenvectors.column(idx).into();
    if dir.dot(&e) < T::zero() {
        dir = -dir;
    }
    let magnitude = (d * d / lambda).sqrt();
    Ok(DvoBurn {
        delta_v: dir * magnitude,
        magnitude,
        direction: e,
    })
}

/// Perpendicular miss distance after drifting `t_fix` seconds from the origin
/// with initial velocity `dv`.
pub fn miss_distance<T: Real>(dv: &Vector3<T>, e: &Vector3<T>, t_fix: T, n: T) -> T {
    let e = e.normalize();
    let drift = velocity_response(n, t_fix) * dv;
    (drift - e * e.dot(&drift)).norm()
}

/// Deterministic cone of unit vectors around `axis`: the axis itself plus
/// `rings` rings at evenly spaced polar angles up to `angle_tol`, ring `k`
/// holding `8 k` evenly spaced azimuths.
pub fn cone_grid<T: Real>(axis: &Vector3<T>, angle_tol: T, rings: usize) -> Vec<Vector3<T>> {
    let axis = axis.normalize();
    let mut out = vec![axis];
    if !(angle_tol > T::zero()) || rings == 0 {
        return out;
    }
    let helper = if axis.x.abs() < T::lit(0.9) {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = axis.cross(&helper).normalize();
    for k in 1..=rings {
        let polar = angle_tol * T::lit(k as f64 / rings as f64);
        let count = 8 * k;
        let tilted = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(u), polar) * axis;
        for j in 0..count {
            let az = T::two_pi() * T::lit(j as f64 / count as f64);
            let spin = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), az);
            out.push(spin * tilted);
        }
    }
    out
}

/// Picks the cheapest burn among threat directions within `angle_tol` of the
/// direction pointing from the mean cat estimate toward the mouse.
pub fn dvo_select<T: Real>(
    mouse: &Vector3<T>,
    cat_estimates: &[Vector3<T>],
    d: T,
    t_fix: T,
    n: T,
    angle_tol: T,
    rings: usize,
) -> Result<DvoBurn<T>> {
    if cat_estimates.is_empty() {
        return Err(domain("at least one cat estimate is required"));
    }
    let mean = cat_estimates.iter().fold(Vector3::zeros(), |acc, v| acc + v) / T::lit(cat_estimates.len() as f64);
    let away = mouse - mean;
    let e0 = if away.norm() > T::zero() {
        away.normalize()
    } else {
        Vector3::x()
    };
    let mut best = dvo_delta_v(&e0, d, t_fix, n)?;
    for e in cone_grid(&e0, angle_tol, rings).into_iter().skip(1) {
        if let Ok(b) = dvo_delta_v(&e, d, t_fix, n) {
            if b.magnitude < best.magnitude {
                best = b;
            }
        }
    }
    Ok(best)
}
