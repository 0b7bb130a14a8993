//! Extended Kalman filter over the cat's ECEF position and velocity.
//!
//! The motion model is two-body gravity integrated with RK4; the covariance
//! is carried with the second-order Taylor transition `I + F dt + F^2 dt^2 / 2`
//! where `F` is the Jacobian of the two-body vector field. Measurements are
//! position-only.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use crate::constants::MU_EARTH;
use crate::error::{config, domain, Result};
use crate::frames::{ecef_to_hill, OrbitalElements};
use crate::scalar::Real;

/// Filter state at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState<T: Real> {
    pub x: Vector6<T>,
    pub p: Matrix6<T>,
    pub t: T,
}

impl<T: Real> EkfState<T> {
    /// Diagonal initial covariance from per-axis position and velocity sigmas.
    pub fn new(pos: Vector3<T>, vel: Vector3<T>, pos_sigma: Vector3<T>, vel_sigma: T, t: T) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&pos);
        x.fixed_rows_mut::<3>(3).copy_from(&vel);
        let mut diag = Vector6::from_element(vel_sigma * vel_sigma);
        for i in 0..3 {
            diag[i] = pos_sigma[i] * pos_sigma[i];
        }
        Self {
            x,
            p: Matrix6::from_diagonal(&diag),
            t,
        }
    }

    pub fn position(&self) -> Vector3<T> {
        self.x.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vector3<T> {
        self.x.fixed_rows::<3>(3).into()
    }
}

/// Source of the measurement covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementNoise<T: Real> {
    /// `R = diag(sigma^2)` from each estimate's own sigma.
    FromEstimate,
    /// Fixed per-axis sigma (km).
    Constant(Vector3<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig<T: Real> {
    /// Process noise added to each position variance per prediction (km^2).
    pub q_pos: T,
    /// Process noise added to each velocity variance per prediction ((km/s)^2).
    pub q_vel: T,
    /// RK4 substeps per prediction.
    pub substeps: usize,
    pub measurement: MeasurementNoise<T>,
}

impl<T: Real> Default for EkfConfig<T> {
    fn default() -> Self {
        Self {
            q_pos: T::lit(1e-8),
            q_vel: T::lit(1e-14),
            substeps: 4,
            measurement: MeasurementNoise::FromEstimate,
        }
    }
}

fn gravity<T: Real>(x: &Vector6<T>) -> Vector6<T> {
    let r: Vector3<T> = x.fixed_rows::<3>(0).into();
    let rn = r.norm();
    let acc = r * (-T::lit(MU_EARTH) / (rn * rn * rn));
    Vector6::new(x[3], x[4], x[5], acc.x, acc.y, acc.z)
}

/// RK4 two-body propagation of a 6-state over `dt` in `substeps` steps.
pub fn propagate_two_body<T: Real>(x: &Vector6<T>, dt: T, substeps: usize) -> Vector6<T> {
    let steps = substeps.max(1);
    let h = dt / T::lit(steps as f64);
    let half = h / T::lit(2.0);
    let two = T::lit(2.0);
    let mut s = *x;
    for _ in 0..steps {
        let k1 = gravity(&s);
        let k2 = gravity(&(s + k1 * half));
        let k3 = gravity(&(s + k2 * half));
        let k4 = gravity(&(s + k3 * h));
        s += (k1 + k2 * two + k3 * two + k4) * (h / T::lit(6.0));
    }
    s
}

/// Jacobian of the two-body vector field at position `r`.
pub fn two_body_jacobian<T: Real>(r: &Vector3<T>) -> Matrix6<T> {
    let rn = r.norm();
    let rhat = r / rn;
    let g = (rhat * rhat.transpose() * T::lit(3.0) - Matrix3::identity()) * (T::lit(MU_EARTH) / (rn * rn * rn));
    let mut f = Matrix6::zeros();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    f.fixed_view_mut::<3, 3>(3, 0).copy_from(&g);
    f
}

/// Second-order transition matrix `I + F dt + F^2 dt^2 / 2`.
pub fn transition<T: Real>(r: &Vector3<T>, dt: T) -> Matrix6<T> {
    let f = two_body_jacobian(r);
    Matrix6::identity() + f * dt + f * f * (dt * dt / T::lit(2.0))
}

fn symmetrize<T: Real>(p: &Matrix6<T>) -> Matrix6<T> {
    (p + p.transpose()) / T::lit(2.0)
}

pub fn ekf_predict<T: Real>(s: &EkfState<T>, dt: T, cfg: &EkfConfig<T>) -> Result<EkfState<T>> {
    if !(dt > T::zero()) {
        return Err(domain(format!("prediction step must be positive, got {}", dt.as_f64())));
    }
    let r = s.position();
    if !(r.norm() > T::lit(1.0)) {
        return Err(domain("two-body propagation singular at the Earth center"));
    }
    let phi = transition(&r, dt);
    let mut p = phi * s.p * phi.transpose();
    for i in 0..3 {
        p[(i, i)] += cfg.q_pos;
        p[(i + 3, i + 3)] += cfg.q_vel;
    }
    Ok(EkfState {
        x: propagate_two_body(&s.x, dt, cfg.substeps),
        p: symmetrize(&p),
        t: s.t + dt,
    })
}

/// Position measurement update with covariance `r`.
pub fn ekf_update<T: Real>(s: &EkfState<T>, z: &Vector3<T>, r: &Matrix3<T>) -> Result<EkfState<T>> {
    let finite = r.iter().all(|v| v.is_finite());
    let psd = finite
        && (r - r.transpose()).amax() <= T::lit(1e-12) * r.amax().max(T::one())
        && nalgebra::SymmetricEigen::new(*r)
            .eigenvalues
            .iter()
            .all(|&v| v >= T::zero());
    if !psd {
        return Err(config(
            "measurement covariance must be symmetric positive semi-definite",
        ));
    }
    let mut h: Matrix3x6<T> = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let innovation_cov: Matrix3<T> = h * s.p * h.transpose() + r;
    let inv = innovation_cov
        .try_inverse()
        .ok_or_else(|| domain("innovation covariance is singular"))?;
    let k = s.p * h.transpose() * inv;
    let x = s.x + k * (z - h * s.x);
    // Joseph form: same as (I - KH) P for the optimal gain, but stays PSD.
    let ikh = Matrix6::identity() - k * h;
    let p = ikh * s.p * ikh.transpose() + k * r * k.transpose();
    Ok(EkfState {
        x,
        p: symmetrize(&p),
        t: s.t,
    })
}

/// Update from a sampled estimate, honouring the configured noise source.
pub fn ekf_update_estimate(
    s: &EkfState<f64>,
    est: &crate::rfsense::CatEstimate,
    cfg: &EkfConfig<f64>,
) -> Result<EkfState<f64>> {
    let sigma = match cfg.measurement {
        MeasurementNoise::FromEstimate => est.sigma,
        MeasurementNoise::Constant(sigma) => sigma,
    };
    ekf_update(s, &est.z, &Matrix3::from_diagonal(&sigma.component_mul(&sigma)))
}

/// Filtered position expressed in the Hill frame of `origin`.
pub fn ekf_to_hill<T: Real>(s: &EkfState<T>, origin: &OrbitalElements<T>) -> Vector3<T> {
    ecef_to_hill(&s.position(), origin)
}
