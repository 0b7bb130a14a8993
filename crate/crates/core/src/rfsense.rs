//! Walker constellations, beam visibility, TDOA measurements and the CRLB
//! used to synthesize noisy cat position estimates.
//!
//! All geometry is in ECEF (km). Timing quantities are seconds.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::{EARTH_RADIUS, SPEED_OF_LIGHT};
use crate::dynamics::propagate_circular;
use crate::error::{config, domain, Error, Result};
use crate::frames::OrbitalElements;
use crate::scalar::Real;

/// Default TDOA timing noise (s).
pub const DEFAULT_SIGMA_D: f64 = 4e-8;
/// Default beam half-angle (deg).
pub const DEFAULT_BEAM_HALF_ANGLE_DEG: f64 = 8.85;
/// Default sensor altitude (km).
pub const DEFAULT_ALTITUDE: f64 = 550.0;

/// Published mean per-axis localization sigmas (km) by constellation size,
/// used to seed filter covariances.
pub const REFERENCE_SIGMAS: [(usize, [f64; 3]); 5] = [
    (30, [5542.0, 5173.0, 2045.0]),
    (60, [4.703, 2.446, 37.90]),
    (100, [0.239, 0.003, 0.147]),
    (150, [0.193, 0.003, 0.117]),
    (200, [0.165, 0.004, 0.099]),
];

/// Reference sigmas for the listed size closest to `num_sats`.
pub fn reference_sigma(num_sats: usize) -> Vector3<f64> {
    let (_, s) = REFERENCE_SIGMAS
        .iter()
        .min_by_key(|(n, _)| n.abs_diff(num_sats))
        .expect("table is non-empty");
    Vector3::new(s[0], s[1], s[2])
}

/// Polar Walker constellation layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationConfig {
    pub num_sats: usize,
    pub num_planes: usize,
    /// Altitude above the equatorial radius (km).
    #[serde(default = "default_altitude")]
    pub altitude: f64,
    /// In-slot phase shift between adjacent planes (rad).
    #[serde(default)]
    pub plane_phase: f64,
}

fn default_altitude() -> f64 {
    DEFAULT_ALTITUDE
}

impl ConstellationConfig {
    /// `num_sats` satellites in `num_sats / 10` planes (at least one) at the
    /// default altitude.
    pub fn with_size(num_sats: usize) -> Self {
        Self {
            num_sats,
            num_planes: (num_sats / 10).max(1),
            altitude: DEFAULT_ALTITUDE,
            plane_phase: 0.0,
        }
    }
}

/// Generates the constellation: planes evenly spaced in RAAN over `[0, pi)`,
/// slots evenly spaced in mean anomaly, all polar and circular.
pub fn build_walker<T: Real>(cfg: &ConstellationConfig) -> Result<Vec<OrbitalElements<T>>> {
    if cfg.num_planes == 0 || cfg.num_sats == 0 {
        return Err(config("constellation needs at least one plane and one satellite"));
    }
    if !cfg.num_sats.is_multiple_of(cfg.num_planes) {
        return Err(config(format!(
            "{} satellites cannot be split evenly into {} planes",
            cfg.num_sats, cfg.num_planes
        )));
    }
    if !(cfg.altitude > 0.0) {
        return Err(config("constellation altitude must be positive"));
    }
    let per_plane = cfg.num_sats / cfg.num_planes;
    let a = T::lit(EARTH_RADIUS + cfg.altitude);
    let d_raan = T::pi() / T::lit(cfg.num_planes as f64);
    let d_m = T::two_pi() / T::lit(per_plane as f64);
    let mut sats = Vec::with_capacity(cfg.num_sats);
    for p in 0..cfg.num_planes {
        let raan = d_raan * T::lit(p as f64);
        for s in 0..per_plane {
            let m = d_m * T::lit(s as f64) + T::lit(cfg.plane_phase * p as f64);
            sats.push(OrbitalElements::new(T::frac_pi_2(), T::zero(), raan, a, m)?);
        }
    }
    Ok(sats)
}

/// ECEF positions of every satellite `t` seconds after the constellation epoch.
pub fn constellation_positions<T: Real>(sats: &[OrbitalElements<T>], t: T) -> Vec<Vector3<T>> {
    sats.iter().map(|e| propagate_circular(e, t).0).collect()
}

/// Conical beam with apex at the emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec<T: Real> {
    pub center_dir: Vector3<T>,
    pub half_angle: T,
}

impl<T: Real> BeamSpec<T> {
    pub fn new(center_dir: Vector3<T>, half_angle: T) -> Result<Self> {
        let norm = center_dir.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(domain("beam direction must be a nonzero finite vector"));
        }
        if !(half_angle > T::zero() && half_angle < T::frac_pi_2()) {
            return Err(domain("beam half-angle must lie in (0, pi/2)"));
        }
        Ok(Self {
            center_dir: center_dir / norm,
            half_angle,
        })
    }

    /// Beam from `emitter` toward the Earth center.
    pub fn nadir(emitter: &Vector3<T>, half_angle: T) -> Result<Self> {
        Self::new(-emitter, half_angle)
    }
}

/// Off-axis angle of `sensor` seen from the apex `emitter` and whether it
/// falls inside the cone. Sensors behind the apex are never in the beam.
pub fn in_beam<T: Real>(emitter: &Vector3<T>, sensor: &Vector3<T>, beam: &BeamSpec<T>) -> Result<(bool, T)> {
    let d = sensor - emitter;
    let r = d.norm();
    if !(r > T::zero()) {
        return Err(domain("sensor coincides with the emitter"));
    }
    let sin_phi = (d.cross(&beam.center_dir).norm() / r).min(T::one());
    let phi = sin_phi.asin();
    let forward = d.dot(&beam.center_dir) > T::zero();
    Ok((forward && phi <= beam.half_angle, phi))
}

/// True when the segment `a`-`b` clears the Earth sphere.
pub fn line_of_sight<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> bool {
    let d = b - a;
    let dd = d.dot(&d);
    if dd == T::zero() {
        return a.norm() > T::lit(EARTH_RADIUS);
    }
    let t = (-a.dot(&d) / dd).clamp(T::zero(), T::one());
    (a + d * t).norm() > T::lit(EARTH_RADIUS)
}

/// Indices of sensors inside the beam with a clear line of sight, ascending.
pub fn visible_sensors<T: Real>(emitter: &Vector3<T>, sensors: &[Vector3<T>], beam: &BeamSpec<T>) -> Vec<usize> {
    sensors
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(in_beam(emitter, s, beam), Ok((true, _))) && line_of_sight(emitter, s))
        .map(|(i, _)| i)
        .collect()
}

/// Time differences of arrival against the first sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaSample {
    /// One entry per sensor after the reference (s).
    pub tau: Vec<f64>,
    pub reference: usize,
    pub sigma_d: f64,
}

/// `tau_i = (|x_i - x_a| - |x_1 - x_a|) / c + N(0, sigma_d^2)` for `i >= 2`.
pub fn tdoa_measure<R: Rng + ?Sized>(
    emitter: &Vector3<f64>,
    sensors: &[Vector3<f64>],
    sigma_d: f64,
    rng: &mut R,
) -> Result<TdoaSample> {
    if sensors.len() < 2 {
        return Err(Error::InsufficientGeometry {
            needed: 2,
            got: sensors.len(),
        });
    }
    if !(sigma_d >= 0.0) {
        return Err(domain("timing noise must be non-negative"));
    }
    let r_ref = (sensors[0] - emitter).norm();
    let tau = sensors[1..]
        .iter()
        .map(|s| {
            let noise: f64 = rng.sample(StandardNormal);
            ((s - emitter).norm() - r_ref) / SPEED_OF_LIGHT + sigma_d * noise
        })
        .collect();
    Ok(TdoaSample {
        tau,
        reference: 0,
        sigma_d,
    })
}

/// Localization bound for one geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crlb<T: Real> {
    /// Position covariance (km^2), ECEF axes.
    pub cov: Matrix3<T>,
    /// Set when the geometry could not be inverted; `cov` then holds the
    /// Earth-radius sentinel.
    pub singular: bool,
    pub num_sensors: usize,
}

impl<T: Real> Crlb<T> {
    fn sentinel(num_sensors: usize) -> Self {
        let r2 = T::lit(EARTH_RADIUS * EARTH_RADIUS);
        Self {
            cov: Matrix3::from_diagonal_element(r2),
            singular: true,
            num_sensors,
        }
    }

    /// Per-axis standard deviations `sqrt(diag(cov))`.
    pub fn sigma(&self) -> Vector3<T> {
        self.cov.diagonal().map(|v| v.max(T::zero()).sqrt())
    }
}

/// Fisher information of the TDOA measurements about the emitter position.
///
/// With `m` differences against a shared reference the noise covariance is
/// `k (I + 1 1^T)` with `k = c^2 sigma_d^2 / 2`, whose inverse is
/// `(I - 1 1^T / (m + 1)) / k`.
pub fn tdoa_information<T: Real>(emitter: &Vector3<T>, sensors: &[Vector3<T>], sigma_d: T) -> Matrix3<T> {
    let units: Vec<Vector3<T>> = sensors.iter().map(|s| (s - emitter).normalize()).collect();
    let mut jtj = Matrix3::zeros();
    let mut jt1 = Vector3::zeros();
    for u in &units[1..] {
        let row = u - units[0];
        jtj += row * row.transpose();
        jt1 += row;
    }
    let m = T::lit((sensors.len() - 1) as f64);
    let c = T::lit(SPEED_OF_LIGHT);
    let k = c * c * sigma_d * sigma_d / T::lit(2.0);
    (jtj - jt1 * jt1.transpose() / (m + T::one())) / k
}

/// Relative eigenvalue floor below which the information matrix is treated
/// as singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// CRLB `(J^T Q_f^-1 J)^-1`. Fewer than four sensors or a degenerate geometry
/// yields the flagged sentinel instead of an error.
pub fn crlb<T: Real>(emitter: &Vector3<T>, sensors: &[Vector3<T>], sigma_d: T) -> Crlb<T> {
    if sensors.len() < 4 {
        return Crlb::sentinel(sensors.len());
    }
    let info = tdoa_information(emitter, sensors, sigma_d);
    let eig = SymmetricEigen::new(info);
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((T::max_value().unwrap(), T::zero()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > T::zero()) || lo <= hi * T::lit(SINGULAR_RATIO) {
        return Crlb::sentinel(sensors.len());
    }
    let inv_vals = eig.eigenvalues.map(|v| T::one() / v);
    let cov = eig.eigenvectors * Matrix3::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    let cov = (cov + cov.transpose()) / T::lit(2.0);
    Crlb {
        cov,
        singular: false,
        num_sensors: sensors.len(),
    }
}

/// Dense reference form of the information matrix, kept for cross-checking.
pub fn tdoa_information_dense(emitter: &Vector3<f64>, sensors: &[Vector3<f64>], sigma_d: f64) -> Matrix3<f64> {
    let m = sensors.len() - 1;
    let units: Vec<Vector3<f64>> = sensors.iter().map(|s| (s - emitter).normalize()).collect();
    let j = DMatrix::from_fn(m, 3, |r, c| units[r + 1][c] - units[0][c]);
    let k = SPEED_OF_LIGHT * SPEED_OF_LIGHT * sigma_d * sigma_d / 2.0;
    let q = (DMatrix::identity(m, m) + DMatrix::from_element(m, m, 1.0)) * k;
    let qinv_j = q.lu().solve(&j).expect("noise covariance is positive definite");
    let info = j.transpose() * qinv_j;
    Matrix3::from_fn(|r, c| info[(r, c)])
}

/// Noisy cat position sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatEstimate {
    /// Estimated ECEF position (km).
    pub z: Vector3<f64>,
    /// Per-axis standard deviation used to draw `z` (km).
    pub sigma: Vector3<f64>,
    pub t: f64,
    pub n_sensors_visible: usize,
    /// Repeated from an earlier step because no fix was available.
    pub stale: bool,
}

impl CatEstimate {
    /// The same estimate carried forward to time `t`.
    pub fn held(&self, t: f64, n_sensors_visible: usize) -> Self {
        Self {
            t,
            n_sensors_visible,
            stale: true,
            ..*self
        }
    }
}

/// Draws `z = x_a + alpha * N(0, diag(CRLB))` independently per axis.
pub fn sample_estimate<R: Rng + ?Sized>(
    truth: &Vector3<f64>,
    bound: &Crlb<f64>,
    alpha: f64,
    t: f64,
    rng: &mut R,
) -> Result<CatEstimate> {
    if !(alpha >= 0.0) {
        return Err(domain(format!("noise scale must be non-negative, got {alpha}")));
    }
    let sigma = bound.sigma() * alpha;
    let mut z = *truth;
    if alpha > 0.0 {
        for i in 0..3 {
            let e: f64 = rng.sample(StandardNormal);
            z[i] += sigma[i] * e;
        }
    }
    Ok(CatEstimate {
        z,
        sigma,
        t,
        n_sensors_visible: bound.num_sensors,
        stale: false,
    })
}
