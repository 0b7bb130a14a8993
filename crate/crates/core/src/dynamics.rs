//! Circular two-body propagation and Clohessy-Wiltshire relative motion.
//!
//! Relative states live in the Hill frame of [`crate::frames`]: `x` radial,
//! `y` along-track, `z` orbit normal. Positions are km, velocities km/s,
//! thrust N and mass kg.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::constants::{METERS_PER_KM, MU_EARTH};
use crate::error::{domain, Result};
use crate::frames::{rotation_ecef_to_orbital, wrap_angle, OrbitalElements};
use crate::scalar::Real;

/// Default radius (km) beyond which the linearized CW model is flagged.
pub const CW_VALIDITY_RADIUS: f64 = 50.0;

/// Mean motion `sqrt(mu / a^3)` (rad/s).
pub fn mean_motion<T: Real>(a: T) -> Result<T> {
    if !(a > T::zero()) {
        return Err(domain(format!("semi-major axis must be positive, got {}", a.as_f64())));
    }
    Ok((T::lit(MU_EARTH) / a.powi(3)).sqrt())
}

/// ECEF position and velocity of a circular orbit `t` seconds after the
/// element epoch.
pub fn propagate_circular<T: Real>(elems: &OrbitalElements<T>, t: T) -> (Vector3<T>, Vector3<T>) {
    let a = elems.semi_major_axis;
    let m = wrap_angle(elems.mean_anomaly + elems.mean_motion() * t);
    let (s, c) = m.sin_cos();
    let speed = (T::lit(MU_EARTH) / a).sqrt();
    let rot_t = rotation_ecef_to_orbital(elems).transpose();
    let pos = rot_t * Vector3::new(a * c, a * s, T::zero());
    let vel = rot_t * Vector3::new(-speed * s, speed * c, T::zero());
    (pos, vel)
}

/// Relative position and velocity in the Hill frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillState<T: Real> {
    pub pos: Vector3<T>,
    pub vel: Vector3<T>,
}

impl<T: Real> HillState<T> {
    pub fn new(pos: Vector3<T>, vel: Vector3<T>) -> Self {
        Self { pos, vel }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn at_rest(pos: Vector3<T>) -> Self {
        Self::new(pos, Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<T> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.pos);
        v.fixed_rows_mut::<3>(3).copy_from(&self.vel);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())
    }

    /// False once the state leaves the region where CW linearization is trusted.
    pub fn within_validity(&self, radius: T) -> bool {
        self.is_finite() && self.pos.norm() <= radius
    }
}

/// Per-axis thrust (N) held for `dt` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustCommand<T: Real> {
    pub thrust: Vector3<T>,
    pub dt: T,
}

impl<T: Real> ThrustCommand<T> {
    pub fn new(thrust: Vector3<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(domain(format!("timestep must be positive, got {}", dt.as_f64())));
        }
        if !thrust.iter().all(|v| v.is_finite()) {
            return Err(domain("thrust must be finite"));
        }
        Ok(Self { thrust, dt })
    }

    pub fn coast(dt: T) -> Result<Self> {
        Self::new(Vector3::zeros(), dt)
    }

    /// Copy with every axis clamped to `[-limit, limit]`.
    pub fn clamped(&self, limit: T) -> Self {
        Self {
            thrust: self.thrust.map(|v| v.clamp(-limit, limit)),
            dt: self.dt,
        }
    }

    /// Impulse spent by the command: `sum |T_axis| * dt` (N s).
    pub fn impulse(&self) -> T {
        self.thrust.iter().fold(T::zero(), |acc, v| acc + v.abs()) * self.dt
    }
}

/// Spacecraft mass, per-axis thrust limit and accumulated impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CraftParams<T: Real> {
    pub mass: T,
    pub thrust_limit: T,
    pub fuel_used: T,
}

impl<T: Real> CraftParams<T> {
    pub fn new(mass: T, thrust_limit: T) -> Result<Self> {
        if !(mass > T::zero()) {
            return Err(domain(format!("mass must be positive, got {}", mass.as_f64())));
        }
        if !(thrust_limit > T::zero()) {
            return Err(domain("thrust limit must be positive"));
        }
        Ok(Self {
            mass,
            thrust_limit,
            fuel_used: T::zero(),
        })
    }

    /// 2500 kg with a 1 N per-axis limit.
    pub fn reference() -> Self {
        Self {
            mass: T::lit(2500.0),
            thrust_limit: T::one(),
            fuel_used: T::zero(),
        }
    }
}

/// Time derivative of a Hill state under CW dynamics with constant thrust.
pub fn cw_derivative<T: Real>(s: &HillState<T>, thrust: &Vector3<T>, mass: T, n: T) -> Vector6<T> {
    let acc = thrust / (mass * T::lit(METERS_PER_KM));
    let (x, z) = (s.pos.x, s.pos.z);
    let (vx, vy) = (s.vel.x, s.vel.y);
    let two = T::lit(2.0);
    let n2 = n * n;
    Vector6::new(
        s.vel.x,
        s.vel.y,
        s.vel.z,
        T::lit(3.0) * n2 * x + two * n * vy + acc.x,
        -two * n * vx + acc.y,
        -n2 * z + acc.z,
    )
}

/// Closed-form CW state transition matrix over `t` seconds.
pub fn cw_transition<T: Real>(n: T, t: T) -> Matrix6<T> {
    let (s, c) = (n * t).sin_cos();
    let nt = n * t;
    let (z, one, two, three, four, six) = (T::zero(), T::one(), T::lit(2.0), T::lit(3.0), T::lit(4.0), T::lit(6.0));
    let rr = Matrix3::new(four - three * c, z, z, six * (s - nt), one, z, z, z, c);
    let rv = velocity_response(n, t);
    let vr = Matrix3::new(three * n * s, z, z, -six * n * (one - c), z, z, z, z, -n * s);
    let vv = Matrix3::new(c, two * s, z, -two * s, four * c - three, z, z, z, c);
    block(&rr, &rv, &vr, &vv)
}

/// Position response to an initial velocity, the upper-right CW block.
pub fn velocity_response<T: Real>(n: T, t: T) -> Matrix3<T> {
    let (s, c) = (n * t).sin_cos();
    let (z, one, two, three, four) = (T::zero(), T::one(), T::lit(2.0), T::lit(3.0), T::lit(4.0));
    Matrix3::new(
        s / n,
        two * (one - c) / n,
        z,
        -two * (one - c) / n,
        (four * s - three * n * t) / n,
        z,
        z,
        z,
        s / n,
    )
}

fn block<T: Real>(a11: &Matrix3<T>, a12: &Matrix3<T>, a21: &Matrix3<T>, a22: &Matrix3<T>) -> Matrix6<T> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a11);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(a12);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(a21);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(a22);
    m
}

/// Response over `t` seconds to a unit acceleration (km/s^2) held constant.
fn hold_response<T: Real>(n: T, t: T) -> Matrix6x3<T> {
    let (s, c) = (n * t).sin_cos();
    let n2 = n * n;
    let (z, one, two, four, half3) = (T::zero(), T::one(), T::lit(2.0), T::lit(4.0), T::lit(1.5));
    let drift = two * (n * t - s) / n2;
    let pos = Matrix3::new(
        (one - c) / n2,
        drift,
        z,
        -drift,
        four * (one - c) / n2 - half3 * t * t,
        z,
        z,
        z,
        (one - c) / n2,
    );
    let vel = velocity_response(n, t);
    let mut out = Matrix6x3::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&pos);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&vel);
    out
}

/// Exact discrete CW model `x_{k+1} = A x_k + B [0; u_k]` with thrust held
/// over each step. Shared by the simulator and the MPC.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCw<T: Real> {
    n: T,
    dt: T,
    mass: T,
    a: Matrix6<T>,
    b_input: Matrix6x3<T>,
}

impl<T: Real> DiscreteCw<T> {
    pub fn new(n: T, dt: T, mass: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(domain(format!("timestep must be positive, got {}", dt.as_f64())));
        }
        if !(n > T::zero()) || !(mass > T::zero()) {
            return Err(domain("mean motion and mass must be positive"));
        }
        let a = cw_transition(n, dt);
        let b_input = hold_response(n, dt) / (mass * T::lit(METERS_PER_KM));
        Ok(Self {
            n,
            dt,
            mass,
            a,
            b_input,
        })
    }

    pub fn mean_motion(&self) -> T {
        self.n
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn a(&self) -> &Matrix6<T> {
        &self.a
    }

    /// 6x3 map from thrust (N) to the state increment.
    pub fn input(&self) -> &Matrix6x3<T> {
        &self.b_input
    }

    /// 6x6 form acting on the padded vector `[0; u]`.
    pub fn b(&self) -> Matrix6<T> {
        let mut b = Matrix6::zeros();
        b.fixed_view_mut::<6, 3>(0, 3).copy_from(&self.b_input);
        b
    }

    pub fn step(&self, s: &HillState<T>, thrust: &Vector3<T>) -> HillState<T> {
        HillState::from_vector(&(self.a * s.to_vector() + self.b_input * thrust))
    }
}

/// `(A, B)` with `B` acting on `[0; u]` (first three columns zero).
pub fn discrete_matrices<T: Real>(n: T, dt: T, mass: T) -> Result<(Matrix6<T>, Matrix6<T>)> {
    let model = DiscreteCw::new(n, dt, mass)?;
    Ok((model.a, model.b()))
}

/// Advances one step under held thrust and charges the impulse to `craft`.
pub fn cw_step<T: Real>(
    s: &HillState<T>,
    u: &ThrustCommand<T>,
    n: T,
    craft: &mut CraftParams<T>,
) -> Result<HillState<T>> {
    let model = DiscreteCw::new(n, u.dt, craft.mass)?;
    craft.fuel_used += u.impulse();
    Ok(model.step(s, &u.thrust))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    const N_GEO: f64 = 7.292_115_8e-5;

    fn rk4(s: &HillState<f64>, thrust: &Vector3<f64>, m: f64, n: f64, t: f64, steps: usize) -> HillState<f64> {
        let h = t / steps as f64;
        let mut x = s.to_vector();
        let f = |v: &Vector6<f64>| cw_derivative(&HillState::from_vector(v), thrust, m, n);
        for _ in 0..steps {
            let k1 = f(&x);
            let k2 = f(&(x + k1 * (h / 2.0)));
            let k3 = f(&(x + k2 * (h / 2.0)));
            let k4 = f(&(x + k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        HillState::from_vector(&x)
    }

    #[test]
    fn geo_mean_motion() {
        let n = mean_motion(42164.0).unwrap();
        assert_relative_eq!(n, (398600.4418f64 / 42164.0f64.powi(3)).sqrt(), max_relative = 1e-15);
        assert!((n - 7.292e-5).abs() < 1e-8);
        let ratio = mean_motion(4.0 * 7000.0).unwrap() / mean_motion(7000.0).unwrap();
        assert_relative_eq!(ratio, 0.125, max_relative = 1e-14);
        assert!(mean_motion(0.0).is_err() && mean_motion(-1.0).is_err());
    }

    #[test]
    fn circular_propagation() {
        let e = OrbitalElements::new(0.7, 0.3, 1.9, 7000.0, 0.0).unwrap();
        let (p0, _) = propagate_circular(&e, 0.0);
        let flat = OrbitalElements::equatorial(7000.0, 0.0).unwrap();
        assert_relative_eq!(
            propagate_circular(&flat, 0.0).0,
            Vector3::new(7000.0, 0.0, 0.0),
            epsilon = 1e-12
        );
        let period = 2.0 * PI / e.mean_motion();
        assert!((propagate_circular(&e, period).0 - p0).norm() < 1e-6);
        for t in [0.0, 17.0, 1234.5, 86400.0] {
            let (p, v) = propagate_circular(&e, t);
            assert_relative_eq!(p.norm(), 7000.0, max_relative = 1e-9);
            assert_relative_eq!(v.norm(), (MU_EARTH / 7000.0).sqrt(), max_relative = 1e-9);
            assert!(p.dot(&v).abs() < 1e-6);
        }
        // Prograde: angular momentum along the orbit normal.
        let (p, v) = propagate_circular(&flat, 100.0);
        assert!(p.cross(&v).z > 0.0);
    }

    #[test]
    fn derivative_hand_cases() {
        let n = N_GEO;
        let zero = cw_derivative(&HillState::zero(), &Vector3::zeros(), 2500.0, n);
        assert_eq!(zero, Vector6::zeros());
        let d = cw_derivative(&HillState::at_rest(Vector3::x()), &Vector3::zeros(), 2500.0, n);
        assert_relative_eq!(d[3], 3.0 * n * n);
        assert_eq!((d[4], d[5]), (0.0, 0.0));
        let d = cw_derivative(&HillState::at_rest(Vector3::z()), &Vector3::zeros(), 2500.0, n);
        assert_relative_eq!(d[5], -n * n);
        // 1 N on 2500 kg = 4e-4 m/s^2 = 4e-7 km/s^2.
        let d = cw_derivative(&HillState::zero(), &Vector3::new(1.0, 0.0, 0.0), 2500.0, n);
        assert_relative_eq!(d[3], 4e-7, max_relative = 1e-12);
    }

    #[test]
    fn matrices_match_matrix_exponential() {
        // Oracle: expm of the augmented continuous system [[F, G], [0, 0]] dt.
        let (n, dt, m) = (N_GEO, 120.0, 2500.0);
        let mut aug = nalgebra::SMatrix::<f64, 9, 9>::zeros();
        for i in 0..3 {
            aug[(i, i + 3)] = 1.0;
            aug[(i + 3, i + 6)] = 1.0 / (m * 1000.0);
        }
        aug[(3, 0)] = 3.0 * n * n;
        aug[(3, 4)] = 2.0 * n;
        aug[(4, 3)] = -2.0 * n;
        aug[(5, 2)] = -n * n;
        let e = (aug * dt).exp();
        let model = DiscreteCw::new(n, dt, m).unwrap();
        let a_ref = e.fixed_view::<6, 6>(0, 0).into_owned();
        let b_ref = e.fixed_view::<6, 3>(0, 6).into_owned();
        assert!((model.a() - a_ref).amax() < 1e-10);
        let rel = (model.input() - b_ref).amax() / b_ref.amax();
        assert!(rel < 1e-9, "relative B error {rel}");
        let (_, b6) = discrete_matrices(n, dt, m).unwrap();
        assert_eq!(b6.fixed_view::<6, 3>(0, 0).amax(), 0.0);
        assert_eq!(b6.fixed_view::<6, 3>(0, 3).into_owned(), *model.input());
    }

    #[test]
    fn full_period_transition() {
        let n = N_GEO;
        let t = 2.0 * PI / n;
        let a = cw_transition(n, t);
        // z-block returns to identity; along-track drift -6 n t x0 and -3 t vy0.
        assert!((a[(2, 2)] - 1.0).abs() < 1e-9 && (a[(5, 5)] - 1.0).abs() < 1e-9);
        assert_relative_eq!(a[(1, 0)], -12.0 * PI, epsilon = 1e-9);
        assert_relative_eq!(a[(1, 4)], -3.0 * t, max_relative = 1e-9);
        assert!(a[(0, 0)].abs() - 1.0 < 1e-9);
        let small = cw_transition(n, 1e-6);
        assert!((small - Matrix6::identity()).amax() < 1e-5);
    }

    #[test]
    fn decoupled_input_columns() {
        let model = DiscreteCw::new(N_GEO, 30.0, 2500.0).unwrap();
        let b = model.input();
        for r in [0, 1, 3, 4] {
            assert_eq!(b[(r, 2)], 0.0);
        }
        for r in [2, 5] {
            assert_eq!(b[(r, 0)], 0.0);
            assert_eq!(b[(r, 1)], 0.0);
        }
    }

    #[test]
    fn step_matches_rk4_with_thrust() {
        let model = DiscreteCw::new(N_GEO, 120.0, 2500.0).unwrap();
        let s = HillState::new(Vector3::new(3.0, -2.0, 1.0), Vector3::new(1e-4, -2e-4, 5e-5));
        let u = Vector3::new(0.7, -1.0, 0.3);
        let exact = model.step(&s, &u);
        let num = rk4(&s, &u, 2500.0, N_GEO, 120.0, 400);
        assert!((exact.pos - num.pos).norm() < 1e-10);
        assert!((exact.vel - num.vel).norm() < 1e-13);
    }

    #[test]
    fn thousand_steps_match_closed_form() {
        let model = DiscreteCw::new(N_GEO, 3.0, 2500.0).unwrap();
        let s0 = HillState::new(Vector3::new(1.0, 2.0, -0.5), Vector3::new(1e-4, 0.0, 2e-5));
        let mut s = s0;
        for _ in 0..1000 {
            s = model.step(&s, &Vector3::zeros());
        }
        let direct = HillState::from_vector(&(cw_transition(N_GEO, 3000.0) * s0.to_vector()));
        assert!((s.pos - direct.pos).norm() < 1e-9);
    }

    #[test]
    fn inverse_step_recovers_state() {
        let model = DiscreteCw::new(N_GEO, 3.0, 2500.0).unwrap();
        let s0 = HillState::new(Vector3::new(-4.0, 7.0, 2.0), Vector3::new(3e-4, 1e-4, -1e-4));
        let s1 = model.step(&s0, &Vector3::zeros());
        let inv = model.a().try_inverse().unwrap();
        let back = HillState::from_vector(&(inv * s1.to_vector()));
        assert!((back.pos - s0.pos).norm() < 1e-9);
        assert!((back.vel - s0.vel).norm() < 1e-12);
    }

    #[test]
    fn pure_z_oscillation_and_fuel() {
        let n = N_GEO;
        let mut craft = CraftParams::reference();
        let s0 = HillState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        let u = ThrustCommand::coast(500.0).unwrap();
        let s1 = cw_step(&s0, &u, n, &mut craft).unwrap();
        assert_relative_eq!(s1.pos.z, 2.0 * (n * 500.0).cos(), epsilon = 1e-9);
        assert_eq!(craft.fuel_used, 0.0);
        let burn = ThrustCommand::new(Vector3::new(0.5, -1.0, 0.25), 3.0).unwrap();
        let mut s = HillState::zero();
        for _ in 0..10 {
            s = cw_step(&s, &burn, n, &mut craft).unwrap();
        }
        assert_relative_eq!(craft.fuel_used, 10.0 * 1.75 * 3.0, max_relative = 1e-14);
        assert!(ThrustCommand::coast(0.0).is_err());
        assert_eq!(
            cw_step(&HillState::zero(), &u, n, &mut craft).unwrap(),
            HillState::zero()
        );
    }

    #[test]
    fn f32_instantiation() {
        let model = DiscreteCw::<f32>::new(7.2921e-5, 120.0, 2500.0).unwrap();
        let s = model.step(&HillState::at_rest(Vector3::new(0.0, 0.0, 1.0)), &Vector3::zeros());
        assert!((s.pos.z - (7.2921e-5f32 * 120.0).cos()).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn circular_invariants(i in 0.0..PI, w in 0.0..TAU, o in 0.0..TAU, a in 6700.0..45000.0, t in -1e5..1e5f64) {
                let e = OrbitalElements::new(i, w, o, a, 0.3).unwrap();
                let (p, v) = propagate_circular(&e, t);
                prop_assert!((p.norm() / a - 1.0).abs() < 1e-9);
                prop_assert!((v.norm() / (MU_EARTH / a).sqrt() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn composition_of_steps(dt in 1.0..600.0f64, x in -10.0..10.0f64, vy in -1e-3..1e-3f64) {
                let s = HillState::new(Vector3::new(x, 0.5, -0.2), Vector3::new(0.0, vy, 0.0));
                let one = DiscreteCw::new(N_GEO, 2.0 * dt, 2500.0).unwrap();
                let half = DiscreteCw::new(N_GEO, dt, 2500.0).unwrap();
                let a = one.step(&s, &Vector3::zeros());
                let b = half.step(&half.step(&s, &Vector3::zeros()), &Vector3::zeros());
                prop_assert!((a.pos - b.pos).norm() < 1e-9);
            }

            #[test]
            fn fuel_is_monotone(t in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..20)) {
                let mut craft = CraftParams::reference();
                let mut s = HillState::zero();
                let mut expected = 0.0;
                for (x, y, z) in t {
                    let before = craft.fuel_used;
                    let u = ThrustCommand::new(Vector3::new(x, y, z), 3.0).unwrap();
                    s = cw_step(&s, &u, N_GEO, &mut craft).unwrap();
                    expected += (x.abs() + y.abs() + z.abs()) * 3.0;
                    prop_assert!(craft.fuel_used >= before);
                }
                prop_assert!((craft.fuel_used - expected).abs() < 1e-12);
            }
        }
    }
}
