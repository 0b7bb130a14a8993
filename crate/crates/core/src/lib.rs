//! Simulation and guidance toolkit for RF-informed satellite evasion.
//!
//! A controlled "mouse" spacecraft evades an uncooperative "cat" whose position
//! is only known through TDOA localization by a LEO sensor constellation. The
//! crate covers:
//!
//! * [`frames`]: ECEF / orbital / Hill frame transforms.
//! * [`dynamics`]: circular Kepler propagation and discrete Clohessy-Wiltshire motion.
//! * [`rfsense`]: Walker constellations, beam visibility, TDOA, CRLB and noisy estimates.
//! * [`estimation`]: two-body EKF that smooths cat estimates.
//! * [`guidance`]: MPC thrust layer, delta-v optimization and greedy recursive search.
//! * [`policy`]: noncentral chi-squared scenario gating and neural policy inference.
//! * [`env`]: episode orchestration, reward and metrics.
//! * [`control`]: controllers that drive an [`env::Environment`].
//! * [`ephemeris`]: TLE ingestion and relative Hill-track extraction.
//!
//! The numerical core (`frames`, `dynamics`, CRLB geometry, EKF, MPC and DVO) is
//! generic over the scalar type through [`Real`]; the aliases re-exported at the
//! crate root fix it to `f64`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod ephemeris;
pub mod error;
pub mod estimation;
pub mod frames;
pub mod guidance;
pub mod policy;
pub mod rfsense;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type OrbitalElements = frames::OrbitalElements<f64>;
pub type HillState = dynamics::HillState<f64>;
pub type ThrustCommand = dynamics::ThrustCommand<f64>;
pub type CraftParams = dynamics::CraftParams<f64>;
pub type DiscreteCw = dynamics::DiscreteCw<f64>;
pub type BeamSpec = rfsense::BeamSpec<f64>;
pub type Crlb = rfsense::Crlb<f64>;
pub type EkfState = estimation::EkfState<f64>;
pub type MpcConfig = guidance::mpc::MpcConfig<f64>;
pub type MpcSolver = guidance::mpc::MpcSolver<f64>;
pub type GoalCommand = guidance::GoalCommand<f64>;

/// ECEF position or velocity (km, km/s).
pub type EcefVector = nalgebra::Vector3<f64>;
/// Hill-frame position or velocity (km, km/s).
pub type HillVector = nalgebra::Vector3<f64>;
