//! Lower-level motion solvers: MPC thrust tracking, delta-v optimization and
//! greedy recursive goal search.

pub mod dvo;
pub mod grs;
pub mod mpc;

use nalgebra::Vector3;

use crate::scalar::Real;

/// Which layer produced a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoalSource {
    Policy,
    Grs,
    Dvo,
    ReturnToOrigin,
    Hold,
}

impl GoalSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            GoalSource::Policy => "policy",
            GoalSource::Grs => "grs",
            GoalSource::Dvo => "dvo",
            GoalSource::ReturnToOrigin => "origin",
            GoalSource::Hold => "hold",
        }
    }
}

/// Absolute Hill-frame position the MPC should reach and hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalCommand<T: Real> {
    pub target: Vector3<T>,
    pub source: GoalSource,
}

impl<T: Real> GoalCommand<T> {
    pub fn new(target: Vector3<T>, source: GoalSource) -> Self {
        Self { target, source }
    }

    pub fn origin() -> Self {
        Self::new(Vector3::zeros(), GoalSource::ReturnToOrigin)
    }
}
