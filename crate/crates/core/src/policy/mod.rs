//! Constrained action selection: a scenario gate built on noncentral
//! chi-squared probabilities wrapped around a neural policy.

pub mod chi2;
pub mod gate;
pub mod network;

use nalgebra::Vector3;
use rand::Rng;

pub use chi2::chi2_noncentral_cdf;
pub use gate::{scenario_probs, Scenario, ScenarioProbabilities};
pub use network::{PolicyNetwork, PolicyWeights};

use crate::dynamics::HillState;
use crate::error::{Error, Result};

/// Policy input: mouse state, current absolute goal and the cat estimate
/// history in the Hill frame, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub mouse: HillState<f64>,
    pub goal: Vector3<f64>,
    pub history: Vec<Vector3<f64>>,
    /// Parallel to `history`: true where the entry repeats an older fix.
    pub stale: Vec<bool>,
}

impl Observation {
    /// Flat layout `[pos, vel, goal, h_0, ..., h_{N-1}]`, length `9 + 3N`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(9 + 3 * self.history.len());
        out.extend(self.mouse.pos.iter());
        out.extend(self.mouse.vel.iter());
        out.extend(self.goal.iter());
        for h in &self.history {
            out.extend(h.iter());
        }
        out
    }
}

/// Runs the network on an observation.
pub fn policy_forward<R: Rng + ?Sized>(
    obs: &Observation,
    net: &PolicyNetwork,
    rng: &mut R,
    deterministic: bool,
) -> Result<Vector3<f64>> {
    if obs.history.len() != net.history_n() {
        return Err(Error::Format(format!(
            "observation history depth {} does not match network depth {}",
            obs.history.len(),
            net.history_n()
        )));
    }
    net.forward(&obs.to_vec(), rng, deterministic)
}

/// Samples a scenario and maps it to a position change: the network action
/// when near, zero when mid, and a return to origin when far.
pub fn constrained_select<R: Rng + ?Sized>(
    obs: &Observation,
    probs: &ScenarioProbabilities,
    net: &PolicyNetwork,
    rng: &mut R,
    deterministic: bool,
) -> Result<(Vector3<f64>, Scenario)> {
    let scenario = probs.sample(rng);
    let action = match scenario {
        Scenario::Near => policy_forward(obs, net, rng, deterministic)?,
        Scenario::Mid => Vector3::zeros(),
        Scenario::Far => -obs.mouse.pos,
    };
    Ok((action, scenario))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs() -> Observation {
        Observation {
            mouse: HillState::new(Vector3::new(5.0, -3.0, 1.0), Vector3::new(1e-4, 0.0, 0.0)),
            goal: Vector3::new(5.0, -3.0, 1.0),
            history: vec![Vector3::new(20.0, 0.0, 0.0); 2],
            stale: vec![false; 2],
        }
    }

    #[test]
    fn layout() {
        let v = obs().to_vec();
        assert_eq!(v.len(), 9 + 3 * 2);
        assert_eq!(&v[0..3], &[5.0, -3.0, 1.0]);
        assert_eq!(v[9], 20.0);
    }

    #[test]
    fn gate_branches() {
        let mut w = PolicyWeights::zeros(2, &[4], 5.0);
        w.biases[1] = vec![1.0, -1.0, 0.5, -3.0, -3.0, -3.0];
        let net = PolicyNetwork::new(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = obs();
        let (a, s) = constrained_select(
            &o,
            &ScenarioProbabilities::new(1.0, 0.0, 0.0).unwrap(),
            &net,
            &mut rng,
            true,
        )
        .unwrap();
        assert_eq!(s, Scenario::Near);
        assert_eq!(a, net.forward(&o.to_vec(), &mut rng, true).unwrap());
        let (a, s) = constrained_select(
            &o,
            &ScenarioProbabilities::new(0.0, 1.0, 0.0).unwrap(),
            &net,
            &mut rng,
            true,
        )
        .unwrap();
        assert_eq!((a, s), (Vector3::zeros(), Scenario::Mid));
        let (a, _) = constrained_select(
            &o,
            &ScenarioProbabilities::new(0.0, 0.0, 1.0).unwrap(),
            &net,
            &mut rng,
            true,
        )
        .unwrap();
        assert_eq!(a, Vector3::new(-5.0, 3.0, -1.0));
    }

    #[test]
    fn mismatched_history_rejected() {
        let net = PolicyNetwork::new(&PolicyWeights::zeros(3, &[4], 5.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(policy_forward(&obs(), &net, &mut rng, true).is_err());
    }
}
