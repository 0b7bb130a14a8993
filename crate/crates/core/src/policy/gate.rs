//! Scenario probabilities that gate the neural policy.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chi2::chi2_noncentral_cdf;
use crate::error::{domain, Result};

/// Probability that the cat is near, at mid range, or far.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioProbabilities {
    pub p_near: f64,
    pub p_mid: f64,
    pub p_far: f64,
}

impl ScenarioProbabilities {
    pub fn new(p_near: f64, p_mid: f64, p_far: f64) -> Result<Self> {
        let probs = Self { p_near, p_mid, p_far };
        if [p_near, p_mid, p_far].iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(domain("scenario probabilities must lie in [0, 1]"));
        }
        if (probs.total() - 1.0).abs() > 1e-9 {
            return Err(domain("scenario probabilities must sum to one"));
        }
        Ok(probs)
    }

    /// Builds the triple from `P(d < d_near)` and `P(d < d_far)`.
    pub fn from_cdfs(below_near: f64, below_far: f64) -> Self {
        let p_near = below_near;
        let p_mid = (below_far - below_near).max(0.0);
        let p_far = 1.0 - (p_near + p_mid);
        Self { p_near, p_mid, p_far }
    }

    /// `(p_near + p_mid) + p_far`; exactly 1 for triples from [`Self::from_cdfs`].
    pub fn total(&self) -> f64 {
        (self.p_near + self.p_mid) + self.p_far
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Scenario {
        let u: f64 = rng.random();
        if u < self.p_near {
            Scenario::Near
        } else if u < self.p_near + self.p_mid {
            Scenario::Mid
        } else {
            Scenario::Far
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Near,
    Mid,
    Far,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Near => "near",
            Scenario::Mid => "mid",
            Scenario::Far => "far",
        }
    }
}

/// Normalized weights `decay^(N-1-j)` over a history ordered oldest first, so
/// the newest entry weighs most.
pub fn decay_weights(n: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|j| decay.powi((n - 1 - j) as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Scalar spread used by the CDFs: the mean over axes of the per-axis
/// standard deviation of the history offsets, floored at `floor`.
pub fn history_sigma(offsets: &[Vector3<f64>], floor: f64) -> f64 {
    let n = offsets.len() as f64;
    if offsets.len() < 2 {
        return floor;
    }
    let mean = offsets.iter().fold(Vector3::zeros(), |a, v| a + v) / n;
    let var = offsets
        .iter()
        .fold(Vector3::zeros(), |a, v| a + (v - mean).component_mul(&(v - mean)))
        / (n - 1.0);
    (var.map(f64::sqrt).sum() / 3.0).max(floor)
}

/// Gate thresholds and history weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub d_near: f64,
    pub d_far: f64,
    pub sigma_floor: f64,
    pub decay: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            d_near: 20.0,
            d_far: 35.0,
            sigma_floor: 0.01,
            decay: 0.7,
        }
    }
}

/// Probabilities for one estimate at offset `x` from the mouse.
pub fn single_estimate_probs(x: &Vector3<f64>, sigma: f64, d_near: f64, d_far: f64) -> Result<ScenarioProbabilities> {
    Ok(ScenarioProbabilities::from_cdfs(
        chi2_noncentral_cdf(d_near, x, sigma)?,
        chi2_noncentral_cdf(d_far, x, sigma)?,
    ))
}

/// Weighted scenario probabilities over the estimate history (oldest first).
pub fn scenario_probs(
    history: &[Vector3<f64>],
    mouse: &Vector3<f64>,
    d_near: f64,
    d_far: f64,
    weights: &[f64],
    sigma_floor: f64,
) -> Result<ScenarioProbabilities> {
    if history.is_empty() {
        return Err(domain("scenario gate needs at least one estimate"));
    }
    if weights.len() != history.len() {
        return Err(domain("one weight per history entry is required"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(domain("history weights must be non-negative and sum to one"));
    }
    if !(d_near < d_far) {
        return Err(domain("near threshold must be below the far threshold"));
    }
    let offsets: Vec<Vector3<f64>> = history.iter().map(|h| h - mouse).collect();
    let sigma = history_sigma(&offsets, sigma_floor);
    let mut acc = ScenarioProbabilities::default();
    for (x, w) in offsets.iter().zip(weights) {
        let p = single_estimate_probs(x, sigma, d_near, d_far)?;
        acc.p_near += w * p.p_near;
        acc.p_mid += w * p.p_mid;
        acc.p_far += w * p.p_far;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn near_and_far_extremes() {
        let w = decay_weights(5, 0.7);
        let mouse = Vector3::zeros();
        let close = vec![Vector3::new(0.001, 0.0, 0.0); 5];
        let p = scenario_probs(&close, &mouse, 20.0, 35.0, &w, 0.01).unwrap();
        assert!(p.p_near > 1.0 - 1e-12);
        let far = vec![Vector3::new(500.0, 0.0, 0.0); 5];
        let p = scenario_probs(&far, &mouse, 20.0, 35.0, &w, 0.01).unwrap();
        assert!(p.p_far > 1.0 - 1e-12);
        assert!(scenario_probs(&[], &mouse, 20.0, 35.0, &[], 0.01).is_err());
    }

    #[test]
    fn one_hot_weights_reduce_to_newest() {
        let hist = [
            Vector3::new(30.0, 1.0, 0.0),
            Vector3::new(25.0, -2.0, 1.0),
            Vector3::new(21.0, 0.0, 0.5),
        ];
        let mouse = Vector3::new(1.0, 0.0, 0.0);
        let p = scenario_probs(&hist, &mouse, 20.0, 35.0, &[0.0, 0.0, 1.0], 0.01).unwrap();
        let offsets: Vec<_> = hist.iter().map(|h| h - mouse).collect();
        let sigma = history_sigma(&offsets, 0.01);
        let single = single_estimate_probs(&offsets[2], sigma, 20.0, 35.0).unwrap();
        assert_relative_eq!(p.p_near, single.p_near, epsilon = 1e-15);
        assert_relative_eq!(p.p_mid, single.p_mid, epsilon = 1e-15);
        assert_relative_eq!(p.p_far, single.p_far, epsilon = 1e-15);
    }

    #[test]
    fn decay_weights_shape() {
        let w = decay_weights(10, 0.7);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert_relative_eq!(w[8] / w[9], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn sigma_is_mean_axis_std() {
        let offs = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        // Per-axis sample std: (sqrt(2), 0, 0); mean over axes sqrt(2)/3.
        assert_relative_eq!(history_sigma(&offs, 0.01), 2f64.sqrt() / 3.0, epsilon = 1e-15);
        assert_eq!(history_sigma(&offs[..1], 0.01), 0.01);
    }

    #[test]
    fn sampling_follows_degenerate_probabilities() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(
                ScenarioProbabilities::new(1.0, 0.0, 0.0).unwrap().sample(&mut rng),
                Scenario::Near
            );
            assert_eq!(
                ScenarioProbabilities::new(0.0, 1.0, 0.0).unwrap().sample(&mut rng),
                Scenario::Mid
            );
            assert_eq!(
                ScenarioProbabilities::new(0.0, 0.0, 1.0).unwrap().sample(&mut rng),
                Scenario::Far
            );
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn per_estimate_probabilities_sum_to_one(x in -80.0..80.0f64, y in -80.0..80.0f64, sigma in 0.01..30.0f64) {
                let p = single_estimate_probs(&Vector3::new(x, y, 0.0), sigma, 20.0, 35.0).unwrap();
                for v in [p.p_near, p.p_mid, p.p_far] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert_eq!(p.total(), 1.0);
            }

            #[test]
            fn weighted_probabilities_sum_to_one(seed in proptest::collection::vec((-60.0..60.0f64, -60.0..60.0f64, -60.0..60.0f64), 1..12)) {
                let hist: Vec<_> = seed.iter().map(|&(a, b, c)| Vector3::new(a, b, c)).collect();
                let w = decay_weights(hist.len(), 0.7);
                let p = scenario_probs(&hist, &Vector3::zeros(), 20.0, 35.0, &w, 0.01).unwrap();
                prop_assert!((p.total() - 1.0).abs() < 1e-12);
            }
        }
    }
}
