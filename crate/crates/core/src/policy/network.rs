//! Portable policy weights and the actor forward pass.
//!
//! The weight file is UTF-8 JSON:
//!
//! ```text
//! {
//!   "version": 1,
//!   "arch": [input, hidden..., 6],
//!   "weights": [[[w_00, w_01, ...], ...], ...],   // one out x in matrix per layer, row-major
//!   "biases": [[b_0, ...], ...],
//!   "action_scale": 5.0,                          // km
//!   "obs_norm": {"mean": [...], "std": [...]},    // length = input
//!   "history_n": 10
//! }
//! ```
//!
//! Hidden layers use ReLU. The six outputs are the per-axis mean and log
//! standard deviation of a Gaussian that is squashed by `tanh` and scaled by
//! `action_scale`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEIGHTS_VERSION: u32 = 1;
/// Mean and log-std for three axes.
pub const OUTPUT_DIM: usize = 6;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Observation layout length for history depth `n`.
pub fn observation_len(history_n: usize) -> usize {
    9 + 3 * history_n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// On-disk weight file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyWeights {
    pub version: u32,
    pub arch: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub action_scale: f64,
    pub obs_norm: ObsNorm,
    pub history_n: usize,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl PolicyWeights {
    /// All-zero network of the given hidden sizes with identity normalization.
    pub fn zeros(history_n: usize, hidden: &[usize], action_scale: f64) -> Self {
        let input = observation_len(history_n);
        let mut arch = vec![input];
        arch.extend_from_slice(hidden);
        arch.push(OUTPUT_DIM);
        let weights = arch.windows(2).map(|d| vec![vec![0.0; d[0]]; d[1]]).collect();
        let biases = arch[1..].iter().map(|&d| vec![0.0; d]).collect();
        Self {
            version: WEIGHTS_VERSION,
            arch,
            weights,
            biases,
            action_scale,
            obs_norm: ObsNorm {
                mean: vec![0.0; input],
                std: vec![1.0; input],
            },
            history_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != WEIGHTS_VERSION {
            return Err(format_err(format!("unsupported weight file version {}", self.version)));
        }
        if self.arch.len() < 2 {
            return Err(format_err("arch needs at least input and output dimensions"));
        }
        let input = observation_len(self.history_n);
        if self.arch[0] != input {
            return Err(format_err(format!(
                "input dimension {} does not match history_n {} (expected {input})",
                self.arch[0], self.history_n
            )));
        }
        if *self.arch.last().unwrap() != OUTPUT_DIM {
            return Err(format_err(format!("output dimension must be {OUTPUT_DIM}")));
        }
        let layers = self.arch.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(format_err(format!(
                "expected {layers} weight matrices and bias vectors"
            )));
        }
        for (l, dims) in self.arch.windows(2).enumerate() {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            if self.weights[l].len() != fan_out || self.weights[l].iter().any(|r| r.len() != fan_in) {
                return Err(format_err(format!("layer {l} weights must be {fan_out} x {fan_in}")));
            }
            if self.biases[l].len() != fan_out {
                return Err(format_err(format!("layer {l} bias must have {fan_out} entries")));
            }
        }
        if self.obs_norm.mean.len() != input || self.obs_norm.std.len() != input {
            return Err(format_err("obs_norm vectors must match the input dimension"));
        }
        if self.obs_norm.std.iter().any(|s| !(*s > 0.0)) {
            return Err(format_err("obs_norm std entries must be positive"));
        }
        if !(self.action_scale > 0.0) {
            return Err(format_err("action_scale must be positive"));
        }
        let all_finite = self
            .weights
            .iter()
            .flatten()
            .flatten()
            .chain(self.biases.iter().flatten())
            .chain(self.obs_norm.mean.iter())
            .chain(self.obs_norm.std.iter())
            .all(|v| v.is_finite());
        if !all_finite || !self.action_scale.is_finite() {
            return Err(format_err("weight file contains non-finite values"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Mean action and log standard deviation before squashing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution {
    pub mean: Vector3<f64>,
    pub log_std: Vector3<f64>,
}

/// Validated, matrix-form network ready for inference.
#[derive(Debug, Clone)]
pub struct PolicyNetwork {
    layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    norm_mean: DVector<f64>,
    norm_std: DVector<f64>,
    action_scale: f64,
    history_n: usize,
}

impl PolicyNetwork {
    pub fn new(w: &PolicyWeights) -> Result<Self> {
        w.validate()?;
        let layers = w
            .weights
            .iter()
            .zip(&w.biases)
            .map(|(m, b)| {
                let rows = m.len();
                let cols = m[0].len();
                (
                    DMatrix::from_fn(rows, cols, |r, c| m[r][c]),
                    DVector::from_column_slice(b),
                )
            })
            .collect();
        Ok(Self {
            layers,
            norm_mean: DVector::from_column_slice(&w.obs_norm.mean),
            norm_std: DVector::from_column_slice(&w.obs_norm.std),
            action_scale: w.action_scale,
            history_n: w.history_n,
        })
    }

    pub fn history_n(&self) -> usize {
        self.history_n
    }

    pub fn input_len(&self) -> usize {
        self.norm_mean.len()
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<ActionDistribution> {
        if obs.len() != self.input_len() {
            return Err(format_err(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.input_len()
            )));
        }
        let mut h = (DVector::from_column_slice(obs) - &self.norm_mean).component_div(&self.norm_std);
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = w * h + b;
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(ActionDistribution {
            mean: Vector3::new(h[0], h[1], h[2]),
            log_std: Vector3::new(h[3], h[4], h[5]).map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
        })
    }

    /// Squashed action (km). Deterministic mode returns `scale * tanh(mean)`.
    pub fn forward<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, deterministic: bool) -> Result<Vector3<f64>> {
        let d = self.distribution(obs)?;
        let pre = if deterministic {
            d.mean
        } else {
            Vector3::from_fn(|i, _| d.mean[i] + d.log_std[i].exp() * rng.sample::<f64, _>(StandardNormal))
        };
        Ok(pre.map(|v| v.tanh() * self.action_scale))
    }
}
