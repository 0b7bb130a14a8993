//! Episode orchestration: cat motion (synthetic drift or replayed track),
//! estimate streaming through the sensor constellation, the EKF, MPC
//! tracking, reward, termination and per-step logging.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::GEO_RADIUS;
use crate::dynamics::{mean_motion, CraftParams, DiscreteCw, HillState, ThrustCommand};
use crate::ephemeris::{resample_spline, ScenarioTrack};
use crate::error::{config, domain, Error, Result};
use crate::estimation::{ekf_predict, ekf_to_hill, ekf_update_estimate, EkfConfig, EkfState, MeasurementNoise};
use crate::frames::{ecef_to_hill, hill_state_to_ecef, hill_to_ecef, OrbitalElements};
use crate::guidance::mpc::{MpcConfig, MpcSolver};
use crate::guidance::{GoalCommand, GoalSource};
use crate::policy::gate::{decay_weights, scenario_probs, GateConfig};
use crate::policy::{Observation, Scenario, ScenarioProbabilities};
use crate::rfsense::{
    build_walker, constellation_positions, crlb, reference_sigma, sample_estimate, visible_sensors, BeamSpec,
    CatEstimate, ConstellationConfig, DEFAULT_BEAM_HALF_ANGLE_DEG, DEFAULT_SIGMA_D,
};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// MPC weights in a config-friendly form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcParams {
    pub horizon: usize,
    pub pos_weight: f64,
    pub vel_weight: f64,
    pub control_weight: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon: 8,
            pos_weight: 1.0,
            vel_weight: 1e6,
            control_weight: 1e-2,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

impl MpcParams {
    pub fn to_config(&self, thrust_limit: f64) -> MpcConfig<f64> {
        let (p, v) = (self.pos_weight, self.vel_weight);
        MpcConfig {
            horizon: self.horizon,
            q: Matrix6::from_diagonal(&Vector6::new(p, p, p, v, v, v)),
            r: nalgebra::Matrix3::identity() * self.control_weight,
            max_iter: self.max_iter,
            tol: self.tol,
            ..MpcConfig::default()
        }
        .with_limit(thrust_limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfParams {
    pub q_pos: f64,
    pub q_vel: f64,
    pub substeps: usize,
    /// Fixed measurement sigma (km) instead of each estimate's own.
    pub constant_sigma: Option<[f64; 3]>,
    /// Initial velocity sigma (km/s).
    pub init_vel_sigma: f64,
}

impl Default for EkfParams {
    fn default() -> Self {
        let d = EkfConfig::<f64>::default();
        Self {
            q_pos: d.q_pos,
            q_vel: d.q_vel,
            substeps: d.substeps,
            constant_sigma: None,
            init_vel_sigma: 1e-3,
        }
    }
}

impl EkfParams {
    pub fn to_config(&self) -> EkfConfig<f64> {
        EkfConfig {
            q_pos: self.q_pos,
            q_vel: self.q_vel,
            substeps: self.substeps,
            measurement: match self.constant_sigma {
                Some(s) => MeasurementNoise::Constant(Vector3::from(s)),
                None => MeasurementNoise::FromEstimate,
            },
        }
    }
}

/// Ranges for the synthetic drift trajectory of the cat.
///
/// The cat follows free CW motion: a relative ellipse with radial center
/// `x_c`, whose along-track center drifts at `-1.5 n x_c` and crosses the
/// mouse at a random fraction of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnBounds {
    /// Range of `|x_c|` (km); the sign is random.
    pub center_offset: [f64; 2],
    /// Maximum in-plane ellipse semi-minor axis (km).
    pub max_in_plane: f64,
    /// Maximum cross-track amplitude (km).
    pub max_cross_track: f64,
    /// Range of the crossing time as a fraction of the episode duration.
    pub crossing_fraction: [f64; 2],
}

impl Default for SpawnBounds {
    fn default() -> Self {
        Self {
            center_offset: [1.0, 6.0],
            max_in_plane: 6.0,
            max_cross_track: 8.0,
            crossing_fraction: [0.2, 0.6],
        }
    }
}

impl SpawnBounds {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.center_offset;
        let [f0, f1] = self.crossing_fraction;
        if !(lo > 0.0 && hi >= lo) {
            return Err(config("spawn center offset range must be positive and ordered"));
        }
        if !(self.max_in_plane >= 0.0 && self.max_cross_track >= 0.0) {
            return Err(config("spawn amplitudes must be non-negative"));
        }
        if !(f0 >= 0.0 && f1 >= f0 && f1 <= 1.0) {
            return Err(config("crossing fraction range must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Draws the cat's initial Hill state for an episode of `duration` seconds.
pub fn spawn_cat_drift<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &SpawnBounds,
    n: f64,
    duration: f64,
) -> Result<HillState<f64>> {
    bounds.validate()?;
    if !(n > 0.0 && duration > 0.0) {
        return Err(domain("mean motion and duration must be positive"));
    }
    let sample = |rng: &mut R, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let xc = sign * sample(rng, bounds.center_offset[0], bounds.center_offset[1]);
    let a = sample(rng, 0.0, bounds.max_in_plane);
    let b = sample(rng, 0.0, bounds.max_cross_track);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let psi = rng.random_range(0.0..std::f64::consts::TAU);
    let t_cross = duration * sample(rng, bounds.crossing_fraction[0], bounds.crossing_fraction[1]);
    let yc0 = 1.5 * n * xc * t_cross;
    let (sp, cp) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    Ok(HillState::new(
        Vector3::new(xc + a * cp, yc0 - 2.0 * a * sp, b * cs),
        Vector3::new(-a * n * sp, -1.5 * n * xc - 2.0 * a * n * cp, -b * n * ss),
    ))
}

/// One breakpoint of the noise curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumPoint {
    pub step: u64,
    pub alpha: f64,
}

fn validate_schedule(schedule: &[CurriculumPoint]) -> Result<()> {
    for w in schedule.windows(2) {
        if w[1].step <= w[0].step {
            return Err(config("curriculum breakpoints must have increasing steps"));
        }
        if w[1].alpha < w[0].alpha {
            return Err(config("curriculum alpha must be non-decreasing"));
        }
    }
    if schedule.iter().any(|p| !(0.0..=1.0).contains(&p.alpha)) {
        return Err(config("curriculum alpha values must lie in [0, 1]"));
    }
    Ok(())
}

/// Noise scale at `train_step`: zero before the first breakpoint, linear
/// between breakpoints, one from the last breakpoint on. An empty schedule
/// means full noise throughout.
pub fn curriculum_alpha(train_step: u64, schedule: &[CurriculumPoint]) -> f64 {
    let (Some(first), Some(last)) = (schedule.first(), schedule.last()) else {
        return 1.0;
    };
    if train_step < first.step {
        return 0.0;
    }
    if train_step >= last.step {
        return 1.0;
    }
    let i = schedule.partition_point(|p| p.step <= train_step);
    let (a, b) = (schedule[i - 1], schedule[i]);
    let f = (train_step - a.step) as f64 / (b.step - a.step) as f64;
    a.alpha + f * (b.alpha - a.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Decision and simulation step (s).
    pub dt: f64,
    /// Defaults to 2000 for synthetic cats and the track length for replays.
    pub max_steps: Option<usize>,
    pub d_tol: f64,
    pub deviation_cutoff: f64,
    pub w_dev: f64,
    /// Defaults to a value that charges 0.2 for a full-thrust step on all axes.
    pub w_fuel: Option<f64>,
    /// Noise scale used when a reset does not specify one.
    pub alpha: f64,
    pub curriculum: Vec<CurriculumPoint>,
    pub history_n: usize,
    pub mass: f64,
    pub thrust_limit: f64,
    /// Per-axis bound on policy position changes (km).
    pub action_bound: f64,
    /// ECEF longitude of the Hill origin at t = 0 (deg).
    pub origin_longitude_deg: f64,
    pub constellation: ConstellationConfig,
    pub sigma_d: f64,
    pub beam_half_angle_deg: f64,
    pub spawn: SpawnBounds,
    pub gate: GateConfig,
    pub mpc: MpcParams,
    pub ekf: EkfParams,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 120.0,
            max_steps: None,
            d_tol: 20.0,
            deviation_cutoff: 50.0,
            w_dev: 1.0 / 50.0,
            w_fuel: None,
            alpha: 1.0,
            curriculum: Vec::new(),
            history_n: 10,
            mass: 2500.0,
            thrust_limit: 1.0,
            action_bound: 5.0,
            origin_longitude_deg: 0.0,
            constellation: ConstellationConfig::with_size(60),
            sigma_d: DEFAULT_SIGMA_D,
            beam_half_angle_deg: DEFAULT_BEAM_HALF_ANGLE_DEG,
            spawn: SpawnBounds::default(),
            gate: GateConfig::default(),
            mpc: MpcParams::default(),
            ekf: EkfParams::default(),
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub const SYNTHETIC_STEPS: usize = 2000;

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(config("dt must be positive"));
        }
        if self.max_steps == Some(0) {
            return Err(config("max_steps must be at least one"));
        }
        if !(self.d_tol > 0.0 && self.deviation_cutoff > self.d_tol) {
            return Err(config("need 0 < d_tol < deviation_cutoff"));
        }
        if !(self.w_dev >= 0.0) || self.w_fuel.is_some_and(|w| !(w >= 0.0)) {
            return Err(config("reward weights must be non-negative"));
        }
        if !(self.alpha >= 0.0) {
            return Err(config("alpha must be non-negative"));
        }
        validate_schedule(&self.curriculum)?;
        if self.history_n == 0 {
            return Err(config("history_n must be at least one"));
        }
        if !(self.mass > 0.0 && self.thrust_limit > 0.0 && self.action_bound > 0.0) {
            return Err(config("mass, thrust limit and action bound must be positive"));
        }
        if !(self.sigma_d > 0.0) {
            return Err(config("sigma_d must be positive"));
        }
        if !(self.beam_half_angle_deg > 0.0 && self.beam_half_angle_deg < 90.0) {
            return Err(config("beam half-angle must lie in (0, 90) degrees"));
        }
        let g = &self.gate;
        if !(g.d_near > 0.0 && g.d_far > g.d_near && g.sigma_floor > 0.0 && g.decay > 0.0 && g.decay <= 1.0) {
            return Err(config(
                "gate needs 0 < d_near < d_far, a positive sigma floor and decay in (0, 1]",
            ));
        }
        if self.ekf.substeps == 0 || !(self.ekf.init_vel_sigma > 0.0) {
            return Err(config(
                "EKF needs at least one substep and a positive initial velocity sigma",
            ));
        }
        self.spawn.validate()?;
        self.mpc.to_config(self.thrust_limit).validate()
    }

    pub fn fuel_weight(&self) -> f64 {
        self.w_fuel.unwrap_or(0.2 / (3.0 * self.thrust_limit * self.dt))
    }
}

/// Where the cat's true trajectory comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CatSource {
    Synthetic,
    /// Hill positions replayed from a scenario track.
    Track(ScenarioTrack),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Cutoff,
    Horizon,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Cutoff => "cutoff",
            Termination::Horizon => "horizon",
        }
    }
}

/// Diagnostics returned with each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub step: usize,
    pub t_s: f64,
    pub fuel_step: f64,
    pub fuel_total: f64,
    pub deviation: f64,
    pub cat_distance: f64,
    pub within_tol: bool,
    pub probs: ScenarioProbabilities,
    pub goal_source: &'static str,
    pub estimate_stale: bool,
    pub n_sensors: usize,
    pub mpc_converged: bool,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Flat per-step log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t_s: f64,
    pub mouse_x: f64,
    pub mouse_y: f64,
    pub mouse_z: f64,
    pub mouse_vx: f64,
    pub mouse_vy: f64,
    pub mouse_vz: f64,
    pub cat_x: f64,
    pub cat_y: f64,
    pub cat_z: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub filt_x: f64,
    pub filt_y: f64,
    pub filt_z: f64,
    pub est_stale: bool,
    pub n_sensors: usize,
    pub alpha: f64,
    pub action_x: f64,
    pub action_y: f64,
    pub action_z: f64,
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_z: f64,
    pub goal_source: String,
    pub scenario: String,
    pub thrust_x: f64,
    pub thrust_y: f64,
    pub thrust_z: f64,
    pub fuel_step: f64,
    pub fuel_total: f64,
    pub reward: f64,
    pub cat_distance: f64,
    pub within_tol: bool,
    pub p_near: f64,
    pub p_mid: f64,
    pub p_far: f64,
    pub termination: String,
}

impl StepRecord {
    pub fn mouse(&self) -> Vector3<f64> {
        Vector3::new(self.mouse_x, self.mouse_y, self.mouse_z)
    }

    pub fn cat(&self) -> Vector3<f64> {
        Vector3::new(self.cat_x, self.cat_y, self.cat_z)
    }

    pub fn estimate(&self) -> Vector3<f64> {
        Vector3::new(self.est_x, self.est_y, self.est_z)
    }

    pub fn filtered(&self) -> Vector3<f64> {
        Vector3::new(self.filt_x, self.filt_y, self.filt_z)
    }

    pub fn thrust(&self) -> Vector3<f64> {
        Vector3::new(self.thrust_x, self.thrust_y, self.thrust_z)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let records = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Episode summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub steps: usize,
    pub total_reward: f64,
    pub steps_within_tol: usize,
    pub total_fuel: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub cutoff: bool,
    /// RMS raw estimate error over steps with a fresh fix (km).
    pub raw_rms: Option<f64>,
    /// RMS filtered error over the same steps (km).
    pub filtered_rms: Option<f64>,
}

pub fn metrics(log: &EpisodeLog) -> Result<EpisodeMetrics> {
    let last = log
        .records
        .last()
        .ok_or_else(|| domain("cannot summarize an empty log"))?;
    let n = log.records.len();
    let devs: Vec<f64> = log.records.iter().map(|r| r.mouse().norm()).collect();
    let fresh: Vec<&StepRecord> = log.records.iter().filter(|r| !r.est_stale).collect();
    let rms = |f: &dyn Fn(&StepRecord) -> Vector3<f64>| {
        (!fresh.is_empty())
            .then(|| (fresh.iter().map(|r| (f(r) - r.cat()).norm_squared()).sum::<f64>() / fresh.len() as f64).sqrt())
    };
    Ok(EpisodeMetrics {
        steps: n,
        total_reward: log.records.iter().map(|r| r.reward).sum(),
        steps_within_tol: log.records.iter().filter(|r| r.within_tol).count(),
        total_fuel: last.fuel_total,
        mean_deviation: devs.iter().sum::<f64>() / n as f64,
        max_deviation: devs.iter().copied().fold(0.0, f64::max),
        cutoff: last.termination == Termination::Cutoff.as_str(),
        raw_rms: rms(&StepRecord::estimate),
        filtered_rms: rms(&StepRecord::filtered),
    })
}

struct Episode {
    rng: ChaCha8Rng,
    step: usize,
    max_steps: usize,
    t: f64,
    sensor_epoch: f64,
    mouse: HillState<f64>,
    craft: CraftParams<f64>,
    cat: HillState<f64>,
    goal: GoalCommand<f64>,
    ekf: EkfState<f64>,
    raw: VecDeque<(Vector3<f64>, bool)>,
    filtered: VecDeque<Vector3<f64>>,
    last_fix: Vector3<f64>,
    n_sensors: usize,
    probs: ScenarioProbabilities,
    termination: Option<Termination>,
    scenario: Option<Scenario>,
    log: EpisodeLog,
}

/// Single-threaded cat-and-mouse episode runner.
pub struct Environment {
    cfg: EpisodeConfig,
    source: CatSource,
    track: Vec<Vector3<f64>>,
    n: f64,
    origin0: OrbitalElements<f64>,
    model: DiscreteCw<f64>,
    mpc: MpcSolver<f64>,
    sats: Vec<OrbitalElements<f64>>,
    ekf_cfg: EkfConfig<f64>,
    gate_weights: Vec<f64>,
    w_fuel: f64,
    alpha: f64,
    ep: Option<Episode>,
}

impl Environment {
    /// Builds the environment and resets it with the configured seed.
    pub fn new(cfg: EpisodeConfig, source: CatSource) -> Result<Self> {
        cfg.validate()?;
        let n = mean_motion(GEO_RADIUS)?;
        let origin0 = OrbitalElements::equatorial(GEO_RADIUS, cfg.origin_longitude_deg.to_radians())?;
        let model = DiscreteCw::new(n, cfg.dt, cfg.mass)?;
        let mpc = MpcSolver::new(model.clone(), cfg.mpc.to_config(cfg.thrust_limit))?;
        let track = match &source {
            CatSource::Synthetic => Vec::new(),
            CatSource::Track(tr) => resample_track(tr, cfg.dt)?,
        };
        let mut env = Self {
            sats: build_walker(&cfg.constellation)?,
            ekf_cfg: cfg.ekf.to_config(),
            gate_weights: decay_weights(cfg.history_n, cfg.gate.decay),
            w_fuel: cfg.fuel_weight(),
            alpha: cfg.alpha,
            cfg,
            source,
            track,
            n,
            origin0,
            model,
            mpc,
            ep: None,
        };
        env.reset(env.cfg.seed)?;
        Ok(env)
    }

    pub fn synthetic(cfg: EpisodeConfig) -> Result<Self> {
        Self::new(cfg, CatSource::Synthetic)
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn model(&self) -> &DiscreteCw<f64> {
        &self.model
    }

    pub fn mean_motion(&self) -> f64 {
        self.n
    }

    pub fn fuel_weight(&self) -> f64 {
        self.w_fuel
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Noise scale for estimates drawn from now on.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha >= 0.0) {
            return Err(domain("alpha must be non-negative"));
        }
        self.alpha = alpha;
        Ok(())
    }

    /// Hill origin elements at episode time `t`.
    pub fn origin_at(&self, t: f64) -> OrbitalElements<f64> {
        self.origin0.with_mean_anomaly(self.origin0.mean_anomaly + self.n * t)
    }

    fn episode(&self) -> &Episode {
        self.ep.as_ref().expect("environment is reset on construction")
    }

    fn episode_mut(&mut self) -> &mut Episode {
        self.ep.as_mut().expect("environment is reset on construction")
    }

    pub fn mouse(&self) -> HillState<f64> {
        self.episode().mouse
    }

    /// Places the mouse, e.g. to start from an offset.
    pub fn set_mouse(&mut self, s: HillState<f64>) -> Result<()> {
        if !s.is_finite() {
            return Err(domain("mouse state must be finite"));
        }
        self.episode_mut().mouse = s;
        self.refresh_probs()
    }

    pub fn goal(&self) -> GoalCommand<f64> {
        self.episode().goal
    }

    pub fn time(&self) -> f64 {
        self.episode().t
    }

    pub fn steps_taken(&self) -> usize {
        self.episode().step
    }

    pub fn max_steps(&self) -> usize {
        self.episode().max_steps
    }

    pub fn is_done(&self) -> bool {
        self.episode().termination.is_some()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.episode().termination
    }

    pub fn fuel_used(&self) -> f64 {
        self.episode().craft.fuel_used
    }

    pub fn probs(&self) -> ScenarioProbabilities {
        self.episode().probs
    }

    /// Raw Hill-frame estimate history, oldest first.
    pub fn raw_history(&self) -> Vec<Vector3<f64>> {
        self.episode().raw.iter().map(|(p, _)| *p).collect()
    }

    /// EKF Hill-frame history, oldest first.
    pub fn filtered_history(&self) -> Vec<Vector3<f64>> {
        self.episode().filtered.iter().copied().collect()
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.episode().log
    }

    /// Labels the gate scenario chosen for the next step in the log.
    pub fn annotate_scenario(&mut self, scenario: Scenario) {
        self.episode_mut().scenario = Some(scenario);
    }

    pub fn observation(&self) -> Observation {
        let ep = self.episode();
        Observation {
            mouse: ep.mouse,
            goal: ep.goal.target,
            history: ep.raw.iter().map(|(p, _)| *p).collect(),
            stale: ep.raw.iter().map(|(_, s)| *s).collect(),
        }
    }

    fn cat_truth(&self, ep: &Episode) -> Vector3<f64> {
        match self.source {
            CatSource::Synthetic => ep.cat.pos,
            CatSource::Track(_) => self.track[ep.step.min(self.track.len() - 1)],
        }
    }

    /// Samples a fresh estimate of the cat, or `None` without a usable fix.
    fn sense(&self, ep: &mut Episode) -> Result<Option<CatEstimate>> {
        let origin = self.origin_at(ep.t);
        let cat_ecef = hill_to_ecef(&self.cat_truth(ep), &origin);
        let sensors = constellation_positions(&self.sats, ep.sensor_epoch + ep.t);
        let beam = BeamSpec::nadir(&cat_ecef, self.cfg.beam_half_angle_deg.to_radians())?;
        let visible: Vec<Vector3<f64>> = visible_sensors(&cat_ecef, &sensors, &beam)
            .into_iter()
            .map(|i| sensors[i])
            .collect();
        ep.n_sensors = visible.len();
        let bound = crlb(&cat_ecef, &visible, self.cfg.sigma_d);
        if bound.singular {
            return Ok(None);
        }
        sample_estimate(&cat_ecef, &bound, self.alpha, ep.t, &mut ep.rng).map(Some)
    }

    fn refresh_probs(&mut self) -> Result<()> {
        let g = &self.cfg.gate;
        let ep = self.ep.as_mut().expect("environment is reset on construction");
        let history: Vec<Vector3<f64>> = ep.filtered.iter().copied().collect();
        ep.probs = scenario_probs(
            &history,
            &ep.mouse.pos,
            g.d_near,
            g.d_far,
            &self.gate_weights,
            g.sigma_floor,
        )?;
        Ok(())
    }

    /// Starts a new episode. The seed fixes the cat spawn, the constellation
    /// epoch and the estimate noise through independent streams.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut spawn_rng = ChaCha8Rng::seed_from_u64(seed);
        spawn_rng.set_stream(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let max_steps = match self.source {
            CatSource::Synthetic => self.cfg.max_steps.unwrap_or(EpisodeConfig::SYNTHETIC_STEPS),
            CatSource::Track(_) => {
                let len = self.track.len() - 1;
                self.cfg.max_steps.map_or(len, |m| m.min(len))
            }
        };
        let sensor_epoch = spawn_rng.random_range(0.0..SECONDS_PER_DAY);
        let cat = match self.source {
            CatSource::Synthetic => {
                spawn_cat_drift(&mut spawn_rng, &self.cfg.spawn, self.n, max_steps as f64 * self.cfg.dt)?
            }
            CatSource::Track(_) => HillState::at_rest(self.track[0]),
        };
        let mut ep = Episode {
            rng,
            step: 0,
            max_steps,
            t: 0.0,
            sensor_epoch,
            mouse: HillState::zero(),
            craft: CraftParams::new(self.cfg.mass, self.cfg.thrust_limit)?,
            cat,
            goal: GoalCommand::origin(),
            ekf: EkfState::new(Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), 0.0, 0.0),
            raw: VecDeque::with_capacity(self.cfg.history_n),
            filtered: VecDeque::with_capacity(self.cfg.history_n),
            last_fix: Vector3::zeros(),
            n_sensors: 0,
            probs: ScenarioProbabilities::default(),
            termination: None,
            scenario: None,
            log: EpisodeLog::default(),
        };
        let origin = self.origin_at(0.0);
        let ref_sigma = reference_sigma(self.cfg.constellation.num_sats);
        let (est, stale) = match self.sense(&mut ep)? {
            Some(est) => (est, false),
            None => {
                // No fix yet: one draw at the reference noise level for this
                // constellation size stands in for the first estimate.
                let truth = hill_to_ecef(&self.cat_truth(&ep), &origin);
                let sigma = ref_sigma * self.alpha;
                let noise = Vector3::from_fn(|_, _| ep.rng.sample::<f64, _>(StandardNormal));
                let z = truth + sigma.component_mul(&noise);
                (
                    CatEstimate {
                        z,
                        sigma,
                        t: 0.0,
                        n_sensors_visible: ep.n_sensors,
                        stale: true,
                    },
                    true,
                )
            }
        };
        let hill = ecef_to_hill(&est.z, &origin);
        let (_, vel) = hill_state_to_ecef(&hill, &Vector3::zeros(), &origin);
        ep.ekf = EkfState::new(est.z, vel, ref_sigma, self.cfg.ekf.init_vel_sigma, 0.0);
        ep.last_fix = hill;
        let filt = ekf_to_hill(&ep.ekf, &origin);
        for i in 0..self.cfg.history_n {
            let newest = i + 1 == self.cfg.history_n;
            ep.raw.push_back((hill, if newest { stale } else { true }));
            ep.filtered.push_back(filt);
        }
        self.mpc.reset_warm_start();
        self.ep = Some(ep);
        self.refresh_probs()?;
        Ok(self.observation())
    }

    /// Policy step: the goal is the current position plus the action,
    /// clamped per axis to the action bound.
    pub fn step(&mut self, action: &Vector3<f64>) -> Result<StepOutcome> {
        if !action.iter().all(|v| v.is_finite()) {
            return Err(domain("action must be finite"));
        }
        let b = self.cfg.action_bound;
        let action = action.map(|v| v.clamp(-b, b));
        let goal = GoalCommand::new(self.mouse().pos + action, GoalSource::Policy);
        self.step_goal(goal)
    }

    /// MPC tracks `goal` for one step.
    pub fn step_goal(&mut self, goal: GoalCommand<f64>) -> Result<StepOutcome> {
        self.check_active()?;
        if !goal.target.iter().all(|v| v.is_finite()) {
            return Err(domain("goal must be finite"));
        }
        let mouse = self.mouse();
        let sol = self.mpc.solve(&mouse, &goal);
        self.advance(sol.thrust, goal, sol.converged)
    }

    /// Applies raw thrust (clamped to the limit), bypassing the MPC.
    pub fn step_thrust(&mut self, thrust: &Vector3<f64>, source: GoalSource) -> Result<StepOutcome> {
        self.check_active()?;
        let goal = GoalCommand::new(self.mouse().pos, source);
        self.advance(*thrust, goal, true)
    }

    fn check_active(&self) -> Result<()> {
        match self.episode().termination {
            Some(t) => Err(Error::Protocol(format!("episode already ended ({})", t.as_str()))),
            None => Ok(()),
        }
    }

    fn advance(&mut self, thrust: Vector3<f64>, goal: GoalCommand<f64>, converged: bool) -> Result<StepOutcome> {
        let cmd = ThrustCommand::new(thrust, self.cfg.dt)?.clamped(self.cfg.thrust_limit);
        let mut ep = self.ep.take().expect("environment is reset on construction");
        let prev = ep.mouse.pos;
        let result = self.advance_episode(&mut ep, &cmd, goal);
        self.ep = Some(ep);
        let (reward, est_stale) = result?;
        self.refresh_probs()?;
        let ep = self.episode();
        let cat = self.cat_truth(ep);
        let cat_distance = (cat - ep.mouse.pos).norm();
        let info = StepInfo {
            step: ep.step,
            t_s: ep.t,
            fuel_step: cmd.impulse(),
            fuel_total: ep.craft.fuel_used,
            deviation: ep.mouse.pos.norm(),
            cat_distance,
            within_tol: cat_distance <= self.cfg.d_tol,
            probs: ep.probs,
            goal_source: goal.source.as_str(),
            estimate_stale: est_stale,
            n_sensors: ep.n_sensors,
            mpc_converged: converged,
            termination: ep.termination,
        };
        self.log_step(&info, &cmd, &goal, goal.target - prev, reward);
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            done: info.termination.is_some(),
            info,
        })
    }

    fn advance_episode(
        &self,
        ep: &mut Episode,
        cmd: &ThrustCommand<f64>,
        goal: GoalCommand<f64>,
    ) -> Result<(f64, bool)> {
        let fuel_step = cmd.impulse();
        ep.craft.fuel_used += fuel_step;
        ep.mouse = self.model.step(&ep.mouse, &cmd.thrust);
        ep.cat = self.model.step(&ep.cat, &Vector3::zeros());
        ep.goal = goal;
        ep.step += 1;
        ep.t += self.cfg.dt;

        ep.ekf = ekf_predict(&ep.ekf, self.cfg.dt, &self.ekf_cfg)?;
        let origin = self.origin_at(ep.t);
        let stale = match self.sense(ep)? {
            Some(est) => {
                ep.ekf = ekf_update_estimate(&ep.ekf, &est, &self.ekf_cfg)?;
                ep.last_fix = ecef_to_hill(&est.z, &origin);
                false
            }
            None => true,
        };
        ep.raw.pop_front();
        ep.raw.push_back((ep.last_fix, stale));
        ep.filtered.pop_front();
        ep.filtered.push_back(ekf_to_hill(&ep.ekf, &origin));

        let deviation = ep.mouse.pos.norm();
        let cat_distance = (self.cat_truth(ep) - ep.mouse.pos).norm();
        let reward = if cat_distance > self.cfg.d_tol {
            (1.0 - self.cfg.w_dev * deviation - self.w_fuel * fuel_step).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ep.termination = if deviation > self.cfg.deviation_cutoff {
            Some(Termination::Cutoff)
        } else if ep.step >= ep.max_steps {
            Some(Termination::Horizon)
        } else {
            None
        };
        Ok((reward, stale))
    }

    fn log_step(
        &mut self,
        info: &StepInfo,
        cmd: &ThrustCommand<f64>,
        goal: &GoalCommand<f64>,
        action: Vector3<f64>,
        reward: f64,
    ) {
        let cat = self.cat_truth(self.episode());
        let alpha = self.alpha;
        let ep = self.episode_mut();
        let (est, est_stale) = *ep.raw.back().expect("history is never empty");
        let filt = *ep.filtered.back().expect("history is never empty");
        let scenario = ep.scenario.take().map_or("", |s| s.as_str()).to_string();
        let (m, v, u) = (ep.mouse.pos, ep.mouse.vel, cmd.thrust);
        ep.log.records.push(StepRecord {
            step: info.step,
            t_s: info.t_s,
            mouse_x: m.x,
            mouse_y: m.y,
            mouse_z: m.z,
            mouse_vx: v.x,
            mouse_vy: v.y,
            mouse_vz: v.z,
            cat_x: cat.x,
            cat_y: cat.y,
            cat_z: cat.z,
            est_x: est.x,
            est_y: est.y,
            est_z: est.z,
            filt_x: filt.x,
            filt_y: filt.y,
            filt_z: filt.z,
            est_stale,
            n_sensors: info.n_sensors,
            alpha,
            action_x: action.x,
            action_y: action.y,
            action_z: action.z,
            goal_x: goal.target.x,
            goal_y: goal.target.y,
            goal_z: goal.target.z,
            goal_source: goal.source.as_str().to_string(),
            scenario,
            thrust_x: u.x,
            thrust_y: u.y,
            thrust_z: u.z,
            fuel_step: info.fuel_step,
            fuel_total: info.fuel_total,
            reward,
            cat_distance: info.cat_distance,
            within_tol: info.within_tol,
            p_near: info.probs.p_near,
            p_mid: info.probs.p_mid,
            p_far: info.probs.p_far,
            termination: info.termination.map_or("", |t| t.as_str()).to_string(),
        });
    }
}

/// Resamples a track onto `t_0 + k dt`.
fn resample_track(track: &ScenarioTrack, dt: f64) -> Result<Vec<Vector3<f64>>> {
    if track.len() < 2 {
        return Err(domain("a replay track needs at least two samples"));
    }
    let (t0, t1) = (track.t[0], track.t[track.len() - 1]);
    let count = ((t1 - t0) / dt + 1e-9).floor() as usize + 1;
    if count < 2 {
        return Err(domain("replay track is shorter than one step"));
    }
    let stamps: Vec<f64> = (0..count).map(|k| t0 + dt * k as f64).collect();
    resample_spline(&track.t, &track.pos, &stamps)
}
