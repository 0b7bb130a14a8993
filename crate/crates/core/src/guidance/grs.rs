//! Greedy recursive search over goal positions on a sphere around the cat.
//!
//! Candidates sit at distance `d_m` from the mean cat estimate,
//! `g = c + d_m (cos(phi) sin(theta), cos(phi) cos(theta), sin(phi))`, and are
//! scored with the reward surrogate `1 - w_dev |g| - w_fuel f(g)`. The fuel
//! surrogate `f` is the impulse of a two-burn transfer that leaves the mouse
//! at rest on `g` after the MPC horizon: one burn on the first step and one on
//! the last, solved through the pseudo-inverse of `[A^(M-1) B | B]`.
//!
//! The surrogate is sharp-peaked and has several local maxima on the sphere,
//! so every local maximum of the first grid is refined separately. Each
//! refinement recenters on its best sample and shrinks the window, except
//! that a new best on the window edge slides the window instead.

use nalgebra::{Matrix6, Vector3, Vector6};

use super::{GoalCommand, GoalSource};
use crate::dynamics::{DiscreteCw, HillState};
use crate::error::{config, domain, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrsConfig<T: Real> {
    /// Samples per angle at each level.
    pub grid: usize,
    /// Range shrink factor between levels.
    pub shrink: T,
    /// Recursion stops once both ranges are narrower than this (rad).
    pub tol: T,
    /// Goal distance from the cat (km).
    pub d_m: T,
    /// A mean cat position farther than this from the Hill origin sends the
    /// mouse home instead of searching (km).
    pub d_far: T,
    pub w_dev: T,
    pub w_fuel: T,
    /// Transfer duration used by the fuel surrogate (steps).
    pub horizon: usize,
    /// Most coarse-grid local maxima refined, best first.
    pub starts: usize,
}

impl<T: Real> GrsConfig<T> {
    pub fn new(w_dev: T, w_fuel: T) -> Self {
        Self {
            grid: 16,
            shrink: T::lit(4.0),
            tol: T::lit(0.5f64.to_radians()),
            d_m: T::lit(25.0),
            d_far: T::lit(35.0),
            w_dev,
            w_fuel,
            horizon: 8,
            starts: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(config("GRS grid needs at least two samples per angle"));
        }
        if !(self.shrink > T::one()) {
            return Err(config("GRS shrink factor must exceed one"));
        }
        if !(self.tol > T::zero()) || !(self.d_m > T::zero()) {
            return Err(config("GRS tolerance and goal distance must be positive"));
        }
        if self.horizon < 2 {
            return Err(config("GRS transfer horizon must be at least two steps"));
        }
        if self.starts == 0 {
            return Err(config("GRS needs at least one refinement start"));
        }
        Ok(())
    }

    /// Number of levels needed to shrink a `width` range below `tol`.
    pub fn levels_for(&self, width: T) -> usize {
        ((width / self.tol).ln() / self.shrink.ln()).ceil().as_f64().max(1.0) as usize
    }
}

/// Window slides allowed per refinement start.
const MAX_SHIFTS: usize = 16;

/// Closed angle interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRange<T: Real> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> AngleRange<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(domain("angle range must be finite with lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    /// Full elevation range `[-pi/2, pi/2]`.
    pub fn elevation() -> Self {
        Self {
            lo: -T::frac_pi_2(),
            hi: T::frac_pi_2(),
        }
    }

    /// Full azimuth range `[-pi, pi]`.
    pub fn azimuth() -> Self {
        Self {
            lo: -T::pi(),
            hi: T::pi(),
        }
    }

    fn sample(&self, i: usize, count: usize) -> T {
        self.lo + self.width() * T::lit((i as f64 + 0.5) / count as f64)
    }

    fn around(center: T, width: T) -> Self {
        let half = width / T::lit(2.0);
        Self {
            lo: center - half,
            hi: center + half,
        }
    }
}

/// Unit direction for elevation `phi` and azimuth `theta`.
pub fn direction<T: Real>(phi: T, theta: T) -> Vector3<T> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vector3::new(cp * st, cp * ct, sp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrsResult<T: Real> {
    pub goal: GoalCommand<T>,
    /// Surrogate reward of the goal (unclamped).
    pub score: T,
    pub levels: usize,
    pub phi: T,
    pub theta: T,
}

/// Search state shared across calls: the config and the transfer solver.
#[derive(Debug, Clone)]
pub struct GrsPlanner<T: Real> {
    cfg: GrsConfig<T>,
    a_horizon: Matrix6<T>,
    transfer: Matrix6<T>,
    dt: T,
}

impl<T: Real> GrsPlanner<T> {
    pub fn new(model: &DiscreteCw<T>, cfg: GrsConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let a = *model.a();
        let b = *model.input();
        let mut a_pow = Matrix6::identity();
        for _ in 0..cfg.horizon - 1 {
            a_pow = a * a_pow;
        }
        let mut burns = Matrix6::zeros();
        burns.fixed_view_mut::<6, 3>(0, 0).copy_from(&(a_pow * b));
        burns.fixed_view_mut::<6, 3>(0, 3).copy_from(&b);
        let transfer = burns
            .pseudo_inverse(T::lit(1e-14))
            .map_err(|e| domain(format!("transfer matrix pseudo-inverse failed: {e}")))?;
        Ok(Self {
            cfg,
            a_horizon: a * a_pow,
            transfer,
            dt: model.dt(),
        })
    }

    pub fn config(&self) -> &GrsConfig<T> {
        &self.cfg
    }

    /// Two-burn transfer impulse (N s) from `mouse` to rest at `goal`.
    pub fn fuel(&self, mouse: &HillState<T>, goal: &Vector3<T>) -> T {
        let mut target = Vector6::zeros();
        target.fixed_rows_mut::<3>(0).copy_from(goal);
        let u = self.transfer * (target - self.a_horizon * mouse.to_vector());
        u.iter().fold(T::zero(), |acc, v| acc + v.abs()) * self.dt
    }

    pub fn score(&self, mouse: &HillState<T>, goal: &Vector3<T>) -> T {
        T::one() - self.cfg.w_dev * goal.norm() - self.cfg.w_fuel * self.fuel(mouse, goal)
    }

    /// Runs the recursive search over the given angle ranges.
    pub fn search(
        &self,
        mouse: &HillState<T>,
        cat_estimates: &[Vector3<T>],
        phi_range: AngleRange<T>,
        theta_range: AngleRange<T>,
    ) -> Result<GrsResult<T>> {
        if cat_estimates.is_empty() {
            return Err(domain("GRS needs at least one cat estimate"));
        }
        let center = cat_estimates.iter().fold(Vector3::zeros(), |acc, v| acc + v) / T::lit(cat_estimates.len() as f64);
        if center.norm() > self.cfg.d_far {
            let origin = Vector3::zeros();
            return Ok(GrsResult {
                goal: GoalCommand::origin(),
                score: self.score(mouse, &origin),
                levels: 0,
                phi: T::zero(),
                theta: T::zero(),
            });
        }
        let k = self.cfg.grid;
        let sample = |pr: &AngleRange<T>, tr: &AngleRange<T>| -> Vec<T> {
            let mut out = Vec::with_capacity(k * k);
            for i in 0..k {
                for j in 0..k {
                    let g = center + direction(pr.sample(i, k), tr.sample(j, k)) * self.cfg.d_m;
                    out.push(self.score(mouse, &g));
                }
            }
            out
        };
        // Coarse level: every local maximum of the grid seeds its own
        // refinement, so a narrow peak is not lost to a broader one.
        let coarse = sample(&phi_range, &theta_range);
        let wraps = (theta_range.width() - T::two_pi()).abs() < T::lit(1e-12);
        let mut seeds: Vec<(T, usize, usize)> = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let v = coarse[i * k + j];
                let mut peak = true;
                for (di, dj) in [
                    (-1i64, -1i64),
                    (-1, 0),
                    (-1, 1),
                    (0, -1),
                    (0, 1),
                    (1, -1),
                    (1, 0),
                    (1, 1),
                ] {
                    let ni = i as i64 + di;
                    let mut nj = j as i64 + dj;
                    if wraps {
                        nj = nj.rem_euclid(k as i64);
                    }
                    if ni < 0 || ni >= k as i64 || nj < 0 || nj >= k as i64 {
                        continue;
                    }
                    let w = coarse[ni as usize * k + nj as usize];
                    // Ties go to the earlier sample in scan order.
                    let earlier = (ni as usize, nj as usize) < (i, j);
                    if w > v || (w == v && earlier) {
                        peak = false;
                        break;
                    }
                }
                if peak {
                    seeds.push((v, i, j));
                }
            }
        }
        seeds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        seeds.truncate(self.cfg.starts);
        let mut best = (T::min_value().unwrap(), T::zero(), T::zero());
        let mut levels = 1;
        for &(v, i, j) in &seeds {
            let (phi, theta) = (phi_range.sample(i, k), theta_range.sample(j, k));
            let mut cand = (v, phi, theta);
            let mut pr = AngleRange::around(phi, phi_range.width() / self.cfg.shrink);
            let mut tr = AngleRange::around(theta, theta_range.width() / self.cfg.shrink);
            let mut depth = 1;
            let mut shifts = 0;
            while pr.width().max(tr.width()) >= self.cfg.tol {
                depth += 1;
                let scores = sample(&pr, &tr);
                let (idx, &s) = scores
                    .iter()
                    .enumerate()
                    .fold((0, &scores[0]), |b, (n, s)| if *s > *b.1 { (n, s) } else { b });
                let (bi, bj) = (idx / k, idx % k);
                let improved = s > cand.0;
                if improved {
                    cand = (s, pr.sample(bi, k), tr.sample(bj, k));
                }
                // A better sample on the window edge means the peak lies
                // beyond it: slide the window there without narrowing.
                let edge = |n: usize| n == 0 || n + 1 == k;
                let slide = improved && (edge(bi) || edge(bj)) && shifts < MAX_SHIFTS;
                let factor = if slide { T::one() } else { self.cfg.shrink };
                shifts += slide as usize;
                pr = AngleRange::around(cand.1, pr.width() / factor);
                tr = AngleRange::around(cand.2, tr.width() / factor);
            }
            levels = levels.max(depth);
            if cand.0 > best.0 {
                best = cand;
            }
        }
        let target = center + direction(best.1, best.2) * self.cfg.d_m;
        Ok(GrsResult {
            goal: GoalCommand::new(target, GoalSource::Grs),
            score: best.0,
            levels,
            phi: best.1,
            theta: best.2,
        })
    }

    /// Search over the whole sphere.
    pub fn grs(&self, mouse: &HillState<T>, cat_estimates: &[Vector3<T>]) -> Result<GrsResult<T>> {
        self.search(mouse, cat_estimates, AngleRange::elevation(), AngleRange::azimuth())
    }
}
