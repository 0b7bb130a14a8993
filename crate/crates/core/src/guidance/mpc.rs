//! Box-constrained linear MPC on the discrete CW model.
//!
//! The horizon problem is condensed to a QP in the stacked inputs
//! `U = [u_0; ...; u_{M-1}]`:
//!
//! ```text
//! min  1/2 U^T H U + g^T U    s.t.  u_lb <= u_i <= u_ub
//! H = G^T Qb G + Rb,   g = G^T Qb (Phi x_0 - X_goal)
//! ```
//!
//! and solved by projected gradient with step `1/L`, `L = lambda_max(H)`,
//! which decreases the cost monotonically.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};

use super::GoalCommand;
use crate::dynamics::{DiscreteCw, HillState, ThrustCommand};
use crate::error::{config, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig<T: Real> {
    pub horizon: usize,
    /// State error weight, applied at every stage including the terminal one.
    pub q: Matrix6<T>,
    pub r: Matrix3<T>,
    pub u_lb: Vector3<T>,
    pub u_ub: Vector3<T>,
    pub max_iter: usize,
    pub tol: T,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        let big = T::lit(1e6);
        Self {
            horizon: 8,
            q: Matrix6::from_diagonal(&Vector6::new(T::one(), T::one(), T::one(), big, big, big)),
            r: Matrix3::identity() * T::lit(1e-2),
            u_lb: Vector3::from_element(-T::one()),
            u_ub: Vector3::from_element(T::one()),
            max_iter: 200,
            tol: T::lit(1e-8),
        }
    }
}

impl<T: Real> MpcConfig<T> {
    /// Symmetric `+-limit` thrust box.
    pub fn with_limit(mut self, limit: T) -> Self {
        self.u_lb = Vector3::from_element(-limit);
        self.u_ub = Vector3::from_element(limit);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(config("MPC horizon must be at least one step"));
        }
        if self.max_iter == 0 {
            return Err(config("MPC iteration cap must be positive"));
        }
        if (0..3).any(|i| !(self.u_lb[i] < self.u_ub[i])) {
            return Err(config("MPC lower thrust bound must be below the upper bound"));
        }
        let q_ok = SymmetricEigen::new((self.q + self.q.transpose()) / T::lit(2.0))
            .eigenvalues
            .iter()
            .all(|&v| v >= T::zero());
        let r_ok = SymmetricEigen::new((self.r + self.r.transpose()) / T::lit(2.0))
            .eigenvalues
            .iter()
            .all(|&v| v >= T::zero());
        if !q_ok || !r_ok {
            return Err(config("MPC weights must be positive semi-definite"));
        }
        Ok(())
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution<T: Real> {
    /// First input of the optimal sequence (N).
    pub thrust: Vector3<T>,
    pub iterations: usize,
    /// False when the iteration cap was hit before the step tolerance.
    pub converged: bool,
    /// QP objective at the returned sequence (without the constant term).
    pub cost: T,
}

/// Condensed MPC with the Hessian factored once per model.
#[derive(Debug, Clone)]
pub struct MpcSolver<T: Real> {
    cfg: MpcConfig<T>,
    model: DiscreteCw<T>,
    hessian: DMatrix<T>,
    /// `G^T Qb Phi`, the linear term's dependence on the initial state.
    lin_state: DMatrix<T>,
    /// `G^T Qb` summed over stages, the dependence on the goal state.
    lin_goal: DMatrix<T>,
    step: T,
    warm: DVector<T>,
}

impl<T: Real> MpcSolver<T> {
    pub fn new(model: DiscreteCw<T>, cfg: MpcConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.horizon;
        let a = *model.a();
        let b = *model.input();
        let mut powers = Vec::with_capacity(h + 1);
        powers.push(Matrix6::identity());
        for i in 0..h {
            powers.push(a * powers[i]);
        }
        let mut g = DMatrix::zeros(6 * h, 3 * h);
        let mut phi = DMatrix::zeros(6 * h, 6);
        for i in 0..h {
            phi.view_mut((6 * i, 0), (6, 6)).copy_from(&powers[i + 1]);
            for j in 0..=i {
                g.view_mut((6 * i, 3 * j), (6, 3)).copy_from(&(powers[i - j] * b));
            }
        }
        let mut qb = DMatrix::zeros(6 * h, 6 * h);
        let mut rb = DMatrix::zeros(3 * h, 3 * h);
        let mut stack = DMatrix::zeros(6 * h, 6);
        for i in 0..h {
            qb.view_mut((6 * i, 6 * i), (6, 6)).copy_from(&cfg.q);
            rb.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&cfg.r);
            stack.view_mut((6 * i, 0), (6, 6)).copy_from(&Matrix6::identity());
        }
        let gtq = g.transpose() * &qb;
        let hessian = &gtq * &g + rb;
        let hessian = (&hessian + hessian.transpose()) / T::lit(2.0);
        let lipschitz = SymmetricEigen::new(hessian.clone())
            .eigenvalues
            .iter()
            .fold(T::zero(), |m, &v| m.max(v));
        if !(lipschitz > T::zero()) {
            return Err(config("MPC Hessian is zero; check Q and R"));
        }
        Ok(Self {
            lin_state: &gtq * phi,
            lin_goal: gtq * stack,
            hessian,
            step: T::one() / lipschitz,
            warm: DVector::zeros(3 * h),
            model,
            cfg,
        })
    }

    /// The plant model used for prediction. Simulators step with this same
    /// object so prediction and plant cannot diverge.
    pub fn model(&self) -> &DiscreteCw<T> {
        &self.model
    }

    pub fn config(&self) -> &MpcConfig<T> {
        &self.cfg
    }

    pub fn hessian(&self) -> &DMatrix<T> {
        &self.hessian
    }

    /// Linear term `g` of the QP for a given state and goal.
    pub fn gradient_offset(&self, s: &HillState<T>, goal: &GoalCommand<T>) -> DVector<T> {
        let mut goal_state = Vector6::zeros();
        goal_state.fixed_rows_mut::<3>(0).copy_from(&goal.target);
        &self.lin_state * s.to_vector() - &self.lin_goal * goal_state
    }

    pub fn cost(&self, u: &DVector<T>, g: &DVector<T>) -> T {
        (u.transpose() * (&self.hessian * u))[0] / T::lit(2.0) + g.dot(u)
    }

    fn project(&self, u: &mut DVector<T>) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.cfg.u_lb[i % 3], self.cfg.u_ub[i % 3]);
        }
    }

    /// Solves from the shifted previous solution.
    pub fn solve(&mut self, s: &HillState<T>, goal: &GoalCommand<T>) -> MpcSolution<T> {
        let h = self.cfg.horizon;
        let mut start = DVector::zeros(3 * h);
        if h > 1 {
            start
                .rows_mut(0, 3 * (h - 1))
                .copy_from(&self.warm.rows(3, 3 * (h - 1)));
            start
                .rows_mut(3 * (h - 1), 3)
                .copy_from(&self.warm.rows(3 * (h - 1), 3));
        }
        let (u, sol) = self.run(s, goal, start, None);
        self.warm = u;
        sol
    }

    /// Solves from zero inputs without touching the warm-start buffer.
    pub fn solve_cold(&self, s: &HillState<T>, goal: &GoalCommand<T>) -> MpcSolution<T> {
        self.run(s, goal, DVector::zeros(3 * self.cfg.horizon), None).1
    }

    /// Cold solve that also returns the cost after every iteration.
    pub fn solve_traced(&self, s: &HillState<T>, goal: &GoalCommand<T>) -> (MpcSolution<T>, Vec<T>) {
        let mut trace = Vec::new();
        let (_, sol) = self.run(s, goal, DVector::zeros(3 * self.cfg.horizon), Some(&mut trace));
        (sol, trace)
    }

    /// Full optimal input sequence from a cold start.
    pub fn solve_sequence(&self, s: &HillState<T>, goal: &GoalCommand<T>) -> DVector<T> {
        self.run(s, goal, DVector::zeros(3 * self.cfg.horizon), None).0
    }

    pub fn reset_warm_start(&mut self) {
        self.warm.fill(T::zero());
    }

    fn run(
        &self,
        s: &HillState<T>,
        goal: &GoalCommand<T>,
        mut u: DVector<T>,
        mut trace: Option<&mut Vec<T>>,
    ) -> (DVector<T>, MpcSolution<T>) {
        let g = self.gradient_offset(s, goal);
        self.project(&mut u);
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.cfg.max_iter {
            iterations += 1;
            let grad = &self.hessian * &u + &g;
            let mut next = &u - grad * self.step;
            self.project(&mut next);
            let change = (&next - &u).amax();
            u = next;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.cost(&u, &g));
            }
            if change < self.cfg.tol {
                converged = true;
                break;
            }
        }
        let cost = self.cost(&u, &g);
        let thrust = Vector3::new(u[0], u[1], u[2]);
        (
            u,
            MpcSolution {
                thrust,
                iterations,
                converged,
                cost,
            },
        )
    }
}

/// One-shot solve returning the first input as a thrust command over the
/// model step, plus the convergence flag.
pub fn mpc_solve<T: Real>(
    s: &HillState<T>,
    goal: &GoalCommand<T>,
    cfg: &MpcConfig<T>,
    n: T,
    dt: T,
    mass: T,
) -> Result<(ThrustCommand<T>, bool)> {
    let solver = MpcSolver::new(DiscreteCw::new(n, dt, mass)?, cfg.clone())?;
    let sol = solver.solve_cold(s, goal);
    Ok((ThrustCommand::new(sol.thrust, dt)?, sol.converged))
}
