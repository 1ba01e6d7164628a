//! Generic nonlinear programming: a primal-dual interior-point solver
//! over problems that expose residuals with analytic first derivatives,
//! plus a finite-difference derivative checker.
//!
//! Problems are stated as
//!
//! ```text
//!   min  f(x)
//!   s.t. c_E(x)  = 0
//!        c_I(x) <= 0
//!        lb <= x <= ub
//! ```
//!
//! Inequalities receive slack variables with a logarithmic barrier;
//! search directions come from damped Newton steps on the perturbed KKT
//! system with a fraction-to-boundary rule and a monotone barrier
//! schedule. Everything is deterministic for fixed inputs.

mod fd;
mod ipm;
mod linalg;

pub use fd::{check_gradients, CheckedComponent, GradCheckReport};
pub use linalg::{min_degree_order, DenseLdl, SparseLdl};

use std::path::PathBuf;
use std::time::Duration;

/// Fixed sparsity pattern of a residual Jacobian in triplet form; values
/// are produced in exactly this entry order.
#[derive(Debug, Clone)]
pub struct JacobianPattern {
    pub rows: usize,
    pub entries: Vec<(usize, usize)>,
}

impl JacobianPattern {
    pub fn empty() -> Self {
        Self { rows: 0, entries: Vec::new() }
    }
}

/// A nonlinear program with analytic first derivatives and an optional
/// Hessian-of-Lagrangian approximation. When no Hessian is provided the
/// solver falls back to a damped BFGS model (dense; small problems only).
pub trait NlpProblem: Sync {
    fn n_vars(&self) -> usize;

    /// Fills variable bounds; use infinities for free variables.
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]);

    fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64;

    fn eq_pattern(&self) -> JacobianPattern;

    fn ineq_pattern(&self) -> JacobianPattern;

    /// Residuals (and, when requested, Jacobian values in pattern order;
    /// the callee clears and refills the vector).
    fn eval_eq(&self, x: &[f64], res: &mut [f64], jac: Option<&mut Vec<f64>>);

    fn eval_ineq(&self, x: &[f64], res: &mut [f64], jac: Option<&mut Vec<f64>>);

    /// Lower-triangular pattern of the Lagrangian Hessian approximation
    /// `obj_w * f''(x) + sum y_i c_E_i''(x) + sum z_j c_I_j''(x)`.
    fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
        None
    }

    /// Values for [`Self::hessian_pattern`]; `y` and `z` are the current
    /// equality and inequality multipliers.
    fn eval_hessian(&self, _x: &[f64], _obj_w: f64, _y: &[f64], _z: &[f64], _vals: &mut Vec<f64>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    /// Equality multipliers at the final iterate.
    pub mult_eq: Vec<f64>,
    /// Multipliers of the user inequality rows.
    pub mult_ineq: Vec<f64>,
    /// Multipliers of the internal bound rows (for warm starts).
    pub mult_bounds: Vec<f64>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn dual_estimate(&self) -> DualEstimate {
        DualEstimate {
            eq: self.mult_eq.clone(),
            ineq: self.mult_ineq.clone(),
            bounds: self.mult_bounds.clone(),
        }
    }
}

/// Multiplier estimates carried between consecutive solves.
#[derive(Debug, Clone)]
pub struct DualEstimate {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Scaled KKT residual required for `Optimal`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub mu_init: f64,
    /// Optional line-delimited JSON iteration log.
    pub iteration_log: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, mu_init: 0.1, iteration_log: None }
    }
}

impl SolveOptions {
    pub fn warm() -> Self {
        Self { mu_init: 1e-4, ..Self::default() }
    }
}

/// Solves the program from `x0` (clipped into the bounds).
pub fn solve(problem: &dyn NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveResult {
    ipm::solve_ipm(problem, x0, None, opts)
}

/// Like [`solve`], additionally seeding the multipliers.
pub fn solve_warm(
    problem: &dyn NlpProblem,
    x0: &[f64],
    duals: Option<&DualEstimate>,
    opts: &SolveOptions,
) -> SolveResult {
    ipm::solve_ipm(problem, x0, duals, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// min x² subject to x >= 1.
    struct BoundQp;

    impl NlpProblem for BoundQp {
        fn n_vars(&self) -> usize {
            1
        }
        fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
            lower[0] = 1.0;
            upper[0] = f64::INFINITY;
        }
        fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
            if let Some(g) = grad {
                g[0] = 2.0 * x[0];
            }
            x[0] * x[0]
        }
        fn eq_pattern(&self) -> JacobianPattern {
            JacobianPattern::empty()
        }
        fn ineq_pattern(&self) -> JacobianPattern {
            JacobianPattern::empty()
        }
        fn eval_eq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
        fn eval_ineq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
        fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
            Some(vec![(0, 0)])
        }
        fn eval_hessian(&self, _: &[f64], obj_w: f64, _: &[f64], _: &[f64], vals: &mut Vec<f64>) {
            vals.clear();
            vals.push(2.0 * obj_w);
        }
    }

    #[test]
    fn active_bound_quadratic() {
        let r = solve(&BoundQp, &[5.0], &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.objective, 1.0, epsilon = 1e-6);
    }

    /// min ||x - c||² subject to sum x = 0; optimum is c - mean(c).
    struct ProjectionQp {
        c: Vec<f64>,
    }

    impl NlpProblem for ProjectionQp {
        fn n_vars(&self) -> usize {
            self.c.len()
        }
        fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
            lower.fill(f64::NEG_INFINITY);
            upper.fill(f64::INFINITY);
        }
        fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
            if let Some(g) = grad {
                for i in 0..x.len() {
                    g[i] = 2.0 * (x[i] - self.c[i]);
                }
            }
            x.iter().zip(&self.c).map(|(a, b)| (a - b) * (a - b)).sum()
        }
        fn eq_pattern(&self) -> JacobianPattern {
            JacobianPattern { rows: 1, entries: (0..self.c.len()).map(|j| (0, j)).collect() }
        }
        fn ineq_pattern(&self) -> JacobianPattern {
            JacobianPattern::empty()
        }
        fn eval_eq(&self, x: &[f64], res: &mut [f64], jac: Option<&mut Vec<f64>>) {
            res[0] = x.iter().sum();
            if let Some(v) = jac {
                v.clear();
                v.extend(std::iter::repeat(1.0).take(x.len()));
            }
        }
        fn eval_ineq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
        fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
            Some((0..self.c.len()).map(|j| (j, j)).collect())
        }
        fn eval_hessian(&self, _: &[f64], obj_w: f64, _: &[f64], _: &[f64], vals: &mut Vec<f64>) {
            vals.clear();
            vals.extend(std::iter::repeat(2.0 * obj_w).take(self.c.len()));
        }
    }

    #[test]
    fn projection_onto_hyperplane() {
        let c = vec![3.0, -1.0, 2.0, 0.5];
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let p = ProjectionQp { c: c.clone() };
        let r = solve(&p, &[0.0; 4], &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        for (xi, ci) in r.x.iter().zip(&c) {
            assert_abs_diff_eq!(*xi, ci - mean, epsilon = 1e-6);
        }
    }

    /// Rosenbrock, unconstrained, solved through the BFGS fallback.
    struct Rosenbrock;

    impl NlpProblem for Rosenbrock {
        fn n_vars(&self) -> usize {
            2
        }
        fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
            lower.fill(f64::NEG_INFINITY);
            upper.fill(f64::INFINITY);
        }
        fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
            let (a, b) = (1.0, 100.0);
            if let Some(g) = grad {
                g[0] = -2.0 * (a - x[0]) - 4.0 * b * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 2.0 * b * (x[1] - x[0] * x[0]);
            }
            (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
        }
        fn eq_pattern(&self) -> JacobianPattern {
            JacobianPattern::empty()
        }
        fn ineq_pattern(&self) -> JacobianPattern {
            JacobianPattern::empty()
        }
        fn eval_eq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
        fn eval_ineq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
    }

    #[test]
    fn rosenbrock_via_bfgs() {
        let opts = SolveOptions { max_iter: 500, ..Default::default() };
        let r = solve(&Rosenbrock, &[-1.2, 1.0], &opts);
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-5);
        assert!(r.objective < 1e-6);
    }

    #[test]
    fn determinism_identical_runs() {
        let p = ProjectionQp { c: vec![1.0, -2.0, 0.3] };
        let a = solve(&p, &[0.4, 0.1, -0.2], &SolveOptions::default());
        let b = solve(&p, &[0.4, 0.1, -0.2], &SolveOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn gradient_checker_flags_corruption() {
        struct Corrupted;
        impl NlpProblem for Corrupted {
            fn n_vars(&self) -> usize {
                2
            }
            fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
                lower.fill(f64::NEG_INFINITY);
                upper.fill(f64::INFINITY);
            }
            fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
                if let Some(g) = grad {
                    g[0] = 2.0 * x[0];
                    g[1] = 2.0 * x[1];
                }
                x[0] * x[0] + x[1] * x[1]
            }
            fn eq_pattern(&self) -> JacobianPattern {
                JacobianPattern::empty()
            }
            fn ineq_pattern(&self) -> JacobianPattern {
                JacobianPattern { rows: 1, entries: vec![(0, 0), (0, 1)] }
            }
            fn eval_eq(&self, _: &[f64], _: &mut [f64], _: Option<&mut Vec<f64>>) {}
            fn eval_ineq(&self, x: &[f64], res: &mut [f64], jac: Option<&mut Vec<f64>>) {
                res[0] = x[0] + 3.0 * x[1] - 1.0;
                if let Some(v) = jac {
                    v.clear();
                    v.push(1.0);
                    v.push(2.9); // deliberately wrong (should be 3.0)
                }
            }
        }
        let rep = check_gradients(&Corrupted, &[0.3, -0.4], 1e-6);
        assert!(rep.max_rel_err >= 1e-2);
        assert_eq!(rep.component, CheckedComponent::IneqJacobian);
        assert_eq!((rep.row, rep.col), (0, 1));

        // And a clean quadratic passes at machine-level accuracy.
        let rep = check_gradients(&ProjectionQp { c: vec![1.0, 2.0] }, &[0.2, -0.7], 1e-6);
        assert!(rep.max_rel_err <= 1e-9, "{rep:?}");
    }
}
