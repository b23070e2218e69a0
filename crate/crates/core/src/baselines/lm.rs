//! Levenberg–Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iters: usize,
    /// Converged when the accepted step norm falls below this.
    pub tol: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            max_iters: 100,
            tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: DVector<f64>,
    /// Number of Jacobian evaluations.
    pub iterations: usize,
    pub converged: bool,
    /// `JᵀJ` was numerically singular at the solution; the damped step was
    /// used but the problem is under-constrained.
    pub rank_deficient: bool,
    /// `½‖r‖²` at the start and after every accepted step.
    pub cost_history: Vec<f64>,
}

impl LmReport {
    pub fn cost(&self) -> f64 {
        *self.cost_history.last().expect("history starts with the initial cost")
    }
}

fn half_norm2(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimizes `½‖r(x)‖²`. `residual` and `jacobian` are evaluated at the same
/// points; only steps that reduce the cost are accepted, so the recorded
/// cost history is non-increasing.
pub fn levenberg_marquardt<R, J>(x0: &DVector<f64>, settings: &LmSettings, residual: R, jacobian: J) -> Result<LmReport>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    if !(settings.tol > 0.0) {
        return Err(Error::field("ik.tol", "must be > 0"));
    }
    let n = x0.len();
    let mut x = x0.clone();
    let mut r = residual(&x)?;
    let mut cost = half_norm2(&r);
    let mut report = LmReport {
        x: x.clone(),
        iterations: 0,
        converged: false,
        rank_deficient: false,
        cost_history: vec![cost],
    };
    let mut lambda = settings.initial_damping;

    while report.iterations < settings.max_iters {
        report.iterations += 1;
        let jac = jacobian(&x)?;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 {
            report.converged = true;
            break;
        }
        let scale = jtj.diagonal().amax().max(f64::MIN_POSITIVE);

        // Raise the damping until a step lowers the cost.
        let mut accepted = None;
        for _ in 0..40 {
            let damped = &jtj + DMatrix::identity(n, n) * (lambda * scale);
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let candidate = &x + &step;
            let r_new = residual(&candidate)?;
            let c_new = half_norm2(&r_new);
            if c_new.is_finite() && c_new <= cost {
                accepted = Some((candidate, r_new, c_new, step.norm()));
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        let Some((xn, rn, cn, step_norm)) = accepted else {
            // No descent possible at any damping: a (local) minimum.
            report.converged = true;
            break;
        };
        x = xn;
        r = rn;
        cost = cn;
        report.cost_history.push(cost);
        if step_norm < settings.tol {
            report.converged = true;
            break;
        }
    }

    let jac = jacobian(&x)?;
    let eig = (jac.transpose() * &jac).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    report.rank_deficient = n > 0 && (hi <= 0.0 || lo <= 1e-12 * hi);
    report.x = x;
    Ok(report)
}
