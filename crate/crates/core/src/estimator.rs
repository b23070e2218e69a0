//! Iterated extended Kalman filter over the state `x = (q, q̇, τ)`.
//!
//! The time update integrates `ẋ = (q̇, M⁻¹(τ − τ_I), 0)` with one fixed RK4
//! step and propagates the covariance through the perturbation Jacobian of
//! that discrete map, so `Q` is a per-step covariance. Torques follow a
//! random walk driven by `Q`. The measurement update relinearizes the
//! stacked sensor model `ε` times about the refined estimate.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::forward_dynamics;
use crate::error::{Error, Result};
use crate::math::symmetrize;
use crate::model::KinematicModel;
use crate::sensors::perturbation_jacobian;
use crate::sensors::{JacobianSettings, MeasurementEvaluator, MeasurementFrame, SensorSet};
use crate::state::StateVector;
use crate::trajectory::EstimateSeries;

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Per-step process noise covariance, 3·dof square.
    pub q: DMatrix<f64>,
    /// Measurement covariance for the full sensor layout.
    pub r: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    pub x0: StateVector,
    /// Time of `x0`.
    pub t0: f64,
    /// Number of measurement-update iterations (ε ≥ 1).
    pub iterations: usize,
    pub dt: f64,
    pub jacobian: JacobianSettings,
    /// Use the Joseph form for the posterior covariance.
    pub joseph: bool,
}

pub const DEFAULT_ITERATIONS: usize = 3;
pub const DEFAULT_Q_ANGLE: f64 = 1e-8;
pub const DEFAULT_Q_RATE: f64 = 1e-6;

/// Diagonal per-step process noise with variances `[q_angle, q_rate,
/// q_tau]` per joint.
pub fn process_noise(dof: usize, q_angle: f64, q_rate: f64, q_tau: f64) -> DMatrix<f64> {
    let mut diag = DVector::zeros(3 * dof);
    diag.rows_mut(0, dof).fill(q_angle);
    diag.rows_mut(dof, dof).fill(q_rate);
    diag.rows_mut(2 * dof, dof).fill(q_tau);
    DMatrix::from_diagonal(&diag)
}

fn check_psd(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::field(name, "entries must be finite"));
    }
    if crate::math::max_asymmetry(m) > 1e-10 {
        return Err(Error::field(name, "must be symmetric"));
    }
    if dim > 0 && crate::math::min_eigenvalue(m) < -1e-10 {
        return Err(Error::field(name, "must be positive semidefinite"));
    }
    Ok(())
}

impl FilterConfig {
    pub fn validate(&self, dof: usize, meas_dim: usize) -> Result<()> {
        if self.x0.dof() != dof {
            return Err(Error::Dimension(format!(
                "x0 has {} degrees of freedom, model has {dof}",
                self.x0.dof()
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::field("x0", "entries must be finite"));
        }
        check_psd("Q", &self.q, 3 * dof)?;
        check_psd("P0", &self.p0, 3 * dof)?;
        check_psd("R", &self.r, meas_dim)?;
        if self.iterations == 0 {
            return Err(Error::field("epsilon", "must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::field("dt", "must be finite and > 0"));
        }
        if !self.t0.is_finite() {
            return Err(Error::field("t0", "must be finite"));
        }
        self.jacobian.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `y − h(x̌)` over the active rows of the last processed frame.
    pub innovation: DVector<f64>,
    /// `‖x̄^{k+1} − x̄^k‖` for each iteration.
    pub iteration_deltas: Vec<f64>,
    /// The innovation covariance needed diagonal loading to factorize.
    pub regularized: bool,
    pub active_rows: usize,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: StateVector,
    pub p_hat: DMatrix<f64>,
    pub t: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// The initial state followed by one entry per processed frame.
    pub states: Vec<FilterState>,
}

/// Continuous-time state derivative `(q̇, q̈(x), 0)`.
pub fn state_derivative(model: &KinematicModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.dof();
    if x.len() != 3 * n {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {}",
            x.len(),
            3 * n
        )));
    }
    let qddot = forward_dynamics(
        model,
        &x.as_slice()[..n],
        &x.as_slice()[n..2 * n],
        &x.as_slice()[2 * n..],
    )?;
    let mut dx = DVector::zeros(3 * n);
    dx.rows_mut(0, n).copy_from(&x.rows(n, n));
    dx.rows_mut(n, n).copy_from(&qddot);
    Ok(dx)
}

/// One classical RK4 step of the process model.
pub fn rk4_step(model: &KinematicModel, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let k1 = state_derivative(model, x)?;
    let k2 = state_derivative(model, &(x + &k1 * (0.5 * dt)))?;
    let k3 = state_derivative(model, &(x + &k2 * (0.5 * dt)))?;
    let k4 = state_derivative(model, &(x + &k3 * dt))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("process model produced a non-finite state".into()));
    }
    Ok(next)
}

/// Predicted state `Φ(x̂)` and covariance `G P̂ Gᵀ + Q`.
pub fn time_update(
    model: &KinematicModel,
    cfg: &FilterConfig,
    x_hat: &StateVector,
    p_hat: &DMatrix<f64>,
) -> Result<(StateVector, DMatrix<f64>)> {
    let x = x_hat.to_vector();
    let x_check = rk4_step(model, &x, cfg.dt)?;
    let g = perturbation_jacobian(&x, &cfg.jacobian, |xp| rk4_step(model, xp, cfg.dt))?;
    let mut p_check = &g * p_hat * g.transpose() + &cfg.q;
    symmetrize(&mut p_check);
    Ok((StateVector::from_vector(&x_check)?, p_check))
}

/// Solves `K S = P Hᵀ` for `K` with a Cholesky factorization of the
/// symmetric innovation covariance, loading the diagonal if needed.
fn kalman_gain(p_ht: &DMatrix<f64>, s: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(chol) = s.clone().cholesky() {
        return (chol.solve(&p_ht.transpose()).transpose(), false);
    }
    let n = s.nrows();
    let scale = (s.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut load = 1e-12 * scale;
    loop {
        let loaded = s + DMatrix::identity(n, n) * load;
        if let Some(chol) = loaded.cholesky() {
            return (chol.solve(&p_ht.transpose()).transpose(), true);
        }
        load *= 10.0;
    }
}

/// Iterated measurement update of `(x̌, P̌)` with one frame.
pub fn measurement_update(
    model: &KinematicModel,
    sensors: &SensorSet,
    cfg: &FilterConfig,
    x_check: &StateVector,
    p_check: &DMatrix<f64>,
    frame: &MeasurementFrame,
) -> Result<(StateVector, DMatrix<f64>, Diagnostics)> {
    let layout = sensors.layout();
    frame.check(&layout)?;
    let rows = layout.active_rows(&frame.mask);
    let nx = 3 * model.dof();
    if rows.is_empty() {
        return Ok((x_check.clone(), p_check.clone(), Diagnostics::default()));
    }

    let y = frame.y.select_rows(&rows);
    let r = cfg.r.select_rows(&rows).select_columns(&rows);
    let eval = MeasurementEvaluator::new(model, sensors);
    let mask = Some(frame.mask.as_slice());
    let predict = |xv: &DVector<f64>| eval.predict(&StateVector::from_vector(xv)?, mask);

    let xc = x_check.to_vector();
    let mut x_bar = xc.clone();
    let mut diag = Diagnostics {
        active_rows: rows.len(),
        ..Default::default()
    };
    let mut last: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    for k in 0..cfg.iterations {
        let h = predict(&x_bar)?;
        let jac = perturbation_jacobian(&x_bar, &cfg.jacobian, predict)?;
        let p_ht = p_check * jac.transpose();
        let s = &jac * &p_ht + &r;
        let (gain, regularized) = kalman_gain(&p_ht, &s);
        diag.regularized |= regularized;

        let residual = &y - &h;
        if k == 0 {
            diag.innovation = residual.clone();
        }
        let next = &xc + &gain * (residual - &jac * (&xc - &x_bar));
        diag.iteration_deltas.push((&next - &x_bar).norm());
        x_bar = next;
        last = Some((gain, jac));
    }

    let (gain, jac) = last.expect("at least one iteration");
    let i_kh = DMatrix::identity(nx, nx) - &gain * &jac;
    let mut p_hat = if cfg.joseph {
        &i_kh * p_check * i_kh.transpose() + &gain * &r * gain.transpose()
    } else {
        &i_kh * p_check
    };
    symmetrize(&mut p_hat);
    if x_bar.iter().any(|v| !v.is_finite()) || p_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "measurement update at t={} produced a non-finite estimate",
            frame.t
        )));
    }
    Ok((StateVector::from_vector(&x_bar)?, p_hat, diag))
}

/// Runs the filter over time-ordered frames on the `dt` grid starting at
/// `cfg.t0`. A frame at the current filter time is applied without a
/// prediction; frames with every block masked only advance the prediction.
pub fn run_filter(
    model: &KinematicModel,
    sensors: &SensorSet,
    cfg: &FilterConfig,
    frames: &[MeasurementFrame],
) -> Result<FilterRun> {
    sensors.validate(model)?;
    let layout = sensors.layout();
    cfg.validate(model.dof(), layout.dim)?;

    let mut state = FilterState {
        x_hat: cfg.x0.clone(),
        p_hat: cfg.p0.clone(),
        t: cfg.t0,
        diagnostics: Diagnostics::default(),
    };
    let mut states = Vec::with_capacity(frames.len() + 1);
    states.push(state.clone());

    let mut step_index: i64 = 0;
    for (i, frame) in frames.iter().enumerate() {
        frame.check(&layout)?;
        let steps_f = (frame.t - cfg.t0) / cfg.dt;
        let target = steps_f.round();
        if !steps_f.is_finite() || (steps_f - target).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "frame {i} at t={} is not on the filter grid (t0={}, dt={})",
                frame.t, cfg.t0, cfg.dt
            )));
        }
        let target = target as i64;
        let first_at_t0 = i == 0 && target == step_index;
        if target < step_index || (target == step_index && !first_at_t0) {
            return Err(Error::NonMonotone { frame: i });
        }

        let (mut x, mut p) = (state.x_hat.clone(), state.p_hat.clone());
        while step_index < target {
            (x, p) = time_update(model, cfg, &x, &p)?;
            step_index += 1;
        }
        let diagnostics = if frame.any_active() {
            let (xu, pu, d) = measurement_update(model, sensors, cfg, &x, &p, frame)?;
            x = xu;
            p = pu;
            d
        } else {
            Diagnostics::default()
        };
        state = FilterState {
            x_hat: x,
            p_hat: p,
            t: cfg.t0 + step_index as f64 * cfg.dt,
            diagnostics,
        };
        states.push(state.clone());
    }
    Ok(FilterRun { states })
}

impl FilterRun {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Estimates aligned with the frames, dropping the initial state.
    pub fn frame_estimates(&self) -> &[FilterState] {
        &self.states[1..]
    }
}

impl FilterRun {
    /// Estimates and marginal variances, including the initial state.
    pub fn to_series(&self, method: &str) -> EstimateSeries {
        EstimateSeries {
            method: method.to_string(),
            t: self.times(),
            q: self.states.iter().map(|s| s.x_hat.q.clone()).collect(),
            qdot: self.states.iter().map(|s| s.x_hat.qdot.clone()).collect(),
            tau: self.states.iter().map(|s| s.x_hat.tau.clone()).collect(),
            variance: Some(self.states.iter().map(|s| s.p_hat.diagonal()).collect()),
        }
    }
}
