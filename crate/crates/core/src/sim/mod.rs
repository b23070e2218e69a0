//! Ground-truth generation for the digital twins and experiment runs.

mod experiment;
mod spline;

pub use experiment::{
    mask_markers, run_experiment, run_experiment_in_memory, simulate_experiment, with_zero_torque_rows,
    write_simulation, ExperimentReport, ExperimentSpec, FilterSettings, FilterSummary, IdSettings, IkSettings, Method,
    MethodResult, RmsdRow, Scenario, Simulation, REFERENCE_METHOD,
};
pub use spline::{Knot, KnotSpec, QuinticSpline, SplineSample};

use std::path::Path;

use nalgebra::DVector;

use crate::dynamics::{forward_dynamics, inverse_dynamics};
use crate::error::{Error, Result};
use crate::io::{parse_model, ModelFile};
use crate::model::KinematicModel;
use crate::trajectory::{Trajectory, TrajectoryMetadata};

/// Integration substeps per recorded sample.
pub const SUBSTEPS: usize = 10;

const PENDULUM3: &str = include_str!("../../models/pendulum3.toml");
const ARM6: &str = include_str!("../../models/arm6.toml");

/// The passive triple-pendulum twin with its IMUs and markers.
pub fn pendulum_twin() -> ModelFile {
    parse_model(PENDULUM3, Path::new("models/pendulum3.toml")).expect("shipped model is valid")
}

/// The six-axis arm twin with its IMUs and markers.
pub fn arm_twin() -> ModelFile {
    parse_model(ARM6, Path::new("models/arm6.toml")).expect("shipped model is valid")
}

/// Looks up a shipped model by file name (`pendulum3.toml`, `arm6.toml`).
pub fn builtin_model(name: &str) -> Option<&'static str> {
    match name.rsplit('/').next()? {
        "pendulum3.toml" | "pendulum3" => Some(PENDULUM3),
        "arm6.toml" | "arm6" => Some(ARM6),
        _ => None,
    }
}

/// Number of samples for a run of `duration` at `dt`, including both ends.
pub fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::field("dt", "must be finite and > 0"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::field("duration", "must be finite and >= 0"));
    }
    let steps = duration / dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::field("duration", "must be an integer multiple of dt"));
    }
    Ok(steps.round() as usize + 1)
}

fn joint_vector(model: &KinematicModel, name: &str, v: &[f64]) -> Result<DVector<f64>> {
    if v.len() != model.dof() {
        return Err(Error::Dimension(format!(
            "{name} has {} entries, model has {} joints",
            v.len(),
            model.dof()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} must be finite")));
    }
    Ok(DVector::from_column_slice(v))
}

fn passive_rk4(
    model: &KinematicModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
    zero: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let acc = |q: &DVector<f64>, v: &DVector<f64>| forward_dynamics(model, q.as_slice(), v.as_slice(), zero);
    let a1 = acc(q, v)?;
    let (q2, v2) = (q + v * (0.5 * h), v + &a1 * (0.5 * h));
    let a2 = acc(&q2, &v2)?;
    let (q3, v3) = (q + &v2 * (0.5 * h), v + &a2 * (0.5 * h));
    let a3 = acc(&q3, &v3)?;
    let (q4, v4) = (q + &v3 * h, v + &a3 * h);
    let a4 = acc(&q4, &v4)?;
    let q_next = q + (v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
    let v_next = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    Ok((q_next, v_next))
}

/// Free motion with zero joint torque from `(q0, q̇0)`, integrated with RK4
/// at `dt / SUBSTEPS` and recorded every `dt`. `q̈` comes from forward
/// dynamics at each recorded sample.
pub fn generate_passive(
    model: &KinematicModel,
    q0: &[f64],
    qdot0: &[f64],
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = sample_count(duration, dt)?;
    let mut q = joint_vector(model, "q0", q0)?;
    let mut v = joint_vector(model, "qdot0", qdot0)?;
    let zero = vec![0.0; model.dof()];
    let h = dt / SUBSTEPS as f64;

    let mut traj = Trajectory {
        t: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        qdot: Vec::with_capacity(n),
        qddot: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        metadata: TrajectoryMetadata {
            scenario: "passive_release".into(),
            seed: None,
        },
    };
    for i in 0..n {
        if i > 0 {
            for s in 0..SUBSTEPS {
                let step = (i - 1) * SUBSTEPS + s;
                (q, v) = passive_rk4(model, &q, &v, h, &zero).map_err(|_| Error::Diverged { step })?;
                if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::Diverged { step });
                }
            }
        }
        let a = forward_dynamics(model, q.as_slice(), v.as_slice(), &zero)?;
        traj.t.push(i as f64 * dt);
        traj.q.push(q.clone());
        traj.qdot.push(v.clone());
        traj.qddot.push(a);
        traj.tau.push(DVector::zeros(model.dof()));
    }
    Ok(traj)
}

/// Samples a prescribed motion and the torques that realize it.
pub fn generate_prescribed(
    model: &KinematicModel,
    spline: &QuinticSpline,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    if spline.dof() != model.dof() {
        return Err(Error::Dimension(format!(
            "spline has {} joints, model has {}",
            spline.dof(),
            model.dof()
        )));
    }
    let n = sample_count(duration, dt)?;
    let t0 = spline.start();
    let mut traj = Trajectory {
        t: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        qdot: Vec::with_capacity(n),
        qddot: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        metadata: TrajectoryMetadata {
            scenario: "prescribed".into(),
            seed: None,
        },
    };
    for i in 0..n {
        let t = i as f64 * dt;
        let s = spline.sample(t0 + t)?;
        let tau = inverse_dynamics(model, s.q.as_slice(), s.qdot.as_slice(), s.qddot.as_slice())?;
        traj.t.push(t);
        traj.q.push(s.q);
        traj.qdot.push(s.qdot);
        traj.qddot.push(s.qddot);
        traj.tau.push(tau);
    }
    Ok(traj)
}

/// Root-mean-square difference of two equally long series.
pub fn rmsd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("rmsd of empty series".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}
