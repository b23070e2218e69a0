//! Two-step kinetics: smooth and differentiate joint angles, then apply
//! inverse dynamics frame by frame.

use nalgebra::DVector;

use super::filtering::LowPass;
use crate::dynamics::inverse_dynamics;
use crate::error::{Error, Result};
use crate::model::KinematicModel;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseDynamicsSeries {
    /// Joint angles after smoothing.
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub qddot: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
    /// Samples whose derivatives use one-sided differences.
    pub one_sided: Vec<bool>,
}

/// `q̇` and `q̈` of a uniformly sampled series: central differences inside,
/// second-order one-sided differences at the first and last sample.
pub fn differentiate(q: &[DVector<f64>], dt: f64) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let n = q.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "differentiation needs at least 4 samples, got {n}"
        )));
    }
    let mut qdot = Vec::with_capacity(n);
    let mut qddot = Vec::with_capacity(n);
    for i in 0..n {
        let (v, a) = if i == 0 {
            (
                (-3.0 * &q[0] + 4.0 * &q[1] - &q[2]) / (2.0 * dt),
                (2.0 * &q[0] - 5.0 * &q[1] + 4.0 * &q[2] - &q[3]) / (dt * dt),
            )
        } else if i == n - 1 {
            (
                (3.0 * &q[n - 1] - 4.0 * &q[n - 2] + &q[n - 3]) / (2.0 * dt),
                (2.0 * &q[n - 1] - 5.0 * &q[n - 2] + 4.0 * &q[n - 3] - &q[n - 4]) / (dt * dt),
            )
        } else {
            (
                (&q[i + 1] - &q[i - 1]) / (2.0 * dt),
                (&q[i + 1] - 2.0 * &q[i] + &q[i - 1]) / (dt * dt),
            )
        };
        qdot.push(v);
        qddot.push(a);
    }
    Ok((qdot, qddot))
}

/// Low-pass filters each joint angle with `filter` (skipped when `None`),
/// differentiates, and returns the inverse-dynamics torques.
pub fn ik_id_pipeline(
    model: &KinematicModel,
    q: &[DVector<f64>],
    dt: f64,
    filter: Option<&LowPass>,
) -> Result<InverseDynamicsSeries> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::field("dt", "must be finite and > 0"));
    }
    let dof = model.dof();
    if let Some(bad) = q.iter().position(|v| v.len() != dof) {
        return Err(Error::Dimension(format!("q at sample {bad} has the wrong length")));
    }
    let smoothed = match filter {
        None => q.to_vec(),
        Some(f) => {
            let mut out = vec![DVector::zeros(dof); q.len()];
            for j in 0..dof {
                let col: Vec<f64> = q.iter().map(|v| v[j]).collect();
                for (i, v) in f.filtfilt(&col, 1.0 / dt)?.into_iter().enumerate() {
                    out[i][j] = v;
                }
            }
            out
        }
    };
    let (qdot, qddot) = differentiate(&smoothed, dt)?;
    let tau = (0..smoothed.len())
        .map(|i| inverse_dynamics(model, smoothed[i].as_slice(), qdot[i].as_slice(), qddot[i].as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let n = smoothed.len();
    Ok(InverseDynamicsSeries {
        q: smoothed,
        qdot,
        qddot,
        tau,
        one_sided: (0..n).map(|i| i == 0 || i == n - 1).collect(),
    })
}
