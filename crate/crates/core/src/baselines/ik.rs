//! Per-frame inverse kinematics from marker positions or IMU orientations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmReport, LmSettings};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, point_jacobian, tree_kinematics};
use crate::math::{log_so3, Mat3, Vec3};
use crate::model::KinematicModel;
use crate::sensors::{BlockKind, CameraExtrinsics, ImuSpec, MarkerSpec, MeasurementFrame, SensorSet};

/// Where each frame's solve starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// The solution of the previous frame (the provided guess for the first).
    #[default]
    PreviousFrame,
    /// The provided guess for every frame.
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    pub max_iters: usize,
    /// rad
    pub tol: f64,
    pub initial_guess: InitialGuess,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            max_iters: 100,
            tol: 1e-10,
            initial_guess: InitialGuess::PreviousFrame,
        }
    }
}

impl IkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::field("ik.tol", "must be finite and > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::field("ik.max_iters", "must be >= 1"));
        }
        Ok(())
    }

    fn lm(&self) -> LmSettings {
        LmSettings {
            max_iters: self.max_iters,
            tol: self.tol,
            ..LmSettings::default()
        }
    }
}

fn check_q(model: &KinematicModel, q: &[f64]) -> Result<()> {
    if q.len() != model.dof() {
        return Err(Error::Dimension(format!(
            "initial guess has {} entries, model has {} joints",
            q.len(),
            model.dof()
        )));
    }
    Ok(())
}

/// Fits `q` to observed camera-frame marker positions. `observed[i]`
/// belongs to `markers[i]`.
pub fn marker_ik(
    model: &KinematicModel,
    cam: &CameraExtrinsics,
    markers: &[MarkerSpec],
    observed: &[Vec3],
    cfg: &IkConfig,
    q_init: &[f64],
) -> Result<LmReport> {
    cfg.validate()?;
    check_q(model, q_init)?;
    if markers.len() != observed.len() {
        return Err(Error::Dimension(format!(
            "{} markers but {} observed positions",
            markers.len(),
            observed.len()
        )));
    }
    if markers.is_empty() {
        return Err(Error::InvalidInput(
            "marker IK needs at least one visible marker".into(),
        ));
    }
    let residual = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let poses = forward_kinematics(model, q.as_slice())?;
        let mut r = DVector::zeros(3 * markers.len());
        for (i, (m, y)) in markers.iter().zip(observed).enumerate() {
            let p = cam.r_cn * poses[m.body].transform_point(&m.r_marker) + cam.p_c;
            r.fixed_rows_mut::<3>(3 * i).copy_from(&(p - y));
        }
        Ok(r)
    };
    let jacobian = |q: &DVector<f64>| -> Result<DMatrix<f64>> {
        let tree = tree_kinematics(model, q.as_slice(), None, None)?;
        let mut jac = DMatrix::zeros(3 * markers.len(), model.dof());
        for (i, m) in markers.iter().enumerate() {
            let block = cam.r_cn * point_jacobian(model, &tree, m.body, &m.r_marker);
            jac.view_mut((3 * i, 0), (3, model.dof())).copy_from(&block);
        }
        Ok(jac)
    };
    levenberg_marquardt(&DVector::from_column_slice(q_init), &cfg.lm(), residual, jacobian)
}

/// Model orientation `R^{ns}(q) = R^{nb}(q) R^{sb}ᵀ` of each IMU.
pub fn imu_orientations(model: &KinematicModel, imus: &[ImuSpec], q: &[f64]) -> Result<Vec<Mat3>> {
    let poses = forward_kinematics(model, q)?;
    Ok(imus
        .iter()
        .map(|imu| poses[imu.body].rotation * imu.r_sb.transpose())
        .collect())
}

/// Fits `q` to measured IMU orientations `R^{ns}` by minimizing the summed
/// squared geodesic residuals `log(R_model(q)ᵀ R_meas)`.
pub fn orientation_ik(
    model: &KinematicModel,
    imus: &[ImuSpec],
    measured: &[Mat3],
    cfg: &IkConfig,
    q_init: &[f64],
) -> Result<LmReport> {
    cfg.validate()?;
    check_q(model, q_init)?;
    if imus.len() != measured.len() {
        return Err(Error::Dimension(format!(
            "{} IMUs but {} measured orientations",
            imus.len(),
            measured.len()
        )));
    }
    if imus.is_empty() {
        return Err(Error::InvalidInput("orientation IK needs at least one IMU".into()));
    }
    for imu in imus {
        model.check_body(imu.body)?;
    }
    let residual = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let model_r = imu_orientations(model, imus, q.as_slice())?;
        let mut r = DVector::zeros(3 * imus.len());
        for (k, (rm, meas)) in model_r.iter().zip(measured).enumerate() {
            r.fixed_rows_mut::<3>(3 * k)
                .copy_from(&log_so3(&(rm.transpose() * meas)));
        }
        Ok(r)
    };
    let jacobian = |q: &DVector<f64>| -> Result<DMatrix<f64>> {
        let h = 1e-7;
        let mut jac = DMatrix::zeros(3 * imus.len(), model.dof());
        for j in 0..model.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[j] += h;
            qm[j] -= h;
            let col = (residual(&qp)? - residual(&qm)?) / (qp[j] - qm[j]);
            jac.set_column(j, &col);
        }
        Ok(jac)
    };
    levenberg_marquardt(&DVector::from_column_slice(q_init), &cfg.lm(), residual, jacobian)
}

/// Per-frame solutions of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSeries {
    pub q: Vec<DVector<f64>>,
    /// Frames that hit `max_iters` without converging.
    pub unconverged: Vec<usize>,
    /// Frames whose geometry left some joint unconstrained.
    pub rank_deficient: Vec<usize>,
}

fn solve_series<F>(frames: usize, cfg: &IkConfig, q_init: &[f64], mut solve: F) -> Result<IkSeries>
where
    F: FnMut(usize, &[f64]) -> Result<LmReport>,
{
    let mut out = IkSeries {
        q: Vec::with_capacity(frames),
        unconverged: Vec::new(),
        rank_deficient: Vec::new(),
    };
    let mut guess = q_init.to_vec();
    for i in 0..frames {
        let rep = solve(i, &guess)?;
        if !rep.converged {
            out.unconverged.push(i);
        }
        if rep.rank_deficient {
            out.rank_deficient.push(i);
        }
        if cfg.initial_guess == InitialGuess::PreviousFrame {
            guess = rep.x.as_slice().to_vec();
        }
        out.q.push(rep.x);
    }
    Ok(out)
}

/// Marker IK over measurement frames, using the unmasked marker blocks of
/// each frame.
pub fn marker_ik_series(
    model: &KinematicModel,
    sensors: &SensorSet,
    frames: &[MeasurementFrame],
    cfg: &IkConfig,
    q_init: &[f64],
) -> Result<IkSeries> {
    let layout = sensors.layout();
    solve_series(frames.len(), cfg, q_init, |i, guess| {
        let frame = &frames[i];
        frame.check(&layout)?;
        let mut specs = Vec::new();
        let mut observed = Vec::new();
        for (block, &on) in layout.blocks.iter().zip(&frame.mask) {
            if let (BlockKind::Marker(m), true) = (block.kind, on) {
                specs.push(sensors.markers[m].clone());
                observed.push(Vec3::from_column_slice(
                    &frame.y.as_slice()[block.offset..block.offset + 3],
                ));
            }
        }
        marker_ik(model, &sensors.camera, &specs, &observed, cfg, guess)
            .map_err(|e| Error::Data(format!("marker IK at frame {i}: {e}")))
    })
}

/// Orientation IK over per-frame IMU orientation sets.
pub fn orientation_ik_series(
    model: &KinematicModel,
    imus: &[ImuSpec],
    orientations: &[Vec<Mat3>],
    cfg: &IkConfig,
    q_init: &[f64],
) -> Result<IkSeries> {
    solve_series(orientations.len(), cfg, q_init, |i, guess| {
        orientation_ik(model, imus, &orientations[i], cfg, guess)
            .map_err(|e| Error::Data(format!("orientation IK at frame {i}: {e}")))
    })
}
