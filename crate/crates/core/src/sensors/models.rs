use nalgebra::DVector;

use super::{BlockKind, CameraExtrinsics, ImuSpec, MarkerSpec, SensorSet};
use crate::dynamics::forward_dynamics;
use crate::error::{Error, Result};
use crate::kinematics::{tree_kinematics, TreeKinematics};
use crate::math::Vec3;
use crate::model::KinematicModel;
use crate::state::StateVector;

fn gyro_from_tree(tree: &TreeKinematics, imu: &ImuSpec) -> Vec3 {
    let kin = &tree.bodies[imu.body];
    imu.r_sb * (kin.pose.rotation.transpose() * kin.rates.angular)
}

fn accel_from_tree(tree: &TreeKinematics, imu: &ImuSpec, gravity: &Vec3) -> Vec3 {
    let kin = &tree.bodies[imu.body];
    let a = kin.point(&imu.r_bs).acceleration;
    imu.r_sb * (kin.pose.rotation.transpose() * (a - gravity))
}

fn marker_from_tree(tree: &TreeKinematics, cam: &CameraExtrinsics, marker: &MarkerSpec) -> Vec3 {
    let pose = &tree.bodies[marker.body].pose;
    cam.r_cn * (pose.position + pose.rotation * marker.r_marker) + cam.p_c
}

fn check_state(model: &KinematicModel, x: &StateVector) -> Result<()> {
    if x.dof() != model.dof() {
        return Err(Error::Dimension(format!(
            "state has {} degrees of freedom, model has {}",
            x.dof(),
            model.dof()
        )));
    }
    Ok(())
}

/// Gyroscope reading `R^{sb} R^{bn}(q) ω^n_b(q, q̇)`.
pub fn h_gyro(model: &KinematicModel, imu: &ImuSpec, x: &StateVector) -> Result<Vec3> {
    check_state(model, x)?;
    model.check_body(imu.body)?;
    let tree = tree_kinematics(model, x.q.as_slice(), Some(x.qdot.as_slice()), None)?;
    Ok(gyro_from_tree(&tree, imu))
}

/// Specific force `R^{sb} R^{bn}(q) (a^n_s(x) − g^n)`, with `q̈` taken from
/// forward dynamics so the reading depends on the torque states.
pub fn h_accel(model: &KinematicModel, imu: &ImuSpec, x: &StateVector) -> Result<Vec3> {
    check_state(model, x)?;
    model.check_body(imu.body)?;
    let qddot = forward_dynamics(model, x.q.as_slice(), x.qdot.as_slice(), x.tau.as_slice())?;
    let tree = tree_kinematics(model, x.q.as_slice(), Some(x.qdot.as_slice()), Some(qddot.as_slice()))?;
    Ok(accel_from_tree(&tree, imu, &model.gravity()))
}

/// Marker position in the camera frame.
pub fn h_marker(model: &KinematicModel, cam: &CameraExtrinsics, marker: &MarkerSpec, x: &StateVector) -> Result<Vec3> {
    check_state(model, x)?;
    model.check_body(marker.body)?;
    let tree = tree_kinematics(model, x.q.as_slice(), None, None)?;
    Ok(marker_from_tree(&tree, cam, marker))
}

/// Predicted virtual torque reading; the observation paired with it is
/// always zero.
pub fn h_zero_torque(joint: usize, x: &StateVector) -> Result<f64> {
    x.tau
        .get(joint)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("joint index {joint} out of range for a {}-dof state", x.dof())))
}

/// Evaluates stacked measurement predictions for a fixed model and sensor
/// set.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementEvaluator<'a> {
    pub model: &'a KinematicModel,
    pub sensors: &'a SensorSet,
}

impl<'a> MeasurementEvaluator<'a> {
    pub fn new(model: &'a KinematicModel, sensors: &'a SensorSet) -> Self {
        MeasurementEvaluator { model, sensors }
    }

    fn write_block(&self, tree: &TreeKinematics, tau: &[f64], kind: BlockKind, out: &mut [f64]) {
        let v = match kind {
            BlockKind::Gyro(k) => gyro_from_tree(tree, &self.sensors.imus[k]),
            BlockKind::Accel(k) => accel_from_tree(tree, &self.sensors.imus[k], &self.model.gravity()),
            BlockKind::Marker(m) => marker_from_tree(tree, &self.sensors.camera, &self.sensors.markers[m]),
            BlockKind::Torque(t) => {
                out[0] = tau[self.sensors.torque_joints[t]];
                return;
            }
        };
        out.copy_from_slice(v.as_slice());
    }

    /// Stacked predictions for the active blocks of `mask` (all blocks when
    /// `None`). Forward dynamics runs only when an accelerometer is active.
    pub fn predict(&self, x: &StateVector, mask: Option<&[bool]>) -> Result<DVector<f64>> {
        check_state(self.model, x)?;
        let layout = self.sensors.layout();
        let full = layout.all_active();
        let mask = mask.unwrap_or(&full);
        layout.check_mask(mask)?;

        let needs_accel = layout
            .blocks
            .iter()
            .zip(mask)
            .any(|(b, &on)| on && matches!(b.kind, BlockKind::Accel(_)));
        let qddot = if needs_accel {
            Some(forward_dynamics(
                self.model,
                x.q.as_slice(),
                x.qdot.as_slice(),
                x.tau.as_slice(),
            )?)
        } else {
            None
        };
        let tree = tree_kinematics(
            self.model,
            x.q.as_slice(),
            Some(x.qdot.as_slice()),
            qddot.as_ref().map(|a| a.as_slice()),
        )?;

        let rows = layout.active_rows(mask).len();
        let mut out = DVector::zeros(rows);
        let mut at = 0;
        for (block, _) in layout.blocks.iter().zip(mask).filter(|(_, &on)| on) {
            let len = block.kind.len();
            self.write_block(
                &tree,
                x.tau.as_slice(),
                block.kind,
                &mut out.as_mut_slice()[at..at + len],
            );
            at += len;
        }
        Ok(out)
    }

    /// Noiseless readings along a known trajectory sample, using the given
    /// `q̈` directly instead of forward dynamics.
    pub fn from_kinematics(&self, q: &[f64], qdot: &[f64], qddot: &[f64], tau: &[f64]) -> Result<DVector<f64>> {
        let layout = self.sensors.layout();
        let tree = tree_kinematics(self.model, q, Some(qdot), Some(qddot))?;
        let mut out = DVector::zeros(layout.dim);
        for block in &layout.blocks {
            let len = block.kind.len();
            self.write_block(
                &tree,
                tau,
                block.kind,
                &mut out.as_mut_slice()[block.offset..block.offset + len],
            );
        }
        Ok(out)
    }
}

/// Full stacked measurement prediction in layout order.
pub fn h_stack(model: &KinematicModel, sensors: &SensorSet, x: &StateVector) -> Result<DVector<f64>> {
    MeasurementEvaluator::new(model, sensors).predict(x, None)
}

/// Stacked prediction restricted to the active blocks of `mask`.
pub fn h_stack_masked(
    model: &KinematicModel,
    sensors: &SensorSet,
    x: &StateVector,
    mask: &[bool],
) -> Result<DVector<f64>> {
    MeasurementEvaluator::new(model, sensors).predict(x, Some(mask))
}
