//! Sensor descriptions and the stacked measurement layout.
//!
//! A measurement vector is ordered per IMU (3 gyro rows then 3 accelerometer
//! rows), then 3 rows per marker, then one row per virtual zero-torque
//! sensor. Each of those groups is a *block* that can be masked out of a
//! frame independently.

mod jacobian;
mod models;
mod synth;

pub(crate) use jacobian::perturbation_jacobian;
pub use jacobian::{measurement_jacobian, DiffScheme, JacobianSettings};
pub use models::{h_accel, h_gyro, h_marker, h_stack, h_stack_masked, h_zero_torque, MeasurementEvaluator};
pub use synth::{measurement_covariance, simulate_measurements, simulate_orientations, NoiseSpec};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::math::{is_rotation, Mat3, Vec3};
use crate::model::KinematicModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ImuSpec {
    pub name: String,
    pub body: usize,
    /// Constant sensor-from-body rotation `R^{s b}`.
    pub r_sb: Mat3,
    /// IMU origin in the body frame, m.
    pub r_bs: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSpec {
    pub name: String,
    pub body: usize,
    /// Marker position in the body frame, m.
    pub r_marker: Vec3,
}

/// Constant pose of the navigation frame seen from the optical camera:
/// `p^c = R_cn p^n + p_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    pub r_cn: Mat3,
    pub p_c: Vec3,
}

impl Default for CameraExtrinsics {
    fn default() -> Self {
        CameraExtrinsics {
            r_cn: Mat3::identity(),
            p_c: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Gyro(usize),
    Accel(usize),
    Marker(usize),
    Torque(usize),
}

impl BlockKind {
    pub fn len(self) -> usize {
        match self {
            BlockKind::Torque(_) => 1,
            _ => 3,
        }
    }

    pub fn is_physical(self) -> bool {
        !matches!(self, BlockKind::Torque(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
}

/// All sensors attached to a model. `torque_joints` lists the joints that
/// carry a virtual zero-torque sensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorSet {
    pub imus: Vec<ImuSpec>,
    pub markers: Vec<MarkerSpec>,
    pub camera: CameraExtrinsics,
    pub torque_joints: Vec<usize>,
}

impl SensorSet {
    pub fn validate(&self, model: &KinematicModel) -> Result<()> {
        let n_bodies = model.bodies().len();
        for (k, imu) in self.imus.iter().enumerate() {
            if imu.body >= n_bodies {
                return Err(Error::field(
                    format!("imu[{k}].body"),
                    format!("body index {} out of range", imu.body),
                ));
            }
            if !is_rotation(&imu.r_sb, 1e-10) {
                return Err(Error::field(format!("imu[{k}].rotation"), "must be a rotation matrix"));
            }
            if !imu.r_bs.iter().all(|v| v.is_finite()) {
                return Err(Error::field(format!("imu[{k}].position"), "components must be finite"));
            }
        }
        for (m, marker) in self.markers.iter().enumerate() {
            if marker.body >= n_bodies {
                return Err(Error::field(
                    format!("marker[{m}].body"),
                    format!("body index {} out of range", marker.body),
                ));
            }
            if !marker.r_marker.iter().all(|v| v.is_finite()) {
                return Err(Error::field(
                    format!("marker[{m}].position"),
                    "components must be finite",
                ));
            }
        }
        if !is_rotation(&self.camera.r_cn, 1e-10) {
            return Err(Error::field("camera.rotation", "must be a rotation matrix"));
        }
        if !self.camera.p_c.iter().all(|v| v.is_finite()) {
            return Err(Error::field("camera.translation", "components must be finite"));
        }
        for (i, &j) in self.torque_joints.iter().enumerate() {
            if j >= model.dof() {
                return Err(Error::field(
                    format!("torque_joints[{i}]"),
                    format!("joint index {j} out of range"),
                ));
            }
        }
        Ok(())
    }

    /// The same physical sensors with a zero-torque sensor on every joint.
    pub fn with_zero_torque(&self, dof: usize) -> Self {
        SensorSet {
            torque_joints: (0..dof).collect(),
            ..self.clone()
        }
    }

    pub fn without_zero_torque(&self) -> Self {
        SensorSet {
            torque_joints: Vec::new(),
            ..self.clone()
        }
    }

    pub fn layout(&self) -> MeasurementLayout {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |kind: BlockKind| {
            blocks.push(Block { kind, offset });
            offset += kind.len();
        };
        for k in 0..self.imus.len() {
            push(BlockKind::Gyro(k));
            push(BlockKind::Accel(k));
        }
        for m in 0..self.markers.len() {
            push(BlockKind::Marker(m));
        }
        for t in 0..self.torque_joints.len() {
            push(BlockKind::Torque(t));
        }
        MeasurementLayout { blocks, dim: offset }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLayout {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

impl MeasurementLayout {
    pub fn all_active(&self) -> Vec<bool> {
        vec![true; self.blocks.len()]
    }

    /// Row indices of the active blocks, in layout order.
    pub fn active_rows(&self, mask: &[bool]) -> Vec<usize> {
        self.blocks
            .iter()
            .zip(mask)
            .filter(|(_, &on)| on)
            .flat_map(|(b, _)| b.offset..b.offset + b.kind.len())
            .collect()
    }

    /// Mask that keeps only blocks accepted by `keep`.
    pub fn mask_where(&self, keep: impl Fn(BlockKind) -> bool) -> Vec<bool> {
        self.blocks.iter().map(|b| keep(b.kind)).collect()
    }

    pub fn check_mask(&self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.blocks.len() {
            return Err(Error::Dimension(format!(
                "mask has {} flags, layout has {} blocks",
                mask.len(),
                self.blocks.len()
            )));
        }
        Ok(())
    }
}

/// One timestamped stacked measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    pub y: DVector<f64>,
    /// Per-block validity; masked-out blocks are ignored by the filter.
    pub mask: Vec<bool>,
}

impl MeasurementFrame {
    pub fn check(&self, layout: &MeasurementLayout) -> Result<()> {
        if self.y.len() != layout.dim {
            return Err(Error::Dimension(format!(
                "frame at t={} has {} rows, layout expects {}",
                self.t,
                self.y.len(),
                layout.dim
            )));
        }
        layout.check_mask(&self.mask)
    }

    pub fn any_active(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}
