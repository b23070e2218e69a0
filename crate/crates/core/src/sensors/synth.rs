//! Synthetic sensor data along a known trajectory.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::models::MeasurementEvaluator;
use super::{BlockKind, MeasurementFrame, MeasurementLayout, SensorSet};
use crate::error::{Error, Result};
use crate::kinematics::forward_kinematics;
use crate::math::{exp_so3, Mat3, Vec3};
use crate::model::KinematicModel;
use crate::trajectory::Trajectory;

/// Stream offset separating orientation noise from measurement noise.
const ORIENTATION_STREAM: u64 = 1 << 40;

/// Per-axis standard deviations of the simulated sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// rad/s
    pub sigma_gyro: f64,
    /// m/s²
    pub sigma_accel: f64,
    /// m
    pub sigma_marker: f64,
    /// N·m, virtual torque sensors (only used to build R).
    pub sigma_tau: f64,
    /// deg, axis-angle noise on IMU orientations fed to orientation IK.
    pub sigma_orientation_deg: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_gyro: 0.01,
            sigma_accel: 0.05,
            sigma_marker: 1e-3,
            sigma_tau: 0.1,
            sigma_orientation_deg: 2.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            sigma_gyro: 0.0,
            sigma_accel: 0.0,
            sigma_marker: 0.0,
            sigma_tau: 0.0,
            sigma_orientation_deg: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_gyro", self.sigma_gyro),
            ("sigma_accel", self.sigma_accel),
            ("sigma_marker", self.sigma_marker),
            ("sigma_tau", self.sigma_tau),
            ("sigma_orientation_deg", self.sigma_orientation_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::field(format!("noise.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn sigma_for(&self, kind: BlockKind) -> f64 {
        match kind {
            BlockKind::Gyro(_) => self.sigma_gyro,
            BlockKind::Accel(_) => self.sigma_accel,
            BlockKind::Marker(_) => self.sigma_marker,
            BlockKind::Torque(_) => self.sigma_tau,
        }
    }
}

/// Diagonal measurement covariance for `layout` built from per-type sigmas.
pub fn measurement_covariance(layout: &MeasurementLayout, noise: &NoiseSpec) -> DMatrix<f64> {
    let mut diag = DVector::zeros(layout.dim);
    for block in &layout.blocks {
        let var = noise.sigma_for(block.kind).powi(2);
        diag.rows_mut(block.offset, block.kind.len()).fill(var);
    }
    DMatrix::from_diagonal(&diag)
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"))
}

/// Noisy frames along `truth`, one per sample. Readings are computed from
/// the recorded `q̈` (not forward dynamics) and perturbed with i.i.d.
/// Gaussian noise; virtual torque rows are exactly zero. Frame `i` draws
/// from its own ChaCha stream, so output depends only on the seed.
pub fn simulate_measurements(
    model: &KinematicModel,
    sensors: &SensorSet,
    noise: &NoiseSpec,
    truth: &Trajectory,
) -> Result<Vec<MeasurementFrame>> {
    noise.validate()?;
    sensors.validate(model)?;
    truth.validate()?;
    let layout = sensors.layout();
    let eval = MeasurementEvaluator::new(model, sensors);
    let zero_tau = vec![0.0; model.dof()];

    (0..truth.len())
        .map(|i| {
            let mut y = eval.from_kinematics(
                truth.q[i].as_slice(),
                truth.qdot[i].as_slice(),
                truth.qddot[i].as_slice(),
                &zero_tau,
            )?;
            let mut rng = frame_rng(noise.seed, i as u64);
            for block in &layout.blocks {
                if !block.kind.is_physical() {
                    continue;
                }
                if let Some(dist) = normal(noise.sigma_for(block.kind)) {
                    for r in block.offset..block.offset + block.kind.len() {
                        y[r] += dist.sample(&mut rng);
                    }
                }
            }
            Ok(MeasurementFrame {
                t: truth.t[i],
                y,
                mask: layout.all_active(),
            })
        })
        .collect()
}

/// Simulated IMU orientations `R^{n s_k}` per frame, each right-multiplied
/// by `exp(ξ)` with `ξ ~ N(0, σ² I)`.
pub fn simulate_orientations(
    model: &KinematicModel,
    sensors: &SensorSet,
    noise: &NoiseSpec,
    truth: &Trajectory,
) -> Result<Vec<Vec<Mat3>>> {
    noise.validate()?;
    sensors.validate(model)?;
    let dist = normal(noise.sigma_orientation_deg.to_radians());
    (0..truth.len())
        .map(|i| {
            let poses = forward_kinematics(model, truth.q[i].as_slice())?;
            let mut rng = frame_rng(noise.seed, ORIENTATION_STREAM + i as u64);
            Ok(sensors
                .imus
                .iter()
                .map(|imu| {
                    let r_ns = poses[imu.body].rotation * imu.r_sb.transpose();
                    match &dist {
                        Some(d) => {
                            let xi = Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
                            r_ns * exp_so3(&xi)
                        }
                        None => r_ns,
                    }
                })
                .collect())
        })
        .collect()
}
