//! TOML filter configuration for standalone estimation.
//!
//! ```toml
//! epsilon = 3            # measurement-update iterations
//! dt = 0.01              # s, must match the measurement spacing
//! t0 = 0.0               # s, time of x0 (defaults to the first frame)
//! joseph = false
//! zero_torque = false    # add a virtual zero-torque sensor on every joint
//! markers = true         # false ignores the marker columns
//!
//! [jacobian]
//! scheme = "central"     # or "forward"
//! step_q = 1e-6
//! step_qdot = 1e-6
//! step_tau = 1e-4
//!
//! [x0]
//! q_deg = [10.0, 0.0, 0.0]
//! qdot_deg_s = [0.0, 0.0, 0.0]
//! tau_Nm = [0.0, 0.0, 0.0]
//! # q_rad / qdot_rad_s may replace the degree keys
//!
//! [p0]
//! blocks = [1e-2, 1e-2, 1e-2]   # variances of q, q̇, τ broadcast per joint
//!
//! [q]
//! diag = [...]                  # or `full = [[...], ...]`
//!
//! [r]                           # sigmas per sensor type, or diag / full
//! sigma_gyro = 0.01
//! sigma_accel = 0.05
//! sigma_marker = 1e-3
//! sigma_tau = 0.1
//! ```
//!
//! Covariances are in SI units. Omitted sections take the library
//! defaults.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimator::{process_noise, FilterConfig, DEFAULT_ITERATIONS, DEFAULT_Q_ANGLE, DEFAULT_Q_RATE};
use crate::model::KinematicModel;
use crate::sensors::{measurement_covariance, JacobianSettings, NoiseSpec, SensorSet};
use crate::state::StateVector;

pub const DEFAULT_Q_TAU: f64 = 1e-2;
pub const DEFAULT_P0: [f64; 3] = [1e-4, 1e-4, 1.0];

/// A covariance given as per-joint block variances, a diagonal, or a full
/// matrix. Exactly one form must be present.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub blocks: Option<[f64; 3]>,
    pub diag: Option<Vec<f64>>,
    pub full: Option<Vec<Vec<f64>>>,
}

impl CovarianceSpec {
    pub fn from_blocks(blocks: [f64; 3]) -> Self {
        CovarianceSpec {
            blocks: Some(blocks),
            ..Default::default()
        }
    }

    /// Matrix for a state of `3·dof` entries.
    pub fn state_matrix(&self, name: &str, dof: usize) -> Result<DMatrix<f64>> {
        if let Some([a, b, c]) = self.blocks {
            self.only_one(name, 1)?;
            return Ok(process_noise(dof, a, b, c));
        }
        self.explicit(name, 3 * dof)
    }

    fn only_one(&self, name: &str, expected: usize) -> Result<()> {
        let count = self.blocks.is_some() as usize + self.diag.is_some() as usize + self.full.is_some() as usize;
        if count != expected {
            return Err(Error::field(name, "give exactly one of `blocks`, `diag` or `full`"));
        }
        Ok(())
    }

    fn explicit(&self, name: &str, dim: usize) -> Result<DMatrix<f64>> {
        self.only_one(name, 1)?;
        if let Some(d) = &self.diag {
            if d.len() != dim {
                return Err(Error::field(
                    format!("{name}.diag"),
                    format!("has {} entries, expected {dim}", d.len()),
                ));
            }
            return Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d)));
        }
        let full = self.full.as_ref().expect("checked by only_one");
        if full.len() != dim || full.iter().any(|r| r.len() != dim) {
            return Err(Error::field(format!("{name}.full"), format!("must be {dim}x{dim}")));
        }
        Ok(DMatrix::from_fn(dim, dim, |i, j| full[i][j]))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawR {
    sigma_gyro: Option<f64>,
    sigma_accel: Option<f64>,
    sigma_marker: Option<f64>,
    sigma_tau: Option<f64>,
    diag: Option<Vec<f64>>,
    full: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawX0 {
    q_deg: Option<Vec<f64>>,
    qdot_deg_s: Option<Vec<f64>>,
    q_rad: Option<Vec<f64>>,
    qdot_rad_s: Option<Vec<f64>>,
    #[serde(rename = "tau_Nm")]
    tau_nm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    #[serde(default = "default_epsilon")]
    epsilon: usize,
    dt: f64,
    t0: Option<f64>,
    #[serde(default)]
    joseph: bool,
    #[serde(default)]
    zero_torque: bool,
    #[serde(default = "yes")]
    markers: bool,
    #[serde(default)]
    jacobian: JacobianSettings,
    #[serde(default)]
    x0: RawX0,
    p0: Option<CovarianceSpec>,
    q: Option<CovarianceSpec>,
    r: Option<RawR>,
}

fn default_epsilon() -> usize {
    DEFAULT_ITERATIONS
}

fn yes() -> bool {
    true
}

/// A resolved filter configuration together with the sensor set it was
/// resolved against. `t0_from_data` is set when the file leaves the start
/// time to the first measurement frame. With `use_markers` unset the marker
/// blocks stay in the layout but are masked out of every frame.
#[derive(Debug, Clone)]
pub struct FilterFile {
    pub config: FilterConfig,
    pub sensors: SensorSet,
    pub t0_from_data: bool,
    pub use_markers: bool,
}

fn joint_values(v: &Option<Vec<f64>>, name: &str, dof: usize, scale: f64) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(dof)),
        Some(v) if v.len() == dof => Ok(DVector::from_iterator(dof, v.iter().map(|x| x * scale))),
        Some(v) => Err(Error::field(
            format!("x0.{name}"),
            format!("has {} entries, model has {dof} joints", v.len()),
        )),
    }
}

/// Parses a filter configuration for `model` with the physical sensors in
/// `sensors`.
pub fn parse_filter_config(
    text: &str,
    origin: &Path,
    model: &KinematicModel,
    sensors: &SensorSet,
) -> Result<FilterFile> {
    let raw: RawFilter = super::from_toml(text, origin)?;
    let dof = model.dof();
    let sensors = if raw.zero_torque {
        sensors.with_zero_torque(dof)
    } else {
        sensors.without_zero_torque()
    };
    let layout = sensors.layout();

    let angles = |deg: &Option<Vec<f64>>, deg_name: &str, rad: &Option<Vec<f64>>, rad_name: &str| match (deg, rad) {
        (Some(_), Some(_)) => Err(Error::field(
            format!("x0.{rad_name}"),
            format!("give either `{deg_name}` or `{rad_name}`"),
        )),
        (_, Some(_)) => joint_values(rad, rad_name, dof, 1.0),
        _ => joint_values(deg, deg_name, dof, 1f64.to_radians()),
    };
    let x0 = StateVector::new(
        angles(&raw.x0.q_deg, "q_deg", &raw.x0.q_rad, "q_rad")?,
        angles(&raw.x0.qdot_deg_s, "qdot_deg_s", &raw.x0.qdot_rad_s, "qdot_rad_s")?,
        joint_values(&raw.x0.tau_nm, "tau_Nm", dof, 1.0)?,
    )?;
    let p0 = raw
        .p0
        .unwrap_or_else(|| CovarianceSpec::from_blocks(DEFAULT_P0))
        .state_matrix("p0", dof)?;
    let q = raw
        .q
        .unwrap_or_else(|| CovarianceSpec::from_blocks([DEFAULT_Q_ANGLE, DEFAULT_Q_RATE, DEFAULT_Q_TAU]))
        .state_matrix("q", dof)?;

    let raw_r = raw.r.unwrap_or_default();
    let r = if raw_r.diag.is_some() || raw_r.full.is_some() {
        if raw_r.sigma_gyro.is_some()
            || raw_r.sigma_accel.is_some()
            || raw_r.sigma_marker.is_some()
            || raw_r.sigma_tau.is_some()
        {
            return Err(Error::field("r", "give either sigmas or an explicit matrix"));
        }
        CovarianceSpec {
            blocks: None,
            diag: raw_r.diag,
            full: raw_r.full,
        }
        .explicit("r", layout.dim)?
    } else {
        let d = NoiseSpec::default();
        let noise = NoiseSpec {
            sigma_gyro: raw_r.sigma_gyro.unwrap_or(d.sigma_gyro),
            sigma_accel: raw_r.sigma_accel.unwrap_or(d.sigma_accel),
            sigma_marker: raw_r.sigma_marker.unwrap_or(d.sigma_marker),
            sigma_tau: raw_r.sigma_tau.unwrap_or(d.sigma_tau),
            ..d
        };
        noise.validate().map_err(|e| match e {
            Error::Field { field, message } => Error::field(field.replace("noise.", "r."), message),
            other => other,
        })?;
        measurement_covariance(&layout, &noise)
    };

    let config = FilterConfig {
        q,
        r,
        p0,
        x0,
        t0: raw.t0.unwrap_or(0.0),
        iterations: raw.epsilon,
        dt: raw.dt,
        jacobian: raw.jacobian,
        joseph: raw.joseph,
    };
    config.validate(dof, layout.dim)?;
    Ok(FilterFile {
        config,
        sensors,
        t0_from_data: raw.t0.is_none(),
        use_markers: raw.markers,
    })
}

pub fn load_filter_config(path: &Path, model: &KinematicModel, sensors: &SensorSet) -> Result<FilterFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_filter_config(&text, path, model, sensors)
}
