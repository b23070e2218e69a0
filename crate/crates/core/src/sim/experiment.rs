//! End-to-end experiments: truth, synthetic sensors, every requested
//! estimator, and an RMSD report.
//!
//! An experiment file is TOML:
//!
//! ```toml
//! name = "pendulum_trial"
//! model = "pendulum3.toml"     # path relative to this file, or a shipped model
//! seed = 1
//! duration = 8.0               # s
//! dt = 0.01                    # s, sensor and filter rate
//! methods = ["imu_iekf", "imu_marker_iekf", "imu_marker_0t_iekf",
//!            "marker_ik_id", "orientation_ik_id"]
//! output = "out/pendulum_trial"
//!
//! [scenario]
//! kind = "passive_release"
//! q0_deg = [60.0, -20.0, 30.0]
//!
//! [noise]                      # sensor noise used to synthesize data
//! sigma_gyro = 0.01
//!
//! [filter]                     # IEKF tuning
//! q_tau = 1e-2
//!
//! [id]
//! cutoff = 6.0                 # Hz, low-pass before differentiation
//! ```
//!
//! A prescribed scenario lists knots instead:
//!
//! ```toml
//! [scenario]
//! kind = "prescribed"
//! [[scenario.knot]]
//! t = 0.0
//! q_deg = [0.0, 10.0, 0.0, 20.0, 0.0, 0.0]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{builtin_model, generate_passive, generate_prescribed, rmsd, KnotSpec, QuinticSpline};
use crate::baselines::{ik_id_pipeline, marker_ik_series, orientation_ik_series, IkConfig, LowPass};
use crate::error::{Error, Result};
use crate::estimator::{
    process_noise, run_filter, FilterConfig, FilterRun, DEFAULT_ITERATIONS, DEFAULT_Q_ANGLE, DEFAULT_Q_RATE,
};
use crate::io::{
    parse_model, write_estimates, write_measurements, write_orientations, write_truth, ModelFile, DEFAULT_P0,
    DEFAULT_Q_TAU,
};
use crate::math::{max_asymmetry, min_eigenvalue, Mat3};
use crate::sensors::{
    measurement_covariance, simulate_measurements, simulate_orientations, BlockKind, JacobianSettings,
    MeasurementFrame, NoiseSpec, SensorSet,
};
use crate::trajectory::{EstimateSeries, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "imu_iekf")]
    ImuIekf,
    #[serde(rename = "imu_marker_iekf")]
    ImuMarkerIekf,
    #[serde(rename = "imu_marker_0t_iekf")]
    ImuMarkerZeroTorqueIekf,
    #[serde(rename = "marker_ik_id")]
    MarkerIkId,
    #[serde(rename = "orientation_ik_id")]
    OrientationIkId,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ImuIekf,
        Method::ImuMarkerIekf,
        Method::ImuMarkerZeroTorqueIekf,
        Method::MarkerIkId,
        Method::OrientationIkId,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ImuIekf => "imu_iekf",
            Method::ImuMarkerIekf => "imu_marker_iekf",
            Method::ImuMarkerZeroTorqueIekf => "imu_marker_0t_iekf",
            Method::MarkerIkId => "marker_ik_id",
            Method::OrientationIkId => "orientation_ik_id",
        }
    }

    pub fn is_filter(self) -> bool {
        matches!(
            self,
            Method::ImuIekf | Method::ImuMarkerIekf | Method::ImuMarkerZeroTorqueIekf
        )
    }
}

/// Second reference column of the RMSD table.
pub const REFERENCE_METHOD: Method = Method::ImuMarkerIekf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Released from rest (or the given rates) with zero joint torque.
    PassiveRelease {
        q0_deg: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qdot0_deg_s: Option<Vec<f64>>,
    },
    /// Actuated motion along a quintic spline through the knots.
    Prescribed { knot: Vec<KnotSpec> },
}

/// IEKF tuning shared by the filter-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub epsilon: usize,
    /// Per-step process variances of q (rad²), q̇ ((rad/s)²) and τ ((N·m)²).
    pub q_angle: f64,
    pub q_rate: f64,
    pub q_tau: f64,
    /// Initial variances of q, q̇ and τ.
    pub p0: [f64; 3],
    /// Added to the true initial angles to form the filter's `x0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0_offset_deg: Option<Vec<f64>>,
    /// Sigmas assumed by the filter. Unset values follow the synthetic
    /// noise, or the library default where that noise is zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_gyro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_accel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_marker: Option<f64>,
    /// Sigma of the virtual zero-torque sensors, N·m.
    pub sigma_tau: f64,
    pub joseph: bool,
    pub jacobian: JacobianSettings,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            epsilon: DEFAULT_ITERATIONS,
            q_angle: DEFAULT_Q_ANGLE,
            q_rate: DEFAULT_Q_RATE,
            q_tau: DEFAULT_Q_TAU,
            p0: DEFAULT_P0,
            x0_offset_deg: None,
            sigma_gyro: None,
            sigma_accel: None,
            sigma_marker: None,
            sigma_tau: NoiseSpec::default().sigma_tau,
            joseph: false,
            jacobian: JacobianSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdSettings {
    /// Hz; zero disables filtering.
    pub cutoff: f64,
}

impl Default for IdSettings {
    fn default() -> Self {
        IdSettings { cutoff: 6.0 }
    }
}

/// Kept for symmetry with the other sections; IK tuning lives in
/// [`IkConfig`].
pub type IkSettings = IkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub scenario: Scenario,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub ik: IkConfig,
    #[serde(default)]
    pub id: IdSettings,
}

fn default_name() -> String {
    "experiment".into()
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Sets `dotted.key` in a TOML tree, creating tables on the way. The value
/// is parsed as TOML and falls back to a plain string.
fn apply_override(root: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::field(key, "override key has an empty component"));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::field(key, format!("`{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

impl ExperimentSpec {
    /// Parses an experiment file after applying `key=value` overrides.
    pub fn parse(text: &str, origin: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let spec: ExperimentSpec = table
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment specs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        super::sample_count(self.duration, self.dt)?;
        if self.methods.is_empty() {
            return Err(Error::field("methods", "list at least one method"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::field(
                    format!("methods[{i}]"),
                    format!("`{}` listed twice", m.name()),
                ));
            }
        }
        self.noise.validate()?;
        self.ik.validate()?;
        let f = &self.filter;
        if f.epsilon == 0 {
            return Err(Error::field("filter.epsilon", "must be >= 1"));
        }
        for (name, v) in [
            ("filter.q_angle", f.q_angle),
            ("filter.q_rate", f.q_rate),
            ("filter.q_tau", f.q_tau),
            ("filter.p0", f.p0[0]),
            ("filter.p0", f.p0[1]),
            ("filter.p0", f.p0[2]),
            ("filter.sigma_tau", f.sigma_tau),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::field(name, "must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("filter.sigma_gyro", f.sigma_gyro),
            ("filter.sigma_accel", f.sigma_accel),
            ("filter.sigma_marker", f.sigma_marker),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::field(name, "must be finite and > 0"));
                }
            }
        }
        f.jacobian.validate()?;
        if !(self.id.cutoff.is_finite() && self.id.cutoff >= 0.0 && self.id.cutoff < 0.5 / self.dt) {
            return Err(Error::field("id.cutoff", "must lie in [0, Nyquist)"));
        }
        Ok(())
    }

    /// Loads the model named by the experiment, relative to `base` or from the
    /// shipped models.
    pub fn load_model(&self, base: &Path) -> Result<ModelFile> {
        let path = base.join(&self.model);
        match std::fs::read_to_string(&path) {
            Ok(text) => parse_model(&text, &path),
            Err(e) => match builtin_model(&self.model) {
                Some(text) => parse_model(text, Path::new(&self.model)),
                None => Err(Error::io(path, e)),
            },
        }
    }

    /// Noise actually used for synthesis: the experiment's sigmas with the run
    /// seed.
    pub fn resolved_noise(&self) -> NoiseSpec {
        NoiseSpec {
            seed: self.seed,
            ..self.noise
        }
    }

    /// Standalone filter configuration that reproduces `method` on the
    /// measurement file of this experiment. `None` for non-filter methods.
    pub fn filter_file(&self, truth: &Trajectory, method: Method) -> Option<String> {
        if !method.is_filter() || truth.is_empty() {
            return None;
        }
        let f = &self.filter;
        let mut q0 = truth.q[0].clone();
        if let Some(off) = &f.x0_offset_deg {
            for (q, o) in q0.iter_mut().zip(off) {
                *q += o.to_radians();
            }
        }
        let noise = self.filter_noise();
        let list = |v: &DVector<f64>| toml::Value::Array(v.iter().map(|&x| toml::Value::Float(x)).collect());
        let blocks = |b: [f64; 3]| {
            let mut t = toml::Table::new();
            t.insert(
                "blocks".into(),
                toml::Value::Array(b.iter().map(|&x| toml::Value::Float(x)).collect()),
            );
            toml::Value::Table(t)
        };
        let mut x0 = toml::Table::new();
        x0.insert("q_rad".into(), list(&q0));
        x0.insert("qdot_rad_s".into(), list(&truth.qdot[0]));
        x0.insert("tau_Nm".into(), list(&truth.tau[0]));
        let mut r = toml::Table::new();
        for (k, v) in [
            ("sigma_gyro", noise.sigma_gyro),
            ("sigma_accel", noise.sigma_accel),
            ("sigma_marker", noise.sigma_marker),
            ("sigma_tau", noise.sigma_tau),
        ] {
            r.insert(k.into(), toml::Value::Float(v));
        }
        let mut t = toml::Table::new();
        t.insert("epsilon".into(), toml::Value::Integer(f.epsilon as i64));
        t.insert("dt".into(), toml::Value::Float(self.dt));
        t.insert("t0".into(), toml::Value::Float(truth.t[0]));
        t.insert("joseph".into(), toml::Value::Boolean(f.joseph));
        t.insert(
            "zero_torque".into(),
            toml::Value::Boolean(method == Method::ImuMarkerZeroTorqueIekf),
        );
        t.insert("markers".into(), toml::Value::Boolean(method != Method::ImuIekf));
        t.insert(
            "jacobian".into(),
            toml::Value::try_from(f.jacobian).expect("jacobian settings serialize"),
        );
        t.insert("x0".into(), toml::Value::Table(x0));
        t.insert("p0".into(), blocks(f.p0));
        t.insert("q".into(), blocks([f.q_angle, f.q_rate, f.q_tau]));
        t.insert("r".into(), toml::Value::Table(r));
        Some(toml::to_string(&t).expect("filter tables serialize"))
    }

    /// Sigmas the filters assume for `R`.
    pub fn filter_noise(&self) -> NoiseSpec {
        let nominal = NoiseSpec::default();
        let pick =
            |set: Option<f64>, actual: f64, fallback: f64| set.unwrap_or(if actual > 0.0 { actual } else { fallback });
        NoiseSpec {
            sigma_gyro: pick(self.filter.sigma_gyro, self.noise.sigma_gyro, nominal.sigma_gyro),
            sigma_accel: pick(self.filter.sigma_accel, self.noise.sigma_accel, nominal.sigma_accel),
            sigma_marker: pick(self.filter.sigma_marker, self.noise.sigma_marker, nominal.sigma_marker),
            sigma_tau: self.filter.sigma_tau,
            ..nominal
        }
    }
}

/// Quality summary of one filter run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSummary {
    pub steps: usize,
    /// Share of updates (with at least three iterations) whose iteration
    /// deltas decrease from the second iteration on.
    pub monotone_fraction: f64,
    pub regularized_steps: usize,
    pub min_p_eigenvalue: f64,
    pub max_p_asymmetry: f64,
}

impl FilterSummary {
    pub fn of(run: &FilterRun) -> Self {
        let mut eligible = 0usize;
        let mut monotone = 0usize;
        let mut regularized = 0usize;
        let mut min_eig = f64::INFINITY;
        let mut max_asym = 0.0f64;
        for s in &run.states {
            let d = &s.diagnostics.iteration_deltas;
            if d.len() >= 3 {
                eligible += 1;
                if d[1..].windows(2).all(|w| w[1] <= w[0]) {
                    monotone += 1;
                }
            }
            regularized += s.diagnostics.regularized as usize;
            min_eig = min_eig.min(min_eigenvalue(&s.p_hat));
            max_asym = max_asym.max(max_asymmetry(&s.p_hat));
        }
        FilterSummary {
            steps: run.states.len().saturating_sub(1),
            monotone_fraction: if eligible == 0 {
                1.0
            } else {
                monotone as f64 / eligible as f64
            },
            regularized_steps: regularized,
            min_p_eigenvalue: min_eig,
            max_p_asymmetry: max_asym,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    /// Full output; filter runs start with the prior state at `t0`.
    pub series: EstimateSeries,
    /// Estimates aligned one-to-one with the truth samples.
    pub aligned: EstimateSeries,
    pub summary: Option<FilterSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsdRow {
    /// `q1`…, `tau1`…
    pub quantity: String,
    pub method: Method,
    /// Degrees for angles, N·m for torques.
    pub vs_truth: f64,
    pub vs_reference: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub model: ModelFile,
    pub truth: Trajectory,
    pub frames: Vec<MeasurementFrame>,
    pub orientations: Vec<Vec<Mat3>>,
    pub results: Vec<MethodResult>,
    pub rmsd: Vec<RmsdRow>,
}

impl ExperimentReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn rmsd_of(&self, method: Method, quantity: &str) -> Option<f64> {
        self.rmsd
            .iter()
            .find(|r| r.method == method && r.quantity == quantity)
            .map(|r| r.vs_truth)
    }
}

fn generate_truth(spec: &ExperimentSpec, model: &ModelFile) -> Result<Trajectory> {
    let dof = model.model.dof();
    let deg = |v: &[f64], name: &str| -> Result<Vec<f64>> {
        if v.len() != dof {
            return Err(Error::field(
                format!("scenario.{name}"),
                format!("has {} entries, model has {dof} joints", v.len()),
            ));
        }
        Ok(v.iter().map(|x| x.to_radians()).collect())
    };
    let mut truth = match &spec.scenario {
        Scenario::PassiveRelease { q0_deg, qdot0_deg_s } => {
            let q0 = deg(q0_deg, "q0_deg")?;
            let v0 = match qdot0_deg_s {
                Some(v) => deg(v, "qdot0_deg_s")?,
                None => vec![0.0; dof],
            };
            generate_passive(&model.model, &q0, &v0, spec.duration, spec.dt)?
        }
        Scenario::Prescribed { knot } => {
            let spline = QuinticSpline::from_specs(knot, dof)?;
            if spline.end() - spline.start() < spec.duration - 1e-9 {
                return Err(Error::field("scenario.knot", "knots must cover the whole duration"));
            }
            generate_prescribed(&model.model, &spline, spec.duration, spec.dt)?
        }
    };
    truth.metadata.seed = Some(spec.seed);
    Ok(truth)
}

/// Appends a zero observation and an active flag for every virtual torque
/// sensor of `sensors` that the frame does not yet carry.
pub fn with_zero_torque_rows(frames: &[MeasurementFrame], sensors: &SensorSet) -> Vec<MeasurementFrame> {
    let layout = sensors.layout();
    frames
        .iter()
        .map(|f| {
            let extra = layout.dim - f.y.len();
            let mut y = f.y.clone().resize_vertically(layout.dim, 0.0);
            y.rows_mut(layout.dim - extra, extra).fill(0.0);
            let mut mask = f.mask.clone();
            mask.resize(layout.blocks.len(), true);
            MeasurementFrame { t: f.t, y, mask }
        })
        .collect()
}

/// Copies of `frames` with every marker block masked out.
pub fn mask_markers(frames: &[MeasurementFrame], sensors: &SensorSet) -> Vec<MeasurementFrame> {
    let layout = sensors.layout();
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for (flag, b) in f.mask.iter_mut().zip(&layout.blocks) {
                *flag &= !matches!(b.kind, BlockKind::Marker(_));
            }
            f
        })
        .collect()
}

fn filter_config(spec: &ExperimentSpec, truth: &Trajectory, sensors: &SensorSet, dof: usize) -> Result<FilterConfig> {
    let f = &spec.filter;
    let mut x0 = truth.state(0);
    if let Some(off) = &f.x0_offset_deg {
        if off.len() != dof {
            return Err(Error::field(
                "filter.x0_offset_deg",
                format!("has {} entries, model has {dof} joints", off.len()),
            ));
        }
        for j in 0..dof {
            x0.q[j] += off[j].to_radians();
        }
    }
    Ok(FilterConfig {
        q: process_noise(dof, f.q_angle, f.q_rate, f.q_tau),
        r: measurement_covariance(&sensors.layout(), &spec.filter_noise()),
        p0: process_noise(dof, f.p0[0], f.p0[1], f.p0[2]),
        x0,
        t0: truth.t[0],
        iterations: f.epsilon,
        dt: spec.dt,
        jacobian: f.jacobian,
        joseph: f.joseph,
    })
}

fn run_method(
    method: Method,
    spec: &ExperimentSpec,
    model: &ModelFile,
    truth: &Trajectory,
    frames: &[MeasurementFrame],
    orientations: &[Vec<Mat3>],
) -> Result<MethodResult> {
    let m = &model.model;
    let dof = m.dof();
    let physical = model.sensors.without_zero_torque();
    if method.is_filter() {
        let (sensors, frames) = match method {
            Method::ImuIekf => (physical.clone(), mask_markers(frames, &physical)),
            Method::ImuMarkerIekf => (physical.clone(), frames.to_vec()),
            _ => {
                let s = physical.with_zero_torque(dof);
                let f = with_zero_torque_rows(frames, &s);
                (s, f)
            }
        };
        let cfg = filter_config(spec, truth, &sensors, dof)?;
        let run = run_filter(m, &sensors, &cfg, &frames)?;
        let series = run.to_series(method.name());
        let aligned = EstimateSeries {
            method: method.name().into(),
            t: series.t[1..].to_vec(),
            q: series.q[1..].to_vec(),
            qdot: series.qdot[1..].to_vec(),
            tau: series.tau[1..].to_vec(),
            variance: series.variance.as_ref().map(|v| v[1..].to_vec()),
        };
        return Ok(MethodResult {
            method,
            summary: Some(FilterSummary::of(&run)),
            series,
            aligned,
        });
    }

    let q_init = truth.q[0].as_slice();
    let ik = match method {
        Method::MarkerIkId => marker_ik_series(m, &physical, frames, &spec.ik, q_init)?,
        _ => orientation_ik_series(m, &physical.imus, orientations, &spec.ik, q_init)?,
    };
    let lowpass = (spec.id.cutoff > 0.0).then_some(LowPass { cutoff: spec.id.cutoff });
    let id = ik_id_pipeline(m, &ik.q, spec.dt, lowpass.as_ref())?;
    let series = EstimateSeries {
        method: method.name().into(),
        t: truth.t.clone(),
        q: ik.q,
        qdot: id.qdot,
        tau: id.tau,
        variance: None,
    };
    Ok(MethodResult {
        method,
        aligned: series.clone(),
        series,
        summary: None,
    })
}

fn column(series: &[DVector<f64>], j: usize, scale: f64) -> Vec<f64> {
    series.iter().map(|v| v[j] * scale).collect()
}

fn rmsd_rows(truth: &Trajectory, results: &[MethodResult]) -> Result<Vec<RmsdRow>> {
    let dof = truth.dof();
    let deg = 1f64.to_degrees();
    let reference = results.iter().find(|r| r.method == REFERENCE_METHOD);
    let mut rows = Vec::new();
    for (prefix, scale) in [("q", deg), ("tau", 1.0)] {
        for j in 0..dof {
            let pick = |s: &EstimateSeries| {
                if prefix == "q" {
                    column(&s.q, j, scale)
                } else {
                    column(&s.tau, j, scale)
                }
            };
            let truth_col = if prefix == "q" {
                column(&truth.q, j, scale)
            } else {
                column(&truth.tau, j, scale)
            };
            for r in results {
                let est = pick(&r.aligned);
                rows.push(RmsdRow {
                    quantity: format!("{prefix}{}", j + 1),
                    method: r.method,
                    vs_truth: rmsd(&est, &truth_col)?,
                    vs_reference: match reference {
                        Some(reference) => Some(rmsd(&est, &pick(&reference.aligned))?),
                        None => None,
                    },
                });
            }
        }
    }
    Ok(rows)
}

/// Truth and synthetic sensor data of one experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: ModelFile,
    pub truth: Trajectory,
    pub frames: Vec<MeasurementFrame>,
    pub orientations: Vec<Vec<Mat3>>,
}

/// Generates the truth and sensor streams of `spec`. `base` resolves a
/// relative model path.
pub fn simulate_experiment(spec: &ExperimentSpec, base: &Path) -> Result<Simulation> {
    spec.validate()?;
    let model = spec.load_model(base).map_err(|e| e.in_stage("model"))?;
    let truth = generate_truth(spec, &model).map_err(|e| e.in_stage("truth"))?;
    let physical = model.sensors.without_zero_torque();
    let noise = spec.resolved_noise();
    let frames =
        simulate_measurements(&model.model, &physical, &noise, &truth).map_err(|e| e.in_stage("measurements"))?;
    let orientations =
        simulate_orientations(&model.model, &physical, &noise, &truth).map_err(|e| e.in_stage("orientations"))?;
    Ok(Simulation {
        model,
        truth,
        frames,
        orientations,
    })
}

/// Runs every stage and returns the results without touching the disk.
pub fn run_experiment_in_memory(spec: &ExperimentSpec, base: &Path) -> Result<ExperimentReport> {
    let Simulation {
        model,
        truth,
        frames,
        orientations,
    } = simulate_experiment(spec, base)?;

    let mut methods = spec.methods.clone();
    methods.sort();
    let results: Vec<Result<MethodResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&method| {
                let (model, truth, frames, orientations) = (&model, &truth, &frames, &orientations);
                scope.spawn(move || {
                    run_method(method, spec, model, truth, frames, orientations).map_err(|e| e.in_stage(method.name()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("method worker panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rmsd = rmsd_rows(&truth, &results).map_err(|e| e.in_stage("rmsd"))?;
    Ok(ExperimentReport {
        spec: spec.clone(),
        model,
        truth,
        frames,
        orientations,
        results,
        rmsd,
    })
}

fn fmt_table(report: &ExperimentReport) -> String {
    let reference = report.result(REFERENCE_METHOD).is_some();
    let mut by_quantity: BTreeMap<(u8, usize), Vec<&RmsdRow>> = BTreeMap::new();
    for row in &report.rmsd {
        let (kind, idx) = match row.quantity.strip_prefix("tau") {
            Some(j) => (1, j.parse().unwrap_or(0)),
            None => (0, row.quantity[1..].parse().unwrap_or(0)),
        };
        by_quantity.entry((kind, idx)).or_default().push(row);
    }
    let mut out = String::new();
    let _ = writeln!(out, "RMSD of {} (seed {})", report.spec.name, report.spec.seed);
    let _ = writeln!(
        out,
        "angles in deg, torques in N·m; cells are `vs truth{}`",
        if reference { " | vs imu_marker_iekf" } else { "" }
    );
    let width = 24;
    let _ = write!(out, "{:<8}", "");
    for r in &report.results {
        let _ = write!(out, "{:>width$}", r.method.name());
    }
    out.push('\n');
    for ((kind, idx), rows) in &by_quantity {
        let label = if *kind == 0 {
            format!("q{idx}")
        } else {
            format!("tau{idx}")
        };
        let _ = write!(out, "{label:<8}");
        for row in rows {
            let cell = match row.vs_reference {
                Some(r) => format!("{:.4} | {:.4}", row.vs_truth, r),
                None => format!("{:.4}", row.vs_truth),
            };
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    out
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let path = dir.join(name);
    std::fs::write(&path, buf).map_err(|e| Error::io(path, e))
}

fn write_plotdata(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let dof = report.truth.dof();
    let deg = 1f64.to_degrees();
    for (prefix, scale) in [("q", deg), ("tau", 1.0)] {
        for j in 0..dof {
            let pick = |v: &[DVector<f64>], _| column(v, j, scale);
            let mut series: Vec<(&str, &[f64], Vec<f64>)> = Vec::new();
            let truth_vals = if prefix == "q" {
                pick(&report.truth.q, 0)
            } else {
                pick(&report.truth.tau, 0)
            };
            series.push(("truth", &report.truth.t, truth_vals));
            for r in &report.results {
                let vals = if prefix == "q" {
                    pick(&r.aligned.q, 0)
                } else {
                    pick(&r.aligned.tau, 0)
                };
                series.push((r.method.name(), &r.aligned.t, vals));
            }
            let name = format!("{prefix}{}.csv", j + 1);
            write_file(dir, &name, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                let unit = if prefix == "q" { "deg" } else { "Nm" };
                w.write_record(["t_s", "series", &format!("value_{unit}")])
                    .map_err(|e| Error::Data(e.to_string()))?;
                for (label, t, vals) in &series {
                    for (ti, v) in t.iter().zip(vals) {
                        w.write_record([format!("{ti}"), label.to_string(), format!("{v}")])
                            .map_err(|e| Error::Data(e.to_string()))?;
                    }
                }
                w.flush().map_err(|e| Error::Data(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn write_inputs(
    dir: &Path,
    spec: &ExperimentSpec,
    sensors: &SensorSet,
    truth: &Trajectory,
    frames: &[MeasurementFrame],
    orientations: &[Vec<Mat3>],
    filters: &[Method],
) -> Result<()> {
    let physical = sensors.without_zero_torque();
    write_file(dir, "spec.toml", |b| {
        b.extend_from_slice(spec.to_toml().as_bytes());
        Ok(())
    })?;
    write_file(dir, "truth.csv", |b| write_truth(b, truth))?;
    write_file(dir, "measurements.csv", |b| write_measurements(b, &physical, frames))?;
    write_file(dir, "orientations.csv", |b| {
        write_orientations(b, &physical, &truth.t, orientations)
    })?;
    for &m in filters {
        if let Some(text) = spec.filter_file(truth, m) {
            write_file(dir, &format!("filter_{}.toml", m.name()), |b| {
                b.extend_from_slice(text.as_bytes());
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn write_bundle(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let methods: Vec<Method> = report.results.iter().map(|r| r.method).collect();
    write_inputs(
        dir,
        &report.spec,
        &report.model.sensors,
        &report.truth,
        &report.frames,
        &report.orientations,
        &methods,
    )?;
    for r in &report.results {
        write_file(dir, &format!("estimate_{}.csv", r.method.name()), |b| {
            write_estimates(b, &r.series)
        })?;
    }
    write_file(dir, "rmsd.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        let ref_col = format!("vs_{}", REFERENCE_METHOD.name());
        w.write_record(["quantity", "unit", "method", "vs_truth", ref_col.as_str()])
            .map_err(|e| Error::Data(e.to_string()))?;
        for row in &report.rmsd {
            let unit = if row.quantity.starts_with("tau") { "Nm" } else { "deg" };
            w.write_record([
                row.quantity.clone(),
                unit.to_string(),
                row.method.name().to_string(),
                format!("{}", row.vs_truth),
                row.vs_reference.map(|v| format!("{v}")).unwrap_or_default(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    })?;
    write_file(dir, "rmsd_table.txt", |b| {
        b.extend_from_slice(fmt_table(report).as_bytes());
        Ok(())
    })?;
    let summaries: Vec<_> = report
        .results
        .iter()
        .filter_map(|r| r.summary.map(|s| (r.method, s)))
        .collect();
    if !summaries.is_empty() {
        write_file(dir, "diagnostics.csv", |b| {
            let mut text =
                String::from("method,steps,monotone_fraction,regularized_steps,min_p_eigenvalue,max_p_asymmetry\n");
            for (m, s) in &summaries {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{}",
                    m.name(),
                    s.steps,
                    s.monotone_fraction,
                    s.regularized_steps,
                    s.min_p_eigenvalue,
                    s.max_p_asymmetry
                );
            }
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })?;
    }
    let plot = dir.join("plotdata");
    std::fs::create_dir_all(&plot).map_err(|e| Error::io(&plot, e))?;
    write_plotdata(&plot, report)
}

/// Writes into a sibling staging directory and moves it to `out` only when
/// `write` succeeded; on failure nothing is left behind.
fn write_staged(out: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&staging);
    let result = std::fs::create_dir_all(&staging)
        .map_err(|e| Error::io(&staging, e))
        .and_then(|_| write(&staging))
        .and_then(|_| {
            if out.exists() {
                std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
            }
            std::fs::rename(&staging, out).map_err(|e| Error::io(out, e))
        });
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

/// Runs the experiment and writes the report bundle to `out`.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path, out: &Path) -> Result<ExperimentReport> {
    let report = run_experiment_in_memory(spec, base)?;
    write_staged(out, |dir| write_bundle(dir, &report)).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

/// Writes truth, sensor files and one filter configuration per filter
/// method to `out`, in the same formats as the report bundle.
pub fn write_simulation(spec: &ExperimentSpec, sim: &Simulation, out: &Path) -> Result<()> {
    let filters: Vec<Method> = Method::ALL.into_iter().filter(|m| m.is_filter()).collect();
    write_staged(out, |dir| {
        write_inputs(
            dir,
            spec,
            &sim.model.sensors,
            &sim.truth,
            &sim.frames,
            &sim.orientations,
            &filters,
        )
    })
    .map_err(|e| e.in_stage("report"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
name = "t"
model = "pendulum3.toml"
duration = 0.5
dt = 0.01
methods = ["imu_iekf"]

[scenario]
kind = "passive_release"
q0_deg = [30.0, 0.0, 0.0]
"#;

    #[test]
    fn parses_with_overrides() {
        let overrides = vec![
            ("noise.sigma_gyro".to_string(), "0".to_string()),
            ("name".to_string(), "renamed".to_string()),
            ("filter.jacobian.scheme".to_string(), "forward".to_string()),
        ];
        let spec = ExperimentSpec::parse(SPEC, Path::new("x.spec"), &overrides).unwrap();
        assert_eq!(spec.noise.sigma_gyro, 0.0);
        assert_eq!(spec.name, "renamed");
        assert_eq!(spec.filter.jacobian.scheme, crate::sensors::DiffScheme::Forward);
        let round = ExperimentSpec::parse(&spec.to_toml(), Path::new("y"), &[]).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn rejects_unknown_and_invalid_fields() {
        let bad = SPEC.replace("dt = 0.01", "dt = 0.01\ndtt = 1");
        assert!(matches!(
            ExperimentSpec::parse(&bad, Path::new("x"), &[]),
            Err(Error::Parse { .. })
        ));
        let bad = SPEC.replace("dt = 0.01", "dt = 0.3");
        assert!(ExperimentSpec::parse(&bad, Path::new("x"), &[]).is_err());
        let err = ExperimentSpec::parse(SPEC, Path::new("x"), &[("methods".into(), "[\"nope\"]".into())]);
        assert!(err.is_err());
    }

    #[test]
    fn zero_torque_rows_are_appended() {
        let twin = super::super::pendulum_twin();
        let physical = twin.sensors.without_zero_torque();
        let frame = MeasurementFrame {
            t: 0.0,
            y: DVector::from_element(physical.layout().dim, 1.0),
            mask: physical.layout().all_active(),
        };
        let s = physical.with_zero_torque(3);
        let out = with_zero_torque_rows(&[frame], &s);
        assert_eq!(out[0].y.len(), 57);
        assert_eq!(out[0].y.rows(54, 3).amax(), 0.0);
        assert_eq!(out[0].y[53], 1.0);
        assert_eq!(out[0].mask.len(), s.layout().blocks.len());
    }
}
