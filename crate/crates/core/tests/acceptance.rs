//! Acceptance criteria 1–9. Runs as a plain binary and prints one
//! `criterion N: PASS|FAIL` line each; numeric arguments select criteria.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector, Vector3};
use tcmocap::dynamics::*;
use tcmocap::estimator::*;
use tcmocap::kinematics::*;
use tcmocap::model::STANDARD_GRAVITY;
use tcmocap::sensors::*;
use tcmocap::sim::*;
use tcmocap::{KinematicModel, StateVector, Trajectory};

/// Collects failed requirements and a short summary for one criterion.
#[derive(Default)]
struct Check {
    failures: Vec<String>,
    summary: Vec<String>,
}

impl Check {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    fn within(&mut self, label: &str, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.require(took < limit, || format!("{label} took {took:.1?}, limit {limit:?}"));
        self.note(format!("{label} {took:.1?}"));
    }
}

fn experiments_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn load_spec(file: &str, overrides: &[(&str, String)]) -> ExperimentSpec {
    let overrides: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    ExperimentSpec::load(&experiments_dir().join(file), &overrides).expect("shipped experiment parses")
}

fn deg_list(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
    )
}

fn noiseless() -> Vec<(&'static str, String)> {
    [
        "noise.sigma_gyro",
        "noise.sigma_accel",
        "noise.sigma_marker",
        "noise.sigma_orientation_deg",
    ]
    .into_iter()
    .map(|k| (k, "0.0".to_string()))
    .collect()
}

fn random_state(r: &mut rand_chacha::ChaCha8Rng, dof: usize) -> StateVector {
    StateVector::new(
        DVector::from_vec(uniform(r, dof, 1.5)),
        DVector::from_vec(uniform(r, dof, 2.0)),
        DVector::from_vec(uniform(r, dof, 1.0)),
    )
    .unwrap()
}

fn criterion_1(c: &mut Check) {
    let started = Instant::now();
    let mut worst_round_trip = 0.0f64;
    let mut worst_crba = 0.0f64;
    for (name, twin) in twins() {
        let m = &twin.model;
        let n = m.dof();
        let mut r = rng(101);
        for _ in 0..1000 {
            let q = uniform(&mut r, n, 3.0);
            let qd = uniform(&mut r, n, 3.0);
            let qdd = DVector::from_vec(uniform(&mut r, n, 10.0));
            let tau = inverse_dynamics(m, &q, &qd, qdd.as_slice()).unwrap();
            let back = forward_dynamics(m, &q, &qd, tau.as_slice()).unwrap();
            worst_round_trip = worst_round_trip.max((&back - &qdd).norm() / qdd.norm());
        }
        for _ in 0..100 {
            let q = uniform(&mut r, n, std::f64::consts::PI);
            let mm = mass_matrix(m, &q).unwrap();
            let zero = vec![0.0; n];
            let bias = bias_torque(m, &q, &zero).unwrap();
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = inverse_dynamics(m, &q, &zero, &e).unwrap() - &bias;
                worst_crba = worst_crba.max((mm.column(j) - col).amax());
            }
            let asym = (&mm - mm.transpose()).amax();
            c.require(asym < 1e-10, || format!("{name}: mass matrix asymmetry {asym:e}"));
            let min_eig = mm.symmetric_eigenvalues().min();
            c.require(min_eig > 0.0, || format!("{name}: mass matrix eigenvalue {min_eig:e}"));
        }
    }
    c.require(worst_round_trip < 1e-8, || {
        format!("ID/FD relative error {worst_round_trip:e}")
    });
    c.require(worst_crba < 1e-10, || format!("CRBA vs RNEA {worst_crba:e}"));
    c.note(format!("ID/FD {worst_round_trip:.1e}, CRBA {worst_crba:.1e}"));

    let (mass, l, i_c) = (0.5, 0.3, 2e-3);
    let pend = planar_pendulum(mass, l, i_c);
    for q in [-1.2, 0.3, 1.0] {
        let tau = inverse_dynamics(&pend, &[q], &[0.0], &[0.0]).unwrap()[0];
        let expected = mass * STANDARD_GRAVITY * l * q.sin();
        c.require((tau - expected).abs() < 1e-12, || {
            format!("1-link torque {tau} vs {expected}")
        });
    }
    let traj = generate_passive(&pend, &[2f64.to_radians()], &[0.0], 6.0, 1e-3).unwrap();
    let q: Vec<f64> = traj.q.iter().map(|v| v[0]).collect();
    let ups: Vec<f64> = (1..q.len())
        .filter(|&i| q[i - 1] < 0.0 && q[i] >= 0.0)
        .map(|i| traj.t[i - 1] + 1e-3 * (-q[i - 1]) / (q[i] - q[i - 1]))
        .collect();
    let period = (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64;
    let expected = 2.0 * std::f64::consts::PI * ((mass * l * l + i_c) / (mass * STANDARD_GRAVITY * l)).sqrt();
    let rel = (period - expected).abs() / expected;
    c.require(rel < 5e-3, || format!("period {period} vs {expected}"));
    c.note(format!("period error {:.3}%", 100.0 * rel));
    c.within("runtime", started, Duration::from_secs(10));
}

fn rel_ok(got: &Vector3<f64>, want: &Vector3<f64>, tol: f64) -> bool {
    (got - want).norm() <= tol * want.norm() + 1e-9
}

fn criterion_2(c: &mut Check) {
    let started = Instant::now();
    let along = |q: &[f64], qd: &[f64], qdd: &[f64], t: f64| -> (Vec<f64>, Vec<f64>) {
        (
            (0..q.len()).map(|j| q[j] + qd[j] * t + 0.5 * qdd[j] * t * t).collect(),
            (0..q.len()).map(|j| qd[j] + qdd[j] * t).collect(),
        )
    };
    let mut checked = 0;
    for (name, twin) in twins() {
        let m = &twin.model;
        let n = m.dof();
        let mut r = rng(102);
        for _ in 0..200 {
            let q = uniform(&mut r, n, 3.0);
            let qd = uniform(&mut r, n, 3.0);
            let qdd = uniform(&mut r, n, 5.0);

            let h = 1e-6;
            let rates = body_rates(m, &q, &qd).unwrap();
            let acc = body_accelerations(m, &q, &qd, &qdd).unwrap();
            let fk = |t: f64| forward_kinematics(m, &along(&q, &qd, &qdd, t).0).unwrap();
            let (p0, pp, pm) = (fk(0.0), fk(h), fk(-h));
            let vel = |t: f64| {
                let (qt, vt) = along(&q, &qd, &qdd, t);
                body_rates(m, &qt, &vt).unwrap()
            };
            let (rp, rm) = (vel(h), vel(-h));
            for b in 0..rates.len() {
                let rdot = (pp[b].rotation - pm[b].rotation) / (2.0 * h);
                let s = rdot * p0[b].rotation.transpose();
                let w = 0.5 * Vector3::new(s[(2, 1)] - s[(1, 2)], s[(0, 2)] - s[(2, 0)], s[(1, 0)] - s[(0, 1)]);
                // Rates from the path with q̈ match q̇ at t = 0.
                c.require(rel_ok(&rates[b].angular, &w, 1e-4), || format!("{name} ω body {b}"));
                let v = (pp[b].position - pm[b].position) / (2.0 * h);
                c.require(rel_ok(&rates[b].linear, &v, 1e-4), || format!("{name} v body {b}"));
                let alpha = (rp[b].angular - rm[b].angular) / (2.0 * h);
                c.require(rel_ok(&acc[b].angular, &alpha, 1e-4), || format!("{name} α body {b}"));
                let a = (rp[b].linear - rm[b].linear) / (2.0 * h);
                c.require(rel_ok(&acc[b].linear, &a, 1e-4), || format!("{name} a body {b}"));
            }

            let h = 1e-5;
            let body = rand::Rng::random_range(&mut r, 0..m.bodies().len());
            let off = Vector3::from_vec(uniform(&mut r, 3, 0.2));
            let pk = point_kinematics(m, &q, &qd, &qdd, body, &off).unwrap();
            let pos = |t: f64| fk(t)[body].transform_point(&off);
            let (x0, xp, xm) = (pos(0.0), pos(h), pos(-h));
            c.require(rel_ok(&pk.position, &x0, 1e-12), || format!("{name} point position"));
            c.require(rel_ok(&pk.velocity, &((xp - xm) / (2.0 * h)), 1e-4), || {
                format!("{name} point velocity")
            });
            let a_fd = (xp - 2.0 * x0 + xm) / (h * h);
            c.require(rel_ok(&pk.acceleration, &a_fd, 1e-4), || {
                format!("{name} point acceleration {:?} vs {:?}", pk.acceleration, a_fd)
            });
            checked += 1;
        }
    }
    c.note(format!("{checked} states"));
    c.within("runtime", started, Duration::from_secs(30));
}

fn criterion_3(c: &mut Check) {
    let m = pendulum_twin().model;
    let q0: Vec<f64> = [60.0f64, -20.0, 30.0].iter().map(|d| d.to_radians()).collect();
    let traj = generate_passive(&m, &q0, &[0.0; 3], 10.0, 1e-3).unwrap();
    let e0 = total_energy(&m, traj.q[0].as_slice(), traj.qdot[0].as_slice()).unwrap();
    let scale = e0.abs().max(potential_energy(&m, &[0.0; 3]).unwrap().abs());
    let drift = traj
        .q
        .iter()
        .zip(&traj.qdot)
        .map(|(q, v)| (total_energy(&m, q.as_slice(), v.as_slice()).unwrap() - e0).abs())
        .fold(0.0, f64::max)
        / scale;
    c.require(drift < 1e-4, || format!("relative drift {drift:e}"));
    c.note(format!("relative energy drift {drift:.2e}"));
}

/// One EKF step written out directly.
fn reference_ekf(
    m: &KinematicModel,
    sensors: &SensorSet,
    cfg: &FilterConfig,
    x: &StateVector,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = &cfg.p0;
    let h = h_stack(m, sensors, x).unwrap();
    let jac = measurement_jacobian(m, sensors, x, None, &cfg.jacobian).unwrap();
    let p_ht = p * jac.transpose();
    let s = &jac * &p_ht + &cfg.r;
    let k = s.cholesky().unwrap().solve(&p_ht.transpose()).transpose();
    let x_new = x.to_vector() + &k * (y - h);
    let n = p.nrows();
    let p_new = (DMatrix::identity(n, n) - &k * &jac) * p;
    (x_new, (&p_new + p_new.transpose()) * 0.5)
}

fn criterion_4(c: &mut Check) {
    let mut accel_err = 0.0f64;
    let mut structural = 0.0f64;
    let mut scheme_gap = 0.0f64;
    let mut ekf_gap = 0.0f64;
    let mut linear_gap = 0.0f64;
    let mut arm_scheme_gap = 0.0f64;
    for (name, twin) in twins() {
        let m = &twin.model;
        let n = m.dof();
        let sensors = twin.sensors.with_zero_torque(n);
        let layout = sensors.layout();
        let mut r = rng(104);
        for _ in 0..20 {
            let q = uniform(&mut r, n, 2.0);
            let tau = bias_torque(m, &q, &vec![0.0; n]).unwrap();
            let rest = StateVector::new(DVector::from_vec(q), DVector::zeros(n), tau).unwrap();
            for imu in &sensors.imus {
                accel_err = accel_err.max((h_accel(m, imu, &rest).unwrap().norm() - 9.81).abs());
            }

            let x = random_state(&mut r, n);
            let central = JacobianSettings {
                step_tau: 1e-6,
                ..JacobianSettings::default()
            };
            let forward = JacobianSettings {
                scheme: DiffScheme::Forward,
                ..central
            };
            let jac = measurement_jacobian(m, &sensors, &x, None, &JacobianSettings::default()).unwrap();
            for b in &layout.blocks {
                if matches!(b.kind, BlockKind::Gyro(_) | BlockKind::Marker(_)) {
                    structural = structural.max(jac.view((b.offset, 2 * n), (b.kind.len(), n)).amax());
                }
            }
            let a = measurement_jacobian(m, &sensors, &x, None, &central).unwrap();
            let b = measurement_jacobian(m, &sensors, &x, None, &forward).unwrap();
            // The 1e-4 agreement is posed on the pendulum stack. The arm's
            // larger torques put the forward-difference truncation above it.
            let gap = (a - b).amax();
            if name == "pendulum3" {
                scheme_gap = scheme_gap.max(gap);
            } else {
                arm_scheme_gap = arm_scheme_gap.max(gap);
            }

            let cfg = FilterConfig {
                q: process_noise(n, 1e-8, 1e-6, 1e-2),
                r: measurement_covariance(&layout, &NoiseSpec::default()),
                p0: process_noise(n, 1e-3, 1e-2, 1e-1),
                x0: x.clone(),
                t0: 0.0,
                iterations: 1,
                dt: 0.01,
                jacobian: JacobianSettings::default(),
                joseph: false,
            };
            let truth = random_state(&mut r, n);
            let frame = MeasurementFrame {
                t: 0.0,
                y: h_stack(m, &sensors, &truth).unwrap(),
                mask: layout.all_active(),
            };
            let (x_hat, p_hat, _) = measurement_update(m, &sensors, &cfg, &x, &cfg.p0, &frame).unwrap();
            let (x_ref, p_ref) = reference_ekf(m, &sensors, &cfg, &x, &frame.y);
            ekf_gap = ekf_gap
                .max((x_hat.to_vector() - x_ref).amax())
                .max((p_hat - p_ref).amax());

            let torque_only = SensorSet {
                torque_joints: (0..n).collect(),
                ..Default::default()
            };
            let t_layout = torque_only.layout();
            let one = FilterConfig {
                r: measurement_covariance(&t_layout, &NoiseSpec::default()),
                ..cfg.clone()
            };
            let five = FilterConfig {
                iterations: 5,
                ..one.clone()
            };
            let zero = MeasurementFrame {
                t: 0.0,
                y: DVector::zeros(n),
                mask: t_layout.all_active(),
            };
            let (a, _, _) = measurement_update(m, &torque_only, &one, &x, &one.p0, &zero).unwrap();
            let (b, _, _) = measurement_update(m, &torque_only, &five, &x, &five.p0, &zero).unwrap();
            linear_gap = linear_gap.max((a.to_vector() - b.to_vector()).amax());
        }
    }
    c.require(accel_err < 1e-9, || {
        format!("static accelerometer norm error {accel_err:e}")
    });
    c.require(structural < 1e-9, || {
        format!("gyro/marker torque columns {structural:e}")
    });
    c.require(scheme_gap < 1e-4, || format!("central vs forward {scheme_gap:e}"));
    c.require(ekf_gap < 1e-12, || format!("single iteration vs EKF {ekf_gap:e}"));
    c.require(linear_gap < 1e-12, || format!("linear iterations {linear_gap:e}"));
    c.note(format!(
        "accel {accel_err:.1e}, zeros {structural:.1e}, schemes {scheme_gap:.1e} (arm, reported only: {arm_scheme_gap:.1e}), EKF {ekf_gap:.1e}, linear {linear_gap:.1e}"
    ));
}

fn run(spec: &ExperimentSpec) -> ExperimentReport {
    run_experiment_in_memory(spec, &experiments_dir()).expect("experiment runs")
}

fn check_filter_health(c: &mut Check, label: &str, report: &ExperimentReport) {
    for r in &report.results {
        if let Some(s) = r.summary {
            c.require(s.min_p_eigenvalue > -1e-9 && s.max_p_asymmetry <= 1e-9, || {
                format!(
                    "{label} {}: P eigenvalue {:e}, asymmetry {:e}",
                    r.method.name(),
                    s.min_p_eigenvalue,
                    s.max_p_asymmetry
                )
            });
        }
    }
}

fn criterion_5(c: &mut Check) {
    let started = Instant::now();
    let mut overrides = noiseless();
    overrides.push(("methods", "[\"imu_iekf\"]".into()));
    let report = run(&load_spec("pendulum_trial.spec", &overrides));
    let (mut q_max, mut tau_max) = (0.0f64, 0.0f64);
    for j in 1..=3 {
        q_max = q_max.max(report.rmsd_of(Method::ImuIekf, &format!("q{j}")).unwrap());
        tau_max = tau_max.max(report.rmsd_of(Method::ImuIekf, &format!("tau{j}")).unwrap());
    }
    c.require(q_max < 0.05, || format!("q RMSD {q_max} deg"));
    c.require(tau_max < 0.05, || format!("tau RMSD {tau_max} N·m"));
    check_filter_health(c, "noiseless", &report);
    c.note(format!("max q RMSD {q_max:.4} deg, max tau RMSD {tau_max:.4} N·m"));
    c.within("runtime", started, Duration::from_secs(120));
}

fn criterion_6(c: &mut Check) {
    let offset = 5.0f64;
    let mut overrides = noiseless();
    overrides.extend([
        ("duration", "4.0".to_string()),
        (
            "methods",
            "[\"imu_iekf\", \"imu_marker_iekf\", \"imu_marker_0t_iekf\"]".into(),
        ),
        ("filter.x0_offset_deg", deg_list(&[offset; 3])),
        ("filter.p0", deg_list(&[offset.to_radians().powi(2), 1e-4, 1.0])),
    ]);
    let report = run(&load_spec("pendulum_trial.spec", &overrides));
    for r in &report.results {
        let s = &r.aligned;
        let late = (0..s.len())
            .filter(|&i| s.t[i] >= 1.0 - 1e-9)
            .map(|i| (&s.q[i] - &report.truth.q[i]).amax().to_degrees())
            .fold(0.0, f64::max);
        let start = (&s.q[0] - &report.truth.q[0]).amax().to_degrees();
        c.require(late < 0.5, || format!("{}: {late} deg after 1 s", r.method.name()));
        c.note(format!(
            "{} first update {start:.2} deg, after 1 s {late:.3} deg",
            r.method.name()
        ));
    }
    check_filter_health(c, "offset", &report);
}

fn pendulum_trials() -> Vec<ExperimentReport> {
    let starts: [[f64; 3]; 6] = [
        [60.0, -20.0, 30.0],
        [45.0, 30.0, -30.0],
        [75.0, -45.0, 20.0],
        [30.0, 60.0, -40.0],
        [90.0, -30.0, 0.0],
        [50.0, 10.0, 60.0],
    ];
    let specs: Vec<ExperimentSpec> = starts
        .iter()
        .enumerate()
        .map(|(i, q0)| {
            load_spec(
                "pendulum_trial.spec",
                &[("seed", format!("{}", i + 1)), ("scenario.q0_deg", deg_list(q0))],
            )
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = specs.iter().map(|spec| s.spawn(move || run(spec))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn late_rms(series: &tcmocap::EstimateSeries, j: usize, from: f64) -> f64 {
    let v: Vec<f64> = (0..series.len())
        .filter(|&i| series.t[i] >= from)
        .map(|i| series.tau[i][j])
        .collect();
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn criterion_7(c: &mut Check) {
    let started = Instant::now();
    let trials = pendulum_trials();
    let (mut imu_worst, mut cells, mut better, mut ik_worse) = (0.0f64, 0, 0, 0);
    let mut monotone = Vec::new();
    for (t, report) in trials.iter().enumerate() {
        let label = format!("trial {}", t + 1);
        for j in 1..=3 {
            let q = format!("q{j}");
            let imu = report.rmsd_of(Method::ImuIekf, &q).unwrap();
            let both = report.rmsd_of(Method::ImuMarkerIekf, &q).unwrap();
            imu_worst = imu_worst.max(imu);
            c.require(imu < 4.0, || format!("{label} {q}: IMU-IEKF RMSD {imu} deg"));
            cells += 1;
            if both <= imu {
                better += 1;
            }
        }
        if report.rmsd_of(Method::OrientationIkId, "q3").unwrap() > report.rmsd_of(Method::ImuIekf, "q3").unwrap() {
            ik_worse += 1;
        }
        let sigma_tau = report.spec.filter.sigma_tau;
        let zt = &report.result(Method::ImuMarkerZeroTorqueIekf).unwrap().aligned;
        let imu = &report.result(Method::ImuIekf).unwrap().aligned;
        for j in 0..3 {
            let (with, without) = (late_rms(zt, j, 3.0), late_rms(imu, j, 3.0));
            c.require(with <= without && with < 3.0 * sigma_tau, || {
                format!(
                    "{label} tau{}: zero-torque RMS {with:.3} vs IMU-only {without:.3} after 3 s",
                    j + 1
                )
            });
        }
        check_filter_health(c, &label, report);
        for r in &report.results {
            if let Some(s) = r.summary {
                monotone.push(s.monotone_fraction);
            }
        }
    }
    c.require(better * 5 >= cells * 4, || {
        format!("markers helped in {better}/{cells} cells")
    });
    c.require(2 * ik_worse > trials.len(), || {
        format!("orientation IK worse on q3 in {ik_worse}/{}", trials.len())
    });
    let min_mono = monotone.iter().copied().fold(1.0, f64::min);
    c.note(format!(
        "IMU-IEKF max q RMSD {imu_worst:.3} deg, markers helped {better}/{cells}, orientation IK worse {ik_worse}/{}, min monotone fraction {min_mono:.3}",
        trials.len()
    ));
    c.within("runtime", started, Duration::from_secs(600));
}

fn arm_knot_sets() -> Vec<Vec<(f64, [f64; 6])>> {
    vec![
        vec![
            (0.0, [0.0, 20.0, 0.0, 30.0, 0.0, 0.0]),
            (1.0, [0.0, 20.0, 0.0, 30.0, 0.0, 0.0]),
            (2.0, [40.0, 50.0, 20.0, 70.0, 30.0, 40.0]),
            (3.0, [40.0, 50.0, 20.0, 70.0, 30.0, 40.0]),
            (4.5, [-30.0, 10.0, -20.0, 20.0, -30.0, -20.0]),
            (6.0, [-30.0, 10.0, -20.0, 20.0, -30.0, -20.0]),
        ],
        vec![
            (0.0, [10.0, 30.0, -10.0, 40.0, 10.0, -10.0]),
            (0.8, [10.0, 30.0, -10.0, 40.0, 10.0, -10.0]),
            (2.2, [-40.0, 60.0, 30.0, 80.0, -20.0, 50.0]),
            (3.0, [-40.0, 60.0, 30.0, 80.0, -20.0, 50.0]),
            (4.4, [20.0, 15.0, -30.0, 30.0, 40.0, -30.0]),
            (6.0, [20.0, 15.0, -30.0, 30.0, 40.0, -30.0]),
        ],
        vec![
            (0.0, [0.0, 40.0, 0.0, 60.0, 0.0, 0.0]),
            (1.0, [0.0, 40.0, 0.0, 60.0, 0.0, 0.0]),
            (1.8, [30.0, 10.0, 40.0, 20.0, 20.0, 30.0]),
            (2.6, [-30.0, 50.0, -40.0, 70.0, -20.0, -30.0]),
            (3.4, [30.0, 10.0, 40.0, 20.0, 20.0, 30.0]),
            (4.2, [0.0, 40.0, 0.0, 60.0, 0.0, 0.0]),
            (6.0, [0.0, 40.0, 0.0, 60.0, 0.0, 0.0]),
        ],
        vec![
            (0.0, [-20.0, 25.0, 10.0, 45.0, -10.0, 20.0]),
            (1.5, [-20.0, 25.0, 10.0, 45.0, -10.0, 20.0]),
            (3.5, [50.0, 55.0, -25.0, 85.0, 35.0, -40.0]),
            (4.0, [50.0, 55.0, -25.0, 85.0, 35.0, -40.0]),
            (6.0, [0.0, 30.0, 0.0, 40.0, 0.0, 0.0]),
        ],
        vec![
            (0.0, [15.0, 10.0, 20.0, 25.0, 15.0, 10.0]),
            (0.5, [15.0, 10.0, 20.0, 25.0, 15.0, 10.0]),
            (1.5, [45.0, 45.0, -20.0, 65.0, -25.0, 45.0]),
            (2.5, [-25.0, 35.0, 30.0, 35.0, 25.0, -35.0]),
            (3.5, [35.0, 20.0, -10.0, 55.0, -35.0, 25.0]),
            (4.5, [15.0, 10.0, 20.0, 25.0, 15.0, 10.0]),
            (6.0, [15.0, 10.0, 20.0, 25.0, 15.0, 10.0]),
        ],
    ]
}

/// Largest torque error of `series` within `half_width` of any of `times`.
fn peak_error_near(series: &tcmocap::EstimateSeries, truth: &Trajectory, times: &[f64], half_width: f64) -> f64 {
    (0..series.len())
        .filter(|&i| times.iter().any(|t| (series.t[i] - t).abs() <= half_width))
        .map(|i| (&series.tau[i] - &truth.tau[i]).amax())
        .fold(0.0, f64::max)
}

fn criterion_8(c: &mut Check) {
    let started = Instant::now();
    let specs: Vec<ExperimentSpec> = arm_knot_sets()
        .into_iter()
        .enumerate()
        .map(|(i, knots)| {
            let mut spec = load_spec("arm_trial.spec", &[("seed", format!("{}", i + 1))]);
            spec.scenario = Scenario::Prescribed {
                knot: knots
                    .into_iter()
                    .map(|(t, q)| KnotSpec {
                        t,
                        q_deg: q.to_vec(),
                        qdot_deg_s: None,
                        qddot_deg_s2: None,
                    })
                    .collect(),
            };
            spec.validate().unwrap();
            spec
        })
        .collect();
    let reports: Vec<ExperimentReport> = std::thread::scope(|s| {
        let handles: Vec<_> = specs.iter().map(|spec| s.spawn(move || run(spec))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let (mut q_worst, mut tau_share_worst) = (0.0f64, 0.0f64);
    let mut overshoot = Vec::new();
    for (t, report) in reports.iter().enumerate() {
        let label = format!("trial {}", t + 1);
        let peak = report.truth.tau.iter().map(|v| v.amax()).fold(0.0, f64::max);
        for j in 1..=6 {
            let q = report.rmsd_of(Method::ImuIekf, &format!("q{j}")).unwrap();
            let tau = report.rmsd_of(Method::ImuIekf, &format!("tau{j}")).unwrap();
            q_worst = q_worst.max(q);
            tau_share_worst = tau_share_worst.max(tau / peak);
            c.require(q < 3.5, || format!("{label} q{j}: {q} deg"));
            c.require(tau < 0.03 * peak, || {
                format!("{label} tau{j}: {tau} N·m vs peak {peak} N·m")
            });
        }
        let Scenario::Prescribed { knot } = &report.spec.scenario else {
            unreachable!()
        };
        let steps: Vec<f64> = knot
            .iter()
            .map(|k| k.t)
            .filter(|&t| t > 0.0 && t < report.spec.duration)
            .collect();
        let ik = peak_error_near(
            &report.result(Method::MarkerIkId).unwrap().aligned,
            &report.truth,
            &steps,
            0.25,
        );
        let iekf = peak_error_near(
            &report.result(Method::ImuIekf).unwrap().aligned,
            &report.truth,
            &steps,
            0.25,
        );
        c.require(ik > iekf, || {
            format!("{label}: IK+ID peak error {ik:.3} vs IEKF {iekf:.3} N·m")
        });
        overshoot.push(format!("{ik:.2}/{iekf:.2}"));
        check_filter_health(c, &label, report);
    }
    c.note(format!(
        "IMU-IEKF max q RMSD {q_worst:.3} deg, max tau RMSD {:.2}% of peak, step errors IK+ID/IEKF N·m {}",
        100.0 * tau_share_worst,
        overshoot.join(" ")
    ));
    c.within("runtime", started, Duration::from_secs(900));
}

fn bundle(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn criterion_9(c: &mut Check) {
    let tmp = tempfile::tempdir().unwrap();
    for file in ["pendulum_trial.spec", "arm_trial.spec"] {
        let spec = load_spec(file, &[("duration", "2.0".into())]);
        let (a, b) = (
            tmp.path().join(format!("{file}.a")),
            tmp.path().join(format!("{file}.b")),
        );
        run_experiment(&spec, &experiments_dir(), &a).unwrap();
        run_experiment(&spec, &experiments_dir(), &b).unwrap();
        let (fa, fb) = (bundle(&a), bundle(&b));
        c.require(!fa.is_empty() && fa == fb, || format!("{file}: bundles differ"));
        c.note(format!("{file} {} files identical", fa.len()));
    }
}

type Criterion = (u32, &'static str, fn(&mut Check));

const CRITERIA: [Criterion; 9] = [
    (1, "dynamics oracle suite", criterion_1),
    (2, "kinematic differentiation suite", criterion_2),
    (3, "energy conservation", criterion_3),
    (4, "measurement-model suite", criterion_4),
    (5, "noiseless consistency", criterion_5),
    (6, "convergence from a 5 deg offset", criterion_6),
    (7, "pendulum twin ordering", criterion_7),
    (8, "arm twin comparison", criterion_8),
    (9, "determinism", criterion_9),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, title, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let mut check = Check::default();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&mut check)));
        if outcome.is_err() {
            check.failures.push("panicked".into());
        }
        let status = if check.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {id}: {status} {title} ({})", check.summary.join("; "));
        for f in &check.failures {
            println!("    {f}");
        }
        if !check.failures.is_empty() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
