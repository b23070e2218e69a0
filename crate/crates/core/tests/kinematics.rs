mod common;

use common::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use tcmocap::kinematics::*;
use tcmocap::math::Mat3;

const STATES: usize = 200;

fn along(q: &[f64], qd: &[f64], qdd: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let pos = (0..q.len()).map(|j| q[j] + qd[j] * t + 0.5 * qdd[j] * t * t).collect();
    let vel = (0..q.len()).map(|j| qd[j] + qdd[j] * t).collect();
    (pos, vel)
}

fn vee_of_skew(m: &Mat3) -> Vector3<f64> {
    let s = 0.5 * (m - m.transpose());
    Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
}

fn check(label: &str, got: &Vector3<f64>, want: &Vector3<f64>, tol: f64) {
    let err = (got - want).norm();
    assert!(
        err <= tol * want.norm() + 1e-9,
        "{label}: got {got:?}, want {want:?}, err {err:e}"
    );
}

#[test]
fn body_rates_match_fk_differences() {
    let h = 1e-6;
    for (name, twin) in twins() {
        let m = &twin.model;
        let mut r = rng(21);
        for _ in 0..STATES {
            let q = uniform(&mut r, m.dof(), 3.0);
            let qd = uniform(&mut r, m.dof(), 3.0);
            let rates = body_rates(m, &q, &qd).unwrap();
            let (qp, _) = along(&q, &qd, &vec![0.0; q.len()], h);
            let (qm, _) = along(&q, &qd, &vec![0.0; q.len()], -h);
            let (p0, pp, pm) = (
                forward_kinematics(m, &q).unwrap(),
                forward_kinematics(m, &qp).unwrap(),
                forward_kinematics(m, &qm).unwrap(),
            );
            for b in 0..rates.len() {
                let rdot = (pp[b].rotation - pm[b].rotation) / (2.0 * h);
                let w = vee_of_skew(&(rdot * p0[b].rotation.transpose()));
                check(&format!("{name} ω body {b}"), &rates[b].angular, &w, 1e-4);
                let v = (pp[b].position - pm[b].position) / (2.0 * h);
                check(&format!("{name} v body {b}"), &rates[b].linear, &v, 1e-4);
            }
        }
    }
}

#[test]
fn body_accelerations_match_rate_differences() {
    let h = 1e-6;
    for (name, twin) in twins() {
        let m = &twin.model;
        let mut r = rng(22);
        for _ in 0..STATES {
            let q = uniform(&mut r, m.dof(), 3.0);
            let qd = uniform(&mut r, m.dof(), 3.0);
            let qdd = uniform(&mut r, m.dof(), 5.0);
            let acc = body_accelerations(m, &q, &qd, &qdd).unwrap();
            let (qp, vp) = along(&q, &qd, &qdd, h);
            let (qm, vm) = along(&q, &qd, &qdd, -h);
            let (rp, rm) = (body_rates(m, &qp, &vp).unwrap(), body_rates(m, &qm, &vm).unwrap());
            for b in 0..acc.len() {
                let alpha = (rp[b].angular - rm[b].angular) / (2.0 * h);
                check(&format!("{name} α body {b}"), &acc[b].angular, &alpha, 1e-4);
                let a = (rp[b].linear - rm[b].linear) / (2.0 * h);
                check(&format!("{name} a body {b}"), &acc[b].linear, &a, 1e-4);
            }
        }
    }
}

#[test]
fn point_kinematics_match_position_differences() {
    let h = 1e-5;
    for (name, twin) in twins() {
        let m = &twin.model;
        let mut r = rng(23);
        for _ in 0..STATES {
            let q = uniform(&mut r, m.dof(), 3.0);
            let qd = uniform(&mut r, m.dof(), 3.0);
            let qdd = uniform(&mut r, m.dof(), 5.0);
            let body = rand::Rng::random_range(&mut r, 0..m.bodies().len());
            let off = Vector3::from_vec(uniform(&mut r, 3, 0.2));
            let pk = point_kinematics(m, &q, &qd, &qdd, body, &off).unwrap();
            let pos = |t: f64| {
                let (qt, _) = along(&q, &qd, &qdd, t);
                forward_kinematics(m, &qt).unwrap()[body].transform_point(&off)
            };
            let (p0, pp, pm) = (pos(0.0), pos(h), pos(-h));
            check(&format!("{name} p"), &pk.position, &p0, 1e-12);
            check(&format!("{name} v"), &pk.velocity, &((pp - pm) / (2.0 * h)), 1e-3);
            check(
                &format!("{name} a"),
                &pk.acceleration,
                &((pp - 2.0 * p0 + pm) / (h * h)),
                1e-3,
            );
        }
    }
}

#[test]
fn static_state_has_no_motion() {
    for (_, twin) in twins() {
        let m = &twin.model;
        let q = uniform(&mut rng(24), m.dof(), 2.0);
        let zeros = vec![0.0; m.dof()];
        for (rates, acc) in body_rates(m, &q, &zeros)
            .unwrap()
            .iter()
            .zip(body_accelerations(m, &q, &zeros, &zeros).unwrap())
        {
            assert_eq!(rates.angular.norm() + rates.linear.norm(), 0.0);
            assert_eq!(acc.angular.norm() + acc.linear.norm(), 0.0);
        }
    }
}

#[test]
fn one_link_examples() {
    let l = 0.5;
    let m = one_link(1.0, l, 1e-3, Vector3::z(), -Vector3::y());
    let tip = -Vector3::y() * l;
    let poses = forward_kinematics(&m, &[0.0]).unwrap();
    assert_eq!(poses[0].rotation, Mat3::identity());
    assert!((poses[0].transform_point(&tip) - Vector3::new(0.0, -l, 0.0)).norm() < 1e-15);
    let poses = forward_kinematics(&m, &[std::f64::consts::FRAC_PI_2]).unwrap();
    assert!((poses[0].transform_point(&tip) - Vector3::new(l, 0.0, 0.0)).norm() < 1e-15);
    let rates = body_rates(&m, &[0.7], &[2.0]).unwrap();
    assert_eq!(rates[0].angular, Vector3::new(0.0, 0.0, 2.0));

    // Constant spin: pure centripetal acceleration toward the axis.
    let (w, radius) = (3.0, 0.4);
    let pk = point_kinematics(&m, &[0.9], &[w], &[0.0], 0, &(-Vector3::y() * radius)).unwrap();
    assert!((pk.acceleration.norm() - w * w * radius).abs() < 1e-12);
    assert!((pk.acceleration.normalize() + pk.position.normalize()).norm() < 1e-12);
    let origin = point_kinematics(&m, &[0.9], &[w], &[1.0], 0, &Vector3::zeros()).unwrap();
    assert_eq!(origin.position, forward_kinematics(&m, &[0.9]).unwrap()[0].position);
}

#[test]
fn non_finite_input_is_rejected() {
    let m = planar_pendulum(1.0, 0.3, 1e-3);
    assert!(forward_kinematics(&m, &[f64::NAN]).is_err());
    assert!(point_kinematics(&m, &[0.0], &[0.0], &[0.0], 3, &Vector3::zeros()).is_err());
}

proptest! {
    #[test]
    fn prop_rotations_stay_orthonormal(q in prop::collection::vec(-10.0f64..10.0, 6)) {
        let m = tcmocap::sim::arm_twin().model;
        for pose in forward_kinematics(&m, &q).unwrap() {
            prop_assert!(tcmocap::math::is_rotation(&pose.rotation, 1e-10));
        }
    }
}
