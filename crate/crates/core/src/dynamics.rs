//! Joint-space dynamics `τ = M(q) q̈ + τ_I(q, q̇)`.
//!
//! Inverse dynamics is recursive Newton–Euler in the navigation frame; the
//! mass matrix comes from the composite-rigid-body algorithm using spatial
//! inertias expressed at the navigation origin. The two routines share
//! only the kinematic sweep, so each can serve as a check on the other.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::kinematics::{check_coords, tree_kinematics};
use crate::math::{skew, Vec3};
use crate::model::KinematicModel;

/// Generalized forces that realize `(q, q̇, q̈)` under gravity.
pub fn inverse_dynamics(model: &KinematicModel, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<DVector<f64>> {
    let tree = tree_kinematics(model, q, Some(qdot), Some(qddot))?;
    let n = model.dof();
    let joints = model.joints();
    let g = model.gravity();

    // Force and moment (about the joint origin) that each joint transmits
    // to its child subtree.
    let mut force = vec![Vec3::zeros(); n];
    let mut moment = vec![Vec3::zeros(); n];
    for (j, joint) in joints.iter().enumerate() {
        let body = &model.bodies()[joint.child];
        let kin = &tree.bodies[joint.child];
        let rot = kin.pose.rotation;
        let com = kin.point(&body.com);
        let inertia = rot * body.inertia * rot.transpose();
        let w = kin.rates.angular;
        let f = body.mass * (com.acceleration - g);
        let n_com = inertia * kin.accelerations.angular + w.cross(&(inertia * w));
        force[j] = f;
        moment[j] = n_com + (com.position - tree.joint_origins[j]).cross(&f);
    }

    let mut tau = DVector::zeros(n);
    for &j in model.traversal_order().iter().rev() {
        tau[j] = tree.joint_axes[j].dot(&moment[j]) + joints[j].damping * qdot[j];
        if let Some(p) = joints[j].parent {
            let jp = model.body_joint(p);
            let lever = tree.joint_origins[j] - tree.joint_origins[jp];
            let (f, carried) = (force[j], moment[j] + lever.cross(&force[j]));
            force[jp] += f;
            moment[jp] += carried;
        }
    }
    Ok(tau)
}

/// Gravity, Coriolis and centrifugal torque: inverse dynamics at `q̈ = 0`.
pub fn bias_torque(model: &KinematicModel, q: &[f64], qdot: &[f64]) -> Result<DVector<f64>> {
    let zeros = vec![0.0; model.dof()];
    inverse_dynamics(model, q, qdot, &zeros)
}

/// Spatial inertia at the navigation origin, ordered (angular; linear).
fn spatial_inertia(mass: f64, com: &Vec3, inertia_com: &Matrix3<f64>) -> Matrix6<f64> {
    let c = skew(com);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(inertia_com + mass * c * c.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * c));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(mass * c.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    out
}

/// Joint-space mass matrix via the composite-rigid-body algorithm.
pub fn mass_matrix(model: &KinematicModel, q: &[f64]) -> Result<DMatrix<f64>> {
    let tree = tree_kinematics(model, q, None, None)?;
    let n = model.dof();
    let joints = model.joints();

    // Composite inertia of the subtree hanging from each joint.
    let mut composite: Vec<Matrix6<f64>> = joints
        .iter()
        .map(|joint| {
            let body = &model.bodies()[joint.child];
            let pose = &tree.bodies[joint.child].pose;
            let rot = pose.rotation;
            spatial_inertia(
                body.mass,
                &pose.transform_point(&body.com),
                &(rot * body.inertia * rot.transpose()),
            )
        })
        .collect();
    for &j in model.traversal_order().iter().rev() {
        if let Some(p) = joints[j].parent {
            let jp = model.body_joint(p);
            let child = composite[j];
            composite[jp] += child;
        }
    }

    // Motion subspace of each joint: unit rotation about its world axis.
    let subspace: Vec<Vector6<f64>> = (0..n)
        .map(|j| {
            let z = tree.joint_axes[j];
            let lin = tree.joint_origins[j].cross(&z);
            Vector6::new(z.x, z.y, z.z, lin.x, lin.y, lin.z)
        })
        .collect();

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let f = composite[i] * subspace[i];
        for &j in model.support(i) {
            let v = subspace[j].dot(&f);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// `q̈ = M(q)⁻¹ (τ − τ_I(q, q̇))` through a Cholesky factorization.
pub fn forward_dynamics(model: &KinematicModel, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<DVector<f64>> {
    check_coords(model, "tau", tau)?;
    let m = mass_matrix(model, q)?;
    let bias = bias_torque(model, q, qdot)?;
    let rhs = DVector::from_column_slice(tau) - bias;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Model("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

pub fn kinetic_energy(model: &KinematicModel, q: &[f64], qdot: &[f64]) -> Result<f64> {
    check_coords(model, "qdot", qdot)?;
    let m = mass_matrix(model, q)?;
    let v = DVector::from_column_slice(qdot);
    Ok(0.5 * v.dot(&(m * &v)))
}

/// Gravitational potential energy relative to the navigation origin.
pub fn potential_energy(model: &KinematicModel, q: &[f64]) -> Result<f64> {
    let tree = tree_kinematics(model, q, None, None)?;
    let g = model.gravity();
    Ok(model
        .bodies()
        .iter()
        .zip(&tree.bodies)
        .map(|(b, k)| -b.mass * g.dot(&k.pose.transform_point(&b.com)))
        .sum())
}

pub fn total_energy(model: &KinematicModel, q: &[f64], qdot: &[f64]) -> Result<f64> {
    Ok(kinetic_energy(model, q, qdot)? + potential_energy(model, q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rod_inertia, BodySpec, JointSpec, STANDARD_GRAVITY};
    use approx::assert_relative_eq;

    /// Hanging link along −z rotating about x: swings in the vertical y–z
    /// plane under gravity (0, 0, −g).
    fn pendulum(mass: f64, l: f64, inertia: f64) -> KinematicModel {
        let body = BodySpec {
            name: "bob".into(),
            mass,
            com: Vec3::new(0.0, 0.0, -l),
            inertia: nalgebra::Matrix3::from_diagonal(&Vec3::new(inertia, inertia, inertia)),
        };
        KinematicModel::new(
            vec![body],
            vec![JointSpec::revolute(None, 0, Vec3::x(), Vec3::zeros())],
            Vec3::new(0.0, 0.0, -STANDARD_GRAVITY),
        )
        .unwrap()
    }

    #[test]
    fn static_pendulum_torque_is_mgl_sin_q() {
        let (m, l) = (0.8, 0.35);
        let model = pendulum(m, l, 1e-6);
        for q in [-1.2, -0.3, 0.0, 0.5, 1.4] {
            let tau = inverse_dynamics(&model, &[q], &[0.0], &[0.0]).unwrap();
            assert_relative_eq!(tau[0], m * STANDARD_GRAVITY * l * q.sin(), epsilon = 1e-12);
            let bias = bias_torque(&model, &[q], &[0.0]).unwrap();
            assert_relative_eq!(bias[0], m * STANDARD_GRAVITY * l * q.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_gravity_static_torque_is_zero() {
        let model = pendulum(1.0, 0.3, 1e-3).with_gravity(Vec3::zeros());
        let tau = inverse_dynamics(&model, &[0.7], &[0.0], &[0.0]).unwrap();
        assert_eq!(tau[0], 0.0);
        assert_eq!(bias_torque(&model, &[0.7], &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn point_mass_inertia() {
        let (m, l, i_axis) = (0.8, 0.35, 2e-3);
        let model = pendulum(m, l, i_axis);
        let mm = mass_matrix(&model, &[0.4]).unwrap();
        assert_relative_eq!(mm[(0, 0)], m * l * l + i_axis, epsilon = 1e-14);
    }

    #[test]
    fn released_from_horizontal() {
        let (m, l, i_axis) = (0.8, 0.35, 2e-3);
        let model = pendulum(m, l, i_axis);
        let q = std::f64::consts::FRAC_PI_2;
        let qdd = forward_dynamics(&model, &[q], &[0.0], &[0.0]).unwrap();
        let expected = -(m * STANDARD_GRAVITY * l) / (m * l * l + i_axis) * q.sin();
        assert_relative_eq!(qdd[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn bias_torque_equilibrium() {
        let model = pendulum(0.8, 0.35, 2e-3);
        let bias = bias_torque(&model, &[0.9], &[1.3]).unwrap();
        let qdd = forward_dynamics(&model, &[0.9], &[1.3], bias.as_slice()).unwrap();
        assert!(qdd[0].abs() < 1e-10);
    }

    #[test]
    fn damping_enters_as_viscous_torque() {
        let mut model = pendulum(0.8, 0.35, 2e-3);
        let mut joints = model.joints().to_vec();
        joints[0].damping = 0.2;
        model = KinematicModel::new(model.bodies().to_vec(), joints, model.gravity()).unwrap();
        let undamped = pendulum(0.8, 0.35, 2e-3);
        let a = inverse_dynamics(&model, &[0.1], &[2.0], &[0.5]).unwrap();
        let b = inverse_dynamics(&undamped, &[0.1], &[2.0], &[0.5]).unwrap();
        assert_relative_eq!(a[0] - b[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn rod_inertia_is_valid_body() {
        let b = BodySpec {
            name: "rod".into(),
            mass: 0.4,
            com: Vec3::new(0.0, 0.0, -0.15),
            inertia: rod_inertia(0.4, 0.3, 0.01, 2),
        };
        assert!(KinematicModel::new(
            vec![b],
            vec![JointSpec::revolute(None, 0, Vec3::x(), Vec3::zeros())],
            Vec3::zeros()
        )
        .is_ok());
    }
}
