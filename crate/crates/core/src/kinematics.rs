//! Rigid-body kinematics over the joint tree, all quantities expressed in
//! the navigation frame.
//!
//! Gravity does not enter here; accelerations are purely kinematic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math::{axis_angle, Mat3, Vec3};
use crate::model::KinematicModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Body-to-navigation rotation `R^{n b}`.
    pub rotation: Mat3,
    /// Body frame origin in the navigation frame, m.
    pub position: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
        position: Vec3::new(0.0, 0.0, 0.0),
    };

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.position + self.rotation * local
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyRates {
    pub angular: Vec3,
    /// Velocity of the body frame origin.
    pub linear: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyAccelerations {
    pub angular: Vec3,
    /// Acceleration of the body frame origin.
    pub linear: Vec3,
}

/// Pose, rates and accelerations of one body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyKinematics {
    pub pose: Pose,
    pub rates: BodyRates,
    pub accelerations: BodyAccelerations,
}

impl BodyKinematics {
    const WORLD: BodyKinematics = BodyKinematics {
        pose: Pose::IDENTITY,
        rates: BodyRates {
            angular: Vec3::new(0.0, 0.0, 0.0),
            linear: Vec3::new(0.0, 0.0, 0.0),
        },
        accelerations: BodyAccelerations {
            angular: Vec3::new(0.0, 0.0, 0.0),
            linear: Vec3::new(0.0, 0.0, 0.0),
        },
    };

    /// Kinematics of the body-fixed point at `local` (body frame).
    pub fn point(&self, local: &Vec3) -> PointKinematics {
        let r = self.pose.rotation * local;
        let w = self.rates.angular;
        let alpha = self.accelerations.angular;
        PointKinematics {
            position: self.pose.position + r,
            velocity: self.rates.linear + w.cross(&r),
            acceleration: self.accelerations.linear + alpha.cross(&r) + w.cross(&w.cross(&r)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Full kinematic state of the tree: per-body kinematics plus the world
/// position and axis of each joint.
#[derive(Debug, Clone)]
pub struct TreeKinematics {
    /// Indexed by body.
    pub bodies: Vec<BodyKinematics>,
    /// Joint origins, indexed by joint.
    pub joint_origins: Vec<Vec3>,
    /// Unit joint axes in the navigation frame, indexed by joint.
    pub joint_axes: Vec<Vec3>,
}

pub(crate) fn check_coords(model: &KinematicModel, name: &str, v: &[f64]) -> Result<()> {
    if v.len() != model.dof() {
        return Err(Error::Dimension(format!(
            "{name} has length {}, model has {} degrees of freedom",
            v.len(),
            model.dof()
        )));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{name}[{i}] is not finite")));
    }
    Ok(())
}

/// Propagates pose, rates and accelerations from the root to the leaves.
/// Passing `None` for `qdot` or `qddot` treats them as zero.
pub fn tree_kinematics(
    model: &KinematicModel,
    q: &[f64],
    qdot: Option<&[f64]>,
    qddot: Option<&[f64]>,
) -> Result<TreeKinematics> {
    check_coords(model, "q", q)?;
    if let Some(v) = qdot {
        check_coords(model, "qdot", v)?;
    }
    if let Some(a) = qddot {
        check_coords(model, "qddot", a)?;
    }
    Ok(propagate(model, q, qdot, qddot))
}

fn propagate(model: &KinematicModel, q: &[f64], qdot: Option<&[f64]>, qddot: Option<&[f64]>) -> TreeKinematics {
    let n = model.dof();
    let joints = model.joints();
    let mut bodies = vec![BodyKinematics::WORLD; n];
    let mut joint_origins = vec![Vec3::zeros(); n];
    let mut joint_axes = vec![Vec3::zeros(); n];

    for &j in model.traversal_order() {
        let joint = &joints[j];
        let parent = match joint.parent {
            Some(p) => bodies[p],
            None => BodyKinematics::WORLD,
        };
        let qd = qdot.map_or(0.0, |v| v[j]);
        let qdd = qddot.map_or(0.0, |a| a[j]);

        let rp = parent.pose.rotation;
        let origin = parent.pose.position + rp * joint.parent_offset;
        let rotation = rp * axis_angle(&joint.axis, q[j]);
        let axis = rp * joint.axis;
        let position = origin - rotation * joint.child_offset;

        let w_p = parent.rates.angular;
        let alpha_p = parent.accelerations.angular;
        let r1 = origin - parent.pose.position;
        let r2 = position - origin;

        let angular = w_p + axis * qd;
        let linear = parent.rates.linear + w_p.cross(&r1) + angular.cross(&r2);
        let angular_acc = alpha_p + axis * qdd + w_p.cross(&(axis * qd));
        let linear_acc = parent.accelerations.linear
            + alpha_p.cross(&r1)
            + w_p.cross(&w_p.cross(&r1))
            + angular_acc.cross(&r2)
            + angular.cross(&angular.cross(&r2));

        bodies[joint.child] = BodyKinematics {
            pose: Pose { rotation, position },
            rates: BodyRates { angular, linear },
            accelerations: BodyAccelerations {
                angular: angular_acc,
                linear: linear_acc,
            },
        };
        joint_origins[j] = origin;
        joint_axes[j] = axis;
    }

    TreeKinematics {
        bodies,
        joint_origins,
        joint_axes,
    }
}

pub fn forward_kinematics(model: &KinematicModel, q: &[f64]) -> Result<Vec<Pose>> {
    Ok(tree_kinematics(model, q, None, None)?
        .bodies
        .into_iter()
        .map(|b| b.pose)
        .collect())
}

pub fn body_rates(model: &KinematicModel, q: &[f64], qdot: &[f64]) -> Result<Vec<BodyRates>> {
    Ok(tree_kinematics(model, q, Some(qdot), None)?
        .bodies
        .into_iter()
        .map(|b| b.rates)
        .collect())
}

pub fn body_accelerations(
    model: &KinematicModel,
    q: &[f64],
    qdot: &[f64],
    qddot: &[f64],
) -> Result<Vec<BodyAccelerations>> {
    Ok(tree_kinematics(model, q, Some(qdot), Some(qddot))?
        .bodies
        .into_iter()
        .map(|b| b.accelerations)
        .collect())
}

/// Position, velocity and acceleration of a point fixed to `body` at
/// `r_local` (body frame).
pub fn point_kinematics(
    model: &KinematicModel,
    q: &[f64],
    qdot: &[f64],
    qddot: &[f64],
    body: usize,
    r_local: &Vec3,
) -> Result<PointKinematics> {
    model.check_body(body)?;
    if !r_local.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidInput("point offset is not finite".into()));
    }
    let tree = tree_kinematics(model, q, Some(qdot), Some(qddot))?;
    Ok(tree.bodies[body].point(r_local))
}

/// Geometric Jacobian `∂p/∂q` (3 × dof) of a body-fixed point.
pub fn point_jacobian(model: &KinematicModel, tree: &TreeKinematics, body: usize, r_local: &Vec3) -> DMatrix<f64> {
    let p = tree.bodies[body].pose.transform_point(r_local);
    let mut jac = DMatrix::zeros(3, model.dof());
    for &j in model.body_support(body) {
        let col = tree.joint_axes[j].cross(&(p - tree.joint_origins[j]));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
    }
    jac
}
