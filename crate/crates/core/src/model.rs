//! Kinematic tree description: rigid bodies connected by revolute joints.
//!
//! Every non-world body has exactly one parent joint, so the number of
//! generalized coordinates equals both the joint count and the body count.
//! Body frames have their origin at the inboard joint unless the joint's
//! `child_offset` says otherwise. The world (navigation frame) is implicit
//! and acts as the fixed base.

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Center of mass in the body frame, m.
    pub com: Vec3,
    /// Rotational inertia about the center of mass, body axes, kg·m².
    pub inertia: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JointType {
    #[default]
    Revolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    /// Parent body, `None` for the world.
    pub parent: Option<usize>,
    pub child: usize,
    /// Unit rotation axis in the child frame.
    pub axis: Vec3,
    /// Joint origin in the parent frame (world frame for root joints).
    pub parent_offset: Vec3,
    /// Joint origin in the child frame.
    pub child_offset: Vec3,
    pub joint_type: JointType,
    /// Viscous damping, N·m·s/rad. Zero for every shipped model.
    pub damping: f64,
}

impl JointSpec {
    pub fn revolute(parent: Option<usize>, child: usize, axis: Vec3, parent_offset: Vec3) -> Self {
        JointSpec {
            parent,
            child,
            axis,
            parent_offset,
            child_offset: Vec3::zeros(),
            joint_type: JointType::Revolute,
            damping: 0.0,
        }
    }
}

/// A validated multibody tree. Construct with [`KinematicModel::new`]; the
/// fields are read-only afterwards so the traversal order stays consistent.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    bodies: Vec<BodySpec>,
    joints: Vec<JointSpec>,
    gravity: Vec3,
    /// Joint indices ordered so that a parent body is always visited before
    /// its children.
    order: Vec<usize>,
    /// Parent joint of each body.
    body_joint: Vec<usize>,
    /// For each joint, the joints on the path from the world to it,
    /// including itself.
    support: Vec<Vec<usize>>,
}

impl KinematicModel {
    pub fn new(bodies: Vec<BodySpec>, joints: Vec<JointSpec>, gravity: Vec3) -> Result<Self> {
        for (i, body) in bodies.iter().enumerate() {
            validate_body(i, body)?;
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::field("gravity", "components must be finite"));
        }
        if bodies.is_empty() {
            return Err(Error::field("body", "model needs at least one body"));
        }
        if joints.len() != bodies.len() {
            return Err(Error::field(
                "joint",
                format!(
                    "{} joints for {} bodies; every body needs exactly one parent joint",
                    joints.len(),
                    bodies.len()
                ),
            ));
        }

        let n = bodies.len();
        let mut body_joint = vec![usize::MAX; n];
        for (j, joint) in joints.iter().enumerate() {
            validate_joint(j, joint, n)?;
            if body_joint[joint.child] != usize::MAX {
                return Err(Error::field(
                    format!("joint[{j}].child"),
                    format!("body {} already has a parent joint", joint.child),
                ));
            }
            body_joint[joint.child] = j;
        }

        // Topological order from the world outwards; anything left over is
        // part of a cycle.
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let before = order.len();
            for (j, joint) in joints.iter().enumerate() {
                if placed[joint.child] {
                    continue;
                }
                if joint.parent.is_none_or(|p| placed[p]) {
                    placed[joint.child] = true;
                    order.push(j);
                }
            }
            if order.len() == before {
                let j = joints.iter().position(|jt| !placed[jt.child]).unwrap_or(0);
                return Err(Error::field(
                    format!("joint[{j}].parent"),
                    "joint graph contains a cycle and is not a tree rooted at the world",
                ));
            }
        }

        let mut support = vec![Vec::new(); n];
        for &j in &order {
            let mut path = match joints[j].parent {
                Some(p) => support[body_joint[p]].clone(),
                None => Vec::new(),
            };
            path.push(j);
            support[j] = path;
        }

        Ok(KinematicModel {
            bodies,
            joints,
            gravity,
            order,
            body_joint,
            support,
        })
    }

    /// Number of generalized coordinates.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn bodies(&self) -> &[BodySpec] {
        &self.bodies
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn gravity(&self) -> Vec3 {
        self.gravity
    }

    pub fn with_gravity(mut self, gravity: Vec3) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    pub fn body_joint(&self, body: usize) -> usize {
        self.body_joint[body]
    }

    /// Joints between the world and `joint`, root first, including `joint`.
    pub fn support(&self, joint: usize) -> &[usize] {
        &self.support[joint]
    }

    /// Joints whose motion moves `body`.
    pub fn body_support(&self, body: usize) -> &[usize] {
        &self.support[self.body_joint[body]]
    }

    pub fn check_body(&self, body: usize) -> Result<()> {
        if body < self.bodies.len() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "body index {body} out of range (model has {} bodies)",
                self.bodies.len()
            )))
        }
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }
}

fn validate_body(i: usize, body: &BodySpec) -> Result<()> {
    let path = |f: &str| format!("body[{i}].{f}");
    if !(body.mass.is_finite() && body.mass > 0.0) {
        return Err(Error::field(path("mass"), "must be finite and > 0"));
    }
    if !body.com.iter().all(|c| c.is_finite()) {
        return Err(Error::field(path("com"), "components must be finite"));
    }
    let inertia = &body.inertia;
    if !inertia.iter().all(|c| c.is_finite()) {
        return Err(Error::field(path("inertia"), "entries must be finite"));
    }
    if (inertia - inertia.transpose()).abs().max() > 1e-12 {
        return Err(Error::field(path("inertia"), "must be symmetric"));
    }
    let principal = inertia.symmetric_eigenvalues();
    if principal.iter().any(|&m| m <= 0.0) {
        return Err(Error::field(path("inertia"), "must be positive definite"));
    }
    let (a, b, c) = (principal[0], principal[1], principal[2]);
    let slack = 1e-12 * (a + b + c);
    if a + b < c - slack || b + c < a - slack || a + c < b - slack {
        return Err(Error::field(
            path("inertia"),
            "principal moments violate the triangle inequality",
        ));
    }
    Ok(())
}

fn validate_joint(j: usize, joint: &JointSpec, n: usize) -> Result<()> {
    let path = |f: &str| format!("joint[{j}].{f}");
    if joint.child >= n {
        return Err(Error::field(
            path("child"),
            format!("body index {} out of range", joint.child),
        ));
    }
    if let Some(p) = joint.parent {
        if p >= n {
            return Err(Error::field(path("parent"), format!("body index {p} out of range")));
        }
        if p == joint.child {
            return Err(Error::field(path("parent"), "a body cannot be its own parent"));
        }
    }
    if !joint.axis.iter().all(|c| c.is_finite()) || (joint.axis.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::field(path("axis"), "must be a unit vector"));
    }
    if !joint.parent_offset.iter().all(|c| c.is_finite()) {
        return Err(Error::field(path("parent_offset"), "components must be finite"));
    }
    if !joint.child_offset.iter().all(|c| c.is_finite()) {
        return Err(Error::field(path("child_offset"), "components must be finite"));
    }
    if !(joint.damping.is_finite() && joint.damping >= 0.0) {
        return Err(Error::field(path("damping"), "must be finite and >= 0"));
    }
    Ok(())
}

/// Inertia of a thin uniform rod of the given length along `axis`
/// (0 = x, 1 = y, 2 = z) about its center, with a small radius so the
/// tensor stays positive definite.
pub fn rod_inertia(mass: f64, length: f64, radius: f64, axis: usize) -> Mat3 {
    let along = 0.5 * mass * radius * radius;
    let across = mass * (3.0 * radius * radius + length * length) / 12.0;
    let mut diag = Vec3::repeat(across);
    diag[axis] = along;
    Mat3::from_diagonal(&diag)
}
