#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcmocap::io::ModelFile;
use tcmocap::model::STANDARD_GRAVITY;
use tcmocap::sim::{arm_twin, pendulum_twin};
use tcmocap::{BodySpec, JointSpec, KinematicModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()
}

pub fn twins() -> Vec<(&'static str, ModelFile)> {
    vec![("pendulum3", pendulum_twin()), ("arm6", arm_twin())]
}

/// One body hanging from a world pin: com at `l` along `link_dir`, isotropic
/// central inertia `i_c`.
pub fn one_link(mass: f64, l: f64, i_c: f64, axis: Vector3<f64>, link_dir: Vector3<f64>) -> KinematicModel {
    KinematicModel::new(
        vec![BodySpec {
            name: "link".into(),
            mass,
            com: link_dir * l,
            inertia: Matrix3::identity() * i_c,
        }],
        vec![JointSpec::revolute(None, 0, axis, Vector3::zeros())],
        Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
    )
    .unwrap()
}

/// Vertical-plane pendulum: link along −z, pin about x.
pub fn planar_pendulum(mass: f64, l: f64, i_c: f64) -> KinematicModel {
    one_link(mass, l, i_c, Vector3::x(), -Vector3::z())
}

fn translation(v: &Vector3<f64>) -> Matrix4<f64> {
    Matrix4::new_translation(v)
}

/// World-from-body homogeneous transforms by direct 4×4 products along each
/// body's chain to the root.
pub fn chain_transforms(model: &KinematicModel, q: &[f64]) -> Vec<Matrix4<f64>> {
    let joints = model.joints();
    let n = model.bodies().len();
    (0..n)
        .map(|body| {
            let mut chain = Vec::new();
            let mut b = Some(body);
            while let Some(child) = b {
                let j = joints.iter().position(|jt| jt.child == child).unwrap();
                chain.push(j);
                b = joints[j].parent;
            }
            chain.iter().rev().fold(Matrix4::identity(), |acc, &j| {
                let jt = &joints[j];
                let rot = Rotation3::from_axis_angle(&Unit::new_normalize(jt.axis), q[j]).to_homogeneous();
                acc * translation(&jt.parent_offset) * rot * translation(&(-jt.child_offset))
            })
        })
        .collect()
}

pub fn apply(t: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let h = t * p.push(1.0);
    Vector3::new(h.x, h.y, h.z)
}

pub fn rel_err(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-6)
}
