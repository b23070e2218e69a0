//! TOML model description.
//!
//! ```toml
//! [gravity]
//! vector = [0.0, 0.0, -9.81]
//!
//! [[body]]
//! name = "link1"
//! mass = 0.4
//! com = [0.0, 0.0, -0.15]
//! inertia_diag = [3.0e-3, 3.0e-3, 2.0e-5]   # or inertia = [[..], [..], [..]]
//!
//! [[joint]]
//! parent = "world"          # body name, body index, or "world" / -1
//! child = "link1"
//! axis = [1.0, 0.0, 0.0]
//! parent_offset = [0.0, 0.0, 0.0]
//! child_offset = [0.0, 0.0, 0.0]   # optional
//! type = "revolute"                 # optional
//! damping = 0.0                     # optional, N·m·s/rad
//!
//! [[imu]]
//! name = "imu1"
//! body = "link1"
//! position = [0.0, 0.0, -0.15]
//! rotation = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]   # optional R_sb
//!
//! [[marker]]
//! name = "m1"
//! body = "link1"
//! position = [0.02, 0.0, -0.05]
//!
//! [camera]                  # optional, defaults to identity
//! rotation = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
//! translation = [0.0, 0.0, 0.0]
//! ```
//!
//! All values are SI. Validation failures name the offending field, e.g.
//! `body[1].inertia` or `imu[0].body`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::model::{BodySpec, JointSpec, JointType, KinematicModel, STANDARD_GRAVITY};
use crate::sensors::{CameraExtrinsics, ImuSpec, MarkerSpec, SensorSet};

/// A model together with the physical sensors attached to it.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: KinematicModel,
    pub sensors: SensorSet,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    gravity: Option<RawGravity>,
    #[serde(default)]
    body: Vec<RawBody>,
    #[serde(default)]
    joint: Vec<RawJoint>,
    #[serde(default)]
    imu: Vec<RawImu>,
    #[serde(default)]
    marker: Vec<RawMarker>,
    #[serde(default)]
    camera: Option<RawCamera>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGravity {
    vector: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    name: String,
    mass: f64,
    com: [f64; 3],
    inertia: Option<[[f64; 3]; 3]>,
    inertia_diag: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BodyRef {
    Index(i64),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    parent: BodyRef,
    child: BodyRef,
    axis: [f64; 3],
    #[serde(default)]
    parent_offset: [f64; 3],
    #[serde(default)]
    child_offset: [f64; 3],
    #[serde(rename = "type", default = "revolute")]
    joint_type: String,
    #[serde(default)]
    damping: f64,
}

fn revolute() -> String {
    "revolute".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImu {
    name: Option<String>,
    body: BodyRef,
    #[serde(default)]
    position: [f64; 3],
    rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarker {
    name: Option<String>,
    body: BodyRef,
    position: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    rotation: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    translation: [f64; 3],
}

fn mat3(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn is_world(r: &BodyRef) -> bool {
    match r {
        BodyRef::Index(i) => *i == -1,
        BodyRef::Name(n) => n == "world",
    }
}

/// Body index for `r`, or `None` for the world when `allow_world` is set.
fn resolve(r: &BodyRef, names: &[String], field: String, allow_world: bool) -> Result<Option<usize>> {
    if is_world(r) {
        return if allow_world {
            Ok(None)
        } else {
            Err(Error::field(field, "must name a body, not the world"))
        };
    }
    match r {
        BodyRef::Index(i) if *i >= 0 && (*i as usize) < names.len() => Ok(Some(*i as usize)),
        BodyRef::Index(i) => Err(Error::field(field, format!("body index {i} out of range"))),
        BodyRef::Name(n) => names
            .iter()
            .position(|b| b == n)
            .map(Some)
            .ok_or_else(|| Error::field(field, format!("unknown body `{n}`"))),
    }
}

fn required_body(r: &BodyRef, names: &[String], field: String) -> Result<usize> {
    Ok(resolve(r, names, field, false)?.expect("world rejected above"))
}

/// Parses and validates a model description. `origin` is used in parse
/// error messages only.
pub fn parse_model(text: &str, origin: &Path) -> Result<ModelFile> {
    let raw: RawFile = super::from_toml(text, origin)?;
    build(raw)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

fn build(raw: RawFile) -> Result<ModelFile> {
    let names: Vec<String> = raw.body.iter().map(|b| b.name.clone()).collect();
    for (i, name) in names.iter().enumerate() {
        if name == "world" || name.is_empty() {
            return Err(Error::field(
                format!("body[{i}].name"),
                "must be non-empty and not `world`",
            ));
        }
        if names[..i].contains(name) {
            return Err(Error::field(
                format!("body[{i}].name"),
                format!("duplicate body `{name}`"),
            ));
        }
    }

    let bodies = raw
        .body
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let inertia = match (&b.inertia, &b.inertia_diag) {
                (Some(full), None) => mat3(full),
                (None, Some(d)) => Mat3::from_diagonal(&Vec3::from(*d)),
                _ => {
                    return Err(Error::field(
                        format!("body[{i}].inertia"),
                        "give exactly one of `inertia` or `inertia_diag`",
                    ))
                }
            };
            Ok(BodySpec {
                name: b.name.clone(),
                mass: b.mass,
                com: Vec3::from(b.com),
                inertia,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let joints = raw
        .joint
        .iter()
        .enumerate()
        .map(|(j, r)| {
            if r.joint_type != "revolute" {
                return Err(Error::field(
                    format!("joint[{j}].type"),
                    format!("unsupported joint type `{}`", r.joint_type),
                ));
            }
            Ok(JointSpec {
                parent: resolve(&r.parent, &names, format!("joint[{j}].parent"), true)?,
                child: required_body(&r.child, &names, format!("joint[{j}].child"))?,
                axis: Vec3::from(r.axis),
                parent_offset: Vec3::from(r.parent_offset),
                child_offset: Vec3::from(r.child_offset),
                joint_type: JointType::Revolute,
                damping: r.damping,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gravity = raw
        .gravity
        .map_or(Vec3::new(0.0, 0.0, -STANDARD_GRAVITY), |g| Vec3::from(g.vector));
    let model = KinematicModel::new(bodies, joints, gravity)?;

    let imus = raw
        .imu
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(ImuSpec {
                name: r.name.clone().unwrap_or_else(|| format!("imu{}", k + 1)),
                body: required_body(&r.body, &names, format!("imu[{k}].body"))?,
                r_sb: r.rotation.as_ref().map_or_else(Mat3::identity, mat3),
                r_bs: Vec3::from(r.position),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let markers = raw
        .marker
        .iter()
        .enumerate()
        .map(|(m, r)| {
            Ok(MarkerSpec {
                name: r.name.clone().unwrap_or_else(|| format!("marker{}", m + 1)),
                body: required_body(&r.body, &names, format!("marker[{m}].body"))?,
                r_marker: Vec3::from(r.position),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let camera = raw.camera.map_or_else(CameraExtrinsics::default, |c| CameraExtrinsics {
        r_cn: c.rotation.as_ref().map_or_else(Mat3::identity, mat3),
        p_c: Vec3::from(c.translation),
    });

    let sensors = SensorSet {
        imus,
        markers,
        camera,
        torque_joints: Vec::new(),
    };
    sensors.validate(&model)?;
    check_unique(sensors.imus.iter().map(|i| i.name.as_str()), "imu")?;
    check_unique(sensors.markers.iter().map(|m| m.name.as_str()), "marker")?;
    Ok(ModelFile { model, sensors })
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>, section: &str) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for (i, n) in names.enumerate() {
        if seen.contains(&n) {
            return Err(Error::field(
                format!("{section}[{i}].name"),
                format!("duplicate name `{n}`"),
            ));
        }
        seen.push(n);
    }
    Ok(())
}
