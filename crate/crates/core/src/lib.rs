//! Tightly coupled multibody motion estimation.
//!
//! Joint angles, rates and torques of a kinematic tree are estimated
//! together by an iterated extended Kalman filter whose process model is
//! the rigid-body dynamics and whose measurement model stacks gyroscopes,
//! accelerometers, optical markers and virtual zero-torque sensors.
//! Baseline inverse-kinematics/inverse-dynamics pipelines and digital twins
//! of a passive triple pendulum and a 6-DOF arm are included for
//! comparison.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod kinematics;
pub mod math;
pub mod model;
pub mod sensors;
pub mod sim;
pub mod state;
pub mod trajectory;

pub use nalgebra;

pub use error::{Error, Result};
pub use model::{BodySpec, JointSpec, KinematicModel};
pub use state::StateVector;
pub use trajectory::{EstimateSeries, Trajectory};
