//! Comparison methods: marker- and orientation-based inverse kinematics,
//! and inverse dynamics on smoothed, differentiated joint angles.

mod filtering;
mod ik;
mod lm;
mod pipeline;

pub use filtering::{Biquad, LowPass, PADLEN};
pub use ik::{
    imu_orientations, marker_ik, marker_ik_series, orientation_ik, orientation_ik_series, IkConfig, IkSeries,
    InitialGuess,
};
pub use lm::{levenberg_marquardt, LmReport, LmSettings};
pub use pipeline::{differentiate, ik_id_pipeline, InverseDynamicsSeries};
