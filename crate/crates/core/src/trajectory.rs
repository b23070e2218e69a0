use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::state::StateVector;

/// Uniformly sampled joint-space trajectory with accelerations and torques.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub qddot: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
    pub metadata: TrajectoryMetadata,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryMetadata {
    pub scenario: String,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.q.first().map_or(0, |q| q.len())
    }

    pub fn dt(&self) -> Option<f64> {
        (self.t.len() >= 2).then(|| self.t[1] - self.t[0])
    }

    pub fn state(&self, i: usize) -> StateVector {
        StateVector {
            q: self.q[i].clone(),
            qdot: self.qdot[i].clone(),
            tau: self.tau[i].clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.q.len() != n || self.qdot.len() != n || self.qddot.len() != n || self.tau.len() != n {
            return Err(Error::Dimension("trajectory columns have different lengths".into()));
        }
        let dof = self.dof();
        for i in 0..n {
            for (name, v) in [
                ("q", &self.q[i]),
                ("qdot", &self.qdot[i]),
                ("qddot", &self.qddot[i]),
                ("tau", &self.tau[i]),
            ] {
                if v.len() != dof {
                    return Err(Error::Dimension(format!("{name} at sample {i} has wrong length")));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput(format!("{name} at sample {i} is not finite")));
                }
            }
            if !self.t[i].is_finite() || (i > 0 && self.t[i] <= self.t[i - 1]) {
                return Err(Error::NonMonotone { frame: i });
            }
        }
        Ok(())
    }

    /// Series of joint `j` of one quantity.
    pub fn column(series: &[DVector<f64>], j: usize) -> Vec<f64> {
        series.iter().map(|v| v[j]).collect()
    }
}

/// Joint-space estimates produced by one method, optionally with the
/// filter's marginal variances of `(q, q̇, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub method: String,
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
    pub variance: Option<Vec<DVector<f64>>>,
}

impl EstimateSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.q.first().map_or(0, |q| q.len())
    }
}
