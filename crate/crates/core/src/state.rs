use nalgebra::DVector;

use crate::error::{Error, Result};

/// Filter state `x = (q, q̇, τ)`: joint angles (rad), joint rates (rad/s)
/// and joint torques (N·m).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub tau: DVector<f64>,
}

impl StateVector {
    pub fn zeros(dof: usize) -> Self {
        StateVector {
            q: DVector::zeros(dof),
            qdot: DVector::zeros(dof),
            tau: DVector::zeros(dof),
        }
    }

    pub fn new(q: DVector<f64>, qdot: DVector<f64>, tau: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() || q.len() != tau.len() {
            return Err(Error::Dimension(format!(
                "state blocks have lengths q={}, qdot={}, tau={}",
                q.len(),
                qdot.len(),
                tau.len()
            )));
        }
        Ok(StateVector { q, qdot, tau })
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Stacked `(q, q̇, τ)` of length `3·dof`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dof();
        let mut x = DVector::zeros(3 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.qdot);
        x.rows_mut(2 * n, n).copy_from(&self.tau);
        x
    }

    pub fn from_vector(x: &DVector<f64>) -> Result<Self> {
        if x.len() % 3 != 0 {
            return Err(Error::Dimension(format!(
                "state vector length {} is not a multiple of 3",
                x.len()
            )));
        }
        let n = x.len() / 3;
        Ok(StateVector {
            q: x.rows(0, n).into_owned(),
            qdot: x.rows(n, n).into_owned(),
            tau: x.rows(2 * n, n).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(self.qdot.iter())
            .chain(self.tau.iter())
            .all(|v| v.is_finite())
    }
}
