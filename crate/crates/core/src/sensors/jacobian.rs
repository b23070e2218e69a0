use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::models::MeasurementEvaluator;
use super::SensorSet;
use crate::error::{Error, Result};
use crate::model::KinematicModel;
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffScheme {
    Forward,
    #[default]
    Central,
}

/// Perturbation sizes per state block. Torque states get a larger step
/// because their scale is N·m rather than rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianSettings {
    pub scheme: DiffScheme,
    pub step_q: f64,
    pub step_qdot: f64,
    pub step_tau: f64,
}

impl Default for JacobianSettings {
    fn default() -> Self {
        JacobianSettings {
            scheme: DiffScheme::Central,
            step_q: 1e-6,
            step_qdot: 1e-6,
            step_tau: 1e-4,
        }
    }
}

impl JacobianSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("step_q", self.step_q),
            ("step_qdot", self.step_qdot),
            ("step_tau", self.step_tau),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::field(format!("jacobian.{name}"), "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub(crate) fn step_for(&self, index: usize, dof: usize) -> f64 {
        match index / dof {
            0 => self.step_q,
            1 => self.step_qdot,
            _ => self.step_tau,
        }
    }
}

/// Finite-difference Jacobian of `f` at the stacked state `x`. Each column
/// is divided by the perturbation actually represented in floating point,
/// so linear maps come out exact.
pub(crate) fn perturbation_jacobian<F>(x: &DVector<f64>, settings: &JacobianSettings, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    settings.validate()?;
    let dof = x.len() / 3;
    let eval = |xp: &DVector<f64>, index: usize| -> Result<DVector<f64>> {
        let y = f(xp).map_err(|e| Error::Evaluation {
            index,
            message: e.to_string(),
        })?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index,
                message: "non-finite output".into(),
            });
        }
        Ok(y)
    };

    let base = match settings.scheme {
        DiffScheme::Forward => Some(eval(x, 0)?),
        DiffScheme::Central => None,
    };
    let mut jac: Option<DMatrix<f64>> = None;
    for i in 0..x.len() {
        let h = settings.step_for(i, dof.max(1));
        let mut plus = x.clone();
        plus[i] += h;
        let (col, delta) = match &base {
            Some(y0) => {
                let yp = eval(&plus, i)?;
                (yp - y0, plus[i] - x[i])
            }
            None => {
                let mut minus = x.clone();
                minus[i] -= h;
                let yp = eval(&plus, i)?;
                let ym = eval(&minus, i)?;
                (yp - ym, plus[i] - minus[i])
            }
        };
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(col.len(), x.len()));
        jac.set_column(i, &(col / delta));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Numerical Jacobian `∂h/∂x` (active rows × 3·dof) of the stacked
/// measurement model.
pub fn measurement_jacobian(
    model: &KinematicModel,
    sensors: &SensorSet,
    x: &StateVector,
    mask: Option<&[bool]>,
    settings: &JacobianSettings,
) -> Result<DMatrix<f64>> {
    let eval = MeasurementEvaluator::new(model, sensors);
    let x0 = x.to_vector();
    perturbation_jacobian(&x0, settings, |xv| eval.predict(&StateVector::from_vector(xv)?, mask))
}
