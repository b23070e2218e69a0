//! Piecewise quintic Hermite joint trajectories.
//!
//! Each knot fixes position, velocity and acceleration, so the curve is C²
//! by construction. Knots that leave velocity or acceleration unset get
//! zero, which turns every segment into a rest-to-rest quintic.

use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
}

/// Knot as written in experiment files, angles in degrees.
#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct KnotSpec {
    pub t: f64,
    pub q_deg: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot_deg_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qddot_deg_s2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuinticSpline {
    knots: Vec<Knot>,
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSample {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
}

impl QuinticSpline {
    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::field("scenario.knot", "need at least two knots"));
        }
        let dof = knots[0].q.len();
        for (i, k) in knots.iter().enumerate() {
            let path = |f: &str| format!("scenario.knot[{i}].{f}");
            if k.q.len() != dof || k.qdot.len() != dof || k.qddot.len() != dof {
                return Err(Error::field(
                    path("q_deg"),
                    format!("every knot needs {dof} joint values"),
                ));
            }
            if !k.t.is_finite() || (i > 0 && k.t <= knots[i - 1].t) {
                return Err(Error::field(
                    path("t"),
                    "knot times must be finite and strictly increasing",
                ));
            }
            let finite =
                k.q.iter()
                    .chain(k.qdot.iter())
                    .chain(k.qddot.iter())
                    .all(|v| v.is_finite());
            if !finite {
                return Err(Error::field(path("q_deg"), "values must be finite"));
            }
        }
        Ok(QuinticSpline { knots })
    }

    pub fn from_specs(specs: &[KnotSpec], dof: usize) -> Result<Self> {
        let convert = |v: &Option<Vec<f64>>, i: usize, name: &str| -> Result<DVector<f64>> {
            match v {
                None => Ok(DVector::zeros(dof)),
                Some(v) if v.len() == dof => Ok(DVector::from_iterator(dof, v.iter().map(|x| x.to_radians()))),
                Some(v) => Err(Error::field(
                    format!("scenario.knot[{i}].{name}"),
                    format!("has {} entries, model has {dof} joints", v.len()),
                )),
            }
        };
        let knots = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(Knot {
                    t: s.t,
                    q: convert(&Some(s.q_deg.clone()), i, "q_deg")?,
                    qdot: convert(&s.qdot_deg_s, i, "qdot_deg_s")?,
                    qddot: convert(&s.qddot_deg_s2, i, "qddot_deg_s2")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(knots)
    }

    pub fn dof(&self) -> usize {
        self.knots[0].q.len()
    }

    pub fn start(&self) -> f64 {
        self.knots[0].t
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].t
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn sample(&self, t: f64) -> Result<SplineSample> {
        let tol = 1e-9 * (1.0 + self.end().abs());
        if !(t >= self.start() - tol && t <= self.end() + tol) {
            return Err(Error::InvalidInput(format!(
                "t={t} outside the spline range [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        if let Some(k) = self.knots.iter().find(|k| k.t == t) {
            return Ok(SplineSample {
                q: k.q.clone(),
                qdot: k.qdot.clone(),
                qddot: k.qddot.clone(),
            });
        }
        let seg = self
            .knots
            .windows(2)
            .position(|w| t <= w[1].t)
            .unwrap_or(self.knots.len() - 2);
        let (k0, k1) = (&self.knots[seg], &self.knots[seg + 1]);
        let h = k1.t - k0.t;
        let s = ((t - k0.t) / h).clamp(0.0, 1.0);

        let n = self.dof();
        let mut out = SplineSample {
            q: DVector::zeros(n),
            qdot: DVector::zeros(n),
            qddot: DVector::zeros(n),
        };
        for j in 0..n {
            let (p0, p1) = (k0.q[j], k1.q[j]);
            let (v0, v1) = (k0.qdot[j] * h, k1.qdot[j] * h);
            let (a0, a1) = (k0.qddot[j] * h * h, k1.qddot[j] * h * h);
            let d = p1 - p0;
            let c = [
                p0,
                v0,
                0.5 * a0,
                10.0 * d - 6.0 * v0 - 4.0 * v1 - 0.5 * (3.0 * a0 - a1),
                -15.0 * d + 8.0 * v0 + 7.0 * v1 + 0.5 * (3.0 * a0 - 2.0 * a1),
                6.0 * d - 3.0 * v0 - 3.0 * v1 - 0.5 * (a0 - a1),
            ];
            let pos = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
            let vel = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
            let acc = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
            out.q[j] = pos;
            out.qdot[j] = vel / h;
            out.qddot[j] = acc / (h * h);
        }
        Ok(out)
    }
}
