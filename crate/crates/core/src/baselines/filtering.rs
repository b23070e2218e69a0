//! Zero-phase second-order Butterworth low-pass filtering.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples of padding on each side of the signal.
pub const PADLEN: usize = 9;

/// Edge samples used to fit the padding polynomial.
const FIT_WINDOW: usize = PADLEN + 4;

/// Zero-phase low-pass: a second-order Butterworth run forward and then
/// backward, so the overall response is fourth order with no phase lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowPass {
    /// Hz
    pub cutoff: f64,
}

/// Direct-form coefficients `b0 + b1 z⁻¹ + b2 z⁻²` over
/// `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform Butterworth design with frequency prewarping.
    pub fn butterworth(cutoff: f64, sample_rate: f64) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0 && cutoff < 0.5 * sample_rate) {
            return Err(Error::field(
                "cutoff",
                format!(
                    "must lie in (0, {}) Hz for a {sample_rate} Hz signal",
                    0.5 * sample_rate
                ),
            ));
        }
        let k = (std::f64::consts::PI * cutoff / sample_rate).tan();
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - sqrt2 * k + k * k) * norm],
        })
    }

    /// Steady-state filter variables for the input `x0 + v n`, so constants
    /// and ramps pass with no start-up transient.
    fn ramp_state(&self, x0: f64, v: f64) -> [f64; 2] {
        let [_, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let gamma = b2 - a2;
        let alpha = b1 - a1 + gamma;
        let beta = -(alpha + gamma) / (1.0 + a1 + a2);
        let delta = -a2 * beta - gamma;
        [alpha * x0 + beta * v, gamma * x0 + delta * v]
    }

    /// Transposed direct-form II pass starting in the ramp steady state of
    /// the first two samples.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let v = if x.len() > 1 { x[1] - x[0] } else { 0.0 };
        let mut z = self.ramp_state(x[0], v);
        x.iter()
            .map(|&xi| {
                let y = self.b[0] * xi + z[0];
                z[0] = self.b[1] * xi - self.a[0] * y + z[1];
                z[1] = self.b[2] * xi - self.a[1] * y;
                y
            })
            .collect()
    }
}

impl LowPass {
    /// Forward–backward filtering. Each end is padded by extrapolating a
    /// least-squares quadratic fitted to the edge samples, which keeps the
    /// second derivative continuous where odd extension would flip it.
    pub fn filtfilt(&self, x: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
        let biquad = Biquad::butterworth(self.cutoff, sample_rate)?;
        if x.len() <= PADLEN {
            return Err(Error::InvalidInput(format!(
                "series of {} samples is shorter than the filter warm-up ({} samples)",
                x.len(),
                PADLEN + 1
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * PADLEN);
        ext.extend(edge_extension(x.iter().copied()).into_iter().rev());
        ext.extend_from_slice(x);
        ext.extend(edge_extension(x.iter().rev().copied()));

        let mut y = biquad.run(&ext);
        y.reverse();
        let mut y = biquad.run(&y);
        y.reverse();
        Ok(y[PADLEN..PADLEN + n].to_vec())
    }
}

/// `PADLEN` samples beyond an edge, nearest first. `inward` starts at the
/// edge sample and walks into the signal.
fn edge_extension(inward: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let mut edge = 0.0;
    for (k, v) in inward.take(FIT_WINDOW).enumerate() {
        if k == 0 {
            edge = v;
        }
        let s = k as f64;
        let row = Vector3::new(1.0, s, s * s);
        ata += row * row.transpose();
        atb += row * v;
    }
    let c = ata.cholesky().map_or(Vector3::zeros(), |ch| ch.solve(&atb));
    (1..=PADLEN)
        .map(|i| {
            let s = i as f64;
            edge - c[1] * s + c[2] * s * s
        })
        .collect()
}
