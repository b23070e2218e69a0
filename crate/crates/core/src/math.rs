//! Small 3D helpers on top of nalgebra: skew matrices, axis rotations, the
//! SO(3) exponential/logarithm and a few matrix utilities used by the filter.

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// `[v×]`, so that `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let k = skew(axis);
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// Exponential map from a rotation vector.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        return Mat3::identity() + skew(w);
    }
    axis_angle(&(w / theta), theta)
}

/// Logarithm map to a rotation vector with norm in `[0, π]`.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let rot = Rotation3::from_matrix_unchecked(*r);
    match rot.axis_angle() {
        Some((axis, angle)) => axis.into_inner() * angle,
        None => Vec3::zeros(),
    }
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
    ortho <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Nearest rotation (polar factor) of an approximately orthonormal matrix.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    Rotation3::from_matrix_eps(r, 1e-15, 100, Rotation3::identity()).into_inner()
}

pub fn unit(v: &Vec3) -> Option<Unit<Vec3>> {
    Unit::try_new(*v, 1e-300)
}

/// Replace `m` with `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues().min()
}
