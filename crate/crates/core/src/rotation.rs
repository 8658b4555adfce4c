//! Continuous 6D rotation parameterization.
//!
//! A rotation is stored as two 3-vectors `(a1, a2)`. Gram-Schmidt turns them
//! into the first two columns of the matrix and the third column is their
//! cross product. The map is invariant to positive scaling of either vector.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Rot6 = [f64; 6];

/// 6D encoding of the identity rotation.
pub const IDENTITY_6D: Rot6 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

const DEGENERATE_EPS: f64 = 1e-8;

struct GramSchmidt {
    a2: Vector3<f64>,
    n1: f64,
    n2: f64,
    b1: Vector3<f64>,
    b2: Vector3<f64>,
    b3: Vector3<f64>,
}

fn gram_schmidt(r: &Rot6) -> Result<GramSchmidt> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let n1 = a1.norm();
    let na2 = a2.norm();
    if !(n1 > DEGENERATE_EPS) {
        return Err(Error::DegenerateRotation("first vector has zero length"));
    }
    if !(na2 > DEGENERATE_EPS) {
        return Err(Error::DegenerateRotation("second vector has zero length"));
    }
    let b1 = a1 / n1;
    let u = a2 - b1 * b1.dot(&a2);
    let n2 = u.norm();
    if !(n2 > DEGENERATE_EPS * na2) {
        return Err(Error::DegenerateRotation("vectors are parallel"));
    }
    let b2 = u / n2;
    let b3 = b1.cross(&b2);
    Ok(GramSchmidt {
        a2,
        n1,
        n2,
        b1,
        b2,
        b3,
    })
}

pub fn rot6d_to_matrix(r: &Rot6) -> Result<Matrix3<f64>> {
    let gs = gram_schmidt(r)?;
    Ok(Matrix3::from_columns(&[gs.b1, gs.b2, gs.b3]))
}

/// First two columns of `m`; exact inverse of [`rot6d_to_matrix`] for rotations.
pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Rot6 {
    [
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ]
}

/// Pulls a gradient on the rotation matrix back onto the 6D parameters.
pub fn rot6d_backward(r: &Rot6, d_matrix: &Matrix3<f64>) -> Result<Rot6> {
    let gs = gram_schmidt(r)?;
    let g1: Vector3<f64> = d_matrix.column(0).into();
    let g2: Vector3<f64> = d_matrix.column(1).into();
    let g3: Vector3<f64> = d_matrix.column(2).into();

    // b3 = b1 x b2
    let mut d_b1 = g1 + gs.b2.cross(&g3);
    let d_b2 = g2 + g3.cross(&gs.b1);

    // b2 = u / |u|
    let d_u = (d_b2 - gs.b2 * gs.b2.dot(&d_b2)) / gs.n2;

    // u = a2 - (b1 . a2) b1
    let proj = gs.b1.dot(&gs.a2);
    let du_b1 = d_u.dot(&gs.b1);
    let d_a2 = d_u - gs.b1 * du_b1;
    d_b1 -= gs.a2 * du_b1 + d_u * proj;

    // b1 = a1 / |a1|
    let d_a1 = (d_b1 - gs.b1 * gs.b1.dot(&d_b1)) / gs.n1;

    Ok([d_a1.x, d_a1.y, d_a1.z, d_a2.x, d_a2.y, d_a2.z])
}

/// Rotation by `|w|` radians about `w / |w|`.
pub fn axis_angle_to_matrix(w: &Vector3<f64>) -> Matrix3<f64> {
    nalgebra::Rotation3::new(*w).into_inner()
}

/// Geodesic angle between two rotations, in radians.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}
