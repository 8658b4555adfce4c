use nalgebra::{Matrix3, Vector3};

use super::BodyModel;
use crate::error::Result;
use crate::rotation::{rot6d_backward, rot6d_to_matrix, Rot6};
use crate::transform::RigidTransform;

/// Intermediate values of one posing pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct PoseCache {
    pub shaped: Vec<Vector3<f64>>,
    pub rest_joints: Vec<Vector3<f64>>,
    /// Relative rotation per joint; index 0 is the identity.
    pub rel_rots: Vec<Matrix3<f64>>,
    pub world: Vec<RigidTransform>,
    pub vertices: Vec<Vector3<f64>>,
}

pub(super) fn shaped_vertices(model: &BodyModel, shape: &[f64]) -> Vec<Vector3<f64>> {
    let mut out = model.template().to_vec();
    for (beta, dirs) in shape.iter().zip(&model.parts.shape_dirs) {
        if *beta == 0.0 {
            continue;
        }
        for (v, d) in out.iter_mut().zip(dirs) {
            *v += d * *beta;
        }
    }
    out
}

pub(crate) fn regress(model: &BodyModel, vertices: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    model
        .regressor_sparse()
        .iter()
        .map(|row| {
            row.iter()
                .fold(Vector3::zeros(), |acc, &(v, w)| acc + vertices[v] * w)
        })
        .collect()
}

/// Adds `Wᵀ d_joints` into `d_vertices`.
pub(crate) fn regress_backward(
    model: &BodyModel,
    d_joints: &[Vector3<f64>],
    d_vertices: &mut [Vector3<f64>],
) {
    for (row, dj) in model.regressor_sparse().iter().zip(d_joints) {
        for &(v, w) in row {
            d_vertices[v] += dj * w;
        }
    }
}

pub(crate) fn pose_forward(
    model: &BodyModel,
    body_rot6d: &[Rot6],
    shape: &[f64],
) -> Result<PoseCache> {
    let shaped = shaped_vertices(model, shape);
    let rest_joints = regress(model, &shaped);
    let nj = model.num_joints();

    let mut rel_rots = Vec::with_capacity(nj);
    rel_rots.push(Matrix3::identity());
    for r in body_rot6d {
        rel_rots.push(rot6d_to_matrix(r)?);
    }

    let mut world = Vec::with_capacity(nj);
    world.push(RigidTransform::identity());
    for j in 1..nj {
        let p = model.parents()[j].expect("validated tree");
        let parent = world[p];
        let pivot = rest_joints[j];
        let local = RigidTransform::new(rel_rots[j], pivot - rel_rots[j] * pivot);
        world.push(parent.compose(&local));
    }

    let vertices = shaped
        .iter()
        .zip(model.skin_sparse())
        .map(|(v, weights)| {
            weights
                .iter()
                .fold(Vector3::zeros(), |acc, &(j, w)| acc + world[j].apply(v) * w)
        })
        .collect();

    Ok(PoseCache {
        shaped,
        rest_joints,
        rel_rots,
        world,
        vertices,
    })
}

/// Gradients of a scalar with respect to the 6D joint rotations and the
/// shape coefficients, given its gradient on the posed vertices and
/// (optionally) directly on the relative rotation matrices.
pub(crate) fn pose_backward(
    model: &BodyModel,
    cache: &PoseCache,
    body_rot6d: &[Rot6],
    d_vertices: &[Vector3<f64>],
    d_rel_rots: Option<&[Matrix3<f64>]>,
) -> Result<(Vec<Rot6>, Vec<f64>)> {
    let nj = model.num_joints();
    let mut d_a = vec![Matrix3::<f64>::zeros(); nj];
    let mut d_b = vec![Vector3::<f64>::zeros(); nj];
    let mut d_shaped = vec![Vector3::<f64>::zeros(); cache.shaped.len()];

    for (vi, (weights, dv)) in model.skin_sparse().iter().zip(d_vertices).enumerate() {
        if dv.x == 0.0 && dv.y == 0.0 && dv.z == 0.0 {
            continue;
        }
        let sv = cache.shaped[vi];
        for &(j, w) in weights {
            let g = dv * w;
            d_a[j] += g * sv.transpose();
            d_b[j] += g;
            d_shaped[vi] += cache.world[j].rotation.transpose() * g;
        }
    }

    let mut d_rot = vec![Matrix3::<f64>::zeros(); nj];
    if let Some(extra) = d_rel_rots {
        for (d, e) in d_rot.iter_mut().zip(extra) {
            *d += e;
        }
    }
    let mut d_rest = vec![Vector3::<f64>::zeros(); nj];

    // A_j = A_p R_j,  b_j = A_p c_j + b_p,  c_j = J_j - R_j J_j
    for j in (1..nj).rev() {
        let p = model.parents()[j].expect("validated tree");
        let a_p = cache.world[p].rotation;
        let r = cache.rel_rots[j];
        let pivot = cache.rest_joints[j];
        let c = pivot - r * pivot;
        let d_c = a_p.transpose() * d_b[j];

        d_rot[j] += a_p.transpose() * d_a[j] - d_c * pivot.transpose();
        let (da_j, db_j) = (d_a[j], d_b[j]);
        d_a[p] += da_j * r.transpose() + db_j * c.transpose();
        d_b[p] += db_j;
        d_rest[j] += d_c - r.transpose() * d_c;
    }

    regress_backward(model, &d_rest, &mut d_shaped);

    let d_shape = model
        .parts
        .shape_dirs
        .iter()
        .map(|dirs| dirs.iter().zip(&d_shaped).map(|(d, g)| d.dot(g)).sum())
        .collect();

    let d_rot6d = body_rot6d
        .iter()
        .enumerate()
        .map(|(k, r)| rot6d_backward(r, &d_rot[k + 1]))
        .collect::<Result<Vec<_>>>()?;

    Ok((d_rot6d, d_shape))
}
