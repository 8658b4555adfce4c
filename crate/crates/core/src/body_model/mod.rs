//! Parametric body model: shape blendshapes on a template mesh, articulated
//! by linear blend skinning over a kinematic tree, with a linear joint
//! regressor and a fixed atlas of surface sample points (texels).
//!
//! There are no pose-dependent corrective blendshapes. The body's global
//! orientation is not part of the pose; it lives in the camera, so meshes
//! produced here are in the canonical (root) orientation.

mod humanoid;
mod io;
mod skinning;

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::rotation::{Rot6, IDENTITY_6D};
use crate::transform::RigidTransform;

pub use humanoid::{make_procedural_humanoid, HumanoidConfig, JOINT_NAMES};
pub use io::{load_model, read_model, save_model, write_model, MODEL_VERSION};
pub(crate) use skinning::{pose_backward, pose_forward, regress, regress_backward, PoseCache};

const SUM_TOL: f64 = 1e-9;

/// A surface sample point: a face and barycentric coordinates inside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texel {
    pub face: usize,
    pub bary: [f64; 3],
}

/// Raw arrays of a body model, before validation.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModelParts {
    pub template_vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// `shape_dirs[s][v]`: displacement of vertex `v` per unit of coefficient `s`.
    pub shape_dirs: Vec<Vec<Vector3<f64>>>,
    /// Row-major `V x J`.
    pub skin_weights: Vec<f64>,
    /// Row-major `J x V`.
    pub joint_regressor: Vec<f64>,
    pub parents: Vec<Option<usize>>,
    pub texels: Vec<Texel>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BodyModel {
    parts: BodyModelParts,
    faces: Arc<[[usize; 3]]>,
    skin_sparse: Vec<Vec<(usize, f64)>>,
    regressor_sparse: Vec<Vec<(usize, f64)>>,
    face_texels: Vec<Vec<usize>>,
}

impl PartialEq for BodyModel {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl BodyModel {
    /// Validates every model invariant and builds the sparse lookup tables.
    pub fn from_parts(parts: BodyModelParts) -> Result<Self> {
        validate(&parts)?;
        let v = parts.template_vertices.len();
        let j = parts.parents.len();
        let skin_sparse = (0..v)
            .map(|vi| {
                (0..j)
                    .filter_map(|ji| {
                        let w = parts.skin_weights[vi * j + ji];
                        (w != 0.0).then_some((ji, w))
                    })
                    .collect()
            })
            .collect();
        let regressor_sparse = (0..j)
            .map(|ji| {
                (0..v)
                    .filter_map(|vi| {
                        let w = parts.joint_regressor[ji * v + vi];
                        (w != 0.0).then_some((vi, w))
                    })
                    .collect()
            })
            .collect();
        let mut face_texels = vec![Vec::new(); parts.faces.len()];
        for (ti, t) in parts.texels.iter().enumerate() {
            face_texels[t.face].push(ti);
        }
        let faces: Arc<[[usize; 3]]> = parts.faces.clone().into();
        Ok(Self {
            parts,
            faces,
            skin_sparse,
            regressor_sparse,
            face_texels,
        })
    }

    pub fn parts(&self) -> &BodyModelParts {
        &self.parts
    }

    pub fn num_vertices(&self) -> usize {
        self.parts.template_vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parts.parents.len()
    }

    pub fn num_shape(&self) -> usize {
        self.parts.shape_dirs.len()
    }

    pub fn num_texels(&self) -> usize {
        self.parts.texels.len()
    }

    pub fn template(&self) -> &[Vector3<f64>] {
        &self.parts.template_vertices
    }

    pub fn faces(&self) -> &Arc<[[usize; 3]]> {
        &self.faces
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parts.parents
    }

    pub fn texels(&self) -> &[Texel] {
        &self.parts.texels
    }

    /// Indices of the texels lying on `face`.
    pub fn face_texels(&self, face: usize) -> &[usize] {
        &self.face_texels[face]
    }

    pub fn seed(&self) -> u64 {
        self.parts.seed
    }

    pub fn skin_weight(&self, vertex: usize, joint: usize) -> f64 {
        self.parts.skin_weights[vertex * self.num_joints() + joint]
    }

    pub(crate) fn skin_sparse(&self) -> &[Vec<(usize, f64)>] {
        &self.skin_sparse
    }

    pub(crate) fn regressor_sparse(&self) -> &[Vec<(usize, f64)>] {
        &self.regressor_sparse
    }

    /// Mesh of the shaped template with every joint at rest.
    pub fn rest_mesh(&self) -> Mesh {
        Mesh {
            vertices: self.parts.template_vertices.clone(),
            faces: self.faces.clone(),
        }
    }

    /// Pose at rest with zero shape and an identity camera.
    pub fn rest_pose(&self) -> PoseParams {
        PoseParams {
            body_rot6d: vec![IDENTITY_6D; self.num_joints().saturating_sub(1)],
            shape: vec![0.0; self.num_shape()],
            camera: CameraParams::default(),
        }
    }

    pub(crate) fn check_pose(&self, pose: &PoseParams) -> Result<()> {
        let expected = self.num_joints() - 1;
        if pose.body_rot6d.len() != expected {
            return Err(Error::PoseDimMismatch {
                expected,
                got: pose.body_rot6d.len(),
            });
        }
        self.check_shape(&pose.shape)
    }

    pub(crate) fn check_shape(&self, shape: &[f64]) -> Result<()> {
        if shape.len() != self.num_shape() {
            return Err(Error::ShapeDimMismatch {
                expected: self.num_shape(),
                got: shape.len(),
            });
        }
        Ok(())
    }
}

fn validate(p: &BodyModelParts) -> Result<()> {
    let v = p.template_vertices.len();
    let j = p.parents.len();
    if v == 0 {
        return Err(Error::malformed_model("template_vertices", "empty"));
    }
    if j == 0 {
        return Err(Error::malformed_model("parents", "no joints"));
    }
    if p.template_vertices
        .iter()
        .any(|x| !x.iter().all(|c| c.is_finite()))
    {
        return Err(Error::malformed_model(
            "template_vertices",
            "non-finite coordinate",
        ));
    }
    if p.faces.is_empty() {
        return Err(Error::malformed_model("faces", "empty"));
    }
    for (fi, f) in p.faces.iter().enumerate() {
        if f.iter().any(|&i| i >= v) {
            return Err(Error::malformed_model(
                "faces",
                format!("face {fi} indexes past {v} vertices"),
            ));
        }
    }
    for (s, dirs) in p.shape_dirs.iter().enumerate() {
        if dirs.len() != v {
            return Err(Error::malformed_model(
                "shape_dirs",
                format!("direction {s} has {} rows", dirs.len()),
            ));
        }
        if dirs.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(Error::malformed_model("shape_dirs", "non-finite entry"));
        }
    }
    if p.skin_weights.len() != v * j {
        return Err(Error::malformed_model("skin_weights", "wrong size"));
    }
    for vi in 0..v {
        let row = &p.skin_weights[vi * j..(vi + 1) * j];
        if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::malformed_model(
                "skin_weights",
                format!("row {vi} has a negative or non-finite weight"),
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::malformed_model(
                "skin_weights",
                format!("row {vi} sums to {sum}"),
            ));
        }
    }
    if p.joint_regressor.len() != j * v {
        return Err(Error::malformed_model("joint_regressor", "wrong size"));
    }
    for ji in 0..j {
        let row = &p.joint_regressor[ji * v..(ji + 1) * v];
        if row.iter().any(|w| !w.is_finite()) {
            return Err(Error::malformed_model(
                "joint_regressor",
                "non-finite entry",
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::malformed_model(
                "joint_regressor",
                format!("row {ji} sums to {sum}"),
            ));
        }
    }
    if p.parents[0].is_some() {
        return Err(Error::malformed_model(
            "parents",
            "joint 0 must be the root",
        ));
    }
    for (ji, parent) in p.parents.iter().enumerate().skip(1) {
        match parent {
            Some(pi) if *pi < ji => {}
            Some(pi) => {
                return Err(Error::malformed_model(
                    "parents",
                    format!("joint {ji} has parent {pi}; parents must precede children (cycle or bad order)"),
                ))
            }
            None => return Err(Error::malformed_model("parents", format!("joint {ji} is a second root"))),
        }
    }
    for (ti, t) in p.texels.iter().enumerate() {
        if t.face >= p.faces.len() {
            return Err(Error::malformed_model(
                "texel_faces",
                format!("texel {ti} references missing face {}", t.face),
            ));
        }
        if t.bary.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::malformed_model(
                "texel_barycentrics",
                format!("texel {ti} has a negative coordinate"),
            ));
        }
        let sum: f64 = t.bary.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::malformed_model(
                "texel_barycentrics",
                format!("texel {ti} sums to {sum}"),
            ));
        }
    }
    Ok(())
}

/// Per-frame parameters: relative joint rotations, shape and camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    /// Relative rotation of joints `1..J`; the root carries none.
    pub body_rot6d: Vec<Rot6>,
    pub shape: Vec<f64>,
    pub camera: CameraParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Arc<[[usize; 3]]>,
}

/// Template plus linear blendshape offsets.
pub fn shaped_template(shape: &[f64], model: &BodyModel) -> Result<Vec<Vector3<f64>>> {
    model.check_shape(shape)?;
    Ok(skinning::shaped_vertices(model, shape))
}

/// World transform of every joint. The root is the identity; joint `j` is
/// its parent's transform composed with a rotation about its rest position.
pub fn forward_kinematics(pose: &PoseParams, model: &BodyModel) -> Result<Vec<RigidTransform>> {
    model.check_pose(pose)?;
    Ok(pose_forward(model, &pose.body_rot6d, &pose.shape)?.world)
}

/// Linear blend skinning of the shaped template.
pub fn lbs(pose: &PoseParams, model: &BodyModel) -> Result<Mesh> {
    model.check_pose(pose)?;
    let cache = pose_forward(model, &pose.body_rot6d, &pose.shape)?;
    Ok(Mesh {
        vertices: cache.vertices,
        faces: model.faces.clone(),
    })
}

/// `X = W M`.
pub fn regress_joints(mesh: &Mesh, model: &BodyModel) -> Result<Vec<Vector3<f64>>> {
    if mesh.vertices.len() != model.num_vertices() {
        return Err(Error::VertexCountMismatch(
            mesh.vertices.len(),
            model.num_vertices(),
        ));
    }
    Ok(skinning::regress(model, &mesh.vertices))
}

pub fn texel_positions(mesh: &Mesh, model: &BodyModel) -> Vec<Vector3<f64>> {
    model
        .texels()
        .iter()
        .map(|t| texel_point(&mesh.vertices, &model.faces[t.face], &t.bary))
        .collect()
}

#[inline]
pub(crate) fn texel_point(
    vertices: &[Vector3<f64>],
    face: &[usize; 3],
    bary: &[f64; 3],
) -> Vector3<f64> {
    vertices[face[0]] * bary[0] + vertices[face[1]] * bary[1] + vertices[face[2]] * bary[2]
}
