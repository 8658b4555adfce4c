//! Weak-perspective camera: `x = s * Π(R X) + t`, where `Π` drops the third
//! coordinate. After rotation the camera looks down +z, so a smaller view
//! depth is nearer. Image coordinates are pixels with the origin at the
//! centre of the top-left pixel, x to the right and y down.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::Mesh;
use crate::error::{Error, Result};
use crate::rotation::{rot6d_to_matrix, Rot6, IDENTITY_6D};
use crate::transform::RigidTransform;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Global orientation of the body.
    pub global_rot6d: Rot6,
    pub scale: f64,
    pub translation: [f64; 2],
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            global_rot6d: IDENTITY_6D,
            scale: 1.0,
            translation: [0.0, 0.0],
        }
    }
}

impl CameraParams {
    pub fn resolve(&self) -> Result<ResolvedCamera> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidCamera("scale must be positive and finite"));
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidCamera("translation must be finite"));
        }
        Ok(ResolvedCamera {
            rotation: rot6d_to_matrix(&self.global_rot6d)?,
            scale: self.scale,
            translation: Vector2::new(self.translation[0], self.translation[1]),
        })
    }
}

/// Camera with its rotation already orthonormalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedCamera {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector2<f64>,
}

impl ResolvedCamera {
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let r = self.rotation * p;
        Vector2::new(r.x, r.y) * self.scale + self.translation
    }

    #[inline]
    pub fn depth(&self, p: &Vector3<f64>) -> f64 {
        self.rotation.row(2).transpose().dot(p)
    }

    /// Rotated point: image-plane coordinates before scale/translation, plus depth.
    #[inline]
    pub fn to_view(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p
    }
}

pub fn project(points: &[Vector3<f64>], cam: &CameraParams) -> Result<Vec<Vector2<f64>>> {
    let cam = cam.resolve()?;
    Ok(points.iter().map(|p| cam.project(p)).collect())
}

pub fn view_depth(points: &[Vector3<f64>], cam: &CameraParams) -> Result<Vec<f64>> {
    let cam = cam.resolve()?;
    Ok(points.iter().map(|p| cam.depth(p)).collect())
}

pub fn apply_extrinsics(mesh: &Mesh, rel: &RigidTransform) -> Result<Mesh> {
    rel.check_rigid()?;
    Ok(Mesh {
        vertices: mesh.vertices.iter().map(|v| rel.apply(v)).collect(),
        faces: mesh.faces.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{axis_angle_to_matrix, matrix_to_rot6d};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn cam(rot: Matrix3<f64>, s: f64, t: [f64; 2]) -> CameraParams {
        CameraParams {
            global_rot6d: matrix_to_rot6d(&rot),
            scale: s,
            translation: t,
        }
    }

    #[test]
    fn orthographic_drop() {
        let out = project(
            &[Vector3::new(1.0, 2.0, 7.0)],
            &cam(Matrix3::identity(), 1.0, [0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(out[0], Vector2::new(1.0, 2.0));
    }

    #[test]
    fn scale_and_translation() {
        let out = project(
            &[Vector3::new(1.0, 2.0, 7.0)],
            &cam(Matrix3::identity(), 2.0, [1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(out[0], Vector2::new(3.0, 5.0));
    }

    #[test]
    fn rotation_taking_z_onto_y() {
        // Quarter turn about x chosen so that R e_z = e_y.
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        assert!((r * Vector3::z() - Vector3::y()).norm() < 1e-15);
        let out = project(&[Vector3::new(0.0, 0.0, 1.0)], &cam(r, 1.0, [0.0, 0.0])).unwrap();
        assert!((out[0] - Vector2::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn depth_basics() {
        let p = [Vector3::new(0.0, 0.0, 3.0)];
        assert_eq!(
            view_depth(&p, &cam(Matrix3::identity(), 1.0, [0.0, 0.0])).unwrap()[0],
            3.0
        );
        assert_eq!(
            view_depth(&p, &cam(Matrix3::identity(), 5.0, [9.0, -4.0])).unwrap()[0],
            3.0
        );

        let pts = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 2.0)];
        let flip = axis_angle_to_matrix(&Vector3::new(PI, 0.0, 0.0));
        let before = view_depth(&pts, &cam(Matrix3::identity(), 1.0, [0.0, 0.0])).unwrap();
        let after = view_depth(&pts, &cam(flip, 1.0, [0.0, 0.0])).unwrap();
        assert!(before[0] < before[1]);
        assert!(after[0] > after[1]);
    }

    #[test]
    fn invalid_scale_rejected() {
        let c = CameraParams {
            scale: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            project(&[Vector3::zeros()], &c),
            Err(Error::InvalidCamera(_))
        ));
    }

    fn mesh(vs: Vec<Vector3<f64>>) -> Mesh {
        Mesh {
            vertices: vs,
            faces: Arc::from(vec![[0usize, 1, 2]]),
        }
    }

    #[test]
    fn extrinsics_identity_translation_and_inverse() {
        let m = mesh(vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.5, 0.5, 3.0),
        ]);
        assert_eq!(
            apply_extrinsics(&m, &RigidTransform::identity()).unwrap(),
            m
        );

        let d = Vector3::new(0.1, -0.2, 0.3);
        let shifted = apply_extrinsics(&m, &RigidTransform::translation(d)).unwrap();
        for (a, b) in shifted.vertices.iter().zip(&m.vertices) {
            assert!((a - b - d).norm() < 1e-15);
        }

        let rel = RigidTransform::new(axis_angle_to_matrix(&Vector3::new(0.4, -0.3, 1.1)), d);
        let there = apply_extrinsics(&m, &rel).unwrap();
        let back = apply_extrinsics(&there, &rel.inverse()).unwrap();
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn non_rigid_extrinsics_rejected() {
        let m = mesh(vec![Vector3::zeros(); 3]);
        let bad = RigidTransform::new(Matrix3::identity() * 1.01, Vector3::zeros());
        assert!(matches!(
            apply_extrinsics(&m, &bad),
            Err(Error::NotRigid(_))
        ));
        let reflect = RigidTransform::new(
            Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)),
            Vector3::zeros(),
        );
        assert!(matches!(
            apply_extrinsics(&m, &reflect),
            Err(Error::NotRigid(_))
        ));
    }

    #[test]
    fn projection_affine_in_scale_and_translation() {
        let pts = [Vector3::new(0.3, -0.7, 0.2)];
        let r = axis_angle_to_matrix(&Vector3::new(0.2, 0.5, -0.1));
        let base = cam(r, 2.0, [3.0, -1.0]);
        let f = |c: &CameraParams| project(&pts, c).unwrap()[0];
        let h = 1e-4;
        let analytic_s = {
            let v = r * pts[0];
            Vector2::new(v.x, v.y)
        };
        let mut p = base;
        let mut m = base;
        p.scale += h;
        m.scale -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        assert!((fd - analytic_s).norm() / analytic_s.norm() < 1e-6);
        for k in 0..2 {
            let mut p = base;
            let mut m = base;
            p.translation[k] += h;
            m.translation[k] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let mut e = Vector2::zeros();
            e[k] = 1.0;
            assert!((fd - e).norm() < 1e-6);
        }
    }

    proptest::proptest! {
        #[test]
        fn composition_consistency(
            w in proptest::array::uniform3(-2.0f64..2.0),
            q in proptest::array::uniform3(-2.0f64..2.0),
            p in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let r = axis_angle_to_matrix(&Vector3::from(w));
            let qm = axis_angle_to_matrix(&Vector3::from(q));
            let point = Vector3::from(p);
            let a = project(&[qm * point], &cam(r, 1.5, [2.0, 3.0])).unwrap()[0];
            let b = project(&[point], &cam(r * qm, 1.5, [2.0, 3.0])).unwrap()[0];
            proptest::prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
