use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::body_model::{
    pose_backward, pose_forward, regress, regress_backward, texel_point, BodyModel, Mesh,
    PoseCache, PoseParams,
};
use crate::camera::{CameraParams, ResolvedCamera};
use crate::error::{Error, Result};
use crate::losses::{
    frame_pairs, keypoint_2d_with_grad, mesh_consistency_with_grad, shape_consistency_with_grad,
    texture_consistency_with_grad, ExtrinsicPair, LossCounts, LossReport, LossWeights, PriorConfig,
    QuadraticPrior,
};
use crate::par::{par_map, ExecPolicy};
use crate::render::{sample_bilinear_with_grad, sampling_mask_screen, ScreenMesh, TextureMap};
use crate::rotation::{rot6d_backward, Rot6};
use crate::synth::{Frame, SceneMode};

/// How the mesh term compares two views.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshVariant {
    /// Canonical meshes are compared directly.
    #[default]
    Canonical,
    /// Meshes are rotated into their views and mapped through the known rig.
    Extrinsics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub weights: LossWeights,
    pub prior: PriorConfig,
    pub mesh_variant: MeshVariant,
}

/// The fitting objective over a batch of frames. Texel visibility is state:
/// it is recomputed only by [`Objective::refresh_visibility`] and is held
/// fixed by every evaluation in between.
pub struct Objective<'a> {
    model: &'a BodyModel,
    frames: &'a [Frame],
    mode: SceneMode,
    config: ObjectiveConfig,
    prior: QuadraticPrior,
    pairs: Vec<(usize, usize)>,
    visibility: Vec<Vec<bool>>,
    policy: ExecPolicy,
}

struct FrameForward {
    pose: PoseParams,
    cache: PoseCache,
    camera: ResolvedCamera,
    texture: TextureMap,
    /// Bilinear Jacobians of the visible texels (zero elsewhere).
    tex_jac: Vec<Matrix3x2<f64>>,
    kp_value: f64,
    kp_grad: Vec<Vector2<f64>>,
    kp_count: usize,
    prior_value: f64,
    prior_d_rot: Vec<Rot6>,
    prior_d_shape: Vec<f64>,
}

type PointPairGrad = (Vec<Vector3<f64>>, Vec<Vector3<f64>>);

struct PairTerms {
    texture: f64,
    overlap: usize,
    tex_d: Option<PointPairGrad>,
    shape: f64,
    shape_d: Option<(Vec<f64>, Vec<f64>)>,
    mesh: f64,
    mesh_d: Option<crate::losses::MeshGrad>,
}

/// Adjoints flowing into one frame from the pairwise terms.
struct FrameAdjoint {
    d_tex: Vec<Vector3<f64>>,
    d_vertices: Vec<Vector3<f64>>,
    d_cam_rot: Matrix3<f64>,
    d_shape: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a BodyModel,
        frames: &'a [Frame],
        mode: SceneMode,
        config: ObjectiveConfig,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyBatch);
        }
        config.weights.validate()?;
        for f in frames {
            if let Some(k) = &f.keypoints {
                if k.points.len() != model.num_joints() {
                    return Err(Error::KeypointDimMismatch(
                        k.points.len(),
                        model.num_joints(),
                    ));
                }
                if k.confidence.len() != k.points.len() {
                    return Err(Error::KeypointDimMismatch(
                        k.points.len(),
                        k.confidence.len(),
                    ));
                }
            }
        }
        if mode == SceneMode::Multiview {
            if frames.iter().any(|f| f.time_index != frames[0].time_index) {
                return Err(Error::MalformedScene(
                    "multiview frames must share one time index".into(),
                ));
            }
            if config.mesh_variant == MeshVariant::Extrinsics
                && frames.iter().any(|f| f.extrinsics.is_none())
            {
                return Err(Error::MalformedScene(
                    "extrinsics mesh term needs extrinsics on every frame".into(),
                ));
            }
        }
        Ok(Self {
            model,
            frames,
            mode,
            prior: QuadraticPrior::isotropic(model, &config.prior),
            config,
            pairs: frame_pairs(frames.len()),
            visibility: vec![vec![false; model.num_texels()]; frames.len()],
            policy: ExecPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_prior(mut self, prior: QuadraticPrior) -> Self {
        self.prior = prior;
        self
    }

    pub fn model(&self) -> &BodyModel {
        self.model
    }

    pub fn frames(&self) -> &[Frame] {
        self.frames
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn mode(&self) -> SceneMode {
        self.mode
    }

    pub fn visibility(&self) -> &[Vec<bool>] {
        &self.visibility
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.num_frames() != self.frames.len()
            || params.layout.num_joints != self.model.num_joints()
            || params.layout.num_shape != self.model.num_shape()
        {
            return Err(Error::DimMismatch(format!(
                "parameters cover {} frames with J={}, S={}; batch has {} frames, model J={}, S={}",
                params.num_frames(),
                params.layout.num_joints,
                params.layout.num_shape,
                self.frames.len(),
                self.model.num_joints(),
                self.model.num_shape()
            )));
        }
        Ok(())
    }

    /// Recomputes every frame's texel mask at `params`.
    pub fn refresh_visibility(&mut self, params: &ParamVector) -> Result<()> {
        self.check_params(params)?;
        let model = self.model;
        let idx: Vec<usize> = (0..self.frames.len()).collect();
        let masks = par_map(self.policy, &idx, |&f| -> Result<Vec<bool>> {
            let pose = params.frame(f);
            let cache = pose_forward(model, &pose.body_rot6d, &pose.shape)?;
            let mesh = Mesh {
                vertices: cache.vertices,
                faces: model.faces().clone(),
            };
            let screen = ScreenMesh::new(&mesh, &pose.camera)?;
            let img = &self.frames[f].image;
            Ok(sampling_mask_screen(
                &screen,
                img.width(),
                img.height(),
                model,
            ))
        });
        self.visibility = masks.into_iter().collect::<Result<_>>()?;
        Ok(())
    }

    pub fn set_visibility(&mut self, masks: Vec<Vec<bool>>) -> Result<()> {
        if masks.len() != self.frames.len()
            || masks.iter().any(|m| m.len() != self.model.num_texels())
        {
            return Err(Error::DimMismatch(
                "visibility masks do not match batch".into(),
            ));
        }
        self.visibility = masks;
        Ok(())
    }

    /// Drops texels sitting on a non-differentiable point of the texture
    /// term at `params`: projections within `margin` pixels of a pixel-centre
    /// gridline (bilinear kink), and texels whose colour difference in some
    /// pair could reach zero under a displacement of `margin` pixels (kink of
    /// the distance at zero). Returns the number of mask entries cleared.
    pub fn exclude_kink_texels(&mut self, params: &ParamVector, margin: f64) -> Result<usize> {
        self.check_params(params)?;
        let mut dropped = 0;
        for f in 0..self.frames.len() {
            let pose = params.frame(f);
            let cache = pose_forward(self.model, &pose.body_rot6d, &pose.shape)?;
            let cam = pose.camera.resolve()?;
            for (t, texel) in self.model.texels().iter().enumerate() {
                if !self.visibility[f][t] {
                    continue;
                }
                let p = cam.project(&texel_point(
                    &cache.vertices,
                    &self.model.faces()[texel.face],
                    &texel.bary,
                ));
                let near = |c: f64| (c - c.round()).abs() < margin;
                if near(p.x) || near(p.y) {
                    self.visibility[f][t] = false;
                    dropped += 1;
                }
            }
        }
        let fwd = (0..self.frames.len())
            .map(|f| self.forward_frame(params, f))
            .collect::<Result<Vec<_>>>()?;
        for &(i, j) in &self.pairs {
            for t in 0..self.model.num_texels() {
                let reach = (fwd[i].tex_jac[t].norm() + fwd[j].tex_jac[t].norm()) * margin + 1e-9;
                let diff = (fwd[i].texture.values[t] - fwd[j].texture.values[t]).norm();
                if self.visibility[i][t] && self.visibility[j][t] && diff <= reach {
                    self.visibility[i][t] = false;
                    dropped += 1;
                }
            }
        }
        Ok(dropped)
    }

    fn forward_frame(&self, params: &ParamVector, f: usize) -> Result<FrameForward> {
        let model = self.model;
        let frame = &self.frames[f];
        let pose = params.frame(f);
        let cache = pose_forward(model, &pose.body_rot6d, &pose.shape)?;
        let camera = pose.camera.resolve()?;

        let (kp_value, kp_grad, kp_count) = match &frame.keypoints {
            Some(k) => {
                let joints = regress(model, &cache.vertices);
                let x: Vec<Vector2<f64>> = joints.iter().map(|j| camera.project(j)).collect();
                let gt: Vec<Vector2<f64>> =
                    k.points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                let (v, g) = keypoint_2d_with_grad(&x, &gt, &k.confidence)?;
                (v, g, k.confidence.iter().filter(|c| **c > 0.0).count())
            }
            None => (0.0, Vec::new(), 0),
        };

        let mask = &self.visibility[f];
        let nt = model.num_texels();
        let mut values = vec![Vector3::zeros(); nt];
        let mut tex_jac = vec![Matrix3x2::zeros(); nt];
        for (t, texel) in model.texels().iter().enumerate() {
            if !mask[t] {
                continue;
            }
            let p = camera.project(&texel_point(
                &cache.vertices,
                &model.faces()[texel.face],
                &texel.bary,
            ));
            let (c, j) = sample_bilinear_with_grad(&frame.image, &p);
            values[t] = c;
            tex_jac[t] = j;
        }

        let (prior_value, prior_d_rot, prior_d_shape) = self.prior.value_with_grad(&pose)?;
        Ok(FrameForward {
            pose,
            cache,
            camera,
            texture: TextureMap {
                values,
                visible: mask.clone(),
            },
            tex_jac,
            kp_value,
            kp_grad,
            kp_count,
            prior_value,
            prior_d_rot,
            prior_d_shape,
        })
    }

    fn extrinsic_pair(&self, fw: &[FrameForward], i: usize, j: usize) -> Option<ExtrinsicPair> {
        if self.config.mesh_variant != MeshVariant::Extrinsics {
            return None;
        }
        let ei = self.frames[i].extrinsics.as_ref()?;
        let ej = self.frames[j].extrinsics.as_ref()?;
        Some(ExtrinsicPair {
            rot_i: fw[i].camera.rotation,
            rot_j: fw[j].camera.rotation,
            rel: ei.inverse().compose(ej),
        })
    }

    fn pair_terms(
        &self,
        fw: &[FrameForward],
        (i, j): (usize, usize),
        grad: bool,
    ) -> Result<PairTerms> {
        let w = &self.config.weights;
        let (tex, overlap) = texture_consistency_with_grad(&fw[i].texture, &fw[j].texture)?;
        let shape = shape_consistency_with_grad(&fw[i].pose.shape, &fw[j].pose.shape)?;
        let (mesh, mesh_d) = if self.mode == SceneMode::Multiview {
            let mi = Mesh {
                vertices: fw[i].cache.vertices.clone(),
                faces: self.model.faces().clone(),
            };
            let mj = Mesh {
                vertices: fw[j].cache.vertices.clone(),
                faces: self.model.faces().clone(),
            };
            let g = mesh_consistency_with_grad(&mi, &mj, self.extrinsic_pair(fw, i, j).as_ref())?;
            (g.value, (grad && w.mesh > 0.0).then_some(g))
        } else {
            (0.0, None)
        };
        Ok(PairTerms {
            texture: tex.value,
            overlap,
            tex_d: (grad && w.texture > 0.0).then_some((tex.d_a, tex.d_b)),
            shape: shape.value,
            shape_d: (grad && w.shape > 0.0).then_some((shape.d_a, shape.d_b)),
            mesh,
            mesh_d,
        })
    }

    fn backward_frame(
        &self,
        fw: &FrameForward,
        adj: &FrameAdjoint,
    ) -> Result<(Vec<Rot6>, Vec<f64>, CameraParams)> {
        let model = self.model;
        let w = &self.config.weights;
        let cam = &fw.camera;
        let mut d_vertices = adj.d_vertices.clone();
        let mut d_r = adj.d_cam_rot;
        let mut d_s = 0.0;
        let mut d_t = Vector2::zeros();

        // x = s P R X + t, with P dropping the third row.
        let mut project_back = |x: &Vector3<f64>, g: Vector2<f64>| -> Vector3<f64> {
            let g3 = Vector3::new(g.x, g.y, 0.0);
            let v = cam.rotation * x;
            d_r += g3 * x.transpose() * cam.scale;
            d_s += g.x * v.x + g.y * v.y;
            d_t += g;
            cam.rotation.transpose() * g3 * cam.scale
        };

        if w.texture > 0.0 {
            for (t, texel) in model.texels().iter().enumerate() {
                if !fw.texture.visible[t] {
                    continue;
                }
                let dc = adj.d_tex[t];
                if dc.x == 0.0 && dc.y == 0.0 && dc.z == 0.0 {
                    continue;
                }
                let g = fw.tex_jac[t].transpose() * dc;
                let face = &model.faces()[texel.face];
                let p = texel_point(&fw.cache.vertices, face, &texel.bary);
                let dp = project_back(&p, g);
                for (k, &v) in face.iter().enumerate() {
                    d_vertices[v] += dp * texel.bary[k];
                }
            }
        }

        if w.kp2d > 0.0 && !fw.kp_grad.is_empty() {
            let joints = regress(model, &fw.cache.vertices);
            let d_joints: Vec<Vector3<f64>> = joints
                .iter()
                .zip(&fw.kp_grad)
                .map(|(x, g)| project_back(x, g * w.kp2d))
                .collect();
            regress_backward(model, &d_joints, &mut d_vertices);
        }

        let (mut d_body, mut d_shape) =
            pose_backward(model, &fw.cache, &fw.pose.body_rot6d, &d_vertices, None)?;
        if w.prior > 0.0 {
            for (d, p) in d_body.iter_mut().zip(&fw.prior_d_rot) {
                for c in 0..6 {
                    d[c] += w.prior * p[c];
                }
            }
            for (d, p) in d_shape.iter_mut().zip(&fw.prior_d_shape) {
                *d += w.prior * p;
            }
        }
        for (d, a) in d_shape.iter_mut().zip(&adj.d_shape) {
            *d += a;
        }
        let d_cam = CameraParams {
            global_rot6d: rot6d_backward(&fw.pose.camera.global_rot6d, &d_r)?,
            scale: d_s,
            translation: [d_t.x, d_t.y],
        };
        Ok((d_body, d_shape, d_cam))
    }

    /// Loss value and (optionally) gradient at `params` under the current
    /// visibility.
    pub fn evaluate(&self, params: &ParamVector, with_gradient: bool) -> Result<LossReport> {
        self.check_params(params)?;
        let w = self.config.weights;
        let n = self.frames.len();
        let idx: Vec<usize> = (0..n).collect();
        let fw: Vec<FrameForward> = par_map(self.policy, &idx, |&f| self.forward_frame(params, f))
            .into_iter()
            .collect::<Result<_>>()?;
        let pair_terms: Vec<PairTerms> = par_map(self.policy, &self.pairs, |&p| {
            self.pair_terms(&fw, p, with_gradient)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let mut report = LossReport {
            counts: LossCounts {
                texel_overlap: pair_terms.iter().map(|p| p.overlap).collect(),
                empty_overlap_pairs: pair_terms.iter().filter(|p| p.overlap == 0).count(),
                visible_keypoints: fw.iter().map(|f| f.kp_count).sum(),
            },
            ..Default::default()
        };
        for f in &fw {
            report.kp2d += f.kp_value;
            report.prior += f.prior_value;
        }
        for p in &pair_terms {
            report.texture += p.texture;
            report.shape += p.shape;
            report.mesh += p.mesh;
        }
        report.total = w.kp2d * report.kp2d
            + w.texture * report.texture
            + w.shape * report.shape
            + w.mesh * report.mesh
            + w.prior * report.prior;
        if !report.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: 0 });
        }
        if !with_gradient {
            return Ok(report);
        }

        // Fixed-order accumulation of the pairwise adjoints.
        let (nv, nt, ns) = (
            self.model.num_vertices(),
            self.model.num_texels(),
            self.model.num_shape(),
        );
        let mut adj: Vec<FrameAdjoint> = (0..n)
            .map(|_| FrameAdjoint {
                d_tex: vec![Vector3::zeros(); nt],
                d_vertices: vec![Vector3::zeros(); nv],
                d_cam_rot: Matrix3::zeros(),
                d_shape: vec![0.0; ns],
            })
            .collect();
        for (&(i, j), p) in self.pairs.iter().zip(&pair_terms) {
            if let Some((da, db)) = &p.tex_d {
                for (dst, src) in adj[i].d_tex.iter_mut().zip(da) {
                    *dst += src * w.texture;
                }
                for (dst, src) in adj[j].d_tex.iter_mut().zip(db) {
                    *dst += src * w.texture;
                }
            }
            if let Some((da, db)) = &p.shape_d {
                for (dst, src) in adj[i].d_shape.iter_mut().zip(da) {
                    *dst += src * w.shape;
                }
                for (dst, src) in adj[j].d_shape.iter_mut().zip(db) {
                    *dst += src * w.shape;
                }
            }
            if let Some(g) = &p.mesh_d {
                for (dst, src) in adj[i].d_vertices.iter_mut().zip(&g.d_vertices_i) {
                    *dst += src * w.mesh;
                }
                for (dst, src) in adj[j].d_vertices.iter_mut().zip(&g.d_vertices_j) {
                    *dst += src * w.mesh;
                }
                adj[i].d_cam_rot += g.d_rot_i * w.mesh;
                adj[j].d_cam_rot += g.d_rot_j * w.mesh;
            }
        }

        let per_frame = par_map(self.policy, &idx, |&f| self.backward_frame(&fw[f], &adj[f]));
        let mut gradient = vec![0.0; params.layout.len()];
        for (f, r) in per_frame.into_iter().enumerate() {
            let (d_body, d_shape, d_cam) = r?;
            ParamVector::write_frame_grad(
                &params.layout,
                &mut gradient,
                f,
                &d_body,
                &d_shape,
                &d_cam,
            );
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: 0 });
        }
        report.gradient = gradient;
        Ok(report)
    }
}

/// Loss and gradient at `params` with visibility computed at `params`.
pub fn total_loss(
    model: &BodyModel,
    frames: &[Frame],
    params: &ParamVector,
    mode: SceneMode,
    config: &ObjectiveConfig,
) -> Result<LossReport> {
    let mut obj = Objective::new(model, frames, mode, *config)?;
    obj.refresh_visibility(params)?;
    obj.evaluate(params, true)
}

/// Total loss and its gradient vector.
pub fn gradient(
    model: &BodyModel,
    frames: &[Frame],
    params: &ParamVector,
    mode: SceneMode,
    config: &ObjectiveConfig,
) -> Result<(f64, Vec<f64>)> {
    let r = total_loss(model, frames, params, mode, config)?;
    Ok((r.total, r.gradient))
}
