//! Supervision terms and their composition.
//!
//! Every distance is a plain (unsquared) per-element L2 norm averaged over
//! the elements that take part: jointly visible texels, annotated joints,
//! vertices. The subgradient of a norm at exactly zero is taken as zero.

use nalgebra::{Matrix3, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, Mesh, PoseParams};
use crate::error::{Error, Result};
use crate::render::TextureMap;
use crate::rotation::{rot6d_backward, rot6d_to_matrix, Rot6};
use crate::transform::RigidTransform;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub kp2d: f64,
    pub texture: f64,
    pub shape: f64,
    pub mesh: f64,
    pub prior: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kp2d: 1.0,
            texture: 10.0,
            shape: 1.0,
            mesh: 5.0,
            prior: 0.1,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            kp2d: 0.0,
            texture: 0.0,
            shape: 0.0,
            mesh: 0.0,
            prior: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.kp2d, self.texture, self.shape, self.mesh, self.prior];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::ConfigOutOfRange(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::ConfigOutOfRange(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Value and gradient of a pairwise term with respect to both inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGrad<T> {
    pub value: f64,
    pub d_a: Vec<T>,
    pub d_b: Vec<T>,
}

/// Mean L2 distance between paired elements of `a` and `b` over the
/// indices where `mask` is set. Returns the count of contributing elements.
fn mean_distance<const N: usize>(
    a: &[SVector<f64, N>],
    b: &[SVector<f64, N>],
    mask: impl Fn(usize) -> bool,
) -> (PairGrad<SVector<f64, N>>, usize) {
    let n = (0..a.len()).filter(|&i| mask(i)).count();
    let mut d_a = vec![SVector::<f64, N>::zeros(); a.len()];
    let mut d_b = vec![SVector::<f64, N>::zeros(); a.len()];
    if n == 0 {
        return (
            PairGrad {
                value: 0.0,
                d_a,
                d_b,
            },
            0,
        );
    }
    let inv = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in (0..a.len()).filter(|&i| mask(i)) {
        let d = a[i] - b[i];
        let norm = d.norm();
        sum += norm;
        if norm > 0.0 {
            let g = d * (inv / norm);
            d_a[i] = g;
            d_b[i] = -g;
        }
    }
    (
        PairGrad {
            value: sum * inv,
            d_a,
            d_b,
        },
        n,
    )
}

/// Mean colour distance over texels visible in both maps, with the count of
/// such texels. An empty overlap yields zero.
pub fn texture_consistency_with_grad(
    a: &TextureMap,
    b: &TextureMap,
) -> Result<(PairGrad<Vector3<f64>>, usize)> {
    if a.len() != b.len() || a.visible.len() != a.len() || b.visible.len() != b.len() {
        return Err(Error::AtlasMismatch(a.len(), b.len()));
    }
    Ok(mean_distance(&a.values, &b.values, |t| {
        a.visible[t] && b.visible[t]
    }))
}

pub fn texture_consistency(a: &TextureMap, b: &TextureMap) -> Result<f64> {
    Ok(texture_consistency_with_grad(a, b)?.0.value)
}

/// Number of texels visible in both maps.
pub fn texture_overlap(a: &TextureMap, b: &TextureMap) -> usize {
    a.visible
        .iter()
        .zip(&b.visible)
        .filter(|(x, y)| **x && **y)
        .count()
}

pub fn shape_consistency_with_grad(bi: &[f64], bj: &[f64]) -> Result<PairGrad<f64>> {
    if bi.len() != bj.len() {
        return Err(Error::ShapeDimMismatch {
            expected: bi.len(),
            got: bj.len(),
        });
    }
    let norm = bi
        .iter()
        .zip(bj)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let g: Vec<f64> = if norm > 0.0 {
        bi.iter().zip(bj).map(|(x, y)| (x - y) / norm).collect()
    } else {
        vec![0.0; bi.len()]
    };
    Ok(PairGrad {
        value: norm,
        d_b: g.iter().map(|x| -x).collect(),
        d_a: g,
    })
}

pub fn shape_consistency(bi: &[f64], bj: &[f64]) -> Result<f64> {
    Ok(shape_consistency_with_grad(bi, bj)?.value)
}

/// Confidence-weighted mean of per-joint pixel distances, and its gradient
/// with respect to the projected joints. Zero when no joint has confidence.
pub fn keypoint_2d_with_grad(
    x: &[Vector2<f64>],
    x_gt: &[Vector2<f64>],
    conf: &[f64],
) -> Result<(f64, Vec<Vector2<f64>>)> {
    if x.len() != x_gt.len() {
        return Err(Error::KeypointDimMismatch(x.len(), x_gt.len()));
    }
    if conf.len() != x.len() {
        return Err(Error::KeypointDimMismatch(x.len(), conf.len()));
    }
    let total: f64 = conf.iter().sum();
    let mut grad = vec![Vector2::zeros(); x.len()];
    if !(total > 0.0) {
        return Ok((0.0, grad));
    }
    let mut sum = 0.0;
    for k in 0..x.len() {
        if conf[k] == 0.0 {
            continue;
        }
        let d = x[k] - x_gt[k];
        let n = d.norm();
        sum += conf[k] * n;
        if n > 0.0 {
            grad[k] = d * (conf[k] / (total * n));
        }
    }
    Ok((sum / total, grad))
}

pub fn keypoint_2d(x: &[Vector2<f64>], x_gt: &[Vector2<f64>], conf: &[f64]) -> Result<f64> {
    Ok(keypoint_2d_with_grad(x, x_gt, conf)?.0)
}

/// Known-extrinsics data for one mesh pair: the two global orientations
/// and the rigid map from view `j` coordinates to view `i` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrinsicPair {
    pub rot_i: Matrix3<f64>,
    pub rot_j: Matrix3<f64>,
    pub rel: RigidTransform,
}

/// Gradient of the mesh term: per-vertex for both meshes, plus the two
/// global orientations when extrinsics are used.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGrad {
    pub value: f64,
    pub d_vertices_i: Vec<Vector3<f64>>,
    pub d_vertices_j: Vec<Vector3<f64>>,
    pub d_rot_i: Matrix3<f64>,
    pub d_rot_j: Matrix3<f64>,
}

pub fn mesh_consistency_with_grad(
    mi: &Mesh,
    mj: &Mesh,
    extrinsics: Option<&ExtrinsicPair>,
) -> Result<MeshGrad> {
    if mi.vertices.len() != mj.vertices.len() {
        return Err(Error::VertexCountMismatch(
            mi.vertices.len(),
            mj.vertices.len(),
        ));
    }
    match extrinsics {
        None => {
            let (g, _) = mean_distance(&mi.vertices, &mj.vertices, |_| true);
            Ok(MeshGrad {
                value: g.value,
                d_vertices_i: g.d_a,
                d_vertices_j: g.d_b,
                d_rot_i: Matrix3::zeros(),
                d_rot_j: Matrix3::zeros(),
            })
        }
        Some(e) => {
            e.rel.check_rigid()?;
            let q = e.rel.rotation;
            let a: Vec<Vector3<f64>> = mi.vertices.iter().map(|v| e.rot_i * v).collect();
            let b: Vec<Vector3<f64>> = mj
                .vertices
                .iter()
                .map(|v| e.rel.apply(&(e.rot_j * v)))
                .collect();
            let (g, _) = mean_distance(&a, &b, |_| true);
            let mut d_rot_i = Matrix3::zeros();
            let mut d_rot_j = Matrix3::zeros();
            let d_vertices_i = g
                .d_a
                .iter()
                .zip(&mi.vertices)
                .map(|(u, v)| {
                    d_rot_i += u * v.transpose();
                    e.rot_i.transpose() * u
                })
                .collect();
            let d_vertices_j = g
                .d_b
                .iter()
                .zip(&mj.vertices)
                .map(|(u, v)| {
                    let w = q.transpose() * u;
                    d_rot_j += w * v.transpose();
                    e.rot_j.transpose() * w
                })
                .collect();
            Ok(MeshGrad {
                value: g.value,
                d_vertices_i,
                d_vertices_j,
                d_rot_i,
                d_rot_j,
            })
        }
    }
}

pub fn mesh_consistency(mi: &Mesh, mj: &Mesh, extrinsics: Option<&ExtrinsicPair>) -> Result<f64> {
    Ok(mesh_consistency_with_grad(mi, mj, extrinsics)?.value)
}

/// Deterministic stand-in for a learned pose/shape prior:
/// `Σ_j w_j ‖R_j − R̄_j‖_F² + Σ_s u_s (β_s − β̄_s)²` with diagonal inverse
/// variances `w`, `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPrior {
    pub rot_mean: Vec<Matrix3<f64>>,
    pub rot_inv_var: Vec<f64>,
    pub shape_mean: Vec<f64>,
    pub shape_inv_var: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Inverse variance shared by every joint rotation.
    pub rot_inv_var: f64,
    /// Inverse variance shared by every shape coefficient.
    pub shape_inv_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            rot_inv_var: 1.0,
            shape_inv_var: 1.0,
        }
    }
}

impl QuadraticPrior {
    /// Mean at the rest pose and zero shape.
    pub fn isotropic(model: &BodyModel, cfg: &PriorConfig) -> Self {
        let nr = model.num_joints() - 1;
        Self {
            rot_mean: vec![Matrix3::identity(); nr],
            rot_inv_var: vec![cfg.rot_inv_var; nr],
            shape_mean: vec![0.0; model.num_shape()],
            shape_inv_var: vec![cfg.shape_inv_var; model.num_shape()],
        }
    }

    fn check(&self, pose: &PoseParams) -> Result<()> {
        if self.rot_mean.len() != pose.body_rot6d.len()
            || self.rot_inv_var.len() != pose.body_rot6d.len()
        {
            return Err(Error::PriorDimMismatch("rotation count"));
        }
        if self.shape_mean.len() != pose.shape.len() || self.shape_inv_var.len() != pose.shape.len()
        {
            return Err(Error::PriorDimMismatch("shape dimension"));
        }
        Ok(())
    }

    pub fn value_with_grad(&self, pose: &PoseParams) -> Result<(f64, Vec<Rot6>, Vec<f64>)> {
        self.check(pose)?;
        let mut value = 0.0;
        let mut d_rot = Vec::with_capacity(pose.body_rot6d.len());
        for ((r6, mean), w) in pose
            .body_rot6d
            .iter()
            .zip(&self.rot_mean)
            .zip(&self.rot_inv_var)
        {
            let diff = rot6d_to_matrix(r6)? - mean;
            value += w * diff.norm_squared();
            d_rot.push(rot6d_backward(r6, &(diff * (2.0 * w)))?);
        }
        let mut d_shape = Vec::with_capacity(pose.shape.len());
        for ((b, m), u) in pose
            .shape
            .iter()
            .zip(&self.shape_mean)
            .zip(&self.shape_inv_var)
        {
            value += u * (b - m) * (b - m);
            d_shape.push(2.0 * u * (b - m));
        }
        Ok((value, d_rot, d_shape))
    }

    pub fn value(&self, pose: &PoseParams) -> Result<f64> {
        Ok(self.value_with_grad(pose)?.0)
    }
}

pub fn quadratic_prior(pose: &PoseParams, prior: &QuadraticPrior) -> Result<f64> {
    prior.value(pose)
}

/// Frame pairs that take part in the pairwise terms: every unordered pair
/// for up to five frames, consecutive pairs beyond that.
pub fn frame_pairs(n: usize) -> Vec<(usize, usize)> {
    if n <= 5 {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    } else {
        (0..n - 1).map(|i| (i, i + 1)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCounts {
    /// Jointly visible texels per frame pair, in pair order.
    pub texel_overlap: Vec<usize>,
    /// Pairs with no jointly visible texel.
    pub empty_overlap_pairs: usize,
    /// Keypoints with nonzero confidence across all frames.
    pub visible_keypoints: usize,
}

/// Unweighted term values (summed over frames or pairs), the weighted total
/// and the gradient over every parameter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub kp2d: f64,
    pub texture: f64,
    pub shape: f64,
    pub mesh: f64,
    pub prior: f64,
    pub total: f64,
    pub counts: LossCounts,
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

impl LossReport {
    /// Weighted total of every term except the prior.
    pub fn data_total(&self, w: &LossWeights) -> f64 {
        w.kp2d * self.kp2d + w.texture * self.texture + w.shape * self.shape + w.mesh * self.mesh
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

pub use crate::optim::total_loss;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{make_procedural_humanoid, HumanoidConfig};
    use crate::rotation::{axis_angle_to_matrix, matrix_to_rot6d};
    use std::sync::Arc;

    fn map(values: Vec<[f64; 3]>, visible: Vec<bool>) -> TextureMap {
        TextureMap {
            values: values.into_iter().map(Vector3::from).collect(),
            visible,
        }
    }

    #[test]
    fn texture_identical_maps_vanish() {
        let a = map(vec![[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]], vec![true, true]);
        assert_eq!(texture_consistency(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn texture_disjoint_masks_vanish() {
        let a = map(vec![[0.0; 3], [1.0; 3]], vec![true, false]);
        let b = map(vec![[1.0; 3], [0.0; 3]], vec![false, true]);
        let (g, overlap) = texture_consistency_with_grad(&a, &b).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(overlap, 0);
        assert!(g.d_a.iter().chain(&g.d_b).all(|d| d.norm() == 0.0));
    }

    #[test]
    fn texture_hand_computed_value() {
        let a = map(vec![[0.0; 3], [1.0; 3]], vec![true, true]);
        let b = map(vec![[0.1, 0.1, 0.1], [1.0; 3]], vec![true, true]);
        let v = texture_consistency(&a, &b).unwrap();
        assert!((v - 0.1 * 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(texture_consistency(&b, &a).unwrap(), v);
    }

    #[test]
    fn texture_invariant_to_atlas_permutation() {
        let a = map(
            vec![[0.0, 0.2, 0.9], [1.0, 0.3, 0.0], [0.4; 3]],
            vec![true, true, false],
        );
        let b = map(
            vec![[0.3, 0.2, 0.1], [0.0; 3], [0.9; 3]],
            vec![true, true, true],
        );
        let perm = [2, 0, 1];
        let pa = map(
            perm.iter().map(|&i| a.values[i].into()).collect(),
            perm.iter().map(|&i| a.visible[i]).collect(),
        );
        let pb = map(
            perm.iter().map(|&i| b.values[i].into()).collect(),
            perm.iter().map(|&i| b.visible[i]).collect(),
        );
        let x = texture_consistency(&a, &b).unwrap();
        let y = texture_consistency(&pa, &pb).unwrap();
        assert!((x - y).abs() < 1e-15);
    }

    #[test]
    fn texture_atlas_mismatch() {
        let a = map(vec![[0.0; 3]], vec![true]);
        let b = map(vec![[0.0; 3]; 2], vec![true; 2]);
        assert!(matches!(
            texture_consistency(&a, &b),
            Err(Error::AtlasMismatch(1, 2))
        ));
    }

    #[test]
    fn shape_examples() {
        assert_eq!(shape_consistency(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(shape_consistency(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(
            shape_consistency(&[3.0, 4.0, 0.0, 0.0], &[0.0; 4]).unwrap(),
            5.0
        );
        assert!(matches!(
            shape_consistency(&[0.0], &[0.0; 2]),
            Err(Error::ShapeDimMismatch { .. })
        ));
    }

    #[test]
    fn keypoint_examples() {
        let gt = vec![Vector2::new(1.0, 1.0), Vector2::new(4.0, -2.0)];
        assert_eq!(keypoint_2d(&gt, &gt, &[1.0, 1.0]).unwrap(), 0.0);
        let off = vec![Vector2::new(4.0, 5.0)];
        assert_eq!(
            keypoint_2d(&off, &[Vector2::new(1.0, 1.0)], &[1.0]).unwrap(),
            5.0
        );
        let x = vec![Vector2::new(4.0, 5.0), Vector2::new(4.0, -2.0)];
        assert_eq!(keypoint_2d(&x, &gt, &[1.0, 1.0]).unwrap(), 2.5);
        // Zero confidence removes a joint entirely.
        assert_eq!(keypoint_2d(&x, &gt, &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            keypoint_2d(&x, &gt[..1], &[1.0]),
            Err(Error::KeypointDimMismatch(2, 1))
        ));
    }

    #[test]
    fn keypoint_gradient_matches_finite_differences() {
        let x = vec![
            Vector2::new(0.3, 2.0),
            Vector2::new(-1.0, 0.5),
            Vector2::new(2.0, 2.0),
        ];
        let gt = vec![
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 0.0),
            Vector2::new(5.0, 1.0),
        ];
        let conf = [0.5, 1.0, 0.25];
        let (_, g) = keypoint_2d_with_grad(&x, &gt, &conf).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for c in 0..2 {
                let mut p = x.clone();
                let mut m = x.clone();
                p[k][c] += h;
                m[k][c] -= h;
                let fd = (keypoint_2d(&p, &gt, &conf).unwrap()
                    - keypoint_2d(&m, &gt, &conf).unwrap())
                    / (2.0 * h);
                assert!((fd - g[k][c]).abs() < 1e-8);
            }
        }
    }

    fn mesh(vs: Vec<Vector3<f64>>) -> Mesh {
        Mesh {
            vertices: vs,
            faces: Arc::from(vec![[0usize, 1, 2]]),
        }
    }

    #[test]
    fn mesh_examples() {
        let a = mesh(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ]);
        assert_eq!(mesh_consistency(&a, &a, None).unwrap(), 0.0);
        let d = Vector3::new(0.3, -0.4, 1.2);
        let b = mesh(a.vertices.iter().map(|v| v + d).collect());
        assert!((mesh_consistency(&a, &b, None).unwrap() - d.norm()).abs() < 1e-15);
        let short = Mesh {
            vertices: a.vertices[..2].to_vec(),
            faces: a.faces.clone(),
        };
        assert!(matches!(
            mesh_consistency(&a, &short, None),
            Err(Error::VertexCountMismatch(3, 2))
        ));
    }

    #[test]
    fn mesh_extrinsics_variant_vanishes_on_consistent_rig() {
        let m = mesh(vec![
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(-1.0, 0.5, 0.0),
            Vector3::new(0.0, 0.7, -0.4),
        ]);
        let ri = axis_angle_to_matrix(&Vector3::new(0.1, 0.9, 0.0));
        let rj = axis_angle_to_matrix(&Vector3::new(-0.2, 2.1, 0.3));
        let pair = ExtrinsicPair {
            rot_i: ri,
            rot_j: rj,
            rel: RigidTransform::new(ri * rj.transpose(), Vector3::zeros()),
        };
        assert!(mesh_consistency(&m, &m, Some(&pair)).unwrap() < 1e-12);
        let bad = ExtrinsicPair {
            rel: RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()),
            ..pair
        };
        assert!(matches!(
            mesh_consistency(&m, &m, Some(&bad)),
            Err(Error::NotRigid(_))
        ));
    }

    #[test]
    fn mesh_extrinsics_gradient_matches_finite_differences() {
        let mi = mesh(vec![
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(-1.0, 0.5, 0.0),
            Vector3::new(0.0, 0.7, -0.4),
        ]);
        let mj = mesh(vec![
            Vector3::new(0.0, 0.3, 0.3),
            Vector3::new(-0.8, 0.5, 0.1),
            Vector3::new(0.2, 0.6, -0.4),
        ]);
        let wi = Vector3::new(0.1, 0.9, 0.0);
        let wj = Vector3::new(-0.2, 2.1, 0.3);
        let rel = RigidTransform::new(
            axis_angle_to_matrix(&Vector3::new(0.3, 0.2, 0.1)),
            Vector3::new(0.0, 0.1, 0.0),
        );
        let eval = |wi: Vector3<f64>, wj: Vector3<f64>| {
            let pair = ExtrinsicPair {
                rot_i: axis_angle_to_matrix(&wi),
                rot_j: axis_angle_to_matrix(&wj),
                rel,
            };
            mesh_consistency_with_grad(&mi, &mj, Some(&pair)).unwrap()
        };
        let g = eval(wi, wj);
        // Directional derivative along a left-multiplied rotation increment.
        let h = 1e-6;
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let ri = axis_angle_to_matrix(&wi);
            let skew = |v: Vector3<f64>| v.cross_matrix();
            let di = (g.d_rot_i.component_mul(&(skew(e) * ri))).sum();
            let wi_p =
                nalgebra::Rotation3::from_matrix(&(axis_angle_to_matrix(&e) * ri)).scaled_axis();
            let wi_m =
                nalgebra::Rotation3::from_matrix(&(axis_angle_to_matrix(&-e) * ri)).scaled_axis();
            let fd = (eval(wi_p, wj).value - eval(wi_m, wj).value) / 2.0;
            assert!((fd - di).abs() < 1e-9, "rot_i {k}: {fd} vs {di}");
        }
        for v in 0..3 {
            for c in 0..3 {
                let mut p = mj.clone();
                let mut m = mj.clone();
                p.vertices[v][c] += h;
                m.vertices[v][c] -= h;
                let pair = ExtrinsicPair {
                    rot_i: axis_angle_to_matrix(&wi),
                    rot_j: axis_angle_to_matrix(&wj),
                    rel,
                };
                let fd = (mesh_consistency(&mi, &p, Some(&pair)).unwrap()
                    - mesh_consistency(&mi, &m, Some(&pair)).unwrap())
                    / (2.0 * h);
                assert!((fd - g.d_vertices_j[v][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn prior_examples() {
        let model = make_procedural_humanoid(&HumanoidConfig::default()).unwrap();
        let prior = QuadraticPrior::isotropic(&model, &PriorConfig::default());
        let mut pose = model.rest_pose();
        assert_eq!(quadratic_prior(&pose, &prior).unwrap(), 0.0);
        pose.shape[2] = 1.0;
        assert_eq!(quadratic_prior(&pose, &prior).unwrap(), 1.0);

        pose.body_rot6d[3] = matrix_to_rot6d(&axis_angle_to_matrix(&Vector3::new(0.2, 0.1, -0.3)));
        let v1 = quadratic_prior(&pose, &prior).unwrap();
        let doubled = QuadraticPrior {
            rot_inv_var: prior.rot_inv_var.iter().map(|w| w * 2.0).collect(),
            shape_inv_var: prior.shape_inv_var.iter().map(|w| w * 2.0).collect(),
            ..prior.clone()
        };
        assert!((quadratic_prior(&pose, &doubled).unwrap() - 2.0 * v1).abs() < 1e-14);

        pose.shape.pop();
        assert!(matches!(
            quadratic_prior(&pose, &prior),
            Err(Error::PriorDimMismatch(_))
        ));
    }

    #[test]
    fn pairing() {
        assert_eq!(frame_pairs(1), vec![]);
        assert_eq!(frame_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(frame_pairs(5).len(), 10);
        assert_eq!(
            frame_pairs(7),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]
        );
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights::zero().validate().is_err());
        let neg = LossWeights {
            texture: -1.0,
            ..Default::default()
        };
        assert!(neg.validate().is_err());
    }
}
