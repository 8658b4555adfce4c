#![allow(dead_code)]

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use texfit::body_model::{
    lbs, make_procedural_humanoid, texel_positions, BodyModel, HumanoidConfig, Mesh, PoseParams,
};
use texfit::camera::CameraParams;
use texfit::metrics::Similarity;
use texfit::render::{depth_epsilon, rasterize, texel_visibility};
use texfit::rotation::{axis_angle_to_matrix, matrix_to_rot6d};

/// 12 joints, 192 faces.
pub fn small_model(seed: u64) -> BodyModel {
    make_procedural_humanoid(&HumanoidConfig {
        ring_segments: 4,
        rings: 2,
        texels_per_face: 8,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn default_model() -> BodyModel {
    make_procedural_humanoid(&HumanoidConfig::default()).unwrap()
}

pub fn random_rotation(rng: &mut ChaCha8Rng, sigma: f64) -> nalgebra::Matrix3<f64> {
    let n = Normal::new(0.0, sigma).unwrap();
    axis_angle_to_matrix(&Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
}

/// Random articulated pose and shape with a random global orientation and
/// a camera that frames the body in a `size`-pixel square image.
pub fn random_pose(
    model: &BodyModel,
    rng: &mut ChaCha8Rng,
    joint_sigma: f64,
    size: usize,
) -> PoseParams {
    let body_rot6d = (1..model.num_joints())
        .map(|_| matrix_to_rot6d(&random_rotation(rng, joint_sigma)))
        .collect();
    let shape = (0..model.num_shape())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let global = random_rotation(rng, 1.5);
    let scale = 0.45 * size as f64 + rng.random_range(-2.0..2.0);
    let half = 0.5 * (size as f64 - 1.0);
    PoseParams {
        body_rot6d,
        shape,
        camera: CameraParams {
            global_rot6d: matrix_to_rot6d(&global),
            scale,
            translation: [
                half + rng.random_range(-3.0..3.0),
                half + rng.random_range(-3.0..3.0),
            ],
        },
    }
}

pub fn posed(model: &BodyModel, pose: &PoseParams) -> Mesh {
    lbs(pose, model).unwrap()
}

/// Moller-Trumbore intersection of the ray `o + t d` with a triangle;
/// returns `t` for hits strictly inside the triangle (no culling).
pub fn ray_triangle(o: &Vector3<f64>, d: &Vector3<f64>, tri: [&Vector3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - tri[0];
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qv) * inv)
}

/// Mesh vertices in the camera's view frame with x, y in pixels and z the
/// unscaled view depth, so viewing rays are parallel to +z.
pub fn screen_space(mesh: &Mesh, cam: &CameraParams) -> Vec<Vector3<f64>> {
    let rc = cam.resolve().unwrap();
    mesh.vertices
        .iter()
        .map(|v| {
            let p = rc.project(v);
            Vector3::new(p.x, p.y, rc.depth(v))
        })
        .collect()
}

pub fn signed_area2(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Depth of every front-facing face hit by the viewing ray through `p`,
/// nearest first, found by brute-force ray casting.
pub fn cast(screen: &[Vector3<f64>], faces: &[[usize; 3]], p: &Vector2<f64>) -> Vec<(f64, usize)> {
    let o = Vector3::new(p.x, p.y, -1e6);
    let d = Vector3::new(0.0, 0.0, 1.0);
    let mut hits: Vec<(f64, usize)> = faces
        .iter()
        .enumerate()
        .filter(|(_, f)| signed_area2(&screen[f[0]], &screen[f[1]], &screen[f[2]]) < 0.0)
        .filter_map(|(i, f)| {
            ray_triangle(&o, &d, [&screen[f[0]], &screen[f[1]], &screen[f[2]]])
                .map(|t| (t - 1e6, i))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits
}

/// Depth at `p` of the plane through face `f`.
pub fn plane_depth(screen: &[Vector3<f64>], face: &[usize; 3], p: &Vector2<f64>) -> f64 {
    let (a, b, c) = (screen[face[0]], screen[face[1]], screen[face[2]]);
    let area = signed_area2(&a, &b, &c);
    let q = Vector3::new(p.x, p.y, 0.0);
    let wa = signed_area2(&b, &c, &q) / area;
    let wb = signed_area2(&c, &a, &q) / area;
    wa * a.z + wb * b.z + (1.0 - wa - wb) * c.z
}

pub fn random_joints(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vector3<f64>> {
    (0..k)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

pub fn random_similarity(rng: &mut ChaCha8Rng) -> Similarity {
    let w = Vector3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    );
    Similarity {
        rotation: axis_angle_to_matrix(&w),
        scale: rng.random_range(0.2..5.0),
        translation: Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ),
    }
}

/// Mean root-aligned error minimized over scale by a grid and two
/// successively finer grids around the best point.
pub fn scan_oracle(x: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    let p: Vec<_> = x.iter().map(|v| v - x[0]).collect();
    let g: Vec<_> = gt.iter().map(|v| v - gt[0]).collect();
    let f = |s: f64| {
        p.iter()
            .zip(&g)
            .map(|(a, b)| (s * a - b).norm())
            .sum::<f64>()
            / p.len() as f64
    };
    let (mut centre, mut half) = (5.0, 5.0);
    for _ in 0..4 {
        let n = 2000;
        let mut best = (f64::INFINITY, centre);
        for i in 0..=n {
            let s = (centre - half + 2.0 * half * i as f64 / n as f64).max(0.0);
            let v = f(s);
            if v < best.0 {
                best = (v, s);
            }
        }
        centre = best.1;
        half *= 0.01;
    }
    f(centre)
}

pub const ORACLE_SIZE: usize = 64;

pub struct Tally {
    pub compared: usize,
    pub disagree: usize,
    pub skipped: usize,
}

/// Re-derives the visibility rule with ray casting in place of the z-buffer:
/// the pixel's winner and depth come from the nearest front-facing face hit
/// by the ray through the pixel centre. Returns the tallies for that rule
/// and for exact visibility of the texel point.
pub fn visibility_oracle(seed: u64) -> (Tally, Tally) {
    let model = small_model(seed);
    assert!(model.num_faces() <= 200);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = random_pose(&model, &mut rng, 0.8, ORACLE_SIZE);
    let mesh = posed(&model, &pose);
    let buffers = rasterize(&mesh, &pose.camera, ORACLE_SIZE, ORACLE_SIZE).unwrap();
    let vis = texel_visibility(&mesh, &pose.camera, &buffers, &model).unwrap();
    let screen = screen_space(&mesh, &pose.camera);
    let eps = depth_epsilon(&mesh);
    let faces = &mesh.faces;
    let texels = texel_positions(&mesh, &model);
    let rc = pose.camera.resolve().unwrap();

    let mut rule = Tally {
        compared: 0,
        disagree: 0,
        skipped: 0,
    };
    let mut exact = Tally {
        compared: 0,
        disagree: 0,
        skipped: 0,
    };
    for (t, texel) in model.texels().iter().enumerate() {
        let face = &faces[texel.face];
        let p = rc.project(&texels[t]);
        let z = rc.depth(&texels[t]);
        let front = signed_area2(&screen[face[0]], &screen[face[1]], &screen[face[2]]) < 0.0;
        let inside = p.x >= -0.5
            && p.x < ORACLE_SIZE as f64 - 0.5
            && p.y >= -0.5
            && p.y < ORACLE_SIZE as f64 - 0.5;
        if !front || !inside {
            assert!(!vis[t], "texel {t} must be invisible");
            continue;
        }
        let centre = Vector2::new((p.x + 0.5).floor(), (p.y + 0.5).floor());
        let expected = match cast(&screen, faces, &centre).first() {
            None => Some(true),
            Some(&(_, w)) if faces[w].iter().any(|v| face.contains(v)) => Some(true),
            Some(&(d, w)) => {
                let threshold = d.max(plane_depth(&screen, &faces[w], &p)) + eps;
                ((z - threshold).abs() > 2.0 * eps).then_some(z <= threshold)
            }
        };
        match expected {
            Some(e) => {
                rule.compared += 1;
                rule.disagree += (e != vis[t]) as usize;
            }
            None => rule.skipped += 1,
        }

        // Exact visibility of the texel point itself.
        let hits: Vec<_> = cast(&screen, faces, &p)
            .into_iter()
            .filter(|h| h.1 != texel.face)
            .collect();
        let margin = hits
            .iter()
            .map(|h| (z - h.0).abs())
            .fold(f64::INFINITY, f64::min);
        if margin > 2.0 * eps {
            exact.compared += 1;
            let occluded = hits.iter().any(|h| h.0 < z);
            exact.disagree += (occluded == vis[t]) as usize;
        } else {
            exact.skipped += 1;
        }
    }
    (rule, exact)
}
