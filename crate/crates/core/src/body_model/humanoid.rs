use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BodyModel, BodyModelParts, Texel};
use crate::error::{Error, Result};

pub const JOINT_NAMES: [&str; 12] = [
    "pelvis",
    "spine",
    "chest",
    "head",
    "left_upper_arm",
    "left_forearm",
    "right_upper_arm",
    "right_forearm",
    "left_thigh",
    "left_shin",
    "right_thigh",
    "right_shin",
];

struct Segment {
    parent: Option<usize>,
    start: [f64; 3],
    end: [f64; 3],
    radius: f64,
    /// Axial position of the rotation pivot, as a fraction of start->end.
    pivot: f64,
}

// Canonical frame: x to the body's left, y down (feet at +y), z away from a
// camera facing the front of the body.
const SKELETON: [Segment; 12] = [
    Segment {
        parent: None,
        start: [-0.13, 0.0, 0.0],
        end: [0.13, 0.0, 0.0],
        radius: 0.11,
        pivot: 0.5,
    },
    Segment {
        parent: Some(0),
        start: [0.0, -0.08, 0.0],
        end: [0.0, -0.30, 0.0],
        radius: 0.12,
        pivot: 0.0,
    },
    Segment {
        parent: Some(1),
        start: [0.0, -0.30, 0.0],
        end: [0.0, -0.52, 0.0],
        radius: 0.14,
        pivot: 0.0,
    },
    Segment {
        parent: Some(2),
        start: [0.0, -0.56, 0.0],
        end: [0.0, -0.80, 0.0],
        radius: 0.09,
        pivot: 0.0,
    },
    Segment {
        parent: Some(2),
        start: [0.20, -0.48, 0.0],
        end: [0.45, -0.48, 0.0],
        radius: 0.05,
        pivot: 0.0,
    },
    Segment {
        parent: Some(4),
        start: [0.45, -0.48, 0.0],
        end: [0.70, -0.48, 0.0],
        radius: 0.045,
        pivot: 0.0,
    },
    Segment {
        parent: Some(2),
        start: [-0.20, -0.48, 0.0],
        end: [-0.45, -0.48, 0.0],
        radius: 0.05,
        pivot: 0.0,
    },
    Segment {
        parent: Some(6),
        start: [-0.45, -0.48, 0.0],
        end: [-0.70, -0.48, 0.0],
        radius: 0.045,
        pivot: 0.0,
    },
    Segment {
        parent: Some(0),
        start: [0.10, 0.05, 0.0],
        end: [0.10, 0.47, 0.0],
        radius: 0.075,
        pivot: 0.0,
    },
    Segment {
        parent: Some(8),
        start: [0.10, 0.47, 0.0],
        end: [0.10, 0.88, 0.0],
        radius: 0.06,
        pivot: 0.0,
    },
    Segment {
        parent: Some(0),
        start: [-0.10, 0.05, 0.0],
        end: [-0.10, 0.47, 0.0],
        radius: 0.075,
        pivot: 0.0,
    },
    Segment {
        parent: Some(10),
        start: [-0.10, 0.47, 0.0],
        end: [-0.10, 0.88, 0.0],
        radius: 0.06,
        pivot: 0.0,
    },
];

/// Pole offset beyond each capsule end, as a fraction of the radius.
const CAP: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanoidConfig {
    /// 1..=12; joints are taken in skeleton order (pelvis first).
    pub num_joints: usize,
    /// 0..=8 shape coefficients.
    pub shape_dims: usize,
    /// Vertices around each capsule ring, 4..=32.
    pub ring_segments: usize,
    /// Rings along each capsule, 2..=16.
    pub rings: usize,
    /// 1..=32 texels per face.
    pub texels_per_face: usize,
    pub seed: u64,
}

impl Default for HumanoidConfig {
    fn default() -> Self {
        Self {
            num_joints: 12,
            shape_dims: 4,
            ring_segments: 8,
            rings: 6,
            texels_per_face: 6,
            seed: 0,
        }
    }
}

impl HumanoidConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::ConfigOutOfRange(what.to_string()))
            }
        };
        check(
            (1..=12).contains(&self.num_joints),
            "num_joints must be in 1..=12",
        )?;
        check(self.shape_dims <= 8, "shape_dims must be in 0..=8")?;
        check(
            (4..=32).contains(&self.ring_segments),
            "ring_segments must be in 4..=32",
        )?;
        check((2..=16).contains(&self.rings), "rings must be in 2..=16")?;
        check(
            (1..=32).contains(&self.texels_per_face),
            "texels_per_face must be in 1..=32",
        )
    }
}

/// Per-coefficient deformation of the skeleton: axial stretch of each
/// segment, extra pivot offsets, and a radial girth factor.
struct ShapeBasis {
    stretch: [f64; 12],
    offset: [[f64; 3]; 12],
    girth: f64,
}

fn shape_basis(index: usize, rng: &mut ChaCha8Rng) -> ShapeBasis {
    let mut b = ShapeBasis {
        stretch: [0.0; 12],
        offset: [[0.0; 3]; 12],
        girth: 0.0,
    };
    match index {
        // limb length
        0 => {
            for j in 4..12 {
                b.stretch[j] = 0.08;
            }
        }
        // girth
        1 => b.girth = 0.15,
        // torso height
        2 => {
            b.stretch[1] = 0.12;
            b.stretch[2] = 0.12;
        }
        // shoulder width
        3 => {
            b.offset[4] = [0.03, 0.0, 0.0];
            b.offset[6] = [-0.03, 0.0, 0.0];
        }
        _ => {
            for s in b.stretch.iter_mut() {
                *s = rng.random_range(-0.05..0.05);
            }
            b.girth = rng.random_range(-0.05..0.05);
        }
    }
    b
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Deterministic capsule-limb humanoid satisfying every [`BodyModel`] invariant.
pub fn make_procedural_humanoid(config: &HumanoidConfig) -> Result<BodyModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nj = config.num_joints;
    let nseg = config.ring_segments;
    let nrings = config.rings;
    let per_capsule = nseg * nrings + 2;

    // Seeded proportions: +-4% on lengths and radii.
    let segments: Vec<(Vector3<f64>, Vector3<f64>, f64)> = SKELETON[..nj]
        .iter()
        .map(|s| {
            let len_jitter = 1.0 + rng.random_range(-0.04..0.04);
            let rad_jitter = 1.0 + rng.random_range(-0.04..0.04);
            let start = v3(s.start);
            let end = start + (v3(s.end) - start) * len_jitter;
            (start, end, s.radius * rad_jitter)
        })
        .collect();
    // Re-attach children to the (possibly moved) end of their parent, keeping
    // the rest-pose offset of the original skeleton.
    let mut starts: Vec<Vector3<f64>> = segments.iter().map(|s| s.0).collect();
    let mut ends: Vec<Vector3<f64>> = segments.iter().map(|s| s.1).collect();
    for j in 1..nj {
        let p = SKELETON[j].parent.unwrap();
        let orig_parent_end = v3(SKELETON[p].end);
        let shift = ends[p] - orig_parent_end;
        // Only segments hanging off a limb end move with it.
        if (v3(SKELETON[j].start) - orig_parent_end).norm() < 1e-9 {
            starts[j] += shift;
            ends[j] += shift;
        }
    }

    let mut template = Vec::with_capacity(nj * per_capsule);
    let mut faces = Vec::new();
    // (segment, axial fraction clamped to [0,1], radial unit vector or zero)
    let mut vertex_info: Vec<(usize, f64, Vector3<f64>)> = Vec::with_capacity(nj * per_capsule);

    for j in 0..nj {
        let (a, b, r) = (starts[j], ends[j], segments[j].2);
        let axis = b - a;
        let len = axis.norm();
        let d = axis / len;
        let helper = if d.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = helper.cross(&d).normalize();
        let e2 = d.cross(&e1);
        let base = template.len();

        for i in 0..nrings {
            let u = i as f64 / (nrings - 1) as f64;
            for k in 0..nseg {
                let phi = TAU * k as f64 / nseg as f64;
                let radial = e1 * phi.cos() + e2 * phi.sin();
                template.push(a + d * (u * len) + radial * r);
                vertex_info.push((j, u, radial));
            }
        }
        let pole_start = template.len();
        template.push(a - d * (CAP * r));
        vertex_info.push((j, 0.0, Vector3::zeros()));
        let pole_end = template.len();
        template.push(b + d * (CAP * r));
        vertex_info.push((j, 1.0, Vector3::zeros()));

        let idx = |i: usize, k: usize| base + i * nseg + (k % nseg);
        for i in 0..nrings - 1 {
            for k in 0..nseg {
                faces.push([idx(i, k), idx(i, k + 1), idx(i + 1, k)]);
                faces.push([idx(i, k + 1), idx(i + 1, k + 1), idx(i + 1, k)]);
            }
        }
        for k in 0..nseg {
            faces.push([pole_start, idx(0, k + 1), idx(0, k)]);
            faces.push([pole_end, idx(nrings - 1, k), idx(nrings - 1, k + 1)]);
        }
    }
    let nv = template.len();

    // Shape directions.
    let mut shape_dirs = Vec::with_capacity(config.shape_dims);
    for s in 0..config.shape_dims {
        let basis = shape_basis(s, &mut rng);
        let mut pivot_disp = vec![Vector3::zeros(); nj];
        for j in 0..nj {
            let own_offset = v3(basis.offset[j]);
            pivot_disp[j] = match SKELETON[j].parent {
                None => own_offset,
                Some(p) => {
                    let pa = starts[p];
                    let pb = ends[p];
                    let axis = pb - pa;
                    let u = (starts[j] - pa).dot(&axis) / axis.norm_squared();
                    pivot_disp[p]
                        + axis * (basis.stretch[p] * (u.clamp(0.0, 1.0) - SKELETON[p].pivot))
                        + own_offset
                }
            };
        }
        let dirs = vertex_info
            .iter()
            .map(|&(j, u, radial)| {
                let axis = ends[j] - starts[j];
                pivot_disp[j]
                    + axis * (basis.stretch[j] * (u - SKELETON[j].pivot))
                    + radial * (basis.girth * segments[j].2)
            })
            .collect();
        shape_dirs.push(dirs);
    }

    // Skinning: vertices near a pivot blend half-way into the parent.
    let mut skin_weights = vec![0.0; nv * nj];
    for (v, &(j, u, _)) in vertex_info.iter().enumerate() {
        match SKELETON[j].parent {
            None => skin_weights[v * nj + j] = 1.0,
            Some(p) => {
                let len = (ends[j] - starts[j]).norm();
                let falloff = 1.5 * segments[j].2;
                let w_parent = 0.5 * (1.0 - (u * len) / falloff).max(0.0);
                skin_weights[v * nj + p] = w_parent;
                skin_weights[v * nj + j] = 1.0 - w_parent;
            }
        }
    }

    // Regressor: the pelvis is the mean of its whole capsule; every other
    // joint is the mean of the ring through its pivot.
    let mut joint_regressor = vec![0.0; nj * nv];
    for j in 0..nj {
        let base = j * per_capsule;
        if SKELETON[j].parent.is_none() {
            let w = 1.0 / per_capsule as f64;
            for v in base..base + per_capsule {
                joint_regressor[j * nv + v] = w;
            }
        } else {
            let w = 1.0 / nseg as f64;
            for v in base..base + nseg {
                joint_regressor[j * nv + v] = w;
            }
        }
    }

    let parents = SKELETON[..nj].iter().map(|s| s.parent).collect();

    let mut texels = Vec::with_capacity(faces.len() * config.texels_per_face);
    for face in 0..faces.len() {
        for _ in 0..config.texels_per_face {
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            let b0 = 1.0 - r1;
            let b1 = r1 * (1.0 - r2);
            let b2 = 1.0 - b0 - b1;
            texels.push(Texel {
                face,
                bary: [b0, b1, b2.max(0.0)],
            });
        }
    }

    BodyModel::from_parts(BodyModelParts {
        template_vertices: template,
        faces,
        shape_dirs,
        skin_weights,
        joint_regressor,
        parents,
        texels,
        seed: config.seed,
    })
}
