use nalgebra::{Vector2, Vector3};

use super::image::Mask;
use crate::body_model::Mesh;
use crate::camera::{CameraParams, ResolvedCamera};
use crate::error::Result;

/// Z-buffer output. Empty pixels hold `+inf` depth and face id `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterBuffers {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub face_id: Vec<i64>,
}

impl RasterBuffers {
    #[inline]
    pub fn face_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = self.face_id[y * self.width + x];
        (f >= 0).then_some(f as usize)
    }

    #[inline]
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn occupancy(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.face_id.iter().map(|&f| f >= 0).collect(),
        }
    }
}

/// Mesh vertices in pixel coordinates with view depth.
pub(crate) struct ScreenMesh<'a> {
    pub mesh: &'a Mesh,
    pub camera: ResolvedCamera,
    pub points: Vec<Vector2<f64>>,
    pub depth: Vec<f64>,
}

impl<'a> ScreenMesh<'a> {
    pub fn new(mesh: &'a Mesh, cam: &CameraParams) -> Result<Self> {
        let camera = cam.resolve()?;
        let (points, depth) = mesh
            .vertices
            .iter()
            .map(|v| {
                let r = camera.to_view(v);
                (
                    Vector2::new(r.x, r.y) * camera.scale + camera.translation,
                    r.z,
                )
            })
            .unzip();
        Ok(Self {
            mesh,
            camera,
            points,
            depth,
        })
    }

    /// Twice the signed screen area. Negative means the face normal points
    /// towards the camera (-z).
    #[inline]
    pub fn signed_area2(&self, face: usize) -> f64 {
        let [a, b, c] = self.mesh.faces[face];
        cross2(
            &(self.points[b] - self.points[a]),
            &(self.points[c] - self.points[a]),
        )
    }

    #[inline]
    pub fn front_facing(&self, face: usize) -> bool {
        self.signed_area2(face) < 0.0
    }

    /// Depth of the face's plane at screen point `p` (extrapolated outside
    /// the triangle).
    pub fn plane_depth(&self, face: usize, p: &Vector2<f64>) -> f64 {
        let [a, b, c] = self.mesh.faces[face];
        let (pa, pb, pc) = (self.points[a], self.points[b], self.points[c]);
        let area = cross2(&(pb - pa), &(pc - pa));
        if area == 0.0 {
            return self.depth[a].min(self.depth[b]).min(self.depth[c]);
        }
        let wa = cross2(&(pc - pb), &(p - pb)) / area;
        let wb = cross2(&(pa - pc), &(p - pc)) / area;
        let wc = 1.0 - wa - wb;
        wa * self.depth[a] + wb * self.depth[b] + wc * self.depth[c]
    }
}

#[inline]
pub(crate) fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    cross2(&(b - a), &(p - a))
}

/// Screen y grows downwards, so a positive-area triangle is clockwise on
/// screen: its top edge runs in +x and its left edges run in -y.
#[inline]
fn is_top_left(a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let d = b - a;
    (d.y == 0.0 && d.x > 0.0) || d.y < 0.0
}

#[inline]
fn covers(e: f64, top_left: bool) -> bool {
    e > 0.0 || (e == 0.0 && top_left)
}

pub(crate) fn rasterize_screen(
    screen: &ScreenMesh<'_>,
    width: usize,
    height: usize,
) -> RasterBuffers {
    let mut buf = RasterBuffers {
        width,
        height,
        depth: vec![f64::INFINITY; width * height],
        face_id: vec![-1; width * height],
    };
    for (fi, face) in screen.mesh.faces.iter().enumerate() {
        let area = screen.signed_area2(fi);
        if !(area < 0.0) {
            continue;
        }
        // Reorder to positive area for the edge tests.
        let (i0, i1, i2) = (face[0], face[2], face[1]);
        let (q0, q1, q2) = (screen.points[i0], screen.points[i1], screen.points[i2]);
        let (z0, z1, z2) = (screen.depth[i0], screen.depth[i1], screen.depth[i2]);
        let area = -area;

        let min_x = q0.x.min(q1.x).min(q2.x).ceil().max(0.0);
        let max_x = q0.x.max(q1.x).max(q2.x).floor().min(width as f64 - 1.0);
        let min_y = q0.y.min(q1.y).min(q2.y).ceil().max(0.0);
        let max_y = q0.y.max(q1.y).max(q2.y).floor().min(height as f64 - 1.0);
        if !(min_x <= max_x && min_y <= max_y) {
            continue;
        }
        let tl0 = is_top_left(&q1, &q2);
        let tl1 = is_top_left(&q2, &q0);
        let tl2 = is_top_left(&q0, &q1);

        for y in min_y as usize..=max_y as usize {
            for x in min_x as usize..=max_x as usize {
                let p = Vector2::new(x as f64, y as f64);
                let e0 = edge(&q1, &q2, &p);
                let e1 = edge(&q2, &q0, &p);
                let e2 = edge(&q0, &q1, &p);
                if !(covers(e0, tl0) && covers(e1, tl1) && covers(e2, tl2)) {
                    continue;
                }
                let z = (e0 * z0 + e1 * z1 + e2 * z2) / area;
                let idx = y * width + x;
                if z < buf.depth[idx] {
                    buf.depth[idx] = z;
                    buf.face_id[idx] = fi as i64;
                }
            }
        }
    }
    buf
}

/// Pixel-centre z-buffer over front-facing triangles with a top-left fill
/// rule. Not differentiable.
pub fn rasterize(
    mesh: &Mesh,
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> Result<RasterBuffers> {
    let screen = ScreenMesh::new(mesh, cam)?;
    Ok(rasterize_screen(&screen, width, height))
}

/// Foreground mask: pixels covered by any front-facing triangle.
pub fn render_silhouette(
    mesh: &Mesh,
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> Result<Mask> {
    Ok(rasterize(mesh, cam, width, height)?.occupancy())
}

/// Depth tolerance for the visibility test: 1e-4 of the mesh bounding-box diagonal.
pub fn depth_epsilon(mesh: &Mesh) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &mesh.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    1e-4 * (hi - lo).norm()
}
