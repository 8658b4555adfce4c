use nalgebra::{Matrix3x2, Vector2, Vector3};

use super::image::Image;
use super::raster::{depth_epsilon, rasterize_screen, RasterBuffers, ScreenMesh};
use crate::body_model::{texel_point, BodyModel, Mesh};
use crate::camera::CameraParams;
use crate::error::{Error, Result};

/// Per-texel colours with a visibility mask. Invisible texels hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureMap {
    pub values: Vec<Vector3<f64>>,
    pub visible: Vec<bool>,
}

impl TextureMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }
}

/// Pixel containing a screen point, if the point lies inside the image.
#[inline]
pub(crate) fn pixel_of(p: &Vector2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let inside =
        p.x >= -0.5 && p.x < width as f64 - 0.5 && p.y >= -0.5 && p.y < height as f64 - 0.5;
    inside.then(|| ((p.x + 0.5).floor() as usize, (p.y + 0.5).floor() as usize))
}

/// Depth the z-buffer reports for screen point `p` inside its pixel: the
/// larger of the buffered centre depth and the winning face's plane at `p`.
/// `None` when the pixel is empty or won by `own_face` or a face sharing a
/// vertex with it, which cannot hide the point at pixel scale.
pub(crate) fn occluder_depth(
    screen: &ScreenMesh<'_>,
    buffers: &RasterBuffers,
    own_face: usize,
    p: &Vector2<f64>,
    px: (usize, usize),
) -> Option<f64> {
    let winner = buffers.face_at(px.0, px.1)?;
    let faces = &screen.mesh.faces;
    if winner == own_face || faces[winner].iter().any(|v| faces[own_face].contains(v)) {
        return None;
    }
    let centre = buffers.depth_at(px.0, px.1);
    Some(centre.max(screen.plane_depth(winner, p)))
}

fn visibility_screen(
    screen: &ScreenMesh<'_>,
    buffers: &RasterBuffers,
    model: &BodyModel,
) -> Vec<bool> {
    let eps = depth_epsilon(screen.mesh);
    let front: Vec<bool> = (0..screen.mesh.faces.len())
        .map(|f| screen.front_facing(f))
        .collect();
    model
        .texels()
        .iter()
        .map(|t| {
            if !front[t.face] {
                return false;
            }
            let p3 = texel_point(&screen.mesh.vertices, &screen.mesh.faces[t.face], &t.bary);
            let view = screen.camera.to_view(&p3);
            let p = Vector2::new(view.x, view.y) * screen.camera.scale + screen.camera.translation;
            let Some(px) = pixel_of(&p, buffers.width, buffers.height) else {
                return false;
            };
            match occluder_depth(screen, buffers, t.face, &p, px) {
                None => true,
                Some(d) => view.z <= d + eps,
            }
        })
        .collect()
}

/// A texel is visible when its face is front-facing, it projects inside
/// the image, and nothing in the z-buffer at its pixel lies in front of it
/// by more than the depth tolerance. The occluder depth at the texel is
/// taken from the pixel's winning face plane (or the buffered centre depth,
/// whichever is farther), so texels are never hidden by their own surface.
pub fn texel_visibility(
    mesh: &Mesh,
    cam: &CameraParams,
    buffers: &RasterBuffers,
    model: &BodyModel,
) -> Result<Vec<bool>> {
    let screen = ScreenMesh::new(mesh, cam)?;
    Ok(visibility_screen(&screen, buffers, model))
}

/// The four pixels a bilinear sample at `p` reads, after border clamping.
#[inline]
pub(crate) fn footprint(width: usize, height: usize, p: &Vector2<f64>) -> ([usize; 2], [usize; 2]) {
    let x = p.x.clamp(0.0, (width - 1) as f64);
    let y = p.y.clamp(0.0, (height - 1) as f64);
    let x0 = (x.floor() as usize).min(width - 2);
    let y0 = (y.floor() as usize).min(height - 2);
    ([x0, x0 + 1], [y0, y0 + 1])
}

/// Bilinear sample and its Jacobian with respect to the sample position.
/// Coordinates are clamped to the border; the Jacobian column of a clamped
/// coordinate is zero.
pub fn sample_bilinear_with_grad(
    image: &Image,
    p: &Vector2<f64>,
) -> (Vector3<f64>, Matrix3x2<f64>) {
    let (w, h) = (image.width(), image.height());
    let x = p.x.clamp(0.0, (w - 1) as f64);
    let y = p.y.clamp(0.0, (h - 1) as f64);
    let ([x0, x1], [y0, y1]) = footprint(w, h, p);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let c = |xx: usize, yy: usize| Vector3::from(image.get(xx, yy));
    let (c00, c10, c01, c11) = (c(x0, y0), c(x1, y0), c(x0, y1), c(x1, y1));
    let top = c00 * (1.0 - fx) + c10 * fx;
    let bottom = c01 * (1.0 - fx) + c11 * fx;
    let color = top * (1.0 - fy) + bottom * fy;

    let x_free = p.x > 0.0 && p.x < (w - 1) as f64 || p.x == 0.0;
    let y_free = p.y > 0.0 && p.y < (h - 1) as f64 || p.y == 0.0;
    let dx = if x_free {
        (c10 - c00) * (1.0 - fy) + (c11 - c01) * fy
    } else {
        Vector3::zeros()
    };
    let dy = if y_free {
        bottom - top
    } else {
        Vector3::zeros()
    };
    (color, Matrix3x2::from_columns(&[dx, dy]))
}

pub fn sample_bilinear(image: &Image, points: &[Vector2<f64>]) -> Vec<Vector3<f64>> {
    points
        .iter()
        .map(|p| sample_bilinear_with_grad(image, p).0)
        .collect()
}

/// Depth tolerance, in multiples of the visibility epsilon, within which
/// every footprint pixel's surface must pass the texel for it to be sampled.
const CONTINUITY_FACTOR: f64 = 50.0;

/// Visible texels whose bilinear footprint lies entirely on one continuous
/// stretch of rendered body: every footprint pixel is covered, and the
/// surface winning it, extended to the texel, passes within a small depth
/// tolerance of the texel. Only these are sampled, so a texel never blends
/// in background colour or a surface at a different depth.
pub(crate) fn sampling_mask_screen(
    screen: &ScreenMesh<'_>,
    width: usize,
    height: usize,
    model: &BodyModel,
) -> Vec<bool> {
    let buffers = rasterize_screen(screen, width, height);
    let mut mask = visibility_screen(screen, &buffers, model);
    let tol = CONTINUITY_FACTOR * depth_epsilon(screen.mesh);
    for (t, m) in model.texels().iter().zip(mask.iter_mut()) {
        if !*m {
            continue;
        }
        let p3 = texel_point(&screen.mesh.vertices, &screen.mesh.faces[t.face], &t.bary);
        let z = screen.camera.depth(&p3);
        let p = screen.camera.project(&p3);
        let (xs, ys) = footprint(width, height, &p);
        *m = ys.iter().all(|&y| {
            xs.iter().all(|&x| match buffers.face_at(x, y) {
                None => false,
                Some(f) => f == t.face || (screen.plane_depth(f, &p) - z).abs() <= tol,
            })
        });
    }
    mask
}

pub fn sampling_mask(
    mesh: &Mesh,
    cam: &CameraParams,
    model: &BodyModel,
    width: usize,
    height: usize,
) -> Result<Vec<bool>> {
    let screen = ScreenMesh::new(mesh, cam)?;
    Ok(sampling_mask_screen(&screen, width, height, model))
}

/// Samples the image at the projection of every visible texel
/// (see [`sampling_mask`]); other texels are zero and masked out.
pub fn extract_texture(
    image: &Image,
    mesh: &Mesh,
    cam: &CameraParams,
    model: &BodyModel,
) -> Result<TextureMap> {
    if mesh.vertices.len() != model.num_vertices() {
        return Err(Error::VertexCountMismatch(
            mesh.vertices.len(),
            model.num_vertices(),
        ));
    }
    let screen = ScreenMesh::new(mesh, cam)?;
    let visible = sampling_mask_screen(&screen, image.width(), image.height(), model);
    let values = model
        .texels()
        .iter()
        .zip(&visible)
        .map(|(t, &vis)| {
            if !vis {
                return Vector3::zeros();
            }
            let p =
                screen
                    .camera
                    .project(&texel_point(&mesh.vertices, &mesh.faces[t.face], &t.bary));
            sample_bilinear_with_grad(image, &p).0
        })
        .collect();
    Ok(TextureMap { values, visible })
}

/// Flat texel-splat renderer: each covered pixel takes the colour of the
/// winning face's texel nearest to the pixel centre (lowest index on ties).
/// Faces without texels and empty pixels show the background.
pub fn render_image(
    mesh: &Mesh,
    cam: &CameraParams,
    model: &BodyModel,
    texel_colors: &[Vector3<f64>],
    width: usize,
    height: usize,
    background: [f64; 3],
) -> Result<Image> {
    if texel_colors.len() != model.num_texels() {
        return Err(Error::AtlasMismatch(texel_colors.len(), model.num_texels()));
    }
    let screen = ScreenMesh::new(mesh, cam)?;
    let buffers = rasterize_screen(&screen, width, height);
    let projected: Vec<Vector2<f64>> = model
        .texels()
        .iter()
        .map(|t| {
            screen
                .camera
                .project(&texel_point(&mesh.vertices, &mesh.faces[t.face], &t.bary))
        })
        .collect();
    let mut image = Image::filled(width, height, background)?;
    for y in 0..height {
        for x in 0..width {
            let Some(face) = buffers.face_at(x, y) else {
                continue;
            };
            let centre = Vector2::new(x as f64, y as f64);
            let nearest = model.face_texels(face).iter().copied().min_by(|&a, &b| {
                let da = (projected[a] - centre).norm_squared();
                let db = (projected[b] - centre).norm_squared();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            if let Some(t) = nearest {
                let c = texel_colors[t];
                image.set(x, y, [c.x, c.y, c.z]);
            }
        }
    }
    Ok(image)
}
