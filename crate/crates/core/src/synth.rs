//! Synthetic ground truth: textured humanoid scenes rendered as monocular
//! sequences or synchronized multi-view rigs.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body_model::{
    lbs, load_model, regress_joints, save_model, texel_positions, BodyModel, Mesh, PoseParams,
};
use crate::camera::{project, CameraParams};
use crate::error::{Error, Result};
use crate::optim::ParamVector;
use crate::render::{rasterize, Image};
use crate::rotation::{axis_angle_to_matrix, matrix_to_rot6d, rot6d_to_matrix};
use crate::transform::RigidTransform;

pub const DEFAULT_TEXTURE_AMPLITUDE: f64 = 0.01;

pub const SCENE_VERSION: &str = "texfit-scene/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    #[default]
    Monocular,
    Multiview,
}

/// Per-joint 2D annotations in pixels. A confidence of zero marks a joint
/// as unannotated; its point is kept but never read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoints2d {
    pub points: Vec<[f64; 2]>,
    pub confidence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Frames of one multi-view instant share a time index.
    pub time_index: usize,
    pub image: Image,
    pub keypoints: Option<Keypoints2d>,
    /// Maps this view's rotated coordinates into view 0's.
    pub extrinsics: Option<RigidTransform>,
    pub camera_gt: CameraParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Attach 2D keypoints to every frame.
    pub keypoints: bool,
    /// Gaussian pixel noise on each keypoint coordinate.
    pub keypoint_sigma: f64,
    /// Probability that an annotated keypoint is dropped.
    pub keypoint_dropout: f64,
    /// Joints that are annotated; `None` annotates all.
    pub keypoint_joints: Option<Vec<usize>>,
    /// Half-width of the per-frame global gain range around 1.
    pub illumination_drift: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            keypoints: true,
            keypoint_sigma: 0.0,
            keypoint_dropout: 0.0,
            keypoint_joints: None,
            illumination_drift: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub mode: SceneMode,
    /// Frames (monocular) or views (multi-view).
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Standard deviation of each ground-truth joint rotation (rad, per axis).
    pub pose_sigma: f64,
    /// Per-frame random-walk step of each joint rotation (monocular, rad).
    pub walk_sigma: f64,
    /// Standard deviation of ground-truth shape coefficients.
    pub shape_sigma: f64,
    /// Fraction of the image height covered by the body.
    pub fill: f64,
    pub background: [f64; 3],
    pub texture_seed: u64,
    /// Per-channel amplitude bound of each texture wave.
    pub texture_amplitude: f64,
    pub noise: NoiseSpec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            mode: SceneMode::Monocular,
            frames: 5,
            width: 128,
            height: 128,
            seed: 0,
            pose_sigma: 0.25,
            walk_sigma: 0.05,
            shape_sigma: 0.5,
            fill: 0.85,
            background: [0.1, 0.1, 0.12],
            texture_seed: 0,
            texture_amplitude: DEFAULT_TEXTURE_AMPLITUDE,
            noise: NoiseSpec::default(),
        }
    }
}

impl SceneConfig {
    pub fn multiview(views: usize, seed: u64) -> Self {
        Self {
            mode: SceneMode::Multiview,
            frames: views,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigOutOfRange(m));
        match self.mode {
            SceneMode::Multiview if self.frames < 2 => {
                return bad("multiview scenes need at least 2 views".into())
            }
            SceneMode::Monocular if self.frames < 1 => {
                return bad("a scene needs at least one frame".into())
            }
            _ => {}
        }
        if self.frames > 64 {
            return bad("at most 64 frames".into());
        }
        if !(16..=2048).contains(&self.width) || !(16..=2048).contains(&self.height) {
            return bad("image sides must be in 16..=2048".into());
        }
        let sigmas = [
            self.pose_sigma,
            self.walk_sigma,
            self.shape_sigma,
            self.noise.keypoint_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise scales must be finite and nonnegative".into());
        }
        if !(0.0..=0.1).contains(&self.texture_amplitude) {
            return bad("texture_amplitude must be in [0, 0.1]".into());
        }
        if !(self.fill > 0.0 && self.fill <= 1.0) {
            return bad("fill must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.noise.keypoint_dropout) {
            return bad("keypoint_dropout must be in [0, 1]".into());
        }
        if !(0.0..=0.5).contains(&self.noise.illumination_drift) {
            return bad("illumination_drift must be in [0, 0.5]".into());
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("background channels must be in [0, 1]".into());
        }
        if let Some(js) = &self.noise.keypoint_joints {
            if js.iter().any(|&j| j >= model.num_joints()) {
                return bad(format!(
                    "keypoint joint index beyond {} joints",
                    model.num_joints()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub frames: Vec<Frame>,
    /// Per-frame ground-truth parameters.
    pub ground_truth: Vec<PoseParams>,
    pub texel_colors: Vec<Vector3<f64>>,
}

impl Scene {
    pub fn mode(&self) -> SceneMode {
        self.config.mode
    }

    pub fn ground_truth_params(&self, model: &BodyModel) -> Result<ParamVector> {
        ParamVector::pack(model, &self.ground_truth)
    }

    /// Checks the structural invariants of a scene against its model.
    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        let bad = |m: &str| Err(Error::MalformedScene(m.to_string()));
        if self.frames.is_empty() || self.frames.len() != self.ground_truth.len() {
            return bad("frame and ground-truth counts differ");
        }
        if self.texel_colors.len() != model.num_texels() {
            return bad("texel colour count does not match the model atlas");
        }
        for gt in &self.ground_truth {
            model
                .check_pose(gt)
                .map_err(|e| Error::MalformedScene(e.to_string()))?;
        }
        let (w, h) = (self.frames[0].image.width(), self.frames[0].image.height());
        for f in &self.frames {
            if f.image.width() != w || f.image.height() != h {
                return bad("frames differ in size");
            }
            if let Some(k) = &f.keypoints {
                if k.points.len() != model.num_joints() || k.confidence.len() != model.num_joints()
                {
                    return bad("keypoint count does not match the model");
                }
            }
        }
        let first = &self.ground_truth[0];
        match self.mode() {
            SceneMode::Multiview => {
                if self
                    .ground_truth
                    .iter()
                    .any(|g| g.body_rot6d != first.body_rot6d || g.shape != first.shape)
                {
                    return bad("multiview frames must share pose and shape");
                }
                if self
                    .frames
                    .iter()
                    .any(|f| f.time_index != self.frames[0].time_index)
                {
                    return bad("multiview frames must share a time index");
                }
            }
            SceneMode::Monocular => {
                if self.ground_truth.iter().any(|g| g.shape != first.shape) {
                    return bad("monocular frames must share shape");
                }
            }
        }
        Ok(())
    }
}

/// Smooth colour field over rest-pose model coordinates: a base colour
/// plus a few low-frequency plane waves.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureField {
    base: Vector3<f64>,
    waves: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq)]
struct Wave {
    dir: Vector3<f64>,
    freq: f64,
    phase: f64,
    amp: Vector3<f64>,
}

impl TextureField {
    pub fn new(seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e87_u64);
        let base = Vector3::new(
            rng.random_range(0.55..0.75),
            rng.random_range(0.45..0.65),
            rng.random_range(0.35..0.55),
        );
        let waves = (0..3)
            .map(|_| {
                let dir = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                Wave {
                    dir,
                    freq: rng.random_range(0.4..0.8),
                    phase: rng.random_range(0.0..TAU),
                    amp: Vector3::from_fn(|_, _| rng.random_range(-amplitude..=amplitude)),
                }
            })
            .collect();
        Self { base, waves }
    }

    /// Colour at a rest-pose point, clamped to [0.05, 0.95] and rounded to
    /// the 16-bit levels frames are stored with.
    pub fn eval(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut c = self.base;
        for w in &self.waves {
            c += w.amp * (TAU * w.freq * w.dir.dot(p) + w.phase).sin();
        }
        c.map(|x| (x.clamp(0.05, 0.95) * 65535.0).round() / 65535.0)
    }

    pub fn texel_colors(&self, model: &BodyModel) -> Vec<Vector3<f64>> {
        texel_positions(&model.rest_mesh(), model)
            .iter()
            .map(|p| self.eval(p))
            .collect()
    }

    /// Renders the posed body shading every covered pixel with the field at
    /// the rest-pose position of the surface point under the pixel centre.
    pub fn render(
        &self,
        model: &BodyModel,
        mesh: &Mesh,
        camera: &CameraParams,
        width: usize,
        height: usize,
        background: [f64; 3],
    ) -> Result<Image> {
        let buffers = rasterize(mesh, camera, width, height)?;
        let screen = project(&mesh.vertices, camera)?;
        let rest = model.template();
        let mut image = Image::filled(width, height, background)?;
        for y in 0..height {
            for x in 0..width {
                let Some(f) = buffers.face_at(x, y) else {
                    continue;
                };
                let [a, b, c] = mesh.faces[f];
                let p = Vector2::new(x as f64, y as f64);
                let (pa, pb, pc) = (screen[a], screen[b], screen[c]);
                let area = cross2(&(pb - pa), &(pc - pa));
                let (wa, wb) = if area == 0.0 {
                    (1.0 / 3.0, 1.0 / 3.0)
                } else {
                    (
                        cross2(&(pc - pb), &(p - pb)) / area,
                        cross2(&(pa - pc), &(p - pc)) / area,
                    )
                };
                let q = wa * rest[a] + wb * rest[b] + (1.0 - wa - wb) * rest[c];
                let col = self.eval(&q);
                image.set(x, y, [col.x, col.y, col.z]);
            }
        }
        Ok(image)
    }
}

fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Per-texel colours of the default-amplitude field; neighbouring texels
/// differ by far less than 0.1 per channel.
pub fn generate_texture(model: &BodyModel, seed: u64) -> Vec<Vector3<f64>> {
    TextureField::new(seed, DEFAULT_TEXTURE_AMPLITUDE).texel_colors(model)
}

fn random_rotation(rng: &mut ChaCha8Rng, sigma: f64) -> Matrix3<f64> {
    if sigma == 0.0 {
        return Matrix3::identity();
    }
    let n = Normal::new(0.0, sigma).unwrap();
    axis_angle_to_matrix(&Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
}

/// Camera that frames the posed body: rotation `r`, scale chosen so the
/// rest body covers `fill` of the image height, body centred.
fn framing_camera(
    model: &BodyModel,
    r: &Matrix3<f64>,
    cfg: &SceneConfig,
    rng: &mut ChaCha8Rng,
) -> CameraParams {
    let (lo, hi) = model
        .template()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v.y), hi.max(v.y))
        });
    let scale = cfg.fill * cfg.height as f64 / (hi - lo);
    let centre = r * Vector3::new(0.0, 0.5 * (lo + hi), 0.0);
    let jitter = Normal::new(0.0, 1.0).unwrap();
    CameraParams {
        global_rot6d: matrix_to_rot6d(r),
        scale,
        translation: [
            0.5 * (cfg.width as f64 - 1.0) - scale * centre.x + jitter.sample(rng),
            0.5 * (cfg.height as f64 - 1.0) - scale * centre.y + jitter.sample(rng),
        ],
    }
}

fn rot_y(a: f64) -> Matrix3<f64> {
    axis_angle_to_matrix(&Vector3::new(0.0, a, 0.0))
}

fn rot_x(a: f64) -> Matrix3<f64> {
    axis_angle_to_matrix(&Vector3::new(a, 0.0, 0.0))
}

pub fn generate_scene(model: &BodyModel, config: &SceneConfig) -> Result<Scene> {
    config.validate(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nj = model.num_joints();
    let n = config.frames;

    let shape: Vec<f64> = if config.shape_sigma > 0.0 {
        let d = Normal::new(0.0, config.shape_sigma).unwrap();
        (0..model.num_shape()).map(|_| d.sample(&mut rng)).collect()
    } else {
        vec![0.0; model.num_shape()]
    };
    let base_pose: Vec<Matrix3<f64>> = (1..nj)
        .map(|_| random_rotation(&mut rng, config.pose_sigma))
        .collect();
    let yaw0 = rng.random_range(-0.4..0.4);
    let pitch = rng.random_range(-0.15..0.15);

    let mut poses = Vec::with_capacity(n);
    let mut cam_rots = Vec::with_capacity(n);
    match config.mode {
        SceneMode::Multiview => {
            for k in 0..n {
                poses.push(base_pose.clone());
                cam_rots.push(rot_x(pitch) * rot_y(yaw0 + TAU * k as f64 / n as f64));
            }
        }
        SceneMode::Monocular => {
            let drift = Normal::new(0.0, 0.02).unwrap();
            let mut pose = base_pose.clone();
            let mut yaw = yaw0;
            for k in 0..n {
                if k > 0 {
                    for r in pose.iter_mut() {
                        *r = random_rotation(&mut rng, config.walk_sigma) * *r;
                    }
                    yaw += drift.sample(&mut rng);
                }
                poses.push(pose.clone());
                cam_rots.push(rot_x(pitch) * rot_y(yaw));
            }
        }
    }

    let field = TextureField::new(config.texture_seed, config.texture_amplitude);
    let texel_colors = field.texel_colors(model);
    let kp_noise = (config.noise.keypoint_sigma > 0.0)
        .then(|| Normal::new(0.0, config.noise.keypoint_sigma).unwrap());
    let mut frames = Vec::with_capacity(n);
    let mut ground_truth = Vec::with_capacity(n);
    for k in 0..n {
        let camera = framing_camera(model, &cam_rots[k], config, &mut rng);
        let pose = PoseParams {
            body_rot6d: poses[k].iter().map(matrix_to_rot6d).collect(),
            shape: shape.clone(),
            camera,
        };
        let mesh = lbs(&pose, model)?;
        let mut image = field.render(
            model,
            &mesh,
            &camera,
            config.width,
            config.height,
            config.background,
        )?;
        if config.noise.illumination_drift > 0.0 {
            let d = config.noise.illumination_drift;
            image = image.scaled(1.0 + rng.random_range(-d..d));
        }
        let image = image.quantized();

        let keypoints = if config.noise.keypoints {
            let cam = camera.resolve()?;
            let joints = regress_joints(&mesh, model)?;
            let mut points = Vec::with_capacity(nj);
            let mut confidence = Vec::with_capacity(nj);
            for (j, x) in joints.iter().enumerate() {
                let mut p = cam.project(x);
                if let Some(d) = &kp_noise {
                    p.x += d.sample(&mut rng);
                    p.y += d.sample(&mut rng);
                }
                let annotated = config
                    .noise
                    .keypoint_joints
                    .as_ref()
                    .is_none_or(|js| js.contains(&j));
                let dropped = config.noise.keypoint_dropout > 0.0
                    && rng.random::<f64>() < config.noise.keypoint_dropout;
                points.push([p.x, p.y]);
                confidence.push(if annotated && !dropped { 1.0 } else { 0.0 });
            }
            Some(Keypoints2d { points, confidence })
        } else {
            None
        };

        let extrinsics = (config.mode == SceneMode::Multiview)
            .then(|| RigidTransform::new(cam_rots[0] * cam_rots[k].transpose(), Vector3::zeros()));
        frames.push(Frame {
            time_index: if config.mode == SceneMode::Multiview {
                0
            } else {
                k
            },
            image,
            keypoints,
            extrinsics,
            camera_gt: camera,
        });
        ground_truth.push(pose);
    }

    let scene = Scene {
        config: config.clone(),
        frames,
        ground_truth,
        texel_colors,
    };
    scene.validate(model)?;
    Ok(scene)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    /// Per-axis standard deviation of a left-multiplied rotation on each joint (rad).
    pub body_rotation: f64,
    /// Same, for the global orientation.
    pub global_rotation: f64,
    pub shape: f64,
    /// Relative standard deviation of the camera scale.
    pub scale: f64,
    /// Pixel standard deviation of the camera translation.
    pub translation: f64,
}

impl PerturbSpec {
    pub fn joints(sigma: f64) -> Self {
        Self {
            body_rotation: sigma,
            ..Default::default()
        }
    }
}

/// Seeded Gaussian perturbation of every parameter group. Groups with zero
/// sigma are left bit-for-bit unchanged.
pub fn perturb(params: &ParamVector, seed: u64, sigmas: &PerturbSpec) -> Result<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = params.unpack();
    let rotate = |r6: &mut [f64; 6], sigma: f64, rng: &mut ChaCha8Rng| -> Result<()> {
        if sigma > 0.0 {
            *r6 = matrix_to_rot6d(&(random_rotation(rng, sigma) * rot6d_to_matrix(r6)?));
        }
        Ok(())
    };
    for f in frames.iter_mut() {
        for r in f.body_rot6d.iter_mut() {
            rotate(r, sigmas.body_rotation, &mut rng)?;
        }
        rotate(&mut f.camera.global_rot6d, sigmas.global_rotation, &mut rng)?;
        if sigmas.shape > 0.0 {
            let d = Normal::new(0.0, sigmas.shape).unwrap();
            for b in f.shape.iter_mut() {
                *b += d.sample(&mut rng);
            }
        }
        if sigmas.scale > 0.0 {
            let d = Normal::new(0.0, sigmas.scale).unwrap();
            f.camera.scale *= (1.0 + d.sample(&mut rng)).max(0.1);
        }
        if sigmas.translation > 0.0 {
            let d = Normal::new(0.0, sigmas.translation).unwrap();
            f.camera.translation[0] += d.sample(&mut rng);
            f.camera.translation[1] += d.sample(&mut rng);
        }
    }
    let mut values = Vec::with_capacity(params.values.len());
    for f in &frames {
        values.extend(f.body_rot6d.iter().flatten());
        values.extend(&f.shape);
        values.extend(&f.camera.global_rot6d);
        values.push(f.camera.scale);
        values.extend(&f.camera.translation);
    }
    ParamVector::from_values(params.layout, values)
}

// Scene directory: scene.json, keypoints.json, frame_%04d.ppm, model.bin.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: String,
    mode: SceneMode,
    config: SceneConfig,
    model_file: String,
    frames: Vec<FrameFile>,
    ground_truth: Vec<PoseParams>,
    texel_colors: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    index: usize,
    time_index: usize,
    image: String,
    camera_gt: CameraParams,
    extrinsics: Option<RigidTransform>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointsFile {
    version: String,
    frames: Vec<Option<Keypoints2d>>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.ppm")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_scene(scene: &Scene, model: &BodyModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_model(model, &dir.join("model.bin"))?;
    let frames = scene
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let name = frame_file_name(i);
            f.image.write_ppm(&dir.join(&name))?;
            Ok(FrameFile {
                index: i,
                time_index: f.time_index,
                image: name,
                camera_gt: f.camera_gt,
                extrinsics: f.extrinsics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &dir.join("scene.json"),
        &SceneFile {
            version: SCENE_VERSION.into(),
            mode: scene.mode(),
            config: scene.config.clone(),
            model_file: "model.bin".into(),
            frames,
            ground_truth: scene.ground_truth.clone(),
            texel_colors: scene.texel_colors.iter().map(|c| [c.x, c.y, c.z]).collect(),
        },
    )?;
    write_json(
        &dir.join("keypoints.json"),
        &KeypointsFile {
            version: SCENE_VERSION.into(),
            frames: scene.frames.iter().map(|f| f.keypoints.clone()).collect(),
        },
    )
}

/// Loads a scene directory and its model. Any structural problem is a
/// `MalformedScene` error.
pub fn load_scene(dir: &Path) -> Result<(BodyModel, Scene)> {
    let malformed =
        |what: &str, e: &dyn std::fmt::Display| Error::MalformedScene(format!("{what}: {e}"));
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| malformed(name, &e));
    let file: SceneFile =
        serde_json::from_str(&read("scene.json")?).map_err(|e| malformed("scene.json", &e))?;
    if file.version != SCENE_VERSION {
        return Err(Error::MalformedScene(format!(
            "unsupported version `{}`",
            file.version
        )));
    }
    let kp: KeypointsFile = serde_json::from_str(&read("keypoints.json")?)
        .map_err(|e| malformed("keypoints.json", &e))?;
    if kp.frames.len() != file.frames.len() {
        return Err(Error::MalformedScene(
            "keypoints.json frame count differs".into(),
        ));
    }
    if file.model_file.contains('/') || file.model_file.contains("..") {
        return Err(Error::MalformedScene(
            "model_file must be a plain file name".into(),
        ));
    }
    let model =
        load_model(&dir.join(&file.model_file)).map_err(|e| malformed(&file.model_file, &e))?;
    let mut frames = Vec::with_capacity(file.frames.len());
    for (i, (f, k)) in file.frames.into_iter().zip(kp.frames).enumerate() {
        if f.index != i || f.image.contains('/') || f.image.contains("..") {
            return Err(Error::MalformedScene(format!(
                "frame entry {i} is inconsistent"
            )));
        }
        let image = Image::read_ppm(&dir.join(&f.image)).map_err(|e| malformed(&f.image, &e))?;
        if let Some(e) = &f.extrinsics {
            e.check_rigid()
                .map_err(|err| malformed("extrinsics", &err))?;
        }
        frames.push(Frame {
            time_index: f.time_index,
            image,
            keypoints: k,
            extrinsics: f.extrinsics,
            camera_gt: f.camera_gt,
        });
    }
    let mut config = file.config;
    config.mode = file.mode;
    let scene = Scene {
        config,
        frames,
        ground_truth: file.ground_truth,
        texel_colors: file
            .texel_colors
            .iter()
            .map(|c| Vector3::from(*c))
            .collect(),
    };
    scene.validate(&model)?;
    Ok((model, scene))
}
