use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use texfit::body_model::{lbs, make_procedural_humanoid, BodyModel, PoseParams};
use texfit::losses::{frame_pairs, mesh_consistency, LossReport, LossWeights};
use texfit::metrics::{silhouette_metrics, view_joints, PoseMetrics, SilhouetteMetrics};
use texfit::optim::{fit as run_adam, FitOutcome, FitStatus, Objective, ParamLayout, ParamVector};
use texfit::render::{extract_texture, render_image, render_silhouette, Image};
use texfit::synth::{
    generate_scene, load_scene, perturb, save_scene, NoiseSpec, PerturbSpec, Scene, SceneConfig,
    SceneMode,
};
use texfit::Error;

use crate::config::{
    to_json_pretty, BenchSettings, FitSettings, InitConfig, InitSource, RunConfig, SynthSettings,
    RUN_VERSION,
};

pub const RESULTS_VERSION: &str = "texfit-results/1";
pub const METRICS_VERSION: &str = "texfit-metrics/1";
pub const COMPARISON_VERSION: &str = "texfit-comparison/1";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn synth(cfg: &RunConfig<SynthSettings>, out: &Path) -> anyhow::Result<Scene> {
    let model = make_procedural_humanoid(&cfg.settings.model)?;
    let scene = generate_scene(&model, &cfg.settings.scene)?;
    create_dir(out)?;
    save_scene(&scene, &model, out)?;
    write(&out.join("config.json"), to_json_pretty(cfg))?;
    Ok(scene)
}

/// Fitted parameters with the loss report and the configuration that
/// produced them. `labels[k]` names `values[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub version: String,
    pub config: RunConfig<FitSettings>,
    pub status: FitStatus,
    pub iterations: usize,
    pub non_finite_at: Option<usize>,
    pub report: LossReport,
    pub frames: Vec<PoseParams>,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

pub fn initial_params(
    model: &BodyModel,
    scene: &Scene,
    init: &InitConfig,
) -> texfit::Result<ParamVector> {
    let gt = scene.ground_truth_params(model)?;
    match init.source {
        InitSource::GroundTruth => Ok(gt),
        InitSource::Perturbed => perturb(&gt, init.seed, &init.perturb),
        InitSource::Rest => {
            let frames: Vec<PoseParams> = scene
                .ground_truth
                .iter()
                .map(|g| PoseParams {
                    camera: g.camera,
                    ..model.rest_pose()
                })
                .collect();
            ParamVector::pack(model, &frames)
        }
    }
}

pub fn fit_scene(
    model: &BodyModel,
    scene: &Scene,
    cfg: &RunConfig<FitSettings>,
) -> texfit::Result<(ResultsFile, FitOutcome)> {
    let s = &cfg.settings;
    let init = initial_params(model, scene, &s.init)?;
    let mut obj = Objective::new(model, &scene.frames, scene.mode(), s.objective)?;
    let outcome = run_adam(&mut obj, &init, &s.fit)?;
    let results = ResultsFile {
        version: RESULTS_VERSION.to_string(),
        config: cfg.clone(),
        status: outcome.status,
        iterations: outcome.iterations,
        non_finite_at: outcome.non_finite_at,
        report: outcome.best_report.clone(),
        frames: outcome.params.unpack(),
        labels: outcome.params.layout.labels(),
        values: outcome.params.values.clone(),
    };
    Ok((results, outcome))
}

fn write_fit_outputs(
    out: &Path,
    results: &ResultsFile,
    outcome: &FitOutcome,
) -> anyhow::Result<()> {
    create_dir(out)?;
    write(&out.join("config.json"), to_json_pretty(&results.config))?;
    write(&out.join("results.json"), to_json_pretty(results))?;
    let mut trace = Vec::new();
    for entry in &outcome.trace {
        serde_json::to_writer(&mut trace, entry)?;
        trace.write_all(b"\n")?;
    }
    write(&out.join("trace.jsonl"), trace)
}

/// Runs a fit and writes `config.json`, `results.json` and `trace.jsonl`.
/// A numerical abort still writes the best finite iterate, then reports
/// `NonFiniteLoss`.
pub fn fit(
    cfg: &RunConfig<FitSettings>,
    scene_dir: &Path,
    out: &Path,
) -> anyhow::Result<ResultsFile> {
    let (model, scene) = load_scene(scene_dir)?;
    let (results, outcome) = fit_scene(&model, &scene, cfg)?;
    write_fit_outputs(out, &results, &outcome)?;
    if let Some(iteration) = outcome.non_finite_at {
        return Err(Error::NonFiniteLoss { iteration }.into());
    }
    Ok(results)
}

pub fn read_results(path: &Path) -> texfit::Result<ResultsFile> {
    let malformed = |m: String| Error::MalformedResults(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| malformed(e.to_string()))?;
    let r: ResultsFile = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if r.version != RESULTS_VERSION {
        return Err(malformed(format!(
            "version {}, expected {RESULTS_VERSION}",
            r.version
        )));
    }
    Ok(r)
}

/// Checks results against a scene and returns the fitted parameters.
pub fn results_params(
    model: &BodyModel,
    scene: &Scene,
    r: &ResultsFile,
) -> texfit::Result<ParamVector> {
    let malformed = |m: String| Error::MalformedResults(m);
    if r.frames.len() != scene.frames.len() {
        return Err(malformed(format!(
            "results hold {} frames, scene has {}",
            r.frames.len(),
            scene.frames.len()
        )));
    }
    let p = ParamVector::pack(model, &r.frames)
        .map_err(|e| malformed(format!("fitted frames do not match the model: {e}")))?;
    let layout = ParamLayout::for_model(model, r.frames.len());
    if r.labels != layout.labels() || r.values != p.values {
        return Err(malformed(
            "parameter vector disagrees with the fitted frames".into(),
        ));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMetrics {
    pub index: usize,
    pub pose: PoseMetrics,
    pub silhouette: SilhouetteMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub version: String,
    pub frames: Vec<FrameMetrics>,
    pub mean_pose: PoseMetrics,
    pub mean_silhouette: SilhouetteMetrics,
    /// Mean canonical mesh distance over view pairs (multi-view scenes).
    pub mesh_disagreement: Option<f64>,
}

pub fn evaluate(
    model: &BodyModel,
    scene: &Scene,
    params: &ParamVector,
) -> texfit::Result<MetricsFile> {
    let fitted = params.unpack();
    let mut frames = Vec::with_capacity(fitted.len());
    for (i, ((pred, gt), frame)) in fitted
        .iter()
        .zip(&scene.ground_truth)
        .zip(&scene.frames)
        .enumerate()
    {
        let pose = PoseMetrics::compute(&view_joints(model, pred)?, &view_joints(model, gt)?)?;
        let (w, h) = (frame.image.width(), frame.image.height());
        let sp = render_silhouette(&lbs(pred, model)?, &pred.camera, w, h)?;
        let sg = render_silhouette(&lbs(gt, model)?, &gt.camera, w, h)?;
        frames.push(FrameMetrics {
            index: i,
            pose,
            silhouette: silhouette_metrics(&sp, &sg)?,
        });
    }
    let n = frames.len().max(1) as f64;
    let mean_pose = PoseMetrics::mean(&frames.iter().map(|f| f.pose).collect::<Vec<_>>());
    let mean_silhouette = SilhouetteMetrics {
        accuracy: frames.iter().map(|f| f.silhouette.accuracy).sum::<f64>() / n,
        f1: frames.iter().map(|f| f.silhouette.f1).sum::<f64>() / n,
    };
    let mesh_disagreement = match scene.mode() {
        SceneMode::Multiview => {
            let meshes = fitted
                .iter()
                .map(|f| lbs(f, model))
                .collect::<texfit::Result<Vec<_>>>()?;
            let pairs = frame_pairs(meshes.len());
            let mut total = 0.0;
            for &(i, j) in &pairs {
                total += mesh_consistency(&meshes[i], &meshes[j], None)?;
            }
            Some(total / pairs.len().max(1) as f64)
        }
        SceneMode::Monocular => None,
    };
    Ok(MetricsFile {
        version: METRICS_VERSION.to_string(),
        frames,
        mean_pose,
        mean_silhouette,
        mesh_disagreement,
    })
}

pub fn eval(results: &Path, scene_dir: &Path, out: &Path) -> anyhow::Result<MetricsFile> {
    let r = read_results(results)?;
    let (model, scene) = load_scene(scene_dir)?;
    let params = results_params(&model, &scene, &r)?;
    let metrics = evaluate(&model, &scene, &params)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(out, to_json_pretty(&metrics))?;
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportKind {
    Mesh,
    Texture,
    Overlay,
}

fn obj_text(mesh: &texfit::body_model::Mesh, name: &str) -> String {
    let mut s = format!("# texfit posed mesh, canonical orientation\no {name}\n");
    for v in &mesh.vertices {
        s += &format!("v {:.6} {:.6} {:.6}\n", v.x, v.y, v.z);
    }
    for f in mesh.faces.iter() {
        s += &format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

fn draw_line(img: &mut Image, a: (f64, f64), b: (f64, f64), color: [f64; 3]) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let (x, y) = (
            (a.0 + t * (b.0 - a.0)).round(),
            (a.1 + t * (b.1 - a.1)).round(),
        );
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, color);
        }
    }
}

/// Input frame with the edges of every front-facing face drawn on top.
pub fn overlay(
    image: &Image,
    mesh: &texfit::body_model::Mesh,
    pose: &PoseParams,
) -> texfit::Result<Image> {
    let cam = pose.camera.resolve()?;
    let p: Vec<_> = mesh.vertices.iter().map(|v| cam.project(v)).collect();
    let mut img = image.clone();
    for f in mesh.faces.iter() {
        let (a, b, c) = (p[f[0]], p[f[1]], p[f[2]]);
        let area = (b - a).perp(&(c - a));
        if area >= 0.0 {
            continue;
        }
        for (u, v) in [(a, b), (b, c), (c, a)] {
            draw_line(&mut img, (u.x, u.y), (v.x, v.y), [1.0, 0.25, 0.1]);
        }
    }
    Ok(img)
}

/// Writes the requested artifacts for every frame into `out`; returns the
/// file names written.
pub fn export(
    kind: ExportKind,
    results: &Path,
    scene_dir: &Path,
    out: &Path,
) -> anyhow::Result<Vec<String>> {
    let r = read_results(results)?;
    let (model, scene) = load_scene(scene_dir)?;
    let params = results_params(&model, &scene, &r)?;
    create_dir(out)?;
    let mut written = Vec::new();
    for (i, (pose, frame)) in params.unpack().iter().zip(&scene.frames).enumerate() {
        let mesh = lbs(pose, &model)?;
        let mut emit = |name: String, bytes: Vec<u8>| -> anyhow::Result<()> {
            write(&out.join(&name), bytes)?;
            written.push(name);
            Ok(())
        };
        match kind {
            ExportKind::Mesh => emit(
                format!("frame_{i:04}.obj"),
                obj_text(&mesh, &format!("frame_{i:04}")).into_bytes(),
            )?,
            ExportKind::Texture => {
                let map = extract_texture(&frame.image, &mesh, &pose.camera, &model)?;
                let mut csv = String::from("texel,face,visible,r,g,b\n");
                for (t, texel) in model.texels().iter().enumerate() {
                    let c = map.values[t];
                    csv += &format!(
                        "{t},{},{},{:.6},{:.6},{:.6}\n",
                        texel.face, map.visible[t] as u8, c.x, c.y, c.z
                    );
                }
                emit(format!("texture_{i:04}.csv"), csv.into_bytes())?;
                let preview = render_image(
                    &mesh,
                    &pose.camera,
                    &model,
                    &map.values,
                    frame.image.width(),
                    frame.image.height(),
                    scene.config.background,
                )?;
                emit(format!("texture_{i:04}.ppm"), preview.to_ppm8_bytes())?;
            }
            ExportKind::Overlay => emit(
                format!("overlay_{i:04}.ppm"),
                overlay(&frame.image, &mesh, pose)?.to_ppm8_bytes(),
            )?,
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSummary {
    pub name: String,
    pub weights: LossWeights,
    /// Per seed: mean over views of the similarity-aligned joint error.
    pub rec_error: Vec<f64>,
    /// Per seed: mean canonical mesh distance between fitted views.
    pub disagreement: Vec<f64>,
    pub median_rec_error: f64,
    pub median_disagreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureAblation {
    pub median_rec_error_with: f64,
    pub median_rec_error_without: f64,
    /// `1 - with / without`.
    pub improvement: f64,
    pub required: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshAblation {
    pub median_disagreement_with: f64,
    pub median_disagreement_without: f64,
    /// `1 - with / without`.
    pub reduction: f64,
    pub required_reduction: f64,
    pub median_rec_error_with: f64,
    pub median_rec_error_without: f64,
    /// `with / without - 1`.
    pub rec_error_degradation: f64,
    pub allowed_degradation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub version: String,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    pub texture: TextureAblation,
    pub mesh: MeshAblation,
}

pub const TEXTURE_IMPROVEMENT: f64 = 0.15;
pub const MESH_REDUCTION: f64 = 0.5;
pub const MESH_DEGRADATION: f64 = 0.05;

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn bench_scene_config(s: &BenchSettings, seed: u64) -> SceneConfig {
    SceneConfig {
        width: s.width,
        height: s.height,
        texture_seed: seed,
        noise: NoiseSpec {
            keypoint_sigma: s.keypoint_sigma,
            keypoint_joints: Some(s.keypoint_joints.clone()),
            ..Default::default()
        },
        ..SceneConfig::multiview(s.views, seed)
    }
}

/// The ablation variants: everything on, texture term off, mesh term off.
pub fn bench_variants(s: &BenchSettings) -> Vec<(&'static str, LossWeights)> {
    let full = s.objective.weights;
    vec![
        ("full", full),
        (
            "no_texture",
            LossWeights {
                texture: 0.0,
                ..full
            },
        ),
        ("no_mesh", LossWeights { mesh: 0.0, ..full }),
    ]
}

/// Synthesizes one multi-view scene per seed, fits every variant from the
/// same perturbed start, evaluates, and writes a comparison report.
pub fn bench(cfg: &RunConfig<BenchSettings>, out: &Path) -> anyhow::Result<Comparison> {
    let s = &cfg.settings;
    if s.seeds == 0 {
        return Err(Error::ConfigOutOfRange("bench needs at least one seed".into()).into());
    }
    let model = make_procedural_humanoid(&s.model)?;
    create_dir(out)?;
    write(&out.join("config.json"), to_json_pretty(cfg))?;
    let variants = bench_variants(s);
    let seeds: Vec<u64> = (0..s.seeds as u64).map(|k| s.first_seed + k).collect();
    let mut rec = vec![Vec::new(); variants.len()];
    let mut dis = vec![Vec::new(); variants.len()];
    for &seed in &seeds {
        let dir = out.join(format!("seed_{seed:04}"));
        let scene = generate_scene(&model, &bench_scene_config(s, seed))?;
        create_dir(&dir.join("scene"))?;
        save_scene(&scene, &model, &dir.join("scene"))?;
        for (v, (name, weights)) in variants.iter().enumerate() {
            let mut objective = s.objective;
            objective.weights = *weights;
            let fit_cfg = RunConfig {
                version: RUN_VERSION.to_string(),
                command: "fit".to_string(),
                settings: FitSettings {
                    objective,
                    fit: s.fit,
                    init: InitConfig {
                        source: InitSource::Perturbed,
                        perturb: PerturbSpec::joints(s.init_sigma),
                        seed: seed + 1000,
                    },
                },
            };
            let (results, outcome) = fit_scene(&model, &scene, &fit_cfg)?;
            let vdir = dir.join(name);
            write_fit_outputs(&vdir, &results, &outcome)?;
            let metrics = evaluate(&model, &scene, &outcome.params)?;
            write(&vdir.join("metrics.json"), to_json_pretty(&metrics))?;
            rec[v].push(metrics.mean_pose.rec_error);
            dis[v].push(metrics.mesh_disagreement.unwrap_or(0.0));
        }
    }
    let summaries: Vec<VariantSummary> = variants
        .iter()
        .enumerate()
        .map(|(v, (name, weights))| VariantSummary {
            name: name.to_string(),
            weights: *weights,
            median_rec_error: median(&rec[v]),
            median_disagreement: median(&dis[v]),
            rec_error: rec[v].clone(),
            disagreement: dis[v].clone(),
        })
        .collect();
    let (full, no_tex, no_mesh) = (&summaries[0], &summaries[1], &summaries[2]);
    let improvement = 1.0 - full.median_rec_error / no_tex.median_rec_error;
    let reduction = 1.0 - full.median_disagreement / no_mesh.median_disagreement;
    let degradation = full.median_rec_error / no_mesh.median_rec_error - 1.0;
    let comparison = Comparison {
        version: COMPARISON_VERSION.to_string(),
        texture: TextureAblation {
            median_rec_error_with: full.median_rec_error,
            median_rec_error_without: no_tex.median_rec_error,
            improvement,
            required: TEXTURE_IMPROVEMENT,
            pass: full.median_rec_error < no_tex.median_rec_error
                && improvement >= TEXTURE_IMPROVEMENT,
        },
        mesh: MeshAblation {
            median_disagreement_with: full.median_disagreement,
            median_disagreement_without: no_mesh.median_disagreement,
            reduction,
            required_reduction: MESH_REDUCTION,
            median_rec_error_with: full.median_rec_error,
            median_rec_error_without: no_mesh.median_rec_error,
            rec_error_degradation: degradation,
            allowed_degradation: MESH_DEGRADATION,
            pass: reduction >= MESH_REDUCTION && degradation <= MESH_DEGRADATION,
        },
        seeds,
        variants: summaries,
    };
    write(&out.join("comparison.json"), to_json_pretty(&comparison))?;
    Ok(comparison)
}

/// Process exit code for an error: 2 numerical abort, 3 malformed input or
/// configuration, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonFiniteLoss { .. }) => 2,
        Some(
            Error::MalformedScene(_)
            | Error::MalformedResults(_)
            | Error::MalformedModelFile { .. }
            | Error::ConfigOutOfRange(_)
            | Error::Json { .. },
        ) => 3,
        _ => 1,
    }
}
