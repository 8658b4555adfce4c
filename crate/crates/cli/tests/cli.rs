use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use texfit::render::Image;
use texfit_cli::commands::{MetricsFile, ResultsFile};

fn texfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texfit"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = texfit(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    texfit(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

/// A small 3-view scene shared by the fit/eval/export tests.
fn scene(tmp: &TempDir) -> std::path::PathBuf {
    let dir = tmp.path().join("scene");
    ok(&[
        "synth",
        "--mode",
        "multiview",
        "--views",
        "3",
        "--seed",
        "4",
        "--out",
        p(&dir),
    ]);
    dir
}

#[test]
fn synth_writes_identical_scene_directories() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--mode",
            "multiview",
            "--views",
            "4",
            "--seed",
            "7",
            "--out",
            p(d),
        ]);
    }
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "config.json",
            "frame_0000.ppm",
            "frame_0001.ppm",
            "frame_0002.ppm",
            "frame_0003.ppm",
            "keypoints.json",
            "model.bin",
            "scene.json"
        ]
    );
    let (_, s) = texfit::synth::load_scene(&a).unwrap();
    assert_eq!(s.frames.len(), 4);
    assert_eq!(s.mode(), texfit::synth::SceneMode::Multiview);
}

#[test]
fn bad_configurations_exit_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        code(&[
            "synth",
            "--mode",
            "multiview",
            "--views",
            "1",
            "--out",
            p(&out)
        ]),
        3
    );
    assert_eq!(code(&["synth", "--out", p(&out), "--scene.width", "4"]), 3);
    assert_eq!(
        code(&["synth", "--out", p(&out), "--scene.nothing", "4"]),
        3
    );
    assert_eq!(
        code(&["synth", "--out", p(&out), "--scene.frames", "\"many\""]),
        3
    );
    assert_eq!(code(&["synth", "--bogus-flag"]), 3);
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, "{ nope").unwrap();
    assert_eq!(code(&["synth", "--config", p(&cfg), "--out", p(&out)]), 3);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn config_files_and_overrides_compose() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("synth.json");
    let text = ok(&[
        "config",
        "synth",
        "--scene.frames",
        "2",
        "--scene.width",
        "64",
    ])
    .stdout;
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("s");
    ok(&[
        "synth",
        "--config",
        p(&cfg),
        "--scene.height",
        "48",
        "--out",
        p(&out),
    ]);
    let written: Value = read_json(&out.join("config.json"));
    assert_eq!(written["settings"]["scene"]["frames"], 2);
    assert_eq!(written["settings"]["scene"]["width"], 64);
    assert_eq!(written["settings"]["scene"]["height"], 48);
    // Bare settings objects are accepted too.
    fs::write(&cfg, r#"{"scene": {"frames": 3}}"#).unwrap();
    ok(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    let written: Value = read_json(&out.join("config.json"));
    assert_eq!(written["settings"]["scene"]["frames"], 3);
    // An envelope for another command is rejected.
    fs::write(&cfg, ok(&["config", "fit"]).stdout).unwrap();
    assert_eq!(code(&["synth", "--config", p(&cfg), "--out", p(&out)]), 3);
}

#[test]
fn fit_from_ground_truth_converges_immediately() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let out = tmp.path().join("fit");
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&out),
        "--init.source",
        "ground_truth",
    ]);
    let r: ResultsFile = read_json(&out.join("results.json"));
    assert_eq!(r.status, texfit::optim::FitStatus::DataConverged);
    assert!(r.iterations <= 2);
    assert_eq!(r.labels.len(), r.values.len());
    assert_eq!(r.labels[0], "frame0.body_rot6d.j1[0]");
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), r.iterations + 1);
    for line in trace.lines() {
        let _: Value = serde_json::from_str(line).unwrap();
    }
}

#[test]
fn fits_rerun_from_their_written_config_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&a),
        "--fit.max_iters",
        "12",
        "--weights.texture",
        "0",
    ]);
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&b),
        "--config",
        p(&a.join("config.json")),
    ]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let r: ResultsFile = read_json(&a.join("results.json"));
    assert_eq!(r.config.settings.objective.weights.texture, 0.0);
    assert_eq!(r.config.settings.fit.max_iters, 12);
}

#[test]
fn ablation_variants_give_distinct_result_files() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let (with, without) = (tmp.path().join("with"), tmp.path().join("without"));
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&with),
        "--fit.max_iters",
        "10",
    ]);
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&without),
        "--fit.max_iters",
        "10",
        "--weights.texture",
        "0",
    ]);
    let a: ResultsFile = read_json(&with.join("results.json"));
    let b: ResultsFile = read_json(&without.join("results.json"));
    assert_eq!(a.config.settings.objective.weights.texture, 10.0);
    assert_eq!(b.config.settings.objective.weights.texture, 0.0);
    assert_ne!(a.values, b.values);
}

#[test]
fn corrupt_scenes_exit_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    fs::write(s.join("scene.json"), "{").unwrap();
    assert_eq!(
        code(&["fit", "--scene", p(&s), "--out", p(&tmp.path().join("f"))]),
        3
    );
}

#[test]
fn numerical_aborts_exit_with_code_2_and_keep_results() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let out = tmp.path().join("f");
    assert_eq!(
        code(&[
            "fit",
            "--scene",
            p(&s),
            "--out",
            p(&out),
            "--fit.learning_rate",
            "1e200"
        ]),
        2
    );
    let r: ResultsFile = read_json(&out.join("results.json"));
    assert_eq!(r.status, texfit::optim::FitStatus::NonFinite);
}

#[test]
fn eval_scores_ground_truth_perfectly_and_perturbations_positively() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let (gt, pert) = (tmp.path().join("gt"), tmp.path().join("pert"));
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&gt),
        "--init.source",
        "ground_truth",
    ]);
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&pert),
        "--fit.max_iters",
        "1",
        "--init.perturb.body_rotation",
        "0.3",
    ]);

    let m_path = gt.join("metrics.json");
    ok(&[
        "eval",
        "--results",
        p(&gt.join("results.json")),
        "--scene",
        p(&s),
        "--out",
        p(&m_path),
    ]);
    let m: MetricsFile = read_json(&m_path);
    assert_eq!(m.frames.len(), 3);
    assert_eq!(
        (m.mean_pose.mpjpe, m.mean_pose.nmpjpe, m.mean_pose.rec_error),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(
        (m.mean_silhouette.accuracy, m.mean_silhouette.f1),
        (1.0, 1.0)
    );
    assert_eq!(m.mesh_disagreement, Some(0.0));

    let m_path = pert.join("metrics.json");
    ok(&[
        "eval",
        "--results",
        p(&pert.join("results.json")),
        "--scene",
        p(&s),
        "--out",
        p(&m_path),
    ]);
    let m: MetricsFile = read_json(&m_path);
    assert!(m.frames.iter().all(|f| f.pose.mpjpe > 0.0));
    assert!(m.mean_pose.rec_error <= m.mean_pose.nmpjpe && m.mean_pose.nmpjpe <= m.mean_pose.mpjpe);
}

#[test]
fn malformed_results_exit_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let f = tmp.path().join("f");
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&f),
        "--init.source",
        "ground_truth",
    ]);
    let mut r: Value = read_json(&f.join("results.json"));
    r["frames"].as_array_mut().unwrap().pop();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&r).unwrap()).unwrap();
    let out = tmp.path().join("m.json");
    assert_eq!(
        code(&[
            "eval",
            "--results",
            p(&bad),
            "--scene",
            p(&s),
            "--out",
            p(&out)
        ]),
        3
    );
    fs::write(&bad, "[]").unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--results",
            p(&bad),
            "--scene",
            p(&s),
            "--out",
            p(&out)
        ]),
        3
    );
    assert_eq!(
        code(&[
            "export",
            "--what",
            "mesh",
            "--results",
            p(&bad),
            "--scene",
            p(&s),
            "--out",
            p(&out)
        ]),
        3
    );
}

#[test]
fn exports_match_model_and_frame_sizes() {
    let tmp = TempDir::new().unwrap();
    let s = scene(&tmp);
    let f = tmp.path().join("f");
    ok(&[
        "fit",
        "--scene",
        p(&s),
        "--out",
        p(&f),
        "--init.source",
        "ground_truth",
    ]);
    let (model, sc) = texfit::synth::load_scene(&s).unwrap();
    let results = f.join("results.json");
    let out = tmp.path().join("export");
    for what in ["mesh", "texture", "overlay"] {
        ok(&[
            "export",
            "--what",
            what,
            "--results",
            p(&results),
            "--scene",
            p(&s),
            "--out",
            p(&out),
        ]);
    }
    for i in 0..3 {
        let obj = fs::read_to_string(out.join(format!("frame_{i:04}.obj"))).unwrap();
        assert_eq!(
            obj.lines().filter(|l| l.starts_with("v ")).count(),
            model.num_vertices()
        );
        assert_eq!(
            obj.lines().filter(|l| l.starts_with("f ")).count(),
            model.num_faces()
        );

        let csv = fs::read_to_string(out.join(format!("texture_{i:04}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), model.num_texels() + 1);
        let visible = csv
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(2) == Some("1"))
            .count();
        assert!(visible > 500);

        let frame = &sc.frames[i].image;
        for name in [format!("overlay_{i:04}.ppm"), format!("texture_{i:04}.ppm")] {
            let bytes = fs::read(out.join(&name)).unwrap();
            assert!(bytes.starts_with(b"P6\n"));
            let img = Image::from_ppm_bytes(&bytes).unwrap();
            assert_eq!(
                (img.width(), img.height()),
                (frame.width(), frame.height()),
                "{name}"
            );
        }
    }
}
