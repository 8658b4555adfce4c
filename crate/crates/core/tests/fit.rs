mod common;

use common::default_model;
use texfit::losses::LossWeights;
use texfit::optim::*;
use texfit::synth::*;
use texfit::Error;

fn multiview(seed: u64) -> SceneConfig {
    SceneConfig {
        texture_seed: seed,
        ..SceneConfig::multiview(3, seed)
    }
}

#[test]
fn ground_truth_init_stops_immediately() {
    let model = default_model();
    for cfg in [
        multiview(0),
        SceneConfig {
            frames: 3,
            seed: 1,
            ..Default::default()
        },
    ] {
        let scene = generate_scene(&model, &cfg).unwrap();
        let gt = scene.ground_truth_params(&model).unwrap();
        let mut obj = Objective::new(
            &model,
            &scene.frames,
            scene.mode(),
            ObjectiveConfig::default(),
        )
        .unwrap();
        let out = fit(&mut obj, &gt, &FitConfig::default()).unwrap();
        assert_eq!(out.status, FitStatus::DataConverged);
        assert!(out.iterations <= 2, "{} iterations", out.iterations);
        assert_eq!(out.params, gt);
    }
}

#[test]
fn prior_only_fit_reaches_a_stationary_point() {
    let model = default_model();
    let scene = generate_scene(&model, &multiview(2)).unwrap();
    let gt = scene.ground_truth_params(&model).unwrap();
    let init = perturb(&gt, 5, &PerturbSpec::joints(0.3)).unwrap();
    let cfg = ObjectiveConfig {
        weights: LossWeights {
            prior: 1.0,
            ..LossWeights::zero()
        },
        ..Default::default()
    };
    let mut obj = Objective::new(&model, &scene.frames, SceneMode::Multiview, cfg).unwrap();
    let fc = FitConfig {
        max_iters: 5000,
        tol: 0.0,
        ..Default::default()
    };
    let out = fit(&mut obj, &init, &fc).unwrap();
    let best = out
        .trace
        .iter()
        .map(|t| t.grad_norm)
        .fold(f64::INFINITY, f64::min);
    let last = obj.evaluate(&out.params, true).unwrap();
    assert!(
        best < 1e-6 || last.gradient_norm() < 1e-6,
        "gradient norm {best}, at best params {}",
        last.gradient_norm()
    );
    assert!(last.prior < 1e-10);
}

#[test]
fn fit_keeps_the_best_iterate() {
    let model = default_model();
    let mut cfg = multiview(3);
    cfg.noise.keypoint_sigma = 1.0;
    let scene = generate_scene(&model, &cfg).unwrap();
    let gt = scene.ground_truth_params(&model).unwrap();
    let init = perturb(&gt, 9, &PerturbSpec::joints(0.15)).unwrap();
    let mut obj = Objective::new(
        &model,
        &scene.frames,
        SceneMode::Multiview,
        ObjectiveConfig::default(),
    )
    .unwrap();
    let fc = FitConfig {
        max_iters: 40,
        learning_rate: 0.05,
        ..Default::default()
    };
    let out = fit(&mut obj, &init, &fc).unwrap();
    assert_eq!(out.trace[0].iteration, 0);
    assert!(out
        .trace
        .windows(2)
        .all(|w| w[1].best_total <= w[0].best_total));
    let min = out
        .trace
        .iter()
        .map(|t| t.report.total)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_report.total, min);
    assert_eq!(out.trace.last().unwrap().best_total, min);
    assert!(min < out.trace[0].report.total);
    assert!(out.iterations <= fc.max_iters);
}

#[test]
fn fits_are_deterministic() {
    let model = default_model();
    let scene = generate_scene(&model, &multiview(4)).unwrap();
    let gt = scene.ground_truth_params(&model).unwrap();
    let init = perturb(&gt, 1, &PerturbSpec::joints(0.1)).unwrap();
    let fc = FitConfig {
        max_iters: 15,
        ..Default::default()
    };
    let run = |policy| {
        let mut obj = Objective::new(
            &model,
            &scene.frames,
            SceneMode::Multiview,
            ObjectiveConfig::default(),
        )
        .unwrap()
        .with_policy(policy);
        fit(&mut obj, &init, &fc).unwrap()
    };
    let a = run(texfit::par::ExecPolicy::Sequential);
    let b = run(texfit::par::ExecPolicy::Parallel);
    assert_eq!(a, b);
}

#[test]
fn invalid_fit_configs_are_rejected() {
    let model = default_model();
    let scene = generate_scene(&model, &multiview(5)).unwrap();
    let gt = scene.ground_truth_params(&model).unwrap();
    let mut obj = Objective::new(
        &model,
        &scene.frames,
        SceneMode::Multiview,
        ObjectiveConfig::default(),
    )
    .unwrap();
    let bad = [
        FitConfig {
            max_iters: 0,
            ..Default::default()
        },
        FitConfig {
            learning_rate: -1.0,
            ..Default::default()
        },
        FitConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        },
        FitConfig {
            beta1: 1.0,
            ..Default::default()
        },
        FitConfig {
            tol: -1.0,
            ..Default::default()
        },
        FitConfig {
            visibility_refresh: 0,
            ..Default::default()
        },
    ];
    for fc in bad {
        assert!(
            matches!(fit(&mut obj, &gt, &fc), Err(Error::ConfigOutOfRange(_))),
            "{fc:?}"
        );
    }
}

#[test]
fn divergent_steps_end_in_a_numerical_abort_with_the_best_iterate() {
    let model = default_model();
    let scene = generate_scene(&model, &multiview(6)).unwrap();
    let gt = scene.ground_truth_params(&model).unwrap();
    let init = perturb(&gt, 2, &PerturbSpec::joints(0.1)).unwrap();
    let mut obj = Objective::new(
        &model,
        &scene.frames,
        SceneMode::Multiview,
        ObjectiveConfig::default(),
    )
    .unwrap();
    let fc = FitConfig {
        learning_rate: 1e200,
        ..Default::default()
    };
    let out = fit(&mut obj, &init, &fc).unwrap();
    assert_eq!(out.status, FitStatus::NonFinite);
    assert_eq!(out.non_finite_at, Some(1));
    assert_eq!(out.params, init);
    assert!(out.best_report.total.is_finite());
}
