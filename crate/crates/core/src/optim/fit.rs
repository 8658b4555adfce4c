use serde::{Deserialize, Serialize};

use super::objective::Objective;
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::losses::LossReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop when the relative change of the total loss between iterations
    /// falls below this value. Zero disables the test.
    pub tol: f64,
    /// Stop when every enabled data term, averaged over its frames or
    /// pairs, is at or below this value. Zero disables the test.
    pub data_tol: f64,
    /// Iterations between visibility recomputations.
    pub visibility_refresh: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tol: 1e-10,
            data_tol: 1e-3,
            visibility_refresh: 10,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigOutOfRange(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("moment decays must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.tol >= 0.0) || !(self.data_tol >= 0.0) {
            return bad("epsilon must be positive and tolerances nonnegative");
        }
        if self.visibility_refresh == 0 {
            return bad("visibility_refresh must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Relative loss change fell below `tol`.
    Converged,
    /// Every data term reached `data_tol`.
    DataConverged,
    MaxIterations,
    /// The loss or gradient became non-finite; the best finite iterate is returned.
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub report: LossReport,
    pub grad_norm: f64,
    pub best_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    /// Best parameters seen, by total loss.
    pub params: ParamVector,
    pub best_report: LossReport,
    pub trace: Vec<TraceEntry>,
    pub status: FitStatus,
    /// Optimizer steps taken.
    pub iterations: usize,
    pub non_finite_at: Option<usize>,
}

fn data_converged(obj: &Objective<'_>, r: &LossReport, tol: f64) -> bool {
    let w = &obj.config().weights;
    let frames_with_kp = obj
        .frames()
        .iter()
        .filter(|f| f.keypoints.is_some())
        .count()
        .max(1) as f64;
    let pairs = obj.pairs().len().max(1) as f64;
    let mesh_on = obj.mode() == crate::synth::SceneMode::Multiview;
    let terms = [
        (w.kp2d, r.kp2d / frames_with_kp, true),
        (w.texture, r.texture / pairs, true),
        (w.shape, r.shape / pairs, true),
        (w.mesh, r.mesh / pairs, mesh_on),
    ];
    let enabled: Vec<f64> = terms
        .iter()
        .filter(|(w, _, on)| *w > 0.0 && *on)
        .map(|t| t.1)
        .collect();
    !enabled.is_empty() && enabled.iter().all(|v| *v <= tol)
}

/// Adaptive-moment descent from `init`. Visibility is recomputed at the
/// start and every `visibility_refresh` iterations, and held fixed in
/// between. Returns the best parameters seen.
pub fn fit(obj: &mut Objective<'_>, init: &ParamVector, config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    let mut x = init.clone();
    let n = x.values.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = Vec::new();
    let mut best: Option<(ParamVector, LossReport)> = None;
    let mut prev_total: Option<f64> = None;
    let mut status = FitStatus::MaxIterations;
    let mut non_finite_at = None;
    let mut steps = 0;

    obj.refresh_visibility(&x)?;
    for it in 0..=config.max_iters {
        let evaluated = (|| {
            if it > 0 && it % config.visibility_refresh == 0 {
                obj.refresh_visibility(&x)?;
            }
            obj.evaluate(&x, true)
        })();
        let report = match evaluated {
            Ok(r) => r,
            // A step that left the valid parameter domain is a numerical
            // abort like an overflow.
            Err(e)
                if matches!(e, Error::NonFiniteLoss { .. })
                    || (it > 0
                        && matches!(e, Error::DegenerateRotation(_) | Error::InvalidCamera(_))) =>
            {
                status = FitStatus::NonFinite;
                non_finite_at = Some(it);
                break;
            }
            Err(e) => return Err(e),
        };
        let total = report.total;
        if best.as_ref().is_none_or(|(_, b)| total < b.total) {
            best = Some((x.clone(), report.clone()));
        }
        let best_total = best.as_ref().unwrap().1.total;
        trace.push(TraceEntry {
            iteration: it,
            grad_norm: report.gradient_norm(),
            best_total,
            report: LossReport {
                gradient: Vec::new(),
                ..report.clone()
            },
        });

        if config.data_tol > 0.0 && data_converged(obj, &report, config.data_tol) {
            status = FitStatus::DataConverged;
            break;
        }
        if let Some(p) = prev_total {
            if config.tol > 0.0 && (p - total).abs() <= config.tol * p.abs().max(1e-300) {
                status = FitStatus::Converged;
                break;
            }
        }
        prev_total = Some(total);
        if it == config.max_iters {
            break;
        }

        steps += 1;
        let t = steps as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for k in 0..n {
            let g = report.gradient[k];
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            x.values[k] -= config.learning_rate * mh / (vh.sqrt() + config.epsilon);
        }
        if x.values.iter().any(|z| !z.is_finite()) {
            status = FitStatus::NonFinite;
            non_finite_at = Some(it + 1);
            break;
        }
    }

    let (params, best_report) = match best {
        Some(b) => b,
        None => return Err(Error::NonFiniteLoss { iteration: 0 }),
    };
    Ok(FitOutcome {
        params,
        best_report,
        trace,
        status,
        iterations: steps,
        non_finite_at,
    })
}
