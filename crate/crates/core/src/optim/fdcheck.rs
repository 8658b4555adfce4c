use serde::{Deserialize, Serialize};

use super::objective::Objective;
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::par::{par_map, ExecPolicy};

/// Worst disagreement between the analytic gradient and central differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_label: String,
    pub analytic: f64,
    pub numeric: f64,
    /// Denominator floor used for near-zero components.
    pub floor: f64,
    /// Rounding-error bound of the difference quotient, discounted from
    /// every discrepancy.
    pub rounding: f64,
}

/// Relative error `max(0, |a - f| - rounding) / max(|a|, |f|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64, rounding: f64) -> f64 {
    ((analytic - numeric).abs() - rounding).max(0.0) / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every gradient coordinate against a fourth-order central
/// difference (five-point stencil) of step `h`, with the objective's visibility frozen. Components smaller than
/// `1e-6 * max|gradient|` plus the difference quotient's rounding error are
/// compared against that floor instead of their own size.
pub fn finite_difference_check(
    obj: &Objective<'_>,
    params: &ParamVector,
    h: f64,
) -> Result<FdReport> {
    finite_difference_check_with(obj, params, h, ExecPolicy::default())
}

pub fn finite_difference_check_with(
    obj: &Objective<'_>,
    params: &ParamVector,
    h: f64,
    policy: ExecPolicy,
) -> Result<FdReport> {
    if !(1e-7..=1e-2).contains(&h) {
        return Err(Error::ConfigOutOfRange(format!(
            "finite-difference step {h} outside [1e-7, 1e-2]"
        )));
    }
    let report = obj.evaluate(params, true)?;
    let grad = report.gradient;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (1e-6 * scale).max(f64::MIN_POSITIVE);
    let rounding = 32.0 * f64::EPSILON * report.total.abs() / h;
    let idx: Vec<usize> = (0..grad.len()).collect();
    let numeric = par_map(policy, &idx, |&k| -> Result<f64> {
        let at = |d: f64| -> Result<f64> {
            let mut p = params.clone();
            p.values[k] += d;
            Ok(obj.evaluate(&p, false)?.total)
        };
        let (f1, b1, f2, b2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        Ok((8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * h))
    });
    let mut worst = (0, -1.0, 0.0);
    for (k, fd) in numeric.into_iter().enumerate() {
        let fd = fd?;
        let e = relative_error(grad[k], fd, floor, rounding);
        if e > worst.1 {
            worst = (k, e, fd);
        }
    }
    Ok(FdReport {
        max_rel_error: worst.1.max(0.0),
        worst_index: worst.0,
        worst_label: params.layout.label(worst.0),
        analytic: grad[worst.0],
        numeric: worst.2,
        floor,
        rounding,
    })
}
