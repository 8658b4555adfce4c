//! Gradient engine and first-order fitting over packed frame parameters.

mod fdcheck;
mod fit;
mod objective;
mod params;

pub use fdcheck::{
    finite_difference_check, finite_difference_check_with, relative_error, FdReport,
};
pub use fit::{fit, FitConfig, FitOutcome, FitStatus, TraceEntry};
pub use objective::{gradient, total_loss, MeshVariant, Objective, ObjectiveConfig};
pub use params::{ParamLayout, ParamVector};
