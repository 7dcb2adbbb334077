//! Metrics, cross-validation, and interpretation tools.

pub mod cv;
pub mod interpret;
pub mod metrics;

pub use cv::{cross_validate, fit_method, kfold_assignments, CvConfig, CvReport, FittedMethod, Method, Metrics};
pub use interpret::{disentanglement_score, linspace, project_2d, traverse, ProjectionResult, TraversalResult};
pub use metrics::{r2_score, rmse};
