//! Central finite-difference verification of analytic gradients.

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// gradient is essentially zero are judged on absolute error instead.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error, if any coordinates exist.
    pub worst_index: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with central differences of `loss_fn` around `params`.
pub fn grad_check(
    mut loss_fn: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    config: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: params.len(),
        passed: true,
    };
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + config.step;
        let plus = loss_fn(&work);
        work[i] = orig - config.step;
        let minus = loss_fn(&work);
        work[i] = orig;
        let numeric = (plus - minus) / (2.0 * config.step);
        let err = relative_error(analytic[i], numeric, config.floor);
        if report.worst_index.is_none() || err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = Some(i);
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < config.tolerance;
    report
}
