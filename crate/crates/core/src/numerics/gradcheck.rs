use super::{check_same_layout, Parameters};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of `|a - n| / max(1e-12, |a| + |n|)`.
    pub max_relative_error: f64,
    /// Group name and flat index of the worst coordinate.
    pub worst: Option<(&'static str, usize)>,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `f` around `point`.
///
/// Each coordinate is perturbed by `±h` in turn.
pub fn gradient_check<P, F>(mut f: F, analytic: &P, point: &P, h: f64) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    check_same_layout("gradient_check", analytic, point)?;

    let mut probe = point.clone();
    let analytic_groups = analytic.groups();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };

    for (group, (name, analytic_values)) in analytic_groups.iter().enumerate() {
        for i in 0..analytic_values.len() {
            let original = probe.groups()[group].1[i];

            probe.groups_mut()[group].1[i] = original + h;
            let plus = f(&probe);
            probe.groups_mut()[group].1[i] = original - h;
            let minus = f(&probe);
            probe.groups_mut()[group].1[i] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(alloc::format!(
                    "objective while perturbing {name}[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic_values[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            report.coordinates += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = rel;
                report.worst = Some((name, i));
            }
        }
    }
    Ok(report)
}
