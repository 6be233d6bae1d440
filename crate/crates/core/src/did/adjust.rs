//! Pre-trend adjustments applied before re-running the DiD estimators.
//!
//! Both adjustments fit a first-stage regression on pre-policy cells and
//! residualise every cell. The first-stage sampling error is not carried into
//! any later standard error.

use nalgebra::{DMatrix, DVector};

use super::{ols, DidError, OutcomePanel};

pub const DETREND_WARNING: &str = "unit-specific linear trends are fitted on the pre-policy years only and \
extrapolated to every later year; first-stage estimation error is not propagated to the standard errors";

/// Per-unit linear trends `a_i + b_i * t`, with `t` measured in years from
/// the policy year.
#[derive(Debug, Clone, PartialEq)]
pub struct DetrendFit {
    /// `(unit, a_i, b_i)`.
    pub coefficients: Vec<(String, f64, f64)>,
    pub pre_years: usize,
    pub variance_propagated: bool,
    pub warning: &'static str,
}

/// Removes each unit's pre-policy linear trend from all of its years.
pub fn detrend_pre(panel: &OutcomePanel) -> Result<(OutcomePanel, DetrendFit), DidError> {
    let pre = panel.pre();
    if pre.len() < 3 {
        return Err(DidError::InsufficientPrePeriod {
            unit: panel.units()[0].clone(),
            have: pre.len(),
            need: 3,
        });
    }
    let policy = panel.policy_year().start_year();
    let time = |t: usize| (panel.years()[t].start_year() - policy) as f64;
    let mut x = DMatrix::<f64>::zeros(pre.len(), 2);
    for (row, &t) in pre.iter().enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = time(t);
    }

    let mut values = panel.values().to_vec();
    let n_t = panel.n_years();
    let mut coefficients = Vec::with_capacity(panel.n_units());
    for (u, name) in panel.units().iter().enumerate() {
        let y = DVector::from_iterator(pre.len(), pre.iter().map(|&t| panel.value(u, t)));
        let fit = ols(&x, &y)?;
        let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
        for t in 0..n_t {
            values[u * n_t + t] -= a + b * time(t);
        }
        coefficients.push((name.clone(), a, b));
    }
    Ok((
        panel.with_values(values),
        DetrendFit {
            coefficients,
            pre_years: pre.len(),
            variance_propagated: false,
            warning: DETREND_WARNING,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StudentAdjustMode {
    /// One slope shared by every unit.
    #[default]
    Pooled,
    /// A separate intercept and slope per unit.
    PerUnit,
}

impl std::str::FromStr for StudentAdjustMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(StudentAdjustMode::Pooled),
            "per-unit" | "per_unit" => Ok(StudentAdjustMode::PerUnit),
            other => Err(format!("unknown student adjustment mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentFit {
    pub mode: StudentAdjustMode,
    /// Pooled slope; in per-unit mode, the slope of the pooled regression
    /// reported for comparison.
    pub beta: f64,
    pub intercept: f64,
    /// `(unit, alpha_i, beta_i)` in per-unit mode.
    pub unit_betas: Vec<(String, f64, f64)>,
}

fn log_students(panel: &OutcomePanel) -> Result<Vec<f64>, DidError> {
    let n_t = panel.n_years();
    let mut s = Vec::with_capacity(panel.values().len());
    for u in 0..panel.n_units() {
        for t in 0..n_t {
            let fte = panel.student_fte(u, t);
            if !(fte > 0.0) {
                return Err(DidError::NonpositiveStudentFTE {
                    unit: panel.units()[u].clone(),
                    year: panel.years()[t].to_string(),
                });
            }
            s.push(fte.ln());
        }
    }
    Ok(s)
}

fn line_fit(points: &[(f64, f64)]) -> Result<(f64, f64), DidError> {
    let mut x = DMatrix::<f64>::zeros(points.len(), 2);
    let mut y = DVector::<f64>::zeros(points.len());
    for (i, &(s, r)) in points.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = s;
        y[i] = r;
    }
    let fit = ols(&x, &y)?;
    Ok((fit.coefficients[0], fit.coefficients[1]))
}

/// Regresses the outcome on log student FTE over pre-policy cells and
/// subtracts `beta * log(S)` from every cell.
pub fn student_adjust(
    panel: &OutcomePanel,
    mode: StudentAdjustMode,
) -> Result<(OutcomePanel, StudentFit), DidError> {
    let s = log_students(panel)?;
    let n_t = panel.n_years();
    let pre = panel.pre();
    if pre.is_empty() {
        return Err(DidError::EmptySelection("pre-policy sample".into()));
    }
    let pooled: Vec<(f64, f64)> = (0..panel.n_units())
        .flat_map(|u| pre.iter().map(move |&t| (u, t)))
        .map(|(u, t)| (s[u * n_t + t], panel.value(u, t)))
        .collect();

    let mut values = panel.values().to_vec();
    match mode {
        StudentAdjustMode::Pooled => {
            let (intercept, beta) = line_fit(&pooled)?;
            for (v, s) in values.iter_mut().zip(&s) {
                *v -= beta * s;
            }
            Ok((
                panel.with_values(values),
                StudentFit {
                    mode,
                    beta,
                    intercept,
                    unit_betas: Vec::new(),
                },
            ))
        }
        StudentAdjustMode::PerUnit => {
            let mut unit_betas = Vec::with_capacity(panel.n_units());
            for (u, name) in panel.units().iter().enumerate() {
                let pts: Vec<(f64, f64)> = pre
                    .iter()
                    .map(|&t| (s[u * n_t + t], panel.value(u, t)))
                    .collect();
                let (a, b) = line_fit(&pts)?;
                for t in 0..n_t {
                    values[u * n_t + t] -= b * s[u * n_t + t];
                }
                unit_betas.push((name.clone(), a, b));
            }
            let (intercept, beta) = line_fit(&pooled).unwrap_or((f64::NAN, f64::NAN));
            Ok((
                panel.with_values(values),
                StudentFit {
                    mode,
                    beta,
                    intercept,
                    unit_betas,
                },
            ))
        }
    }
}

/// First differences of `log S`: the hire growth implied by a constant
/// staff-student ratio.
pub fn implied_hire_growth(students: &[f64]) -> Result<Vec<f64>, DidError> {
    if students.len() < 2 {
        return Err(DidError::EmptySelection("need at least two years".into()));
    }
    if let Some(i) = students.iter().position(|&s| !(s > 0.0)) {
        return Err(DidError::NonpositiveStudentFTE {
            unit: String::new(),
            year: format!("index {i}"),
        });
    }
    Ok(students.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}
