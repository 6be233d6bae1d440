//! Two-way fixed-effects DiD, the difference-of-means estimator and the
//! event study.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::{ols, DidError, OutcomePanel, SeKind};
use crate::panel::AcademicYear;

/// Two-sided normal p-value for `estimate / se`.
pub fn normal_p_value(estimate: f64, se: f64) -> f64 {
    if se <= 0.0 || !se.is_finite() {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (estimate / se).abs();
    erfc(z / std::f64::consts::SQRT_2)
}

fn z_975() -> f64 {
    Normal::standard().inverse_cdf(0.975)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// Two-way demeaning of the balanced panel.
    #[default]
    Within,
    /// Explicit unit and year dummies.
    Dummy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardErrors {
    pub iid: f64,
    pub hc_robust: f64,
    pub cluster_by_unit: f64,
}

impl StandardErrors {
    pub fn get(&self, kind: SeKind) -> f64 {
        match kind {
            SeKind::Iid => self.iid,
            SeKind::HcRobust => self.hc_robust,
            SeKind::ClusterByUnit => self.cluster_by_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayFEFit {
    pub delta: f64,
    pub unit_effects: Vec<(String, f64)>,
    /// Normalised to mean zero over the fitted years.
    pub time_effects: Vec<(AcademicYear, f64)>,
    /// `residuals[unit][k]` for the k-th fitted year.
    pub residuals: Vec<Vec<f64>>,
    pub fitted_years: Vec<AcademicYear>,
    pub se_delta: f64,
    pub se_kind: SeKind,
    pub standard_errors: StandardErrors,
    /// Normal two-sided p-value under `se_kind`.
    pub p_value: f64,
    pub n_obs: usize,
    pub method: FitMethod,
}

/// Subtracts unit means and year means and adds back the grand mean.
pub(crate) fn two_way_demean(x: &[f64], n_units: usize, n_years: usize) -> Vec<f64> {
    let unit_mean: Vec<f64> = (0..n_units)
        .map(|u| x[u * n_years..(u + 1) * n_years].iter().sum::<f64>() / n_years as f64)
        .collect();
    let year_mean: Vec<f64> = (0..n_years)
        .map(|t| (0..n_units).map(|u| x[u * n_years + t]).sum::<f64>() / n_units as f64)
        .collect();
    let grand = unit_mean.iter().sum::<f64>() / n_units as f64;
    let mut out = Vec::with_capacity(x.len());
    for (u, um) in unit_mean.iter().enumerate() {
        for (t, ym) in year_mean.iter().enumerate() {
            out.push(x[u * n_years + t] - um - ym + grand);
        }
    }
    out
}

/// Outcome and treatment dummy restricted to the pre and post windows.
pub(crate) struct WindowDesign {
    pub years: Vec<usize>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub d_tilde: Vec<f64>,
    pub d_ss: f64,
}

impl WindowDesign {
    pub fn new(panel: &OutcomePanel) -> Result<Self, DidError> {
        let years = panel.window_years();
        let (n_u, n_t) = (panel.n_units(), years.len());
        let mut y = Vec::with_capacity(n_u * n_t);
        let mut d = Vec::with_capacity(n_u * n_t);
        for u in 0..n_u {
            for &t in &years {
                y.push(panel.value(u, t));
                let treated = u == panel.treated() && panel.post().contains(&t);
                d.push(if treated { 1.0 } else { 0.0 });
            }
        }
        let d_tilde = two_way_demean(&d, n_u, n_t);
        let d_ss: f64 = d_tilde.iter().map(|v| v * v).sum();
        if d_ss < 1e-12 {
            return Err(DidError::DegenerateDesign(
                "treatment dummy has no variation net of the fixed effects".into(),
            ));
        }
        Ok(Self {
            years,
            y,
            d,
            d_tilde,
            d_ss,
        })
    }

    pub fn n_units(&self) -> usize {
        self.y.len() / self.years.len()
    }

    /// Within estimator of delta for an outcome vector on this layout.
    pub fn delta(&self, y: &[f64]) -> f64 {
        self.d_tilde.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / self.d_ss
    }
}

pub fn fit_twfe_did(panel: &OutcomePanel) -> Result<TwoWayFEFit, DidError> {
    fit_twfe_did_with(panel, FitMethod::Within)
}

pub fn fit_twfe_did_with(panel: &OutcomePanel, method: FitMethod) -> Result<TwoWayFEFit, DidError> {
    let w = WindowDesign::new(panel)?;
    match method {
        FitMethod::Within => fit_within(panel, &w),
        FitMethod::Dummy => fit_dummy(panel, &w),
    }
}

fn fit_within(panel: &OutcomePanel, w: &WindowDesign) -> Result<TwoWayFEFit, DidError> {
    let (n_u, n_t) = (panel.n_units(), w.years.len());
    let n = n_u * n_t;
    let y_tilde = two_way_demean(&w.y, n_u, n_t);
    let delta = w.delta(&w.y);
    let resid: Vec<f64> = y_tilde
        .iter()
        .zip(&w.d_tilde)
        .map(|(y, d)| y - delta * d)
        .collect();

    // effects with year effects summing to zero
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let unit_y: Vec<f64> = (0..n_u).map(|u| mean(&w.y[u * n_t..(u + 1) * n_t])).collect();
    let unit_d: Vec<f64> = (0..n_u).map(|u| mean(&w.d[u * n_t..(u + 1) * n_t])).collect();
    let year_y: Vec<f64> = (0..n_t)
        .map(|t| (0..n_u).map(|u| w.y[u * n_t + t]).sum::<f64>() / n_u as f64)
        .collect();
    let year_d: Vec<f64> = (0..n_t)
        .map(|t| (0..n_u).map(|u| w.d[u * n_t + t]).sum::<f64>() / n_u as f64)
        .collect();
    let grand_y = mean(&w.y);
    let grand_d = mean(&w.d);
    let unit_effects = panel
        .units()
        .iter()
        .enumerate()
        .map(|(u, name)| (name.clone(), unit_y[u] - delta * unit_d[u]))
        .collect();
    let time_effects = w
        .years
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            (
                panel.years()[t],
                year_y[k] - grand_y - delta * (year_d[k] - grand_d),
            )
        })
        .collect();

    let k = (n_u + n_t) as f64;
    let nf = n as f64;
    let dof = (nf - k).max(1.0);
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let iid = (ssr / dof / w.d_ss).sqrt();
    let hc_meat: f64 = w.d_tilde.iter().zip(&resid).map(|(d, e)| (d * e).powi(2)).sum();
    let hc_robust = (nf / dof * hc_meat).sqrt() / w.d_ss;
    let cl_meat: f64 = (0..n_u)
        .map(|u| {
            (0..n_t)
                .map(|t| w.d_tilde[u * n_t + t] * resid[u * n_t + t])
                .sum::<f64>()
                .powi(2)
        })
        .sum();
    let g = n_u as f64;
    let cluster_by_unit = (g / (g - 1.0) * (nf - 1.0) / dof * cl_meat).sqrt() / w.d_ss;
    let standard_errors = StandardErrors {
        iid,
        hc_robust,
        cluster_by_unit,
    };

    finish(panel, w, delta, unit_effects, time_effects, resid, standard_errors, FitMethod::Within)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    panel: &OutcomePanel,
    w: &WindowDesign,
    delta: f64,
    unit_effects: Vec<(String, f64)>,
    time_effects: Vec<(AcademicYear, f64)>,
    resid: Vec<f64>,
    standard_errors: StandardErrors,
    method: FitMethod,
) -> Result<TwoWayFEFit, DidError> {
    if !delta.is_finite() {
        return Err(DidError::DegenerateDesign("non-finite delta".into()));
    }
    let n_t = w.years.len();
    let se_kind = panel.se_kind();
    let se_delta = standard_errors.get(se_kind);
    Ok(TwoWayFEFit {
        delta,
        unit_effects,
        time_effects,
        residuals: resid.chunks(n_t).map(<[f64]>::to_vec).collect(),
        fitted_years: w.years.iter().map(|&t| panel.years()[t]).collect(),
        se_delta,
        se_kind,
        standard_errors,
        p_value: normal_p_value(delta, se_delta),
        n_obs: resid.len(),
        method,
    })
}

fn fit_dummy(panel: &OutcomePanel, w: &WindowDesign) -> Result<TwoWayFEFit, DidError> {
    let (n_u, n_t) = (panel.n_units(), w.years.len());
    let n = n_u * n_t;
    // columns: D, unit dummies, year dummies for years 1..
    let k = 1 + n_u + n_t - 1;
    let mut x = DMatrix::<f64>::zeros(n, k);
    let mut clusters = Vec::with_capacity(n);
    for u in 0..n_u {
        for t in 0..n_t {
            let row = u * n_t + t;
            x[(row, 0)] = w.d[row];
            x[(row, 1 + u)] = 1.0;
            if t > 0 {
                x[(row, n_u + t)] = 1.0;
            }
            clusters.push(u);
        }
    }
    let fit = ols(&x, &DVector::from_column_slice(&w.y))?;
    let delta = fit.coefficients[0];
    let se = |kind| -> Result<f64, DidError> {
        Ok(fit.standard_errors(kind, Some(&clusters))?[0])
    };
    let standard_errors = StandardErrors {
        iid: se(SeKind::Iid)?,
        hc_robust: se(SeKind::HcRobust)?,
        cluster_by_unit: se(SeKind::ClusterByUnit)?,
    };
    // re-normalise so year effects have mean zero
    let raw_years: Vec<f64> = (0..n_t)
        .map(|t| if t == 0 { 0.0 } else { fit.coefficients[n_u + t] })
        .collect();
    let shift = raw_years.iter().sum::<f64>() / n_t as f64;
    let unit_effects = panel
        .units()
        .iter()
        .enumerate()
        .map(|(u, name)| (name.clone(), fit.coefficients[1 + u] + shift))
        .collect();
    let time_effects = w
        .years
        .iter()
        .zip(&raw_years)
        .map(|(&t, g)| (panel.years()[t], g - shift))
        .collect();
    let resid = fit.residuals.iter().copied().collect();
    finish(panel, w, delta, unit_effects, time_effects, resid, standard_errors, FitMethod::Dummy)
}

/// `(treated post - treated pre) - (control post - control pre)`, where the
/// control terms average each unit over time first, then across units.
pub fn did_of_means(panel: &OutcomePanel) -> Result<f64, DidError> {
    if panel.pre().is_empty() || panel.post().is_empty() {
        return Err(DidError::EmptySelection("pre or post window".into()));
    }
    if panel.controls().next().is_none() {
        return Err(DidError::EmptySelection("no control units".into()));
    }
    let tr = panel.treated();
    let treated = panel.unit_mean(tr, panel.post()) - panel.unit_mean(tr, panel.pre());
    let control = panel.control_double_mean(panel.post()) - panel.control_double_mean(panel.pre());
    Ok(treated - control)
}

/// Reference point the event-study contrasts are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pivot {
    /// A single base year, whose estimate is zero by construction.
    #[default]
    BaseYear,
    /// The pre-window average treated-minus-control gap.
    PreMean,
}

impl std::str::FromStr for Pivot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base-year" | "base_year" | "base" => Ok(Pivot::BaseYear),
            "pre-mean" | "pre_mean" => Ok(Pivot::PreMean),
            other => Err(format!("unknown pivot '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStudyPoint {
    pub year: AcademicYear,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStudySeries {
    pub points: Vec<EventStudyPoint>,
    pub pivot: Pivot,
    pub base_year: AcademicYear,
    pub se_kind: SeKind,
    /// Each treated-year cell is a single observation, so the bounds only
    /// reflect control-group noise.
    pub bounds_reliable: bool,
}

impl EventStudySeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,estimate,se,lower,upper\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.year.start_year(),
                p.estimate,
                p.se,
                p.lower,
                p.upper
            ));
        }
        out
    }
}

/// Per-year treated-minus-control contrasts over every panel year.
pub fn event_study(panel: &OutcomePanel, pivot: Pivot) -> Result<EventStudySeries, DidError> {
    let years = panel.years();
    let base = years
        .iter()
        .position(|&y| y == panel.base_year())
        .ok_or(DidError::MissingBaseYear(panel.base_year()))?;
    let tr = panel.treated();
    let n_t = years.len();
    let gap: Vec<f64> = (0..n_t)
        .map(|t| panel.value(tr, t) - panel.control_mean_at(t))
        .collect();

    let estimates: Vec<f64> = match pivot {
        Pivot::BaseYear => (0..n_t)
            .map(|t| {
                if t == base {
                    0.0
                } else {
                    (panel.value(tr, t) - panel.value(tr, base))
                        - (panel.control_mean_at(t) - panel.control_mean_at(base))
                }
            })
            .collect(),
        Pivot::PreMean => {
            let pre_gap = panel.pre().iter().map(|&t| gap[t]).sum::<f64>() / panel.pre().len() as f64;
            gap.iter().map(|g| g - pre_gap).collect()
        }
    };

    let cov = event_covariance(panel, base)?;
    // contrast weights on the event coefficients (base year excluded)
    let coef_index = |t: usize| if t < base { Some(t) } else if t > base { Some(t - 1) } else { None };
    let z = z_975();
    let mut points = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let mut a = DVector::<f64>::zeros(n_t - 1);
        if let Some(i) = coef_index(t) {
            a[i] += 1.0;
        }
        if pivot == Pivot::PreMean {
            let w = 1.0 / panel.pre().len() as f64;
            for &s in panel.pre() {
                if let Some(i) = coef_index(s) {
                    a[i] -= w;
                }
            }
        }
        let var = (a.transpose() * &cov * &a)[(0, 0)];
        let se = var.max(0.0).sqrt();
        let est = estimates[t];
        points.push(EventStudyPoint {
            year: years[t],
            estimate: est,
            se,
            lower: est - z * se,
            upper: est + z * se,
        });
    }
    Ok(EventStudySeries {
        points,
        pivot,
        base_year: panel.base_year(),
        se_kind: panel.se_kind(),
        bounds_reliable: false,
    })
}

/// Covariance of the treated × year coefficients in the saturated
/// event-study regression.
fn event_covariance(panel: &OutcomePanel, base: usize) -> Result<DMatrix<f64>, DidError> {
    let (n_u, n_t) = (panel.n_units(), panel.n_years());
    let n = n_u * n_t;
    let n_event = n_t - 1;
    let k = n_u + (n_t - 1) + n_event;
    let mut x = DMatrix::<f64>::zeros(n, k);
    let mut y = DVector::<f64>::zeros(n);
    let mut clusters = Vec::with_capacity(n);
    for u in 0..n_u {
        for t in 0..n_t {
            let row = u * n_t + t;
            y[row] = panel.value(u, t);
            x[(row, u)] = 1.0;
            if t > 0 {
                x[(row, n_u + t - 1)] = 1.0;
            }
            if u == panel.treated() && t != base {
                let i = if t < base { t } else { t - 1 };
                x[(row, n_u + n_t - 1 + i)] = 1.0;
            }
            clusters.push(u);
        }
    }
    let fit = ols(&x, &y)?;
    let cov = fit.covariance(panel.se_kind(), Some(&clusters))?;
    let off = n_u + n_t - 1;
    Ok(cov.view((off, off), (n_event, n_event)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::panel;
    use super::*;

    #[test]
    fn hand_built_two_by_four() {
        // years 2007..2010, policy 2009: pre {2007, 2008}, post {2009, 2010}
        let p = panel(
            &[vec![0.02, 0.04, 0.05, 0.07], vec![0.05, 0.05, 0.06, 0.08]],
            0,
            2009,
        );
        // treated: 0.06 - 0.03 = 0.03; control: 0.07 - 0.05 = 0.02
        let d = did_of_means(&p).unwrap();
        assert!((d - 0.01).abs() < 1e-15);
        let fit = fit_twfe_did(&p).unwrap();
        assert!((fit.delta - 0.01).abs() < 1e-15);
    }

    #[test]
    fn within_and_dummy_agree() {
        let vals: Vec<Vec<f64>> = (0..5)
            .map(|u| (0..6).map(|t| ((u * 7 + t * 3) % 11) as f64 / 100.0).collect())
            .collect();
        let p = panel(&vals, 2, 2010);
        let a = fit_twfe_did_with(&p, FitMethod::Within).unwrap();
        let b = fit_twfe_did_with(&p, FitMethod::Dummy).unwrap();
        assert!((a.delta - b.delta).abs() < 1e-12);
        for kind in [SeKind::Iid, SeKind::HcRobust, SeKind::ClusterByUnit] {
            let (x, y) = (a.standard_errors.get(kind), b.standard_errors.get(kind));
            assert!((x - y).abs() < 1e-10 * x.max(1e-12), "{kind}: {x} vs {y}");
        }
        for ((_, ea), (_, eb)) in a.unit_effects.iter().zip(&b.unit_effects) {
            assert!((ea - eb).abs() < 1e-12);
        }
        for ((_, ga), (_, gb)) in a.time_effects.iter().zip(&b.time_effects) {
            assert!((ga - gb).abs() < 1e-12);
        }
        for (ra, rb) in a.residuals.iter().flatten().zip(b.residuals.iter().flatten()) {
            assert!((ra - rb).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_sum_to_zero_by_unit_and_year() {
        let vals: Vec<Vec<f64>> = (0..4)
            .map(|u| (0..7).map(|t| ((u * 5 + t * t) % 13) as f64).collect())
            .collect();
        let fit = fit_twfe_did(&panel(&vals, 1, 2010)).unwrap();
        for row in &fit.residuals {
            assert!(row.iter().sum::<f64>().abs() < 1e-8);
        }
        for t in 0..7 {
            assert!(fit.residuals.iter().map(|r| r[t]).sum::<f64>().abs() < 1e-8);
        }
        let g: f64 = fit.time_effects.iter().map(|(_, g)| g).sum();
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn event_study_base_and_pre_mean() {
        let p = panel(
            &[
                vec![0.01, 0.02, 0.03, 0.05, 0.04],
                vec![0.05, 0.05, 0.06, 0.05, 0.07],
                vec![0.04, 0.06, 0.05, 0.06, 0.06],
            ],
            0,
            2009,
        );
        let es = event_study(&p, Pivot::BaseYear).unwrap();
        assert_eq!(es.points[2].estimate, 0.0);
        assert_eq!(es.points[2].se, 0.0);
        // 2011: (0.04 - 0.03) - (0.065 - 0.055)
        assert!((es.points[4].estimate - 0.0).abs() < 1e-15);
        let pm = event_study(&p, Pivot::PreMean).unwrap();
        let gaps: Vec<f64> = (0..5).map(|t| p.value(0, t) - p.control_mean_at(t)).collect();
        let pre = (gaps[0] + gaps[1]) / 2.0;
        for t in 0..5 {
            assert!((pm.points[t].estimate - (gaps[t] - pre)).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_base_year() {
        let mut p = panel(&[vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]], 0, 2008);
        p.base_year = AcademicYear::new(2020).unwrap();
        assert!(matches!(
            event_study(&p, Pivot::BaseYear),
            Err(DidError::MissingBaseYear(_))
        ));
    }

    #[test]
    fn p_values() {
        let p = normal_p_value(1.959963984540054, 1.0);
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert_eq!(normal_p_value(0.0, 0.0), 1.0);
    }
}
