//! Difference-in-differences for one treated unit against a donor pool.
//!
//! The treated unit keeps its policy while every other unit changes at
//! `policy_year`; the treatment dummy is 1 for the treated unit from
//! `policy_year` on. All estimators work on an [`OutcomePanel`], a dense
//! unit × year matrix of outcomes extracted from a [`PanelDataset`]. The
//! pre-trend adjustments return a new `OutcomePanel` with the same layout, so
//! any estimator can be applied to raw or adjusted outcomes.

mod adjust;
mod bootstrap;
mod ols;
mod synth;
mod twfe;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::panel::{AcademicYear, PanelDataset, PanelError, StaffGroup};

pub use adjust::{
    detrend_pre, implied_hire_growth, student_adjust, DetrendFit, StudentAdjustMode, StudentFit,
    DETREND_WARNING,
};
pub use bootstrap::{wild_cluster_bootstrap, BootstrapOptions, BootstrapResult, ClusterLevel, WeightScheme};
pub use ols::{ols, OlsFit};
pub use synth::{synthetic_control, synthetic_control_with_donors, SynthOptions, SyntheticControlResult};
pub use twfe::{
    did_of_means, event_study, fit_twfe_did, fit_twfe_did_with, normal_p_value, EventStudyPoint,
    EventStudySeries, FitMethod, Pivot, StandardErrors, TwoWayFEFit,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DidError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("base year {0} not in data")]
    MissingBaseYear(AcademicYear),
    #[error("unit {unit} has {have} pre-policy years, need at least {need}")]
    InsufficientPrePeriod { unit: String, have: usize, need: usize },
    #[error("student FTE must be positive: unit {unit} year {year}")]
    NonpositiveStudentFTE { unit: String, year: String },
    #[error("design matrix is rank deficient; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("no donor units")]
    NoDonors,
    #[error("bootstrap needs at least 99 replications, got {0}")]
    TooFewReplications(usize),
    #[error("cluster-robust covariance requires cluster ids")]
    MissingClusters,
}

/// Standard-error flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeKind {
    /// Homoskedastic, independent errors.
    Iid,
    /// Heteroskedasticity-robust (HC1).
    HcRobust,
    /// Clustered by unit (CR1).
    #[default]
    ClusterByUnit,
}

impl SeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeKind::Iid => "iid",
            SeKind::HcRobust => "hc_robust",
            SeKind::ClusterByUnit => "cluster_by_unit",
        }
    }
}

impl fmt::Display for SeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iid" => Ok(SeKind::Iid),
            "hc_robust" | "hc1" | "hc" | "robust" => Ok(SeKind::HcRobust),
            "cluster_by_unit" | "cluster" => Ok(SeKind::ClusterByUnit),
            other => Err(format!("unknown se kind '{other}'")),
        }
    }
}

/// Outcome extracted from each panel cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Outcome {
    /// New appointments over headcount.
    #[default]
    JobCreationRate,
    /// Natural log of headcount.
    LogHeadcount,
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "job_creation_rate" | "rate" => Ok(Outcome::JobCreationRate),
            "log_headcount" => Ok(Outcome::LogHeadcount),
            other => Err(format!("unknown outcome '{other}'")),
        }
    }
}

/// Inclusive range of academic years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: AcademicYear,
    pub last: AcademicYear,
}

impl YearRange {
    pub fn new(first: AcademicYear, last: AcademicYear) -> Self {
        Self { first, last }
    }

    pub fn contains(&self, year: AcademicYear) -> bool {
        self.first <= year && year <= self.last
    }

    pub fn is_empty(&self) -> bool {
        self.first > self.last
    }
}

/// Estimation design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub treated_unit: String,
    pub group: StaffGroup,
    /// First treated year; the dummy is 1 for the treated unit from here on.
    pub policy_year: AcademicYear,
    /// Pivot year for the event study.
    pub base_year: AcademicYear,
    /// Defaults to every panel year before `policy_year`.
    pub pre_window: Option<YearRange>,
    /// Defaults to every panel year from `policy_year` on.
    pub post_window: Option<YearRange>,
    pub outcome: Outcome,
    pub se_kind: SeKind,
}

impl DesignSpec {
    pub fn new(treated_unit: impl Into<String>) -> Self {
        let y2012 = AcademicYear::new(2012).expect("in range");
        Self {
            treated_unit: treated_unit.into(),
            group: StaffGroup::Eac,
            policy_year: y2012,
            base_year: y2012,
            pre_window: None,
            post_window: None,
            outcome: Outcome::default(),
            se_kind: SeKind::default(),
        }
    }
}

/// Dense unit × year outcome matrix with the design resolved to indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomePanel {
    units: Vec<String>,
    years: Vec<AcademicYear>,
    // row-major, unit-major
    values: Vec<f64>,
    student_fte: Vec<f64>,
    treated: usize,
    pre: Vec<usize>,
    post: Vec<usize>,
    policy_year: AcademicYear,
    base_year: AcademicYear,
    se_kind: SeKind,
}

impl OutcomePanel {
    /// Extracts the outcome for `spec.group` and resolves the windows.
    pub fn from_dataset(data: &PanelDataset, spec: &DesignSpec) -> Result<Self, DidError> {
        if !data.groups().contains(&spec.group) {
            return Err(DidError::InvalidDesign(format!("group {} not in data", spec.group)));
        }
        let units = data.institutions().to_vec();
        let years = data.years().to_vec();
        let mut values = Vec::with_capacity(units.len() * years.len());
        let mut student_fte = Vec::with_capacity(units.len() * years.len());
        for unit in &units {
            for &year in &years {
                let obs = data
                    .get(unit, year, spec.group)
                    .expect("balanced panel has every cell");
                let value = match spec.outcome {
                    Outcome::JobCreationRate => crate::panel::job_creation_rate(obs)?,
                    Outcome::LogHeadcount => {
                        if obs.headcount == 0 {
                            return Err(PanelError::ZeroHeadcount {
                                institution: unit.clone(),
                                year,
                            }
                            .into());
                        }
                        (obs.headcount as f64).ln()
                    }
                };
                values.push(value);
                student_fte.push(obs.student_fte);
            }
        }
        Self::from_matrix(units, years, values, student_fte, spec)
    }

    /// Builds a panel from raw row-major values (`values[u * years + t]`).
    pub fn from_matrix(
        units: Vec<String>,
        years: Vec<AcademicYear>,
        values: Vec<f64>,
        student_fte: Vec<f64>,
        spec: &DesignSpec,
    ) -> Result<Self, DidError> {
        let n = units.len() * years.len();
        if values.len() != n || student_fte.len() != n {
            return Err(DidError::InvalidDesign(format!(
                "expected {n} values for {} units × {} years",
                units.len(),
                years.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DidError::InvalidDesign("non-finite outcome".into()));
        }
        let treated = units
            .iter()
            .position(|u| *u == spec.treated_unit)
            .ok_or_else(|| {
                DidError::InvalidDesign(format!("treated unit '{}' not in data", spec.treated_unit))
            })?;
        let first = *years
            .first()
            .ok_or_else(|| DidError::InvalidDesign("no years".into()))?;
        let last = *years.last().expect("nonempty");

        let before_policy = AcademicYear::new(spec.policy_year.start_year() - 1)
            .unwrap_or(spec.policy_year);
        let pre_window = spec.pre_window.unwrap_or(YearRange::new(first, before_policy));
        let post_window = spec.post_window.unwrap_or(YearRange::new(spec.policy_year, last));
        if pre_window.last >= spec.policy_year {
            return Err(DidError::InvalidDesign(format!(
                "pre window must end before the policy year {}",
                spec.policy_year
            )));
        }
        if post_window.first < spec.policy_year {
            return Err(DidError::InvalidDesign(format!(
                "post window must start at or after the policy year {}",
                spec.policy_year
            )));
        }
        let pre: Vec<usize> = (0..years.len()).filter(|&t| pre_window.contains(years[t])).collect();
        let post: Vec<usize> = (0..years.len()).filter(|&t| post_window.contains(years[t])).collect();
        if pre.is_empty() || post.is_empty() {
            return Err(DidError::InvalidDesign("pre or post window is empty".into()));
        }
        if units.len() < 2 {
            return Err(DidError::InvalidDesign("no comparison units".into()));
        }
        Ok(Self {
            units,
            years,
            values,
            student_fte,
            treated,
            pre,
            post,
            policy_year: spec.policy_year,
            base_year: spec.base_year,
            se_kind: spec.se_kind,
        })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn years(&self) -> &[AcademicYear] {
        &self.years
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn treated(&self) -> usize {
        self.treated
    }

    pub fn treated_unit(&self) -> &str {
        &self.units[self.treated]
    }

    pub fn controls(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.units.len()).filter(move |&u| u != self.treated)
    }

    /// Year indices of the pre window.
    pub fn pre(&self) -> &[usize] {
        &self.pre
    }

    /// Year indices of the post window.
    pub fn post(&self) -> &[usize] {
        &self.post
    }

    pub fn policy_year(&self) -> AcademicYear {
        self.policy_year
    }

    pub fn base_year(&self) -> AcademicYear {
        self.base_year
    }

    pub fn se_kind(&self) -> SeKind {
        self.se_kind
    }

    pub fn with_se_kind(mut self, se_kind: SeKind) -> Self {
        self.se_kind = se_kind;
        self
    }

    pub fn value(&self, unit: usize, year: usize) -> f64 {
        self.values[unit * self.years.len() + year]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn student_fte(&self, unit: usize, year: usize) -> f64 {
        self.student_fte[unit * self.years.len() + year]
    }

    pub fn unit_series(&self, unit: usize) -> &[f64] {
        let t = self.years.len();
        &self.values[unit * t..(unit + 1) * t]
    }

    /// Same design with new outcome values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            ..self.clone()
        }
    }

    /// Mean outcome of one unit over a set of year indices.
    pub fn unit_mean(&self, unit: usize, years: &[usize]) -> f64 {
        years.iter().map(|&t| self.value(unit, t)).sum::<f64>() / years.len() as f64
    }

    /// Per-unit time means over `years`, averaged across the control units.
    pub fn control_double_mean(&self, years: &[usize]) -> f64 {
        let controls: Vec<usize> = self.controls().collect();
        controls.iter().map(|&u| self.unit_mean(u, years)).sum::<f64>() / controls.len() as f64
    }

    /// Cross-sectional control mean in one year.
    pub fn control_mean_at(&self, year: usize) -> f64 {
        let controls: Vec<usize> = self.controls().collect();
        controls.iter().map(|&u| self.value(u, year)).sum::<f64>() / controls.len() as f64
    }

    /// Year indices used by the two-way fit: pre window then post window.
    pub(crate) fn window_years(&self) -> Vec<usize> {
        let mut ys: Vec<usize> = self.pre.iter().chain(&self.post).copied().collect();
        ys.sort_unstable();
        ys
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Panel `y[u][t]` with units `U0..` and years from 2007.
    pub fn panel(values: &[Vec<f64>], treated: usize, policy: i32) -> OutcomePanel {
        let n_years = values[0].len();
        let units: Vec<String> = (0..values.len()).map(|u| format!("U{u:02}")).collect();
        let years: Vec<AcademicYear> = (0..n_years)
            .map(|t| AcademicYear::new(2007 + t as i32).unwrap())
            .collect();
        let mut spec = DesignSpec::new(units[treated].clone());
        spec.policy_year = AcademicYear::new(policy).unwrap();
        spec.base_year = spec.policy_year;
        let flat: Vec<f64> = values.iter().flatten().copied().collect();
        let fte = vec![1000.0; flat.len()];
        OutcomePanel::from_matrix(units, years, flat, fte, &spec).unwrap()
    }
}
