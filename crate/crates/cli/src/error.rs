use std::fmt;

use vacancy_core::cohort::CohortError;
use vacancy_core::config::ConfigError;
use vacancy_core::did::DidError;
use vacancy_core::panel::PanelError;
use vacancy_core::proportionality::ProportionalityError;
use vacancy_core::report::ReportError;

/// Every failure maps to exactly one exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// Input data that fails validation (exit 3).
    Data(String),
    /// A computation that cannot produce a finite answer (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

/// Single line: `error kind=<kind> code=<n> message="<escaped>"`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self
            .message()
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', "\\n");
        write!(f, "error kind={} code={} message=\"{msg}\"", self.kind(), self.exit_code())
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ProportionalityError> for CliError {
    fn from(e: ProportionalityError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::EmptyWindow { .. } | CohortError::NoYears => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DidError> for CliError {
    fn from(e: DidError) -> Self {
        match e {
            DidError::RankDeficient { .. } | DidError::DegenerateDesign(_) => CliError::Numerical(e.to_string()),
            DidError::TooFewReplications(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Panel(e) => e.into(),
            ReportError::Cohort(e) => e.into(),
            ReportError::Did(e) => e.into(),
            ReportError::Proportionality(e) => e.into(),
            ReportError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}
