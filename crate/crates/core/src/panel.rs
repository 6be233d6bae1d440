//! Institution × academic-year × staff-group panels of headcounts and new
//! appointments.
//!
//! Two ingestion paths feed a [`PanelDataset`]:
//!
//! * pre-aggregated rows (`institution, year, group, headcount,
//!   new_appointments, student_fte`), read by [`ingest_panel`];
//! * individual staff records carrying a person identifier, classified with
//!   [`classify_staff_record`] and aggregated by [`ingest_staff_records`].
//!
//! Panels are always balanced: every `(institution, year, group)` cell is
//! present exactly once and the years are contiguous. Incomplete grids are
//! rejected, never imputed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised while building or querying a panel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PanelError {
    #[error("missing cell: institution={institution} year={year} group={group}")]
    MissingCell {
        institution: String,
        year: AcademicYear,
        group: StaffGroup,
    },
    #[error("negative count in column '{column}' at line {line}")]
    NegativeCount { line: usize, column: String },
    #[error("duplicate cell at line {line}: institution={institution} year={year} group={group}")]
    DuplicateCell {
        line: usize,
        institution: String,
        year: AcademicYear,
        group: StaffGroup,
    },
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("new_appointments exceeds headcount at line {line}")]
    AppointmentsExceedHeadcount { line: usize },
    #[error("zero headcount for institution={institution} year={year}")]
    ZeroHeadcount {
        institution: String,
        year: AcademicYear,
    },
    #[error("academic year {0} outside [1900, 2200]")]
    InvalidYear(i64),
    #[error("years are not contiguous: gap after {0}")]
    NonContiguousYears(AcademicYear),
    #[error("empty selection")]
    EmptySelection,
    #[error("selection not contained in dataset: {0}")]
    NotInDataset(String),
    #[error("dataset has no observations")]
    Empty,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Academic year keyed by its starting calendar year (2007 is 2007/08).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AcademicYear(i32);

impl AcademicYear {
    pub const MIN: i32 = 1900;
    pub const MAX: i32 = 2200;

    pub fn new(start_year: i32) -> Result<Self, PanelError> {
        if (Self::MIN..=Self::MAX).contains(&start_year) {
            Ok(Self(start_year))
        } else {
            Err(PanelError::InvalidYear(start_year as i64))
        }
    }

    pub fn start_year(self) -> i32 {
        self.0
    }

    /// The following academic year. Saturates at the upper bound.
    pub fn next(self) -> Self {
        Self((self.0 + 1).min(Self::MAX))
    }
}

impl fmt::Display for AcademicYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:02}", self.0, (self.0 + 1).rem_euclid(100))
    }
}

impl FromStr for AcademicYear {
    type Err = PanelError;

    /// Accepts `2007` or `2007/08`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let head = s.split('/').next().unwrap_or(s);
        let start: i64 = head
            .trim()
            .parse()
            .map_err(|_| PanelError::InvalidObservation(format!("bad academic year '{s}'")))?;
        if start < AcademicYear::MIN as i64 || start > AcademicYear::MAX as i64 {
            return Err(PanelError::InvalidYear(start));
        }
        AcademicYear::new(start as i32)
    }
}

/// Staff group produced by the classification filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StaffGroup {
    /// Established academic staff.
    Eac,
    /// Established academic-related staff.
    Ear,
    Unclassified,
}

impl StaffGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            StaffGroup::Eac => "EAC",
            StaffGroup::Ear => "EAR",
            StaffGroup::Unclassified => "Unclassified",
        }
    }
}

impl fmt::Display for StaffGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StaffGroup {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EAC" => Ok(StaffGroup::Eac),
            "EAR" => Ok(StaffGroup::Ear),
            "UNCLASSIFIED" => Ok(StaffGroup::Unclassified),
            other => Err(PanelError::InvalidObservation(format!(
                "unknown staff group '{other}'"
            ))),
        }
    }
}

/// Academic employment function code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionCode {
    /// 1: teaching only.
    TeachingOnly,
    /// 3: teaching and research.
    TeachingAndResearch,
    /// 9: neither (e.g. vice-chancellor).
    Neither,
    /// 4: not an academic contract.
    NotAcademic,
    /// X: non-academic, used before 2011/12.
    LegacyX,
    Other,
}

impl FunctionCode {
    pub fn parse(token: &str) -> Option<Self> {
        match token.trim().to_ascii_uppercase().as_str() {
            "" => None,
            "1" => Some(FunctionCode::TeachingOnly),
            "3" => Some(FunctionCode::TeachingAndResearch),
            "9" => Some(FunctionCode::Neither),
            "4" => Some(FunctionCode::NotAcademic),
            "X" => Some(FunctionCode::LegacyX),
            _ => Some(FunctionCode::Other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmploymentMode {
    FullTime,
    FullTimeTermTime,
    Other,
}

impl EmploymentMode {
    pub fn parse(token: &str) -> Option<Self> {
        match normalize_token(token).as_str() {
            "" => None,
            "full_time" => Some(EmploymentMode::FullTime),
            "full_time_term_time" => Some(EmploymentMode::FullTimeTermTime),
            _ => Some(EmploymentMode::Other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmploymentTerms {
    OpenEnded,
    FixedTerm,
    Other,
}

impl EmploymentTerms {
    pub fn parse(token: &str) -> Option<Self> {
        match normalize_token(token).as_str() {
            "" => None,
            "open_ended" | "permanent" => Some(EmploymentTerms::OpenEnded),
            "fixed_term" => Some(EmploymentTerms::FixedTerm),
            _ => Some(EmploymentTerms::Other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Financing {
    /// Wholly or partly financed by the employing institution.
    ProviderFinanced,
    Other,
}

impl Financing {
    pub fn parse(token: &str) -> Option<Self> {
        match normalize_token(token).as_str() {
            "" => None,
            "provider_financed" => Some(Financing::ProviderFinanced),
            _ => Some(Financing::Other),
        }
    }
}

fn normalize_token(token: &str) -> String {
    token
        .trim()
        .to_ascii_lowercase()
        .replace(['-', ' ', '/'], "_")
}

/// One staff contract record, every field explicitly populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StaffRecord {
    pub function_code: FunctionCode,
    pub salary_point: u32,
    pub employment_mode: EmploymentMode,
    pub terms: EmploymentTerms,
    pub financing: Financing,
}

/// Minimum salary spine point for the established academic group.
pub const EAC_MIN_SALARY_POINT: u32 = 38;
/// Minimum salary spine point for the established academic-related group.
pub const EAR_MIN_SALARY_POINT: u32 = 33;

/// Applies the EAC and EAR filters to one record.
///
/// EAC is tested first. The function-code partition makes the two tests
/// mutually exclusive, so the precedence only matters if a future code set
/// overlaps.
pub fn classify_staff_record(record: &StaffRecord) -> StaffGroup {
    let open_ended = record.terms == EmploymentTerms::OpenEnded;

    let eac = matches!(
        record.function_code,
        FunctionCode::TeachingOnly | FunctionCode::TeachingAndResearch | FunctionCode::Neither
    ) && record.salary_point >= EAC_MIN_SALARY_POINT
        && matches!(
            record.employment_mode,
            EmploymentMode::FullTime | EmploymentMode::FullTimeTermTime
        )
        && open_ended;
    if eac {
        return StaffGroup::Eac;
    }

    let ear = matches!(
        record.function_code,
        FunctionCode::NotAcademic | FunctionCode::LegacyX
    ) && record.salary_point >= EAR_MIN_SALARY_POINT
        && record.financing == Financing::ProviderFinanced
        && open_ended;
    if ear {
        StaffGroup::Ear
    } else {
        StaffGroup::Unclassified
    }
}

/// One panel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub institution: String,
    pub year: AcademicYear,
    pub group: StaffGroup,
    /// Total employees in the cell.
    pub headcount: u64,
    /// New appointees in the cell.
    pub new_appointments: u64,
    /// Full-time-equivalent student numbers for the institution-year.
    pub student_fte: f64,
}

impl PanelObservation {
    fn validate(&self) -> Result<(), PanelError> {
        if self.new_appointments > self.headcount {
            return Err(PanelError::InvalidObservation(format!(
                "{} {}: new_appointments {} > headcount {}",
                self.institution, self.year, self.new_appointments, self.headcount
            )));
        }
        if !(self.student_fte.is_finite() && self.student_fte >= 0.0) {
            return Err(PanelError::InvalidObservation(format!(
                "{} {}: student_fte must be finite and nonnegative",
                self.institution, self.year
            )));
        }
        Ok(())
    }
}

/// New appointments over headcount for one cell.
pub fn job_creation_rate(obs: &PanelObservation) -> Result<f64, PanelError> {
    if obs.headcount == 0 {
        return Err(PanelError::ZeroHeadcount {
            institution: obs.institution.clone(),
            year: obs.year,
        });
    }
    Ok(obs.new_appointments as f64 / obs.headcount as f64)
}

/// A balanced panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    // sorted by (institution, year, group)
    observations: Vec<PanelObservation>,
    institutions: Vec<String>,
    years: Vec<AcademicYear>,
    groups: Vec<StaffGroup>,
    provenance: Vec<String>,
}

impl PanelDataset {
    /// Builds a dataset, rejecting duplicate or missing cells and gaps in the
    /// year sequence.
    pub fn new(
        mut observations: Vec<PanelObservation>,
        provenance: Vec<String>,
    ) -> Result<Self, PanelError> {
        if observations.is_empty() {
            return Err(PanelError::Empty);
        }
        for obs in &observations {
            obs.validate()?;
        }
        observations.sort_by(|a, b| {
            (&a.institution, a.year, a.group).cmp(&(&b.institution, b.year, b.group))
        });
        for pair in observations.windows(2) {
            if (&pair[0].institution, pair[0].year, pair[0].group)
                == (&pair[1].institution, pair[1].year, pair[1].group)
            {
                // line 0: not tied to a source file
                return Err(PanelError::DuplicateCell {
                    line: 0,
                    institution: pair[1].institution.clone(),
                    year: pair[1].year,
                    group: pair[1].group,
                });
            }
        }

        let institutions: BTreeSet<String> =
            observations.iter().map(|o| o.institution.clone()).collect();
        let years: BTreeSet<AcademicYear> = observations.iter().map(|o| o.year).collect();
        let groups: BTreeSet<StaffGroup> = observations.iter().map(|o| o.group).collect();
        let years: Vec<AcademicYear> = years.into_iter().collect();
        for pair in years.windows(2) {
            if pair[1].start_year() != pair[0].start_year() + 1 {
                return Err(PanelError::NonContiguousYears(pair[0]));
            }
        }

        let expected = institutions.len() * years.len() * groups.len();
        if observations.len() != expected {
            let present: HashSet<(&str, AcademicYear, StaffGroup)> = observations
                .iter()
                .map(|o| (o.institution.as_str(), o.year, o.group))
                .collect();
            for inst in &institutions {
                for &year in &years {
                    for &group in &groups {
                        if !present.contains(&(inst.as_str(), year, group)) {
                            return Err(PanelError::MissingCell {
                                institution: inst.clone(),
                                year,
                                group,
                            });
                        }
                    }
                }
            }
        }

        Ok(Self {
            observations,
            institutions: institutions.into_iter().collect(),
            years,
            groups: groups.into_iter().collect(),
            provenance,
        })
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn institutions(&self) -> &[String] {
        &self.institutions
    }

    pub fn years(&self) -> &[AcademicYear] {
        &self.years
    }

    pub fn groups(&self) -> &[StaffGroup] {
        &self.groups
    }

    /// Free-text provenance notes carried alongside the data.
    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn add_provenance(&mut self, note: impl Into<String>) {
        self.provenance.push(note.into());
    }

    pub fn get(
        &self,
        institution: &str,
        year: AcademicYear,
        group: StaffGroup,
    ) -> Option<&PanelObservation> {
        let i = self.institutions.binary_search_by(|s| s.as_str().cmp(institution)).ok()?;
        let t = self.years.binary_search(&year).ok()?;
        let g = self.groups.binary_search(&group).ok()?;
        let idx = (i * self.years.len() + t) * self.groups.len() + g;
        self.observations.get(idx)
    }

    /// Job creation rate of one cell.
    pub fn rate(
        &self,
        institution: &str,
        year: AcademicYear,
        group: StaffGroup,
    ) -> Result<f64, PanelError> {
        let obs = self.get(institution, year, group).ok_or_else(|| {
            PanelError::NotInDataset(format!("{institution} {year} {group}"))
        })?;
        job_creation_rate(obs)
    }

    /// Canonical CSV: provenance as `#` comment lines, then the fixed column
    /// order `institution,year,group,headcount,new_appointments,student_fte`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for note in &self.provenance {
            out.push_str("# ");
            out.push_str(&note.replace('\n', " "));
            out.push('\n');
        }
        out.push_str("institution,year,group,headcount,new_appointments,student_fte\n");
        for o in &self.observations {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&o.institution),
                o.year.start_year(),
                o.group,
                o.headcount,
                o.new_appointments,
                o.student_fte
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\t']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean job creation rate over a selection of institutions and years.
///
/// Each institution's rates are averaged over the selected years first, then
/// the institution means are averaged.
pub fn group_mean_rate<S: AsRef<str>>(
    data: &PanelDataset,
    institutions: &[S],
    years: &[AcademicYear],
    group: StaffGroup,
) -> Result<f64, PanelError> {
    if institutions.is_empty() || years.is_empty() {
        return Err(PanelError::EmptySelection);
    }
    let mut total = 0.0;
    for inst in institutions {
        let mut unit_sum = 0.0;
        for &year in years {
            unit_sum += data.rate(inst.as_ref(), year, group)?;
        }
        total += unit_sum / years.len() as f64;
    }
    Ok(total / institutions.len() as f64)
}

/// Column names for pre-aggregated panel input.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSchema {
    pub institution: String,
    pub year: String,
    /// When `None`, every row is assigned `default_group`.
    pub group: Option<String>,
    pub default_group: StaffGroup,
    pub headcount: String,
    pub new_appointments: String,
    pub student_fte: String,
    pub delimiter: u8,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            institution: "institution".into(),
            year: "year".into(),
            group: Some("group".into()),
            default_group: StaffGroup::Eac,
            headcount: "headcount".into(),
            new_appointments: "new_appointments".into(),
            student_fte: "student_fte".into(),
            delimiter: b',',
        }
    }
}

struct Table {
    notes: Vec<String>,
    header: Vec<String>,
    // (line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(mut source: R, delimiter: u8) -> Result<Table, PanelError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| PanelError::Csv(e.to_string()))?;
    let notes = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| PanelError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(PanelError::Csv("missing header row".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PanelError::Csv(e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header.len() {
            return Err(PanelError::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table {
        notes,
        header,
        rows,
    })
}

fn column_index(header: &[String], name: &str) -> Result<usize, PanelError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| PanelError::Csv(format!("missing column '{name}'")))
}

fn parse_count(field: &str, line: usize, column: &str) -> Result<u64, PanelError> {
    let value: i64 = field.parse().map_err(|_| PanelError::MalformedRow {
        line,
        message: format!("column '{column}': '{field}' is not an integer"),
    })?;
    u64::try_from(value).map_err(|_| PanelError::NegativeCount {
        line,
        column: column.to_string(),
    })
}

fn parse_real(field: &str, line: usize, column: &str) -> Result<f64, PanelError> {
    let value: f64 = field.parse().map_err(|_| PanelError::MalformedRow {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(PanelError::MalformedRow {
            line,
            message: format!("column '{column}': non-finite value"),
        });
    }
    if value < 0.0 {
        return Err(PanelError::NegativeCount {
            line,
            column: column.to_string(),
        });
    }
    Ok(value)
}

fn parse_year(field: &str, line: usize) -> Result<AcademicYear, PanelError> {
    field.parse().map_err(|e| match e {
        PanelError::InvalidYear(_) => e,
        _ => PanelError::MalformedRow {
            line,
            message: format!("bad year '{field}'"),
        },
    })
}

/// Reads a pre-aggregated panel. Comment lines starting with `#` become
/// provenance notes.
pub fn ingest_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<PanelDataset, PanelError> {
    let table = read_table(source, schema.delimiter)?;
    let inst_col = column_index(&table.header, &schema.institution)?;
    let year_col = column_index(&table.header, &schema.year)?;
    let group_col = match &schema.group {
        Some(name) => Some(column_index(&table.header, name)?),
        None => None,
    };
    let head_col = column_index(&table.header, &schema.headcount)?;
    let new_col = column_index(&table.header, &schema.new_appointments)?;
    let fte_col = column_index(&table.header, &schema.student_fte)?;

    let mut seen: BTreeMap<(String, AcademicYear, StaffGroup), usize> = BTreeMap::new();
    let mut observations = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let line = *line;
        let institution = fields[inst_col].clone();
        if institution.is_empty() {
            return Err(PanelError::MalformedRow {
                line,
                message: "empty institution".into(),
            });
        }
        let year = parse_year(&fields[year_col], line)?;
        let group = match group_col {
            Some(c) => fields[c].parse().map_err(|_| PanelError::MalformedRow {
                line,
                message: format!("unknown group '{}'", fields[c]),
            })?,
            None => schema.default_group,
        };
        let headcount = parse_count(&fields[head_col], line, &schema.headcount)?;
        let new_appointments = parse_count(&fields[new_col], line, &schema.new_appointments)?;
        let student_fte = parse_real(&fields[fte_col], line, &schema.student_fte)?;
        if new_appointments > headcount {
            return Err(PanelError::AppointmentsExceedHeadcount { line });
        }
        let key = (institution.clone(), year, group);
        if seen.insert(key, line).is_some() {
            return Err(PanelError::DuplicateCell {
                line,
                institution,
                year,
                group,
            });
        }
        observations.push(PanelObservation {
            institution,
            year,
            group,
            headcount,
            new_appointments,
            student_fte,
        });
    }
    PanelDataset::new(observations, table.notes)
}

/// Column names for individual staff records.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSchema {
    pub institution: String,
    pub year: String,
    pub person_id: String,
    pub function_code: String,
    pub salary_point: String,
    pub employment_mode: String,
    pub terms: String,
    pub financing: String,
    /// Optional; when absent student FTE is recorded as 0.
    pub student_fte: Option<String>,
    pub delimiter: u8,
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self {
            institution: "institution".into(),
            year: "year".into(),
            person_id: "person_id".into(),
            function_code: "function_code".into(),
            salary_point: "salary_point".into(),
            employment_mode: "employment_mode".into(),
            terms: "terms".into(),
            financing: "financing".into(),
            student_fte: Some("student_fte".into()),
            delimiter: b',',
        }
    }
}

/// A staff record as it appears in a longitudinal extract.
#[derive(Debug, Clone, PartialEq)]
pub struct StaffRow {
    pub institution: String,
    pub year: AcademicYear,
    pub person_id: String,
    pub record: StaffRecord,
    pub student_fte: f64,
}

/// Parses a staff-record extract.
pub fn read_staff_rows<R: Read>(source: R, schema: &RecordSchema) -> Result<Vec<StaffRow>, PanelError> {
    let table = read_table(source, schema.delimiter)?;
    let col = |name: &str| column_index(&table.header, name);
    let inst_col = col(&schema.institution)?;
    let year_col = col(&schema.year)?;
    let person_col = col(&schema.person_id)?;
    let func_col = col(&schema.function_code)?;
    let salary_col = col(&schema.salary_point)?;
    let mode_col = col(&schema.employment_mode)?;
    let terms_col = col(&schema.terms)?;
    let fin_col = col(&schema.financing)?;
    let fte_col = match &schema.student_fte {
        Some(name) => Some(col(name)?),
        None => None,
    };

    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, f) in &table.rows {
        let line = *line;
        let missing = |what: &str| PanelError::MalformedRow {
            line,
            message: format!("empty {what}"),
        };
        if f[inst_col].is_empty() {
            return Err(missing("institution"));
        }
        if f[person_col].is_empty() {
            return Err(missing("person_id"));
        }
        let salary_point = parse_count(&f[salary_col], line, &schema.salary_point)?;
        let record = StaffRecord {
            function_code: FunctionCode::parse(&f[func_col]).ok_or_else(|| missing("function_code"))?,
            salary_point: u32::try_from(salary_point).map_err(|_| PanelError::MalformedRow {
                line,
                message: "salary point out of range".into(),
            })?,
            employment_mode: EmploymentMode::parse(&f[mode_col])
                .ok_or_else(|| missing("employment_mode"))?,
            terms: EmploymentTerms::parse(&f[terms_col]).ok_or_else(|| missing("terms"))?,
            financing: Financing::parse(&f[fin_col]).ok_or_else(|| missing("financing"))?,
        };
        let student_fte = match fte_col {
            Some(c) => parse_real(&f[c], line, "student_fte")?,
            None => 0.0,
        };
        rows.push(StaffRow {
            institution: f[inst_col].clone(),
            year: parse_year(&f[year_col], line)?,
            person_id: f[person_col].clone(),
            record,
            student_fte,
        });
    }
    Ok(rows)
}

/// Classifies staff rows and aggregates them into a panel.
///
/// Headcount is the number of classified records per cell. A record counts
/// as a new appointment when its `(institution, person_id)` pair is absent
/// from the institution's previous year. The first observed year has no
/// previous year, so it is dropped from the panel. Unclassified records are
/// excluded from the counts but still establish prior-year presence.
pub fn aggregate_staff_rows(rows: &[StaffRow]) -> Result<PanelDataset, PanelError> {
    if rows.is_empty() {
        return Err(PanelError::Empty);
    }
    let mut present: HashSet<(&str, AcademicYear, &str)> = HashSet::new();
    let mut fte: BTreeMap<(&str, AcademicYear), f64> = BTreeMap::new();
    let mut institutions = BTreeSet::new();
    let mut years = BTreeSet::new();
    for (i, row) in rows.iter().enumerate() {
        present.insert((&row.institution, row.year, &row.person_id));
        institutions.insert(row.institution.as_str());
        years.insert(row.year);
        let slot = fte.entry((&row.institution, row.year)).or_insert(row.student_fte);
        if *slot != row.student_fte {
            return Err(PanelError::MalformedRow {
                line: i + 2,
                message: format!(
                    "inconsistent student_fte for {} {}",
                    row.institution, row.year
                ),
            });
        }
    }
    let first_year = *years.iter().next().expect("nonempty");
    // a gap would make everyone after it look newly appointed
    for (a, b) in years.iter().zip(years.iter().skip(1)) {
        if b.start_year() != a.start_year() + 1 {
            return Err(PanelError::NonContiguousYears(*a));
        }
    }

    let mut cells: BTreeMap<(&str, AcademicYear, StaffGroup), (u64, u64)> = BTreeMap::new();
    for &inst in &institutions {
        for &year in years.iter().filter(|&&y| y != first_year) {
            for group in [StaffGroup::Eac, StaffGroup::Ear] {
                cells.insert((inst, year, group), (0, 0));
            }
        }
    }
    let mut counted: HashSet<(&str, AcademicYear, &str)> = HashSet::new();
    for row in rows.iter().filter(|r| r.year != first_year) {
        let group = classify_staff_record(&row.record);
        if group == StaffGroup::Unclassified {
            continue;
        }
        // a person holding two classified contracts counts once
        if !counted.insert((&row.institution, row.year, &row.person_id)) {
            continue;
        }
        let prior = AcademicYear(row.year.start_year() - 1);
        let is_new = !present.contains(&(row.institution.as_str(), prior, row.person_id.as_str()));
        let cell = cells
            .get_mut(&(row.institution.as_str(), row.year, group))
            .expect("cell grid covers all rows");
        cell.0 += 1;
        if is_new {
            cell.1 += 1;
        }
    }

    let observations = cells
        .into_iter()
        .map(|((inst, year, group), (headcount, new_appointments))| PanelObservation {
            institution: inst.to_string(),
            year,
            group,
            headcount,
            new_appointments,
            student_fte: fte.get(&(inst, year)).copied().unwrap_or(0.0),
        })
        .collect();
    let provenance = vec![
        format!(
            "aggregated from staff records; first year {first_year} dropped (no prior year to identify new appointments)"
        ),
        "new_appointments counts all hires absent from the prior year, not replacement vacancies only".to_string(),
        "salary point thresholds applied verbatim; comparability of spine points across institutions is not verified".to_string(),
    ];
    PanelDataset::new(observations, provenance)
}

/// Reads and aggregates a staff-record extract in one step.
pub fn ingest_staff_records<R: Read>(
    source: R,
    schema: &RecordSchema,
) -> Result<PanelDataset, PanelError> {
    aggregate_staff_rows(&read_staff_rows(source, schema)?)
}
