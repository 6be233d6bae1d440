//! Discrete-time cohort queue of a fixed-posts academic workforce.
//!
//! Staff are tracked as fluid (expected-value) masses by integer age. Each
//! simulated year applies, in order:
//!
//! 1. age increment (everyone gains a year of age and of service);
//! 2. mandatory retirement of all mass at or above the mandatory age;
//! 3. voluntary retirement, then attrition, each as a per-age hazard;
//! 4. refill of every vacated post plus any growth additions, at the
//!    entry-age distribution.
//!
//! Service years are carried alongside headcounts so the mean completed
//! tenure of leavers (the residence time `W` of Little's law) can be
//! reported without assuming stationarity.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CohortError {
    #[error("no mandatory age, no age cap and no certain-exit hazard: residence time is unbounded")]
    UnboundedAges,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("state inconsistent with scenario: {0}")]
    InconsistentState(String),
    #[error("scenarios are incompatible: {0}")]
    IncompatibleScenarios(String),
    #[error("empty or out-of-range window {start}..{end} for trace of {len} years")]
    EmptyWindow { start: usize, end: usize, len: usize },
    #[error("simulation length must be at least one year")]
    NoYears,
    #[error("scenario file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Sparse per-age schedule; ages without an entry take the value 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgeSchedule(BTreeMap<u32, f64>);

impl AgeSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, age: u32, value: f64) -> Self {
        self.set(age, value);
        self
    }

    /// Sets `value` on every age in `ages`.
    pub fn with_range(mut self, ages: Range<u32>, value: f64) -> Self {
        for age in ages {
            self.set(age, value);
        }
        self
    }

    pub fn set(&mut self, age: u32, value: f64) {
        if value == 0.0 {
            self.0.remove(&age);
        } else {
            self.0.insert(age, value);
        }
    }

    pub fn value(&self, age: u32) -> f64 {
        self.0.get(&age).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.0.iter().map(|(&a, &v)| (a, v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses `age:value` items separated by commas; `a-b:value` covers the
    /// inclusive age range.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut schedule = Self::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (ages, value) = item
                .split_once(':')
                .ok_or_else(|| format!("expected age:value, got '{item}'"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("bad value in '{item}'"))?;
            let parse_age = |s: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| format!("bad age in '{item}'"))
            };
            match ages.split_once('-') {
                Some((lo, hi)) => {
                    let (lo, hi) = (parse_age(lo)?, parse_age(hi)?);
                    if lo > hi {
                        return Err(format!("empty age range in '{item}'"));
                    }
                    for age in lo..=hi {
                        schedule.set(age, value);
                    }
                }
                None => schedule.set(parse_age(ages)?, value),
            }
        }
        Ok(schedule)
    }
}

impl fmt::Display for AgeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.iter().map(|(a, v)| format!("{a}:{v}")).collect();
        f.write_str(&items.join(","))
    }
}

/// Retirement policy and demography of one simulated workforce.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScenario {
    pub name: String,
    /// Everyone at or above this age leaves.
    pub mandatory_age: Option<u32>,
    /// Hard upper age bound used when there is no mandate. Exits at the cap
    /// are recorded as voluntary.
    pub max_age: Option<u32>,
    /// Probability of appointment at each age; must sum to 1.
    pub entry_age_distribution: AgeSchedule,
    pub voluntary_retirement_hazard: AgeSchedule,
    /// Lateral moves and deaths combined.
    pub attrition_hazard: AgeSchedule,
    pub total_posts: u64,
    /// Annual relative growth in the number of posts.
    pub post_growth_rate: f64,
    /// Optional per-age income weights. Reporting only; never affects dynamics.
    pub income_weights: Option<AgeSchedule>,
}

impl PolicyScenario {
    /// Single entry age, no hazards, no growth.
    pub fn simple(name: &str, entry_age: u32, mandatory_age: Option<u32>, total_posts: u64) -> Self {
        Self {
            name: name.to_string(),
            mandatory_age,
            max_age: None,
            entry_age_distribution: AgeSchedule::new().with(entry_age, 1.0),
            voluntary_retirement_hazard: AgeSchedule::new(),
            attrition_hazard: AgeSchedule::new(),
            total_posts,
            post_growth_rate: 0.0,
            income_weights: None,
        }
    }

    pub fn min_entry_age(&self) -> Option<u32> {
        self.entry_age_distribution.iter().map(|(a, _)| a).next()
    }

    pub fn mean_entry_age(&self) -> f64 {
        self.entry_age_distribution
            .iter()
            .map(|(a, p)| a as f64 * p)
            .sum()
    }

    /// Lowest age at which every remaining staff member is certain to leave.
    pub fn age_limit(&self) -> Result<u32, CohortError> {
        let certain = |h: &AgeSchedule| h.iter().find(|&(_, v)| v >= 1.0).map(|(a, _)| a);
        [
            self.mandatory_age,
            self.max_age,
            certain(&self.voluntary_retirement_hazard),
            certain(&self.attrition_hazard),
        ]
        .into_iter()
        .flatten()
        .min()
        .ok_or(CohortError::UnboundedAges)
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |m: String| Err(CohortError::InvalidScenario(m));
        if self.total_posts == 0 {
            return bad("total_posts must be positive".into());
        }
        if !(self.post_growth_rate.is_finite() && self.post_growth_rate >= 0.0) {
            return bad(format!(
                "post_growth_rate must be finite and nonnegative, got {}",
                self.post_growth_rate
            ));
        }
        let Some(min_entry) = self.min_entry_age() else {
            return bad("entry age distribution is empty".into());
        };
        let mut total = 0.0;
        for (age, p) in self.entry_age_distribution.iter() {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("entry probability at age {age} is {p}"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("entry distribution sums to {total}, not 1"));
        }
        for (label, h) in [
            ("voluntary", &self.voluntary_retirement_hazard),
            ("attrition", &self.attrition_hazard),
        ] {
            if let Some((age, v)) = h.iter().find(|&(_, v)| !(0.0..=1.0).contains(&v)) {
                return bad(format!("{label} hazard at age {age} is {v}"));
            }
        }
        let limit = self.age_limit()?;
        let max_entry = self.entry_age_distribution.iter().map(|(a, _)| a).max().unwrap_or(min_entry);
        if let Some(m) = self.mandatory_age {
            if m <= min_entry {
                return bad(format!("mandatory age {m} must exceed minimum entry age {min_entry}"));
            }
        }
        if limit <= max_entry {
            return bad(format!("exit age {limit} must exceed every entry age (max {max_entry})"));
        }
        Ok(())
    }

    /// Posts in year `t`, `total_posts * (1 + g)^t`.
    pub fn posts_at(&self, year_index: u32) -> f64 {
        self.total_posts as f64 * (1.0 + self.post_growth_rate).powi(year_index as i32)
    }

    /// Line-oriented `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<u32>| v.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "mandatory_age = {}", opt(self.mandatory_age));
        let _ = writeln!(out, "max_age = {}", opt(self.max_age));
        let _ = writeln!(out, "entry_ages = {}", self.entry_age_distribution);
        let _ = writeln!(out, "voluntary_hazard = {}", self.voluntary_retirement_hazard);
        let _ = writeln!(out, "attrition_hazard = {}", self.attrition_hazard);
        let _ = writeln!(out, "total_posts = {}", self.total_posts);
        let _ = writeln!(out, "growth = {}", self.post_growth_rate);
        if let Some(w) = &self.income_weights {
            let _ = writeln!(out, "income_weights = {w}");
        }
        out
    }

    /// Parses the format written by [`PolicyScenario::to_text`]. Blank lines
    /// and `#` comments are ignored; empty values leave optional fields unset.
    pub fn parse(text: &str) -> Result<Self, CohortError> {
        let mut scenario = PolicyScenario {
            name: String::new(),
            mandatory_age: None,
            max_age: None,
            entry_age_distribution: AgeSchedule::new(),
            voluntary_retirement_hazard: AgeSchedule::new(),
            attrition_hazard: AgeSchedule::new(),
            total_posts: 0,
            post_growth_rate: 0.0,
            income_weights: None,
        };
        let mut seen_posts = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CohortError::Parse {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let age = |v: &str| -> Result<Option<u32>, CohortError> {
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse().map(Some).map_err(|_| err(format!("bad age '{v}'")))
                }
            };
            match key {
                "name" => scenario.name = value.to_string(),
                "mandatory_age" => scenario.mandatory_age = age(value)?,
                "max_age" => scenario.max_age = age(value)?,
                "entry_ages" => scenario.entry_age_distribution = AgeSchedule::parse(value).map_err(err)?,
                "voluntary_hazard" => {
                    scenario.voluntary_retirement_hazard = AgeSchedule::parse(value).map_err(err)?
                }
                "attrition_hazard" => scenario.attrition_hazard = AgeSchedule::parse(value).map_err(err)?,
                "total_posts" => {
                    scenario.total_posts = value
                        .parse()
                        .map_err(|_| err(format!("bad total_posts '{value}'")))?;
                    seen_posts = true;
                }
                "growth" => {
                    scenario.post_growth_rate = value
                        .parse()
                        .map_err(|_| err(format!("bad growth '{value}'")))?
                }
                "income_weights" => {
                    scenario.income_weights = if value.is_empty() {
                        None
                    } else {
                        Some(AgeSchedule::parse(value).map_err(err)?)
                    }
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        if !seen_posts {
            return Err(CohortError::Parse {
                line: 0,
                message: "missing total_posts".into(),
            });
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Headcount (and accumulated service) by integer age.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortState {
    /// Index is age in years.
    pub headcount_by_age: Vec<f64>,
    /// Sum of completed service years over the staff at each age.
    pub service_by_age: Vec<f64>,
    pub year_index: u32,
}

impl CohortState {
    pub fn total(&self) -> f64 {
        self.headcount_by_age.iter().sum()
    }

    pub fn headcount_at(&self, age: u32) -> f64 {
        self.headcount_by_age.get(age as usize).copied().unwrap_or(0.0)
    }

    fn check(&self, scenario: &PolicyScenario) -> Result<(), CohortError> {
        if self.headcount_by_age.len() != self.service_by_age.len() {
            return Err(CohortError::InconsistentState("vector lengths differ".into()));
        }
        if let Some(m) = self.headcount_by_age.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(CohortError::InconsistentState(format!("invalid mass {m}")));
        }
        let posts = scenario.posts_at(self.year_index);
        let total = self.total();
        if (total - posts).abs() > 1e-9 * posts.max(1.0) {
            return Err(CohortError::InconsistentState(format!(
                "headcount {total} differs from posts {posts} in year {}",
                self.year_index
            )));
        }
        Ok(())
    }
}

/// Equal headcount at every age from the (rounded) mean entry age up to the
/// exit age, exclusive.
pub fn initialize_uniform(scenario: &PolicyScenario) -> Result<CohortState, CohortError> {
    let limit = scenario.age_limit()?;
    scenario.validate()?;
    let entry = scenario.mean_entry_age().round() as u32;
    if entry >= limit {
        return Err(CohortError::InvalidScenario(format!(
            "mean entry age {entry} is not below exit age {limit}"
        )));
    }
    let span = (limit - entry) as f64;
    let per_age = scenario.total_posts as f64 / span;
    let mut headcount_by_age = vec![0.0; limit as usize];
    let mut service_by_age = vec![0.0; limit as usize];
    for age in entry..limit {
        headcount_by_age[age as usize] = per_age;
        service_by_age[age as usize] = per_age * (age - entry) as f64;
    }
    Ok(CohortState {
        headcount_by_age,
        service_by_age,
        year_index: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vacancies {
    pub mandatory: f64,
    pub voluntary: f64,
    pub attrition: f64,
}

impl Vacancies {
    pub fn total(&self) -> f64 {
        self.mandatory + self.voluntary + self.attrition
    }
}

/// One simulated year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearRecord {
    /// Index of the year just completed (1 for the first step).
    pub year_index: u32,
    pub vacancies_by_cause: Vacancies,
    pub hires: f64,
    /// Stock `L` after refill.
    pub total_headcount: f64,
    /// Arrivals per year, `λ`.
    pub hire_rate: f64,
    /// Mean completed service of this year's leavers, `W`. `None` when
    /// nobody left.
    pub mean_residence_time: Option<f64>,
    /// Total service years of this year's leavers.
    pub leaver_service: f64,
    pub vcr: f64,
    /// Income-weighted exits, when the scenario carries weights.
    pub weighted_exits: Option<f64>,
}

/// Advances the cohort by one year.
pub fn step(state: &CohortState, scenario: &PolicyScenario) -> (CohortState, YearRecord) {
    let limit = scenario
        .age_limit()
        .expect("step requires a validated scenario") as usize;

    // 1. age increment
    let len = state.headcount_by_age.len().max(limit) + 1;
    let mut mass = vec![0.0; len];
    let mut service = vec![0.0; len];
    for (age, (&m, &s)) in state
        .headcount_by_age
        .iter()
        .zip(&state.service_by_age)
        .enumerate()
    {
        mass[age + 1] += m;
        service[age + 1] += s + m;
    }

    let mut vac = Vacancies::default();
    let mut leaver_service = 0.0;
    let mut weighted = 0.0;
    let weight = |age: usize| {
        scenario
            .income_weights
            .as_ref()
            .map_or(0.0, |w| w.value(age as u32))
    };

    // 2. mandatory retirement
    if let Some(m_age) = scenario.mandatory_age {
        for age in (m_age as usize)..len {
            vac.mandatory += mass[age];
            leaver_service += service[age];
            weighted += mass[age] * weight(age);
            mass[age] = 0.0;
            service[age] = 0.0;
        }
    }
    // age cap, counted as voluntary
    if let Some(cap) = scenario.max_age {
        for age in (cap as usize)..len {
            vac.voluntary += mass[age];
            leaver_service += service[age];
            weighted += mass[age] * weight(age);
            mass[age] = 0.0;
            service[age] = 0.0;
        }
    }

    // 3. voluntary retirement, then attrition among those remaining
    for age in 0..len {
        if mass[age] == 0.0 {
            continue;
        }
        for (hazard, slot) in [
            (&scenario.voluntary_retirement_hazard, 0usize),
            (&scenario.attrition_hazard, 1usize),
        ] {
            let h = hazard.value(age as u32);
            if h == 0.0 {
                continue;
            }
            let exits = mass[age] * h;
            let exit_service = service[age] * h;
            if slot == 0 {
                vac.voluntary += exits;
            } else {
                vac.attrition += exits;
            }
            leaver_service += exit_service;
            weighted += exits * weight(age);
            mass[age] -= exits;
            service[age] -= exit_service;
            if h >= 1.0 {
                mass[age] = 0.0;
                service[age] = 0.0;
            }
        }
    }

    // 4. refill vacated posts plus growth at the entry distribution
    let next_index = state.year_index + 1;
    let survivors: f64 = mass.iter().sum();
    let target = scenario.posts_at(next_index);
    let hires = (target - survivors).max(0.0);
    for (age, p) in scenario.entry_age_distribution.iter() {
        mass[age as usize] += hires * p;
    }

    // trim trailing zeros beyond the age limit
    while mass.len() > limit && mass.last() == Some(&0.0) && service.last() == Some(&0.0) {
        mass.pop();
        service.pop();
    }

    let total_headcount: f64 = mass.iter().sum();
    let leavers = vac.total();
    let record = YearRecord {
        year_index: next_index,
        vacancies_by_cause: vac,
        hires,
        total_headcount,
        hire_rate: hires,
        mean_residence_time: (leavers > 0.0).then(|| leaver_service / leavers),
        leaver_service,
        vcr: hires / total_headcount,
        weighted_exits: scenario.income_weights.as_ref().map(|_| weighted),
    };
    (
        CohortState {
            headcount_by_age: mass,
            service_by_age: service,
            year_index: next_index,
        },
        record,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub scenario: String,
    pub records: Vec<YearRecord>,
    pub final_state: CohortState,
}

impl SimulationTrace {
    pub fn vcr_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.vcr).collect()
    }

    pub fn hires_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.hires).collect()
    }

    /// One row per simulated year.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "year,mandatory,voluntary,attrition,vacancies,hires,headcount,hire_rate,mean_residence_time,vcr,weighted_exits\n",
        );
        for r in &self.records {
            let v = &r.vacancies_by_cause;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.year_index,
                v.mandatory,
                v.voluntary,
                v.attrition,
                v.total(),
                r.hires,
                r.total_headcount,
                r.hire_rate,
                r.mean_residence_time.map(|w| w.to_string()).unwrap_or_default(),
                r.vcr,
                r.weighted_exits.map(|w| w.to_string()).unwrap_or_default(),
            );
        }
        out
    }
}

/// Applies [`step`] `years` times from `initial`.
pub fn run(
    scenario: &PolicyScenario,
    years: u32,
    initial: &CohortState,
) -> Result<SimulationTrace, CohortError> {
    if years == 0 {
        return Err(CohortError::NoYears);
    }
    scenario.validate()?;
    initial.check(scenario)?;
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(years as usize);
    for _ in 0..years {
        let (next, record) = step(&state, scenario);
        records.push(record);
        state = next;
    }
    Ok(SimulationTrace {
        scenario: scenario.name.clone(),
        records,
        final_state: state,
    })
}

/// Time-averaged Little's-law quantities over a window of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LittlesLaw {
    /// Mean stock `L`.
    pub stock: f64,
    /// Mean arrivals per year `λ`.
    pub arrival_rate: f64,
    /// Leaver-weighted mean residence time `W`.
    pub residence_time: f64,
    /// `|L - λW| / L`.
    pub residual: f64,
}

pub fn littles_law(trace: &SimulationTrace, window: Range<usize>) -> Result<LittlesLaw, CohortError> {
    let len = trace.records.len();
    if window.start >= window.end || window.end > len {
        return Err(CohortError::EmptyWindow {
            start: window.start,
            end: window.end,
            len,
        });
    }
    let recs = &trace.records[window];
    let n = recs.len() as f64;
    let stock = recs.iter().map(|r| r.total_headcount).sum::<f64>() / n;
    let arrival_rate = recs.iter().map(|r| r.hire_rate).sum::<f64>() / n;
    let leavers: f64 = recs.iter().map(|r| r.vacancies_by_cause.total()).sum();
    let service: f64 = recs.iter().map(|r| r.leaver_service).sum();
    let residence_time = if leavers > 0.0 { service / leavers } else { f64::INFINITY };
    let residual = (stock - arrival_rate * residence_time).abs() / stock;
    Ok(LittlesLaw {
        stock,
        arrival_rate,
        residence_time,
        residual,
    })
}

/// `|L - λW| / L` over the window.
pub fn littles_law_check(trace: &SimulationTrace, window: Range<usize>) -> Result<f64, CohortError> {
    littles_law(trace, window).map(|l| l.residual)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateSummary {
    pub vcr: f64,
    pub hires: f64,
    pub mean_career_length: f64,
    pub littles_residual: f64,
}

/// Longest possible residence, from the youngest entry age to the exit age.
pub fn longest_residence(scenario: &PolicyScenario) -> Result<u32, CohortError> {
    let limit = scenario.age_limit()?;
    let min_entry = scenario
        .min_entry_age()
        .ok_or_else(|| CohortError::InvalidScenario("empty entry distribution".into()))?;
    Ok(limit.saturating_sub(min_entry).max(1))
}

/// Runs a scenario from its own uniform state and summarises the final
/// window of one longest residence time.
pub fn steady_state(scenario: &PolicyScenario, horizon: u32) -> Result<SteadyStateSummary, CohortError> {
    let span = longest_residence(scenario)?;
    let horizon = horizon.max(4 * span);
    let trace = run(scenario, horizon, &initialize_uniform(scenario)?)?;
    summarize_window(&trace, (horizon - span) as usize..horizon as usize)
}

pub fn summarize_window(
    trace: &SimulationTrace,
    window: Range<usize>,
) -> Result<SteadyStateSummary, CohortError> {
    let law = littles_law(trace, window.clone())?;
    let recs = &trace.records[window];
    let n = recs.len() as f64;
    Ok(SteadyStateSummary {
        vcr: recs.iter().map(|r| r.vcr).sum::<f64>() / n,
        hires: law.arrival_rate,
        mean_career_length: law.residence_time,
        littles_residual: law.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioComparison {
    pub trace_a: SimulationTrace,
    pub trace_b: SimulationTrace,
    /// Per-year `hires_a - hires_b` from the shared starting state.
    pub hires_delta: Vec<f64>,
    /// Per-year difference in vacancies by cause, `a - b`.
    pub vacancies_delta: Vec<Vacancies>,
    /// Mean of `hires_delta` over consecutive ten-year blocks.
    pub decade_means: Vec<f64>,
    /// Mean of `|hires_delta|` over consecutive ten-year blocks.
    pub decade_abs_means: Vec<f64>,
    pub steady_a: SteadyStateSummary,
    pub steady_b: SteadyStateSummary,
    /// `steady_a.hires - steady_b.hires`.
    pub steady_state_delta: f64,
}

impl ScenarioComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,hires_a,hires_b,hires_delta,mandatory_delta,voluntary_delta,attrition_delta\n");
        for (i, d) in self.hires_delta.iter().enumerate() {
            let v = &self.vacancies_delta[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                self.trace_a.records[i].hires,
                self.trace_b.records[i].hires,
                d,
                v.mandatory,
                v.voluntary,
                v.attrition
            );
        }
        out
    }
}

/// Runs both scenarios from the uniform state of `a` (the status quo) and
/// differences the traces. Steady states come from each scenario's own
/// uniform start.
pub fn compare_scenarios(
    a: &PolicyScenario,
    b: &PolicyScenario,
    years: u32,
) -> Result<ScenarioComparison, CohortError> {
    if a.total_posts != b.total_posts || a.post_growth_rate != b.post_growth_rate {
        return Err(CohortError::IncompatibleScenarios(
            "total_posts and growth must match".into(),
        ));
    }
    if a.entry_age_distribution != b.entry_age_distribution {
        return Err(CohortError::IncompatibleScenarios(
            "entry age distributions differ".into(),
        ));
    }
    let start = initialize_uniform(a)?;
    let trace_a = run(a, years, &start)?;
    let trace_b = run(b, years, &start)?;
    let hires_delta: Vec<f64> = trace_a
        .records
        .iter()
        .zip(&trace_b.records)
        .map(|(ra, rb)| ra.hires - rb.hires)
        .collect();
    let vacancies_delta = trace_a
        .records
        .iter()
        .zip(&trace_b.records)
        .map(|(ra, rb)| Vacancies {
            mandatory: ra.vacancies_by_cause.mandatory - rb.vacancies_by_cause.mandatory,
            voluntary: ra.vacancies_by_cause.voluntary - rb.vacancies_by_cause.voluntary,
            attrition: ra.vacancies_by_cause.attrition - rb.vacancies_by_cause.attrition,
        })
        .collect();
    let block_mean = |f: fn(f64) -> f64| -> Vec<f64> {
        hires_delta
            .chunks(10)
            .map(|c| c.iter().map(|&d| f(d)).sum::<f64>() / c.len() as f64)
            .collect()
    };
    let decade_means = block_mean(|d| d);
    let decade_abs_means = block_mean(f64::abs);
    let steady_a = steady_state(a, years)?;
    let steady_b = steady_state(b, years)?;
    Ok(ScenarioComparison {
        trace_a,
        trace_b,
        hires_delta,
        vacancies_delta,
        decade_means,
        decade_abs_means,
        steady_state_delta: steady_a.hires - steady_b.hires,
        steady_a,
        steady_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mandate(age: u32, posts: u64) -> PolicyScenario {
        PolicyScenario::simple("mandate", 40, Some(age), posts)
    }

    #[test]
    fn uniform_initialisation() {
        let s = initialize_uniform(&mandate(67, 270)).unwrap();
        for age in 40..67 {
            assert_eq!(s.headcount_at(age), 10.0);
        }
        assert_eq!(s.headcount_at(39), 0.0);
        assert_eq!(s.headcount_at(67), 0.0);
        let s = initialize_uniform(&mandate(69, 290)).unwrap();
        assert!((40..69).all(|a| s.headcount_at(a) == 10.0));
        assert_eq!(s.total(), 290.0);
    }

    #[test]
    fn unbounded_without_mandate_or_hazards() {
        let s = PolicyScenario::simple("free", 40, None, 100);
        assert_eq!(initialize_uniform(&s), Err(CohortError::UnboundedAges));
    }

    #[test]
    fn uniform_step_is_a_fixed_point() {
        let sc = mandate(67, 270);
        let s0 = initialize_uniform(&sc).unwrap();
        let (s1, rec) = step(&s0, &sc);
        assert_eq!(rec.vacancies_by_cause.mandatory, 10.0);
        assert_eq!(rec.hires, 10.0);
        assert!((rec.vcr - 1.0 / 27.0).abs() < 1e-15);
        assert_eq!(rec.mean_residence_time, Some(27.0));
        assert_eq!(s1.headcount_by_age[..67], s0.headcount_by_age[..67]);
    }

    #[test]
    fn mandatory_applies_before_hazards() {
        // a certain voluntary exit at the mandatory age must be recorded as mandatory
        let mut sc = mandate(67, 270);
        sc.voluntary_retirement_hazard = AgeSchedule::new().with(67, 1.0);
        let s0 = initialize_uniform(&sc).unwrap();
        let (_, rec) = step(&s0, &sc);
        assert_eq!(rec.vacancies_by_cause.mandatory, 10.0);
        assert_eq!(rec.vacancies_by_cause.voluntary, 0.0);
    }

    #[test]
    fn voluntary_then_attrition_on_survivors() {
        let mut sc = mandate(67, 270);
        sc.voluntary_retirement_hazard = AgeSchedule::new().with(60, 0.5);
        sc.attrition_hazard = AgeSchedule::new().with(60, 0.5);
        let s0 = initialize_uniform(&sc).unwrap();
        let (s1, rec) = step(&s0, &sc);
        // 10 at age 60 after increment: 5 retire, 2.5 leave
        assert_eq!(rec.vacancies_by_cause.voluntary, 5.0);
        assert_eq!(rec.vacancies_by_cause.attrition, 2.5);
        assert_eq!(s1.headcount_at(60), 2.5);
        assert!((s1.total() - 270.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_text_round_trip() {
        let mut sc = mandate(67, 270);
        sc.attrition_hazard = AgeSchedule::new().with_range(40..50, 0.02);
        sc.income_weights = Some(AgeSchedule::new().with(60, 1.5));
        sc.post_growth_rate = 0.01;
        let parsed = PolicyScenario::parse(&sc.to_text()).unwrap();
        assert_eq!(parsed, sc);
    }

    #[test]
    fn scenario_parse_errors() {
        assert!(matches!(
            PolicyScenario::parse("total_posts = 10\nentry_ages = 40:1\nmandatory_age = 67\nbogus = 1\n"),
            Err(CohortError::Parse { line: 4, .. })
        ));
        assert!(matches!(
            PolicyScenario::parse("total_posts = 10\nentry_ages = 40:0.5\nmandatory_age = 67\n"),
            Err(CohortError::InvalidScenario(_))
        ));
        let ranged = AgeSchedule::parse("40-42:0.1, 50:1").unwrap();
        assert_eq!(ranged.value(41), 0.1);
        assert_eq!(ranged.value(43), 0.0);
        assert_eq!(ranged.value(50), 1.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        let sc = mandate(67, 270);
        let trace = run(&sc, 5, &initialize_uniform(&sc).unwrap()).unwrap();
        assert!(matches!(littles_law_check(&trace, 3..3), Err(CohortError::EmptyWindow { .. })));
        assert!(matches!(littles_law_check(&trace, 0..6), Err(CohortError::EmptyWindow { .. })));
        assert!(littles_law_check(&trace, 0..5).unwrap() < 1e-12);
    }

    #[test]
    fn incompatible_scenarios() {
        let a = mandate(67, 270);
        let b = mandate(67, 300);
        assert!(matches!(
            compare_scenarios(&a, &b, 10),
            Err(CohortError::IncompatibleScenarios(_))
        ));
    }
}
