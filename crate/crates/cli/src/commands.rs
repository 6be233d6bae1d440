use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vacancy_core::cohort::{self, PolicyScenario};
use vacancy_core::config::RunConfig;
use vacancy_core::did::{
    self, BootstrapOptions, ClusterLevel, DesignSpec, FitMethod, Outcome, OutcomePanel, Pivot, SeKind,
    StudentAdjustMode, SynthOptions, YearRange,
};
use vacancy_core::fixtures;
use vacancy_core::panel::{
    classify_staff_record, ingest_panel, ingest_staff_records, read_staff_rows, AcademicYear, PanelDataset,
    PanelSchema, RecordSchema, StaffGroup,
};
use vacancy_core::proportionality::{
    proportionality_verdict, vcr_uplift_with, QueueParameters, UpliftConvention, DEFAULT_BAND,
};
use vacancy_core::report::{emit_reproduction_report, ReportBundle, ReportOptions};
use vacancy_core::svg::{LineChart, Series};

use crate::error::CliError;
use crate::resolve::Resolver;
use crate::{
    BootstrapArgs, ClassifyArgs, Cli, Command, CompareArgs, DesignArgs, DidArgs, EventStudyArgs, IngestArgs,
    ProportionalityArgs, QueueArgs, ReportArgs, SimulateArgs, OUT_DIR_ENV,
};

type CmdResult = Result<(ReportBundle, String), CliError>;

fn section_name(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::Classify(_) => "classify",
        Command::Vcr(_) => "vcr",
        Command::Proportionality(_) => "proportionality",
        Command::Simulate(_) => "simulate",
        Command::Compare(_) => "compare",
        Command::Did(_) => "did",
        Command::EventStudy(_) => "event-study",
        Command::Bootstrap(_) => "bootstrap",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
        Command::Fixtures => "fixtures",
    }
}

/// Executes one command, writes its bundle and returns the stdout summary.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let section = section_name(&cli.command);
    let (config, base) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
            let cfg = RunConfig::parse(&text)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            cfg.validate_paths(section, &base)?;
            (Some(cfg), base)
        }
        None => (None, PathBuf::new()),
    };
    let r = Resolver::new(config.as_ref(), &base, section);
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.as_ref().and_then(|c| c.get("", "out")).map(|v| base.join(v)))
        .unwrap_or_else(|| PathBuf::from("vacancy-out"));

    let (mut bundle, mut summary) = match cli.command {
        Command::Ingest(a) => ingest(&r, a),
        Command::Classify(a) => classify(&r, a),
        Command::Vcr(a) => vcr(&r, a, None),
        Command::Proportionality(a) => proportionality(&r, a),
        Command::Simulate(a) => simulate(&r, a),
        Command::Compare(a) => compare(&r, a),
        Command::Did(a) => did_cmd(&r, a),
        Command::EventStudy(a) => event_study(&r, a),
        Command::Bootstrap(a) => bootstrap(&r, a),
        Command::Synth(a) => synth(&r, a),
        Command::Report(a) => report(&r, a),
        Command::Fixtures => fixture_files(),
    }?;
    if let Some(cfg) = &config {
        bundle = bundle.with_config(cfg);
    }
    bundle.write_to(&out)?;
    let _ = writeln!(summary, "out={}", out.display());
    Ok(summary)
}

fn read_input(path: &Path, bundle: &mut ReportBundle) -> Result<Vec<u8>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    bundle.add_input(path.display().to_string(), &bytes);
    Ok(bytes)
}

fn parse_delimiter(text: &str) -> Result<u8, CliError> {
    match text {
        "tab" | "\\t" => Ok(b'\t'),
        s if s.len() == 1 => Ok(s.as_bytes()[0]),
        other => Err(CliError::Usage(format!("delimiter must be one character or 'tab', got '{other}'"))),
    }
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Numerical(format!("{name} is not finite")))
    }
}

fn ingest(r: &Resolver, a: IngestArgs) -> CmdResult {
    let input = r.req_path(a.input, "input")?;
    let kind: String = r.or(a.kind, "kind", "panel".to_string())?;
    let delimiter = parse_delimiter(&r.or(a.delimiter, "delimiter", ",".to_string())?)?;
    let mut bundle = ReportBundle::new("ingest");
    let bytes = read_input(&input, &mut bundle)?;
    let data = match kind.as_str() {
        "panel" => {
            let mut schema = PanelSchema {
                delimiter,
                ..PanelSchema::default()
            };
            match r.opt(a.group_column, "group_column")?.as_deref() {
                Some("none") => schema.group = None,
                Some(name) => schema.group = Some(name.to_string()),
                None => {}
            }
            if let Some(g) = r.opt(a.default_group, "default_group")? {
                schema.default_group = g.parse::<StaffGroup>()?;
            }
            ingest_panel(bytes.as_slice(), &schema)?
        }
        "records" => ingest_staff_records(
            bytes.as_slice(),
            &RecordSchema {
                delimiter,
                ..RecordSchema::default()
            },
        )?,
        other => return Err(CliError::Usage(format!("unknown ingest kind '{other}'"))),
    };
    bundle.add_file("panel.csv", data.to_csv_string());
    let mut s = String::new();
    let _ = writeln!(s, "institutions={}", data.institutions().len());
    let _ = writeln!(s, "years={}", data.years().len());
    let _ = writeln!(s, "groups={}", data.groups().iter().map(|g| g.as_str()).collect::<Vec<_>>().join(","));
    let _ = writeln!(s, "observations={}", data.observations().len());
    Ok((bundle, s))
}

fn classify(r: &Resolver, a: ClassifyArgs) -> CmdResult {
    let input = r.req_path(a.input, "input")?;
    let delimiter = parse_delimiter(&r.or(a.delimiter, "delimiter", ",".to_string())?)?;
    let mut bundle = ReportBundle::new("classify");
    let bytes = read_input(&input, &mut bundle)?;
    let rows = read_staff_rows(
        bytes.as_slice(),
        &RecordSchema {
            delimiter,
            ..RecordSchema::default()
        },
    )?;
    let mut csv = String::from("institution,year,person_id,group\n");
    let mut counts = [0usize; 3];
    for row in &rows {
        let g = classify_staff_record(&row.record);
        counts[g as usize] += 1;
        let _ = writeln!(csv, "{},{},{},{}", row.institution, row.year.start_year(), row.person_id, g);
    }
    bundle.add_file("classified.csv", csv);
    let s = format!("eac={}\near={}\nunclassified={}\n", counts[0], counts[1], counts[2]);
    Ok((bundle, s))
}

fn queue_params(r: &Resolver, a: &QueueArgs) -> Result<(QueueParameters, UpliftConvention), CliError> {
    let params = QueueParameters {
        appointment_age: r.req(a.appointment_age, "appointment_age")?,
        mandatory_age: r.req(a.mandatory_age, "mandatory_age")?,
        mean_extension: r.req(a.extension, "extension")?,
        other_cause_share: r.or(a.other_share, "other_share", 0.0)?,
        voluntary_share: r.or(a.voluntary_share, "voluntary_share", 0.0)?,
    };
    let convention = r.or(a.convention.clone(), "convention", "mandated-career".to_string())?;
    let convention = convention.parse::<UpliftConvention>().map_err(CliError::Usage)?;
    Ok((params, convention))
}

fn vcr(r: &Resolver, a: QueueArgs, band: Option<(f64, f64)>) -> CmdResult {
    let (params, convention) = queue_params(r, &a)?;
    let result = vcr_uplift_with(&params, convention)?;
    let mut header = String::from("appointment_age,mandatory_age,extension,other_share,voluntary_share,convention,career_length,gross_uplift,after_other_causes,net_uplift");
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        params.appointment_age,
        params.mandatory_age,
        params.mean_extension,
        params.other_cause_share,
        params.voluntary_share,
        convention.as_str(),
        result.career_length,
        result.gross_uplift,
        result.after_other_causes,
        result.net_uplift
    );
    let mut s = String::new();
    let _ = writeln!(s, "gross_uplift={:.4}", result.gross_uplift);
    let _ = writeln!(s, "after_other_causes={:.4}", result.after_other_causes);
    let _ = writeln!(s, "net_uplift={:.4}", result.net_uplift);
    let name = match band {
        Some((lo, hi)) => {
            if !(lo <= hi) {
                return Err(CliError::Usage(format!("band low {lo} exceeds high {hi}")));
            }
            let verdict = proportionality_verdict(&result, (lo, hi));
            header.push_str(",band_low,band_high,verdict");
            let _ = write!(row, ",{lo},{hi},{verdict}");
            let _ = writeln!(s, "verdict={verdict}");
            "proportionality"
        }
        None => "vcr",
    };
    let mut bundle = ReportBundle::new(name);
    bundle.add_file("uplift.csv", format!("{header}\n{row}\n"));
    Ok((bundle, s))
}

fn proportionality(r: &Resolver, a: ProportionalityArgs) -> CmdResult {
    let lo = r.or(a.band_low, "band_low", DEFAULT_BAND.0)?;
    let hi = r.or(a.band_high, "band_high", DEFAULT_BAND.1)?;
    vcr(r, a.queue, Some((lo, hi)))
}

fn load_scenario(path: &Path, bundle: &mut ReportBundle) -> Result<PolicyScenario, CliError> {
    let bytes = read_input(path, bundle)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
    Ok(PolicyScenario::parse(&text)?)
}

fn simulate(r: &Resolver, a: SimulateArgs) -> CmdResult {
    let path = r.req_path(a.scenario, "scenario")?;
    let years: u32 = r.or(a.years, "years", 60)?;
    let mut bundle = ReportBundle::new("simulate");
    let scenario = load_scenario(&path, &mut bundle)?;
    let trace = cohort::run(&scenario, years, &cohort::initialize_uniform(&scenario)?)?;
    bundle.add_file("trace.csv", trace.to_csv());
    bundle.add_file(
        "vcr.svg",
        LineChart {
            title: format!("Vacancy creation rate, {}", scenario.name),
            x_label: "simulated year".into(),
            y_label: "VCR".into(),
            series: vec![Series::new(
                &scenario.name,
                trace.records.iter().map(|r| (r.year_index as f64, r.vcr)).collect(),
            )],
            ..Default::default()
        }
        .to_svg(),
    );
    let last = trace.records.last().expect("at least one year");
    let mut s = String::new();
    let _ = writeln!(s, "scenario={}", scenario.name);
    let _ = writeln!(s, "final_vcr={}", last.vcr);
    let _ = writeln!(s, "final_hires={}", last.hires);
    let span = cohort::longest_residence(&scenario)? as usize;
    if trace.records.len() >= span {
        let window = trace.records.len() - span..trace.records.len();
        let summary = cohort::summarize_window(&trace, window)?;
        let _ = writeln!(s, "window_vcr={}", summary.vcr);
        let _ = writeln!(s, "window_mean_career={}", summary.mean_career_length);
        let _ = writeln!(s, "littles_residual={:e}", summary.littles_residual);
    }
    Ok((bundle, s))
}

fn compare(r: &Resolver, a: CompareArgs) -> CmdResult {
    let base_path = r.req_path(a.baseline, "baseline")?;
    let alt_path = r.req_path(a.alternative, "alternative")?;
    let years: u32 = r.or(a.years, "years", 60)?;
    let mut bundle = ReportBundle::new("compare");
    let baseline = load_scenario(&base_path, &mut bundle)?;
    let alternative = load_scenario(&alt_path, &mut bundle)?;
    let cmp = cohort::compare_scenarios(&baseline, &alternative, years)?;
    bundle.add_file("comparison.csv", cmp.to_csv());
    let mut decades = String::from("decade,mean_hires_delta,mean_abs_hires_delta\n");
    for (i, (m, abs)) in cmp.decade_means.iter().zip(&cmp.decade_abs_means).enumerate() {
        let _ = writeln!(decades, "{},{m},{abs}", i + 1);
    }
    bundle.add_file("decades.csv", decades);
    bundle.add_file(
        "hires.svg",
        LineChart {
            title: "Hires per year".into(),
            x_label: "simulated year".into(),
            y_label: "hires".into(),
            series: [&cmp.trace_a, &cmp.trace_b]
                .iter()
                .map(|t| Series::new(&t.scenario, t.records.iter().map(|r| (r.year_index as f64, r.hires)).collect()))
                .collect(),
            ..Default::default()
        }
        .to_svg(),
    );
    let mut s = String::new();
    let _ = writeln!(s, "steady_vcr_baseline={}", cmp.steady_a.vcr);
    let _ = writeln!(s, "steady_vcr_alternative={}", cmp.steady_b.vcr);
    let _ = writeln!(s, "steady_state_hires_delta={}", cmp.steady_state_delta);
    if let Some(first) = cmp.decade_means.first() {
        let _ = writeln!(s, "first_decade_mean_delta={first}");
    }
    Ok((bundle, s))
}

fn parse_year(text: &str) -> Result<AcademicYear, CliError> {
    text.parse::<AcademicYear>().map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_range(text: &str) -> Result<YearRange, CliError> {
    let (a, b) = text
        .split_once('-')
        .filter(|(a, _)| !a.is_empty())
        .ok_or_else(|| CliError::Usage(format!("expected FIRST-LAST, got '{text}'")))?;
    Ok(YearRange::new(parse_year(a.trim())?, parse_year(b.trim())?))
}

struct LoadedDesign {
    data: PanelDataset,
    spec: DesignSpec,
    adjust: String,
}

fn load_design(r: &Resolver, a: DesignArgs, bundle: &mut ReportBundle) -> Result<LoadedDesign, CliError> {
    let path = r.req_path(a.panel, "panel")?;
    let treated: String = r.req(a.treated, "treated")?;
    let mut spec = DesignSpec::new(treated);
    if let Some(y) = r.opt(a.policy_year, "policy_year")? {
        spec.policy_year = parse_year(&y)?;
        spec.base_year = spec.policy_year;
    }
    if let Some(y) = r.opt(a.base_year, "base_year")? {
        spec.base_year = parse_year(&y)?;
    }
    if let Some(g) = r.opt(a.group, "group")? {
        spec.group = g.parse::<StaffGroup>()?;
    }
    if let Some(o) = r.opt(a.outcome, "outcome")? {
        spec.outcome = o.parse::<Outcome>().map_err(CliError::Usage)?;
    }
    if let Some(k) = r.opt(a.se, "se")? {
        spec.se_kind = k.parse::<SeKind>().map_err(CliError::Usage)?;
    }
    if let Some(w) = r.opt(a.pre, "pre")? {
        spec.pre_window = Some(parse_range(&w)?);
    }
    if let Some(w) = r.opt(a.post, "post")? {
        spec.post_window = Some(parse_range(&w)?);
    }
    let adjust = r.or(a.adjust, "adjust", "none".to_string())?;
    let bytes = read_input(&path, bundle)?;
    let data = ingest_panel(bytes.as_slice(), &PanelSchema::default())?;
    Ok(LoadedDesign { data, spec, adjust })
}

fn outcome_panel(d: &LoadedDesign, bundle: &mut ReportBundle) -> Result<OutcomePanel, CliError> {
    let panel = OutcomePanel::from_dataset(&d.data, &d.spec)?;
    match d.adjust.as_str() {
        "none" => Ok(panel),
        "detrend" => {
            let (p, fit) = did::detrend_pre(&panel)?;
            bundle.log(format!("warning: {}", fit.warning));
            Ok(p)
        }
        mode @ ("student-pooled" | "student-per-unit") => {
            let mode: StudentAdjustMode = mode.trim_start_matches("student-").parse().map_err(CliError::Usage)?;
            let (p, fit) = did::student_adjust(&panel, mode)?;
            bundle.log(format!("student adjustment beta = {}", fit.beta));
            Ok(p)
        }
        other => Err(CliError::Usage(format!("unknown adjustment '{other}'"))),
    }
}

fn did_cmd(r: &Resolver, a: DidArgs) -> CmdResult {
    let mut bundle = ReportBundle::new("did");
    let design = load_design(r, a.design, &mut bundle)?;
    let method = match r.or(a.method, "method", "within".to_string())?.as_str() {
        "within" => FitMethod::Within,
        "dummy" => FitMethod::Dummy,
        other => return Err(CliError::Usage(format!("unknown method '{other}'"))),
    };
    let panel = outcome_panel(&design, &mut bundle)?;
    let fit = did::fit_twfe_did_with(&panel, method)?;
    let means = did::did_of_means(&panel)?;
    finite("delta", fit.delta)?;
    let se = &fit.standard_errors;
    let mut csv = String::from("delta,se,se_kind,p_value,se_iid,se_hc1,se_cluster,did_of_means,n_obs,adjust\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{}",
        fit.delta, fit.se_delta, fit.se_kind, fit.p_value, se.iid, se.hc_robust, se.cluster_by_unit, means, fit.n_obs, design.adjust
    );
    bundle.add_file("did.csv", csv);
    let mut effects = String::from("kind,label,effect\n");
    for (u, e) in &fit.unit_effects {
        let _ = writeln!(effects, "unit,{u},{e}");
    }
    for (y, e) in &fit.time_effects {
        let _ = writeln!(effects, "year,{},{e}", y.start_year());
    }
    bundle.add_file("fixed_effects.csv", effects);
    let mut s = String::new();
    let _ = writeln!(s, "delta={}", fit.delta);
    let _ = writeln!(s, "se={}", fit.se_delta);
    let _ = writeln!(s, "se_kind={}", fit.se_kind);
    let _ = writeln!(s, "p_value={}", fit.p_value);
    let _ = writeln!(s, "did_of_means={means}");
    Ok((bundle, s))
}

fn event_study(r: &Resolver, a: EventStudyArgs) -> CmdResult {
    let mut bundle = ReportBundle::new("event-study");
    let design = load_design(r, a.design, &mut bundle)?;
    let pivot: Pivot = r
        .or(a.pivot, "pivot", "base-year".to_string())?
        .parse()
        .map_err(CliError::Usage)?;
    let panel = outcome_panel(&design, &mut bundle)?;
    let es = did::event_study(&panel, pivot)?;
    bundle.add_file("event_study.csv", es.to_csv());
    let x = |y: AcademicYear| y.start_year() as f64;
    bundle.add_file(
        "event_study.svg",
        LineChart {
            title: format!("Event study, {}", panel.treated_unit()),
            x_label: "academic year".into(),
            y_label: "treated minus control".into(),
            series: vec![Series::new("estimate", es.points.iter().map(|p| (x(p.year), p.estimate)).collect())],
            band: es.points.iter().map(|p| (x(p.year), p.lower, p.upper)).collect(),
            marker_x: Some(x(panel.policy_year())),
            zero_line: true,
        }
        .to_svg(),
    );
    bundle.log("confidence bounds rest on a single treated observation per year");
    let mut s = String::new();
    for p in &es.points {
        let _ = writeln!(s, "estimate_{}={}", p.year.start_year(), p.estimate);
    }
    Ok((bundle, s))
}

fn bootstrap(r: &Resolver, a: BootstrapArgs) -> CmdResult {
    let seed: u64 = r.req(a.seed, "seed")?;
    let replications: usize = r.or(a.replications, "replications", 999)?;
    let level: ClusterLevel = r
        .or(a.cluster_level, "cluster_level", "unit".to_string())?
        .parse()
        .map_err(CliError::Usage)?;
    let threads: Option<usize> = r.opt(a.threads, "threads")?;
    let mut bundle = ReportBundle::new("bootstrap").with_seed(seed);
    let design = load_design(r, a.design, &mut bundle)?;
    let panel = outcome_panel(&design, &mut bundle)?;
    let options = BootstrapOptions {
        cluster_level: level,
        ..BootstrapOptions::new(replications, seed)
    };
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(|| did::wild_cluster_bootstrap(&panel, options))?,
        None => did::wild_cluster_bootstrap(&panel, options)?,
    };
    bundle.add_file(
        "bootstrap.csv",
        format!(
            "delta_hat,replications,p_value,seed,cluster_level\n{},{},{},{},{:?}\n",
            result.delta_hat, result.replications, result.p_value, result.seed, result.cluster_level
        ),
    );
    bundle.add_file("replicates.csv", result.to_csv());
    let mut s = String::new();
    let _ = writeln!(s, "delta={}", result.delta_hat);
    let _ = writeln!(s, "p_value={}", result.p_value);
    let _ = writeln!(s, "replications={}", result.replications);
    let _ = writeln!(s, "seed={seed}");
    Ok((bundle, s))
}

fn synth(r: &Resolver, a: DesignArgs) -> CmdResult {
    let mut bundle = ReportBundle::new("synth");
    let design = load_design(r, a, &mut bundle)?;
    let panel = outcome_panel(&design, &mut bundle)?;
    let result = did::synthetic_control(&panel, SynthOptions::default())?;
    finite("pre-fit RMSE", result.pre_fit_rmse)?;
    if !result.converged {
        bundle.log(format!("warning: optimiser stopped after {} iterations", result.iterations));
    }
    bundle.add_file("weights.csv", result.weights_csv());
    bundle.add_file("gap.csv", result.gap_csv());
    let x = |y: AcademicYear| y.start_year() as f64;
    bundle.add_file(
        "gap.svg",
        LineChart {
            title: format!("{} minus synthetic control", panel.treated_unit()),
            x_label: "academic year".into(),
            y_label: "gap".into(),
            series: vec![Series::new("gap", result.gap_series.iter().map(|(y, g)| (x(*y), *g)).collect())],
            marker_x: Some(x(panel.policy_year())),
            zero_line: true,
            ..Default::default()
        }
        .to_svg(),
    );
    let mut s = String::new();
    let _ = writeln!(s, "pre_fit_rmse={}", result.pre_fit_rmse);
    let _ = writeln!(s, "iterations={}", result.iterations);
    let _ = writeln!(s, "converged={}", result.converged);
    for (u, w) in result.weights.iter().filter(|(_, w)| *w > 1e-6) {
        let _ = writeln!(s, "weight_{u}={w}");
    }
    Ok((bundle, s))
}

fn report(r: &Resolver, a: ReportArgs) -> CmdResult {
    let defaults = ReportOptions::default();
    let options = ReportOptions {
        seed: r.req(a.seed, "seed")?,
        replications: r.or(a.replications, "replications", defaults.replications)?,
        horizon: r.or(a.horizon, "horizon", defaults.horizon)?,
    };
    let rep = emit_reproduction_report(&options)?;
    let mut s = String::new();
    for row in &rep.ladder {
        let _ = writeln!(
            s,
            "ladder[{}]: gross={:.4} after_other={:.4} net={:.4}",
            row.label, row.result.gross_uplift, row.result.after_other_causes, row.result.net_uplift
        );
    }
    let _ = writeln!(s, "treated_mean={}", rep.treated_mean);
    let _ = writeln!(s, "donor_mean={}", rep.donor_mean);
    let _ = writeln!(s, "noiseless_delta={}", rep.noiseless_delta);
    if let Some(row) = rep.did_table.first() {
        let _ = writeln!(s, "p_hc1={}", row.p_hc);
        let _ = writeln!(s, "p_wild_bootstrap={}", row.p_bootstrap);
    }
    Ok((rep.bundle, s))
}

fn fixture_files() -> CmdResult {
    let mut bundle = ReportBundle::new("fixtures").with_seed(fixtures::FIXTURE_SEED);
    let mut s = String::new();
    for (name, text) in fixtures::fixture_files() {
        let _ = writeln!(s, "wrote={name}");
        bundle.add_file(name, text);
    }
    Ok((bundle, s))
}
