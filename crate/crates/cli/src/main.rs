//! `vacancy`: command-line front end for the vacancy toolkit.

mod commands;
mod error;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "VACANCY_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "vacancy", version, about = "Vacancy creation under retirement policies")]
pub struct Cli {
    /// Configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $VACANCY_OUT_DIR, then `out` in the
    /// config, then ./vacancy-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a panel or staff-record file and write a canonical panel CSV.
    Ingest(IngestArgs),
    /// Classify staff records into EAC / EAR / unclassified.
    Classify(ClassifyArgs),
    /// Relative vacancy-creation uplift attributable to a mandate.
    Vcr(QueueArgs),
    /// Uplift plus the verdict against a reference band.
    Proportionality(ProportionalityArgs),
    /// Run one cohort scenario.
    Simulate(SimulateArgs),
    /// Run two scenarios from a shared start and difference them.
    Compare(CompareArgs),
    /// Two-way fixed-effects difference in differences.
    Did(DidArgs),
    /// Per-year treated-minus-control contrasts.
    EventStudy(EventStudyArgs),
    /// Wild cluster bootstrap p-value for the DiD coefficient.
    Bootstrap(BootstrapArgs),
    /// Synthetic-control weights and gap series.
    Synth(DesignArgs),
    /// Full reproduction report over the bundled fixtures.
    Report(ReportArgs),
    /// Regenerate the bundled fixture files.
    Fixtures,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `panel` (aggregated rows) or `records` (individual staff records).
    #[arg(long)]
    pub kind: Option<String>,
    /// Name of the staff-group column, or `none` when the file has none.
    #[arg(long)]
    pub group_column: Option<String>,
    /// Group assigned to every row when there is no group column.
    #[arg(long)]
    pub default_group: Option<String>,
    /// Field delimiter: `,`, `tab` or any single character.
    #[arg(long)]
    pub delimiter: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub delimiter: Option<String>,
}

#[derive(Debug, Args)]
pub struct QueueArgs {
    #[arg(long)]
    pub appointment_age: Option<f64>,
    #[arg(long)]
    pub mandatory_age: Option<f64>,
    #[arg(long)]
    pub extension: Option<f64>,
    #[arg(long)]
    pub other_share: Option<f64>,
    #[arg(long)]
    pub voluntary_share: Option<f64>,
    /// `mandated-career` (e / career) or `extended-career` (e / (career + e)).
    #[arg(long)]
    pub convention: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProportionalityArgs {
    #[command(flatten)]
    pub queue: QueueArgs,
    #[arg(long)]
    pub band_low: Option<f64>,
    #[arg(long)]
    pub band_high: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub years: Option<u32>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Status-quo scenario; both runs start from its uniform state.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub alternative: Option<PathBuf>,
    #[arg(long)]
    pub years: Option<u32>,
}

#[derive(Debug, Args, Clone)]
pub struct DesignArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub treated: Option<String>,
    #[arg(long)]
    pub policy_year: Option<String>,
    #[arg(long)]
    pub base_year: Option<String>,
    #[arg(long)]
    pub group: Option<String>,
    /// `rate` or `log_headcount`.
    #[arg(long)]
    pub outcome: Option<String>,
    /// `iid`, `hc1` or `cluster`.
    #[arg(long)]
    pub se: Option<String>,
    /// Pre window as `FIRST-LAST`, e.g. `2007-2011`.
    #[arg(long)]
    pub pre: Option<String>,
    /// Post window as `FIRST-LAST`.
    #[arg(long)]
    pub post: Option<String>,
    /// `none`, `detrend`, `student-pooled` or `student-per-unit`.
    #[arg(long)]
    pub adjust: Option<String>,
}

#[derive(Debug, Args)]
pub struct DidArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// `within` or `dummy`.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct EventStudyArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// `base-year` or `pre-mean`.
    #[arg(long)]
    pub pivot: Option<String>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `unit` or `observation`.
    #[arg(long)]
    pub cluster_level: Option<String>,
    /// Worker threads for the replicates (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub horizon: Option<u32>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            let first = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(first));
            eprint!("{}", e.render());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
