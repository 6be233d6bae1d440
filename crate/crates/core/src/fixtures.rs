//! Bundled fixtures, regenerated deterministically from a fixed seed.
//!
//! * a noiseless panel `r = alpha_i + gamma_t + 0.016 D` in exact
//!   thousandths, so integer counts over a headcount of 1000 reproduce it;
//! * a calibrated 23-institution panel whose treated unit averages a job
//!   creation rate of 0.03 and whose donors average 0.05 over 2007–2021;
//! * two cohort scenarios: a mandatory retirement age of 67, and no mandate
//!   with everyone retiring at 70.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cohort::{AgeSchedule, PolicyScenario};
use crate::panel::{AcademicYear, PanelDataset, PanelObservation, StaffGroup};

pub const FIXTURE_SEED: u64 = 20_240_611;
pub const TREATED: &str = "CAM";
pub const FIRST_YEAR: i32 = 2007;
pub const LAST_YEAR: i32 = 2021;
pub const POLICY_YEAR: i32 = 2012;
pub const INJECTED_DELTA: f64 = 0.016;
pub const TREATED_MEAN: f64 = 0.03;
pub const DONOR_MEAN: f64 = 0.05;
pub const N_DONORS: usize = 22;

pub fn donor_names() -> Vec<String> {
    (1..=N_DONORS).map(|i| format!("R{i:02}")).collect()
}

fn years() -> impl Iterator<Item = AcademicYear> {
    (FIRST_YEAR..=LAST_YEAR).map(|y| AcademicYear::new(y).expect("fixture years in range"))
}

/// `alpha_i + gamma_t + 0.016 D_it` in thousandths, headcount 1000.
pub fn noiseless_did_panel() -> PanelDataset {
    let mut units = vec![TREATED.to_string()];
    units.extend(donor_names());
    // thousandths
    let gamma: [i64; 15] = [0, 2, -1, 3, 1, -2, 0, 4, 2, -1, 1, 3, 0, -2, 1];
    let mut obs = Vec::new();
    for (u, unit) in units.iter().enumerate() {
        let alpha = if u == 0 { 20 } else { 35 + (u as i64 * 7) % 25 };
        for (t, year) in years().enumerate() {
            let d = if u == 0 && year.start_year() >= POLICY_YEAR { 16 } else { 0 };
            let new = alpha + gamma[t] + d;
            obs.push(PanelObservation {
                institution: unit.clone(),
                year,
                group: StaffGroup::Eac,
                headcount: 1000,
                new_appointments: new as u64,
                student_fte: 20_000.0 + 500.0 * u as f64 + 250.0 * t as f64,
            });
        }
    }
    PanelDataset::new(
        obs,
        vec![format!(
            "synthetic noiseless panel: rate = unit effect + year effect + {INJECTED_DELTA} for {TREATED} from {POLICY_YEAR}"
        )],
    )
    .expect("fixture is balanced")
}

/// Integer counts with the given total, as close as possible to `targets`
/// (largest-remainder rounding).
fn apportion(targets: &[f64], total: u64) -> Vec<u64> {
    let clipped: Vec<f64> = targets.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    let scaled: Vec<f64> = if sum > 0.0 {
        clipped.iter().map(|v| v * total as f64 / sum).collect()
    } else {
        vec![total as f64 / targets.len() as f64; targets.len()]
    };
    let mut counts: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let mut remaining = total - counts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

/// Calibrated panel: treated mean exactly 0.03, donor average exactly 0.05.
///
/// Each unit keeps a constant headcount (a multiple of 200) so that its
/// 15-year total of new appointments is an integer. The treated unit sits
/// below the donors with a modest post-policy improvement; donors share
/// common year shocks plus idiosyncratic noise. With a single treated
/// institution the iid and heteroskedasticity-robust p-values for the DiD
/// coefficient are far smaller than the wild cluster bootstrap p-value.
pub fn calibrated_panel(seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let n_pre = (POLICY_YEAR - FIRST_YEAR) as usize;
    let n_years = (LAST_YEAR - FIRST_YEAR + 1) as usize;
    let common: Vec<f64> = (0..n_years).map(|_| 0.002 * noise.sample(&mut rng)).collect();

    let mut obs = Vec::new();
    let mut push_unit = |name: &str,
                         headcount: u64,
                         pre_mean: f64,
                         post_mean: f64,
                         sd: f64,
                         fte_base: f64,
                         rng: &mut ChaCha8Rng| {
        let h = headcount as f64;
        let mut targets = Vec::with_capacity(n_years);
        for (t, shock) in common.iter().enumerate() {
            let mean = if t < n_pre { pre_mean } else { post_mean };
            targets.push((mean + shock + sd * noise.sample(rng)) * h);
        }
        // the 15-year total is an exact integer by construction of the means;
        // the pre/post split is left to the noise
        let total = ((pre_mean * n_pre as f64 + post_mean * (n_years - n_pre) as f64) * h).round() as u64;
        let counts = apportion(&targets, total);
        let mut fte = fte_base;
        for (t, year) in years().enumerate() {
            if t > 0 {
                fte *= 1.0 + 0.02 + 0.01 * noise.sample(rng);
            }
            obs.push(PanelObservation {
                institution: name.to_string(),
                year,
                group: StaffGroup::Eac,
                headcount,
                new_appointments: counts[t],
                student_fte: (fte * 10.0).round() / 10.0,
            });
        }
    };

    // treated: 0.026 pre, 0.032 post, overall (5 * 0.026 + 10 * 0.032) / 15 = 0.03
    push_unit(TREATED, 2000, 0.026, 0.032, 0.003, 24_000.0, &mut rng);
    for (i, name) in donor_names().iter().enumerate() {
        // offsets +-1..+-11 thousandths, summing to zero across donors
        let k = (i / 2 + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        let mean = DONOR_MEAN + 0.001 * k;
        let headcount = 800 + 200 * (i as u64 % 7);
        // donors drift down slightly after the policy year, keeping the mean
        let (pre, post) = (mean + 0.002, mean - 0.001);
        let fte_base = 12_000.0 + 1_500.0 * (i % 9) as f64;
        push_unit(name, headcount, pre, post, 0.006, fte_base, &mut rng);
    }

    PanelDataset::new(
        obs,
        vec![
            format!("synthetic calibrated panel, seed {seed}"),
            format!(
                "{TREATED} averages {TREATED_MEAN} and the donor average is {DONOR_MEAN} over {FIRST_YEAR}-{LAST_YEAR}"
            ),
            "new_appointments counts all hires; no distinction between vacancies and new posts".into(),
        ],
    )
    .expect("fixture is balanced")
}

pub fn scenario_mandate_67() -> PolicyScenario {
    PolicyScenario::simple("mandate-67", 40, Some(67), 270)
}

/// No mandatory age; everyone retires on reaching 70.
pub fn scenario_abolished() -> PolicyScenario {
    let mut s = PolicyScenario::simple("abolished-plus-3", 40, None, 270);
    s.voluntary_retirement_hazard = AgeSchedule::new().with(70, 1.0);
    s
}

/// Relative paths and contents of every bundled fixture file.
pub fn fixture_files() -> Vec<(String, String)> {
    vec![
        ("noiseless_did.csv".into(), noiseless_did_panel().to_csv_string()),
        ("calibrated_panel.csv".into(), calibrated_panel(FIXTURE_SEED).to_csv_string()),
        ("mandate_67.scenario".into(), scenario_mandate_67().to_text()),
        ("abolished_plus_3.scenario".into(), scenario_abolished().to_text()),
    ]
}
