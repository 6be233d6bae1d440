#![allow(dead_code)]

use vacancy_core::did::{DesignSpec, OutcomePanel};
use vacancy_core::panel::AcademicYear;

pub fn years_from(first: i32, n: usize) -> Vec<AcademicYear> {
    (0..n).map(|t| AcademicYear::new(first + t as i32).unwrap()).collect()
}

/// Panel from `values[u][t]`, units `U00..`, years from 2007.
pub fn panel_with_fte(values: &[Vec<f64>], fte: &[Vec<f64>], treated: usize, policy: i32) -> OutcomePanel {
    let n_years = values[0].len();
    let units: Vec<String> = (0..values.len()).map(|u| format!("U{u:02}")).collect();
    let mut spec = DesignSpec::new(units[treated].clone());
    spec.policy_year = AcademicYear::new(policy).unwrap();
    spec.base_year = spec.policy_year;
    OutcomePanel::from_matrix(
        units,
        years_from(2007, n_years),
        values.iter().flatten().copied().collect(),
        fte.iter().flatten().copied().collect(),
        &spec,
    )
    .unwrap()
}

pub fn panel(values: &[Vec<f64>], treated: usize, policy: i32) -> OutcomePanel {
    let fte: Vec<Vec<f64>> = values.iter().map(|r| vec![1000.0; r.len()]).collect();
    panel_with_fte(values, &fte, treated, policy)
}

/// Difference of double means computed directly from the rows.
pub fn did_oracle(values: &[Vec<f64>], treated: usize, n_pre: usize) -> f64 {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mut c_pre, mut c_post) = (0.0, 0.0);
    let n_controls = (values.len() - 1) as f64;
    for (u, row) in values.iter().enumerate() {
        if u != treated {
            c_pre += mean(&row[..n_pre]) / n_controls;
            c_post += mean(&row[n_pre..]) / n_controls;
        }
    }
    let t = &values[treated];
    (mean(&t[n_pre..]) - mean(&t[..n_pre])) - (c_post - c_pre)
}
