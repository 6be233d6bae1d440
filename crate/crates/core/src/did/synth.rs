//! Synthetic control: the convex combination of donor units that best
//! matches the treated unit over the pre window.
//!
//! Solved by accelerated projected gradient (FISTA with adaptive restart) on
//! `|| y - X w ||^2` over the probability simplex, starting from uniform
//! weights.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{DidError, OutcomePanel};
use crate::panel::AcademicYear;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub max_iterations: usize,
    /// Stop once the projected-gradient step in weight space is below this.
    pub tolerance: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticControlResult {
    pub weights: Vec<(String, f64)>,
    pub pre_fit_rmse: f64,
    /// Treated minus synthetic, every panel year.
    pub gap_series: Vec<(AcademicYear, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl SyntheticControlResult {
    pub fn weight_of(&self, unit: &str) -> Option<f64> {
        self.weights.iter().find(|(u, _)| u == unit).map(|(_, w)| *w)
    }

    pub fn weights_csv(&self) -> String {
        let mut out = String::from("donor,weight\n");
        for (u, w) in &self.weights {
            out.push_str(&format!("{u},{w}\n"));
        }
        out
    }

    pub fn gap_csv(&self) -> String {
        let mut out = String::from("year,gap\n");
        for (y, g) in &self.gap_series {
            out.push_str(&format!("{},{g}\n", y.start_year()));
        }
        out
    }
}

/// Euclidean projection onto `{w >= 0, sum w = 1}`.
pub(crate) fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Synthetic control using every non-treated unit as a donor.
pub fn synthetic_control(panel: &OutcomePanel, options: SynthOptions) -> Result<SyntheticControlResult, DidError> {
    let donors: Vec<usize> = panel.controls().collect();
    synthetic_control_with_donors(panel, &donors, options)
}

/// Synthetic control restricted to the given donor unit indices.
pub fn synthetic_control_with_donors(
    panel: &OutcomePanel,
    donors: &[usize],
    options: SynthOptions,
) -> Result<SyntheticControlResult, DidError> {
    if donors.is_empty() {
        return Err(DidError::NoDonors);
    }
    if donors.contains(&panel.treated()) {
        return Err(DidError::InvalidDesign("treated unit cannot be a donor".into()));
    }
    let pre = panel.pre();
    if pre.is_empty() {
        return Err(DidError::EmptySelection("pre window".into()));
    }
    let tr = panel.treated();
    let x = DMatrix::from_fn(pre.len(), donors.len(), |i, j| panel.value(donors[j], pre[i]));
    let y = DVector::from_iterator(pre.len(), pre.iter().map(|&t| panel.value(tr, t)));
    let q = x.transpose() * &x;
    let c = x.transpose() * &y;

    let lipschitz = 2.0 * SymmetricEigen::new(q.clone()).eigenvalues.max().max(0.0);
    let objective = |w: &DVector<f64>| (&y - &x * w).norm_squared();
    let grad = |w: &DVector<f64>| (&q * w - &c) * 2.0;

    let j = donors.len();
    let mut w = DVector::from_element(j, 1.0 / j as f64);
    let mut iterations = 0;
    let mut converged = j == 1 || lipschitz == 0.0;
    if !converged {
        let step = 1.0 / lipschitz;
        let mut z = w.clone();
        let mut momentum = 1.0f64;
        let mut f_prev = objective(&w);
        while iterations < options.max_iterations {
            iterations += 1;
            let w_next = project_simplex(&(&z - grad(&z) * step));
            let f_next = objective(&w_next);
            if f_next > f_prev {
                // restart momentum from the last iterate
                momentum = 1.0;
                z = w.clone();
                continue;
            }
            let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            z = &w_next + (&w_next - &w) * ((momentum - 1.0) / m_next);
            momentum = m_next;
            w = w_next;
            f_prev = f_next;

            let pg = &w - project_simplex(&(&w - grad(&w) * step));
            if pg.norm() < options.tolerance {
                converged = true;
                break;
            }
        }
    }

    let weights: Vec<(String, f64)> = donors
        .iter()
        .zip(w.iter())
        .map(|(&d, &wt)| (panel.units()[d].clone(), wt))
        .collect();
    let gap_series: Vec<(AcademicYear, f64)> = (0..panel.n_years())
        .map(|t| {
            let synth: f64 = donors.iter().zip(w.iter()).map(|(&d, wt)| wt * panel.value(d, t)).sum();
            (panel.years()[t], panel.value(tr, t) - synth)
        })
        .collect();
    let pre_fit_rmse = (pre.iter().map(|&t| gap_series[t].1.powi(2)).sum::<f64>() / pre.len() as f64).sqrt();
    Ok(SyntheticControlResult {
        weights,
        pre_fit_rmse,
        gap_series,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::panel;
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_simplex(&DVector::from_vec(vec![0.2, 1.5, -0.3]));
        assert!((p.sum() - 1.0).abs() < 1e-15);
        assert_eq!(p, DVector::from_vec(vec![0.0, 1.0, 0.0]));
        let p = project_simplex(&DVector::from_vec(vec![0.5, 0.5, 0.5]));
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_identical_donor() {
        let p = panel(&[vec![0.03, 0.02, 0.04, 0.05], vec![0.03, 0.02, 0.04, 0.09]], 0, 2010);
        let r = synthetic_control(&p, SynthOptions::default()).unwrap();
        assert_eq!(r.weights[0].1, 1.0);
        assert_eq!(r.pre_fit_rmse, 0.0);
        assert!((r.gap_series[3].1 + 0.04).abs() < 1e-15);
    }

    #[test]
    fn no_donors() {
        let p = panel(&[vec![0.0, 1.0], vec![1.0, 2.0]], 0, 2008);
        assert_eq!(
            synthetic_control_with_donors(&p, &[], SynthOptions::default()),
            Err(DidError::NoDonors)
        );
    }
}
