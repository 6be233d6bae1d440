//! Wild cluster bootstrap of the two-way fixed-effects DiD coefficient with
//! the null `delta = 0` imposed.
//!
//! Each replicate multiplies every cluster's restricted residuals by one
//! Rademacher draw, adds them back to the restricted fit and re-estimates
//! delta. Replicate `b` draws from ChaCha stream `b` of the user seed, so the
//! result does not depend on how replicates are scheduled across threads.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::twfe::{two_way_demean, WindowDesign};
use super::{DidError, OutcomePanel};

pub const MIN_REPLICATIONS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightScheme {
    #[default]
    Rademacher,
}

/// Level at which sign flips are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterLevel {
    /// One draw per unit, shared by all of its years.
    #[default]
    Unit,
    /// One draw per unit-year cell.
    Observation,
}

impl std::str::FromStr for ClusterLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(ClusterLevel::Unit),
            "observation" | "obs" => Ok(ClusterLevel::Observation),
            other => Err(format!("unknown cluster level '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    pub cluster_level: ClusterLevel,
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            cluster_level: ClusterLevel::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub delta_hat: f64,
    pub replications: usize,
    /// `(1 + #{|delta*| >= |delta_hat|}) / (R + 1)`.
    pub p_value: f64,
    pub replicate_deltas: Vec<f64>,
    pub seed: u64,
    pub weight_scheme: WeightScheme,
    pub cluster_level: ClusterLevel,
}

impl BootstrapResult {
    /// Replicate dump, one row per replicate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,delta\n");
        for (b, d) in self.replicate_deltas.iter().enumerate() {
            out.push_str(&format!("{b},{d}\n"));
        }
        out
    }
}

/// p-value from replicate statistics.
pub fn bootstrap_p_value(delta_hat: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|d| d.abs() >= delta_hat.abs()).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

pub fn wild_cluster_bootstrap(
    panel: &OutcomePanel,
    options: BootstrapOptions,
) -> Result<BootstrapResult, DidError> {
    if options.replications < MIN_REPLICATIONS {
        return Err(DidError::TooFewReplications(options.replications));
    }
    let design = WindowDesign::new(panel)?;
    let n_u = design.n_units();
    let n_t = design.years.len();
    let delta_hat = design.delta(&design.y);

    // restricted model: unit and year effects only
    let restricted_resid = two_way_demean(&design.y, n_u, n_t);
    let restricted_fit: Vec<f64> = design
        .y
        .iter()
        .zip(&restricted_resid)
        .map(|(y, e)| y - e)
        .collect();

    let replicate_deltas: Vec<f64> = (0..options.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(options.seed, b);
            let mut y_star = restricted_fit.clone();
            match options.cluster_level {
                ClusterLevel::Unit => {
                    for u in 0..n_u {
                        let w = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        for t in 0..n_t {
                            y_star[u * n_t + t] += w * restricted_resid[u * n_t + t];
                        }
                    }
                }
                ClusterLevel::Observation => {
                    for (y, e) in y_star.iter_mut().zip(&restricted_resid) {
                        let w = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        *y += w * e;
                    }
                }
            }
            design.delta(&y_star)
        })
        .collect();

    Ok(BootstrapResult {
        delta_hat,
        replications: options.replications,
        p_value: bootstrap_p_value(delta_hat, &replicate_deltas),
        replicate_deltas,
        seed: options.seed,
        weight_scheme: WeightScheme::Rademacher,
        cluster_level: options.cluster_level,
    })
}
