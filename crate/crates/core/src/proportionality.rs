//! Closed-form effect of a mandatory retirement age on the vacancy creation
//! rate (VCR) under a fixed-posts, uniform-age queue.
//!
//! With appointment at age `A_a`, compulsory exit at `A_r` and an expected
//! extension of `e` years absent the mandate, the mandate raises the VCR by
//! `e / (A_r - A_a)`. That uplift is then diluted by the share of vacancies
//! that arise for other reasons and by the share of staff who would have
//! retired at the mandatory age anyway.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProportionalityError {
    #[error("mandatory age {mandatory} must exceed appointment age {appointment}")]
    InvalidAges { appointment: f64, mandatory: f64 },
    #[error("mean extension must be finite and nonnegative, got {0}")]
    InvalidExtension(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidShare { name: &'static str, value: f64 },
}

/// How the gross uplift is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpliftConvention {
    /// `e / (A_r - A_a)`: extension relative to the mandated career length.
    #[default]
    MandatedCareer,
    /// `e / (A_r - A_a + e)`: extension relative to the extended career.
    ExtendedCareer,
}

impl UpliftConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            UpliftConvention::MandatedCareer => "mandated-career",
            UpliftConvention::ExtendedCareer => "extended-career",
        }
    }
}

impl std::str::FromStr for UpliftConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mandated-career" | "mandated" => Ok(UpliftConvention::MandatedCareer),
            "extended-career" | "extended" => Ok(UpliftConvention::ExtendedCareer),
            other => Err(format!("unknown uplift convention '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParameters {
    /// Average age at appointment, in years.
    pub appointment_age: f64,
    /// Mandatory retirement age, in years.
    pub mandatory_age: f64,
    /// Expected extra working years absent the mandate.
    pub mean_extension: f64,
    /// Fraction of vacancies arising from causes other than retirement.
    pub other_cause_share: f64,
    /// Fraction of those reaching the mandatory age who would retire then anyway.
    pub voluntary_share: f64,
}

impl QueueParameters {
    pub fn validate(&self) -> Result<(), ProportionalityError> {
        if !(self.appointment_age.is_finite()
            && self.mandatory_age.is_finite()
            && self.mandatory_age > self.appointment_age)
        {
            return Err(ProportionalityError::InvalidAges {
                appointment: self.appointment_age,
                mandatory: self.mandatory_age,
            });
        }
        if !(self.mean_extension.is_finite() && self.mean_extension >= 0.0) {
            return Err(ProportionalityError::InvalidExtension(self.mean_extension));
        }
        for (name, value) in [
            ("other_cause_share", self.other_cause_share),
            ("voluntary_share", self.voluntary_share),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProportionalityError::InvalidShare { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalityResult {
    pub career_length: f64,
    pub gross_uplift: f64,
    pub after_other_causes: f64,
    pub net_uplift: f64,
}

/// Relative VCR uplift attributable to the mandate, carried at full precision.
pub fn vcr_uplift(params: &QueueParameters) -> Result<ProportionalityResult, ProportionalityError> {
    vcr_uplift_with(params, UpliftConvention::default())
}

pub fn vcr_uplift_with(
    params: &QueueParameters,
    convention: UpliftConvention,
) -> Result<ProportionalityResult, ProportionalityError> {
    params.validate()?;
    let career_length = params.mandatory_age - params.appointment_age;
    let gross_uplift = match convention {
        UpliftConvention::MandatedCareer => params.mean_extension / career_length,
        UpliftConvention::ExtendedCareer => {
            params.mean_extension / (career_length + params.mean_extension)
        }
    };
    let after_other_causes = gross_uplift * (1.0 - params.other_cause_share);
    let net_uplift = after_other_causes * (1.0 - params.voluntary_share);
    Ok(ProportionalityResult {
        career_length,
        gross_uplift,
        after_other_causes,
        net_uplift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Below,
    Within,
    Above,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Below => "below",
            Verdict::Within => "within",
            Verdict::Above => "above",
        })
    }
}

/// Band of net uplifts previously judged trivial.
pub const DEFAULT_BAND: (f64, f64) = (0.02, 0.04);

/// Places the net uplift relative to a closed band `[low, high]`.
pub fn proportionality_verdict(result: &ProportionalityResult, band: (f64, f64)) -> Verdict {
    let (low, high) = band;
    debug_assert!(0.0 <= low && low <= high);
    if result.net_uplift < low {
        Verdict::Below
    } else if result.net_uplift > high {
        Verdict::Above
    } else {
        Verdict::Within
    }
}

/// Percentage with one decimal, for display only.
pub fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a_r: f64, e: f64, other: f64, vol: f64) -> QueueParameters {
        QueueParameters {
            appointment_age: 40.0,
            mandatory_age: a_r,
            mean_extension: e,
            other_cause_share: other,
            voluntary_share: vol,
        }
    }

    #[test]
    fn ladder_values() {
        let r = vcr_uplift(&params(67.0, 3.0, 0.0, 0.0)).unwrap();
        assert!((r.gross_uplift - 3.0 / 27.0).abs() < 1e-15);
        assert_eq!(r.career_length, 27.0);
        let r = vcr_uplift(&params(67.0, 3.0, 0.5, 0.0)).unwrap();
        assert!((r.after_other_causes - 1.5 / 27.0).abs() < 1e-15);
        let r = vcr_uplift(&params(67.0, 3.0, 0.5, 0.5)).unwrap();
        assert!((r.net_uplift - 0.75 / 27.0).abs() < 1e-15);
        assert!((r.net_uplift - 0.0278).abs() < 5e-5);
        let r = vcr_uplift(&params(69.0, 3.0, 0.0, 0.0)).unwrap();
        assert!((r.gross_uplift - 0.1034).abs() < 5e-5);
        let r = vcr_uplift(&params(69.0, 3.0, 0.5, 0.5)).unwrap();
        assert!((r.net_uplift - 0.0259).abs() < 5e-5);
    }

    #[test]
    fn one_year_extension_at_69() {
        // exact arithmetic gives 1/29/4, not the 0.75% obtained by rounding 1/29 to 3%
        let r = vcr_uplift(&params(69.0, 1.0, 0.5, 0.5)).unwrap();
        assert!((r.net_uplift - (1.0 / 29.0) * 0.25).abs() < 1e-15);
        assert!((r.net_uplift - 0.0086).abs() < 5e-5);
    }

    #[test]
    fn zero_extension_is_zero() {
        let r = vcr_uplift(&params(67.0, 0.0, 0.3, 0.2)).unwrap();
        assert_eq!((r.gross_uplift, r.after_other_causes, r.net_uplift), (0.0, 0.0, 0.0));
    }

    #[test]
    fn invalid_ages() {
        assert!(matches!(
            vcr_uplift(&params(40.0, 3.0, 0.0, 0.0)),
            Err(ProportionalityError::InvalidAges { .. })
        ));
        assert!(matches!(
            vcr_uplift(&params(67.0, 3.0, 1.5, 0.0)),
            Err(ProportionalityError::InvalidShare { .. })
        ));
    }

    #[test]
    fn extended_convention() {
        let r = vcr_uplift_with(&params(67.0, 3.0, 0.0, 0.0), UpliftConvention::ExtendedCareer)
            .unwrap();
        assert!((r.gross_uplift - 0.1).abs() < 1e-15);
    }

    #[test]
    fn verdicts() {
        let band = DEFAULT_BAND;
        let r = vcr_uplift(&params(67.0, 3.0, 0.5, 0.5)).unwrap();
        assert_eq!(proportionality_verdict(&r, band), Verdict::Within);
        let zero = ProportionalityResult {
            net_uplift: 0.0,
            ..r
        };
        assert_eq!(proportionality_verdict(&zero, band), Verdict::Below);
        let big = ProportionalityResult {
            net_uplift: 0.11,
            ..r
        };
        assert_eq!(proportionality_verdict(&big, band), Verdict::Above);
    }
}
