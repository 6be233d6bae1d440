//! Vacancy creation under retirement policies: a closed-form proportionality
//! calculator, a cohort queue simulator, and a difference-in-differences
//! toolkit for a single treated institution.

pub mod cohort;
pub mod config;
pub mod did;
pub mod fixtures;
pub mod panel;
pub mod proportionality;
pub mod report;
pub mod svg;
