use thiserror::Error;

use crate::design::Cell;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} must be finite")]
    NonFinite(&'static str),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("pair {0} must compare two different adaptive interventions")]
    DegeneratePair(String),

    #[error("shared-path covariance requested for a distinct-path pair")]
    NotSharedPath,

    #[error("sample size must be at least {min}, got {got}")]
    SampleSizeTooSmall { min: u64, got: u64 },

    #[error("standardizing variance is not positive ({0})")]
    NonPositiveScale(f64),

    #[error("margin does not exceed true difference (eta = {0})")]
    EtaNonPositive(f64),

    #[error("target power {target} unreachable below N = {limit}")]
    PowerUnreachable { target: f64, limit: u64 },

    #[error("positivity violation: no participants observed in cell {0}")]
    Positivity(Cell),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("preset {name} has no row {row} (rows 1..={rows})")]
    UnknownPresetRow { name: String, row: usize, rows: usize },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("{0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable code for API responses.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::OutOfRange { .. } => "out_of_range",
            Error::InvalidDesign(_) => "invalid_design",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::DegeneratePair(_) => "degenerate_pair",
            Error::NotSharedPath => "not_shared_path",
            Error::SampleSizeTooSmall { .. } => "sample_size_too_small",
            Error::NonPositiveScale(_) => "nonpositive_scale",
            Error::EtaNonPositive(_) => "eta_nonpositive",
            Error::PowerUnreachable { .. } => "power_unreachable",
            Error::Positivity(_) => "positivity",
            Error::InsufficientData(_) => "insufficient_data",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::UnknownPresetRow { .. } => "unknown_preset_row",
            Error::EmptyGrid(_) => "empty_grid",
            Error::Parse(_) => "parse",
        }
    }
}

pub(crate) fn check_finite(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Accepts `value` in the open unit interval.
pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}

pub(crate) fn check_closed_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "(0, inf)",
        })
    }
}
