//! Temporal input configurations and sample assembly.
//!
//! A case selects which earlier months feed the model when predicting
//! month `t`. Sequential cases use the last `L` months; periodic cases use
//! `t-1` plus a window of `±Δt` months around each of the previous `Y`
//! same-calendar months.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::NormStats;
use crate::error::{Error, Result};
use crate::grid::{month_index, GridField, GridSeries, MonthStamp};
use crate::nn::Tensor4;

pub const SEQUENTIAL_WINDOWS: [usize; 6] = [6, 12, 18, 24, 30, 36];
pub const MAX_LAG_YEARS: usize = 4;
pub const NEIGHBOR_MONTHS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TemporalCase {
    Sequential { window: usize },
    Periodic { lag_years: usize, neighbors: usize },
}

impl TemporalCase {
    pub fn sequential(window: usize) -> Result<Self> {
        if !SEQUENTIAL_WINDOWS.contains(&window) {
            return Err(Error::Config(format!("no sequential case with window {window}")));
        }
        Ok(TemporalCase::Sequential { window })
    }

    pub fn periodic(lag_years: usize, neighbors: usize) -> Result<Self> {
        if !(1..=MAX_LAG_YEARS).contains(&lag_years) || !NEIGHBOR_MONTHS.contains(&neighbors) {
            return Err(Error::Config(format!(
                "no periodic case with {lag_years} lag years and ±{neighbors} months"
            )));
        }
        Ok(TemporalCase::Periodic {
            lag_years,
            neighbors,
        })
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Position in [`enumerate_cases`] order.
    pub fn canonical_index(&self) -> usize {
        match *self {
            TemporalCase::Sequential { window } => window / 6 - 1,
            TemporalCase::Periodic {
                lag_years,
                neighbors,
            } => 6 + (lag_years - 1) * 2 + (neighbors - 1),
        }
    }

    /// Human-readable label, e.g. "24 months" or "3 years 2 months".
    pub fn label(&self) -> String {
        match *self {
            TemporalCase::Sequential { window } => format!("{window} months"),
            TemporalCase::Periodic {
                lag_years,
                neighbors,
            } => format!(
                "{lag_years} year{} {neighbors} month{}",
                if lag_years == 1 { "" } else { "s" },
                if neighbors == 1 { "" } else { "s" }
            ),
        }
    }
}

impl fmt::Display for TemporalCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalCase::Sequential { window } => write!(f, "seq-{window}"),
            TemporalCase::Periodic {
                lag_years,
                neighbors,
            } => write!(f, "y{lag_years}m{neighbors}"),
        }
    }
}

impl FromStr for TemporalCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown temporal case '{s}'"));
        if let Some(w) = s.strip_prefix("seq-") {
            return TemporalCase::sequential(w.parse().map_err(|_| bad())?);
        }
        let rest = s.strip_prefix('y').ok_or_else(bad)?;
        let (y, m) = rest.split_once('m').ok_or_else(bad)?;
        TemporalCase::periodic(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for TemporalCase {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TemporalCase> for String {
    fn from(c: TemporalCase) -> String {
        c.to_string()
    }
}

/// All 14 cases: six sequential windows, then periodic cases by lag year
/// and neighbour width.
pub fn enumerate_cases() -> Vec<TemporalCase> {
    let mut out: Vec<TemporalCase> = SEQUENTIAL_WINDOWS
        .iter()
        .map(|&window| TemporalCase::Sequential { window })
        .collect();
    for lag_years in 1..=MAX_LAG_YEARS {
        for &neighbors in &NEIGHBOR_MONTHS {
            out.push(TemporalCase::Periodic {
                lag_years,
                neighbors,
            });
        }
    }
    out
}

/// Month offsets back from the target, ascending.
pub fn offsets(case: &TemporalCase) -> Vec<usize> {
    match *case {
        TemporalCase::Sequential { window } => (1..=window).collect(),
        TemporalCase::Periodic {
            lag_years,
            neighbors,
        } => {
            let mut out = vec![1];
            for k in 1..=lag_years {
                out.extend(12 * k - neighbors..=12 * k + neighbors);
            }
            out
        }
    }
}

pub fn max_offset(case: &TemporalCase) -> usize {
    *offsets(case).last().expect("offsets are never empty")
}

pub fn channel_count(case: &TemporalCase, elevation: bool) -> usize {
    offsets(case).len() + usize::from(elevation)
}

/// Indices `t` whose whole input history lies inside the series.
pub fn valid_targets(series: &GridSeries, case: &TemporalCase) -> Result<std::ops::Range<usize>> {
    let need = max_offset(case);
    if series.len() <= need {
        return Err(Error::InsufficientHistory(format!(
            "case {case} needs more than {need} months, series has {}",
            series.len()
        )));
    }
    Ok(need..series.len())
}

/// One model input with its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `1 x C x n_lat x n_lon`, normalized.
    pub input: Tensor4<f32>,
    /// Target field in °C.
    pub target: GridField,
    pub target_stamp: MonthStamp,
}

fn push_normalized(buf: &mut Vec<f32>, field: &GridField, f: impl Fn(f64) -> f64) {
    buf.extend(field.values().iter().map(|&v| f(v) as f32));
}

/// Input tensor for target index `target_index`, which may equal
/// `series.len()` (forecasting the month after the series ends).
pub fn assemble_input(
    series: &GridSeries,
    elevation: Option<&GridField>,
    norm: &NormStats,
    case: &TemporalCase,
    target_index: usize,
) -> Result<Tensor4<f32>> {
    let offs = offsets(case);
    let need = *offs.last().unwrap();
    if target_index < need || target_index > series.len() {
        return Err(Error::OutOfRange(format!(
            "target index {target_index} needs history {need}..={} in a series of {}",
            series.len(),
            series.len()
        )));
    }
    let (n_lat, n_lon) = series.shape();
    if let Some(e) = elevation {
        crate::grid::check_same_shape(e.shape(), (n_lat, n_lon))?;
    }
    let channels = offs.len() + usize::from(elevation.is_some());
    let mut buf = Vec::with_capacity(channels * n_lat * n_lon);
    for &o in &offs {
        push_normalized(&mut buf, series.field(target_index - o), |v| norm.normalize(v));
    }
    if let Some(e) = elevation {
        push_normalized(&mut buf, e, |v| norm.normalize_elevation(v));
    }
    Ok(Tensor4::from_raw([1, channels, n_lat, n_lon], buf))
}

pub fn assemble_sample(
    series: &GridSeries,
    elevation: Option<&GridField>,
    norm: &NormStats,
    case: &TemporalCase,
    target_index: usize,
) -> Result<Sample> {
    if target_index >= series.len() {
        return Err(Error::OutOfRange(format!(
            "target index {target_index} beyond series of {}",
            series.len()
        )));
    }
    Ok(Sample {
        input: assemble_input(series, elevation, norm, case, target_index)?,
        target: series.field(target_index).clone(),
        target_stamp: series.stamp(target_index),
    })
}

/// Samples for every valid target whose month lies in `first..=last`.
pub fn assemble_range(
    series: &GridSeries,
    elevation: Option<&GridField>,
    norm: &NormStats,
    case: &TemporalCase,
    first: MonthStamp,
    last: MonthStamp,
) -> Result<Vec<Sample>> {
    let valid = valid_targets(series, case)?;
    let lo = month_index(series.start(), first).unwrap_or(0).max(valid.start);
    let hi = month_index(series.start(), last)
        .map(|k| (k + 1).min(valid.end))
        .unwrap_or(0);
    (lo..hi.max(lo))
        .map(|t| assemble_sample(series, elevation, norm, case, t))
        .collect()
}
