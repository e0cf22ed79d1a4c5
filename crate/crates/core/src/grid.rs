//! Gridded fields, month calendars, and the error and anomaly arithmetic
//! shared by the rest of the pipeline.
//!
//! Grids are stored row-major with latitude rows first. Row 0 is the
//! northernmost row; see [`row_latitude`] for the latitude convention.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude in degrees of grid row `row` on an `n_lat`-row grid.
///
/// Rows are uniformly spaced from +90 (row 0) southwards in steps of
/// `180 / n_lat`, so an even `n_lat` places row `n_lat / 2` on the equator.
pub fn row_latitude(row: usize, n_lat: usize) -> f64 {
    90.0 - 180.0 * row as f64 / n_lat as f64
}

/// Longitude in degrees east, in `[0, 360)`, of grid column `col`.
pub fn col_longitude(col: usize, n_lon: usize) -> f64 {
    360.0 * col as f64 / n_lon as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonthStamp {
    year: i32,
    month: u8,
}

impl MonthStamp {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidValue(format!("month {month} outside 1..=12")));
        }
        Ok(MonthStamp { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, January.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        MonthStamp {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn advance(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `self` to `later`.
    pub fn months_until(self, later: MonthStamp) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthStamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidValue(format!("'{s}' is not a YYYY-MM month"));
        let (y, m) = s.trim().rsplit_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        MonthStamp::new(year, month)
    }
}

impl TryFrom<String> for MonthStamp {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MonthStamp> for String {
    fn from(m: MonthStamp) -> String {
        m.to_string()
    }
}

/// Inclusive month range `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRange {
    pub first: MonthStamp,
    pub last: MonthStamp,
}

impl MonthRange {
    pub fn new(first: MonthStamp, last: MonthStamp) -> Result<Self> {
        if last < first {
            return Err(Error::InvalidValue(format!("range {first}:{last} is reversed")));
        }
        Ok(MonthRange { first, last })
    }

    pub fn len(&self) -> usize {
        self.first.months_until(self.last) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: MonthStamp) -> bool {
        self.first <= m && m <= self.last
    }

    pub fn iter(&self) -> impl Iterator<Item = MonthStamp> + '_ {
        (0..self.len() as i64).map(move |k| self.first.advance(k))
    }
}

impl fmt::Display for MonthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.last)
    }
}

impl FromStr for MonthRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidValue(format!("'{s}' is not a YYYY-MM:YYYY-MM range")))?;
        MonthRange::new(a.parse()?, b.parse()?)
    }
}

/// Offset `k` such that `series_start` advanced by `k` months is `stamp`.
pub fn month_index(series_start: MonthStamp, stamp: MonthStamp) -> Result<usize> {
    let k = series_start.months_until(stamp);
    if k < 0 {
        return Err(Error::OutOfRange(format!(
            "{stamp} precedes series start {series_start}"
        )));
    }
    Ok(k as usize)
}

/// One lat × lon field of values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n_lat: usize,
    n_lon: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(n_lat: usize, n_lon: usize, values: Vec<f64>) -> Result<Self> {
        if n_lat == 0 || n_lon == 0 {
            return Err(Error::Dimension(format!("empty grid {n_lat}x{n_lon}")));
        }
        if values.len() != n_lat * n_lon {
            return Err(Error::Dimension(format!(
                "{} values for a {n_lat}x{n_lon} grid",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value at cell {pos}")));
        }
        Ok(GridField {
            n_lat,
            n_lon,
            values,
        })
    }

    pub fn filled(n_lat: usize, n_lon: usize, value: f64) -> Result<Self> {
        GridField::new(n_lat, n_lon, vec![value; n_lat * n_lon])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_lon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_lon) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        GridField::new(rows.len(), n_lon, rows.concat())
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_lon + col]
    }

    /// Elementwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridField> {
        GridField::new(self.n_lat, self.n_lon, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        check_same_shape(self.shape(), other.shape())?;
        GridField::new(
            self.n_lat,
            self.n_lon,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Round every value to the nearest `f32`, the on-disk precision.
    pub fn quantized_f32(&self) -> GridField {
        GridField {
            n_lat: self.n_lat,
            n_lon: self.n_lon,
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

pub(crate) fn check_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "grid {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Consecutive monthly fields anchored at a start month.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    start: MonthStamp,
    n_lat: usize,
    n_lon: usize,
    fields: Vec<GridField>,
}

impl GridSeries {
    pub fn new(start: MonthStamp, fields: Vec<GridField>) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Dimension("a series needs at least one month".into()))?;
        let shape = first.shape();
        for (k, f) in fields.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::Dimension(format!(
                    "month {k} is {}x{}, series is {}x{}",
                    f.n_lat, f.n_lon, shape.0, shape.1
                )));
            }
        }
        Ok(GridSeries {
            start,
            n_lat: shape.0,
            n_lon: shape.1,
            fields,
        })
    }

    pub fn start(&self) -> MonthStamp {
        self.start
    }

    pub fn end(&self) -> MonthStamp {
        self.stamp(self.len() - 1)
    }

    pub fn range(&self) -> MonthRange {
        MonthRange {
            first: self.start,
            last: self.end(),
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> &GridField {
        &self.fields[k]
    }

    pub fn stamp(&self, k: usize) -> MonthStamp {
        self.start.advance(k as i64)
    }

    /// Index of `stamp`, or an out-of-range error if the series does not
    /// contain it.
    pub fn index_of(&self, stamp: MonthStamp) -> Result<usize> {
        let k = month_index(self.start, stamp)?;
        if k >= self.len() {
            return Err(Error::OutOfRange(format!(
                "{stamp} is after series end {}",
                self.end()
            )));
        }
        Ok(k)
    }

    pub fn at(&self, stamp: MonthStamp) -> Result<&GridField> {
        Ok(&self.fields[self.index_of(stamp)?])
    }

    /// Sub-series covering `range`, which must lie inside the series.
    pub fn slice(&self, range: MonthRange) -> Result<GridSeries> {
        let a = self.index_of(range.first)?;
        let b = self.index_of(range.last)?;
        GridSeries::new(range.first, self.fields[a..=b].to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridSeries> {
        let fields = self.fields.iter().map(|g| g.map(&f)).collect::<Result<_>>()?;
        GridSeries::new(self.start, fields)
    }

    /// Convert Kelvin values to degrees Celsius.
    pub fn kelvin_to_celsius(&self) -> Result<GridSeries> {
        self.map(|k| k - 273.15)
    }
}

/// A 0/1 selection of grid cells, e.g. a continent.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    name: String,
    n_lat: usize,
    n_lon: usize,
    weights: Vec<f64>,
}

impl RegionMask {
    pub fn new(name: impl Into<String>, n_lat: usize, n_lon: usize, weights: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if weights.len() != n_lat * n_lon || n_lat == 0 || n_lon == 0 {
            return Err(Error::Dimension(format!(
                "mask '{name}' has {} weights for {n_lat}x{n_lon}",
                weights.len()
            )));
        }
        if let Some(v) = weights.iter().find(|&&w| w != 0.0 && w != 1.0) {
            return Err(Error::InvalidValue(format!("mask '{name}' has weight {v}")));
        }
        if !weights.contains(&1.0) {
            return Err(Error::DegenerateMask(name));
        }
        Ok(RegionMask {
            name,
            n_lat,
            n_lon,
            weights,
        })
    }

    pub fn full(name: impl Into<String>, n_lat: usize, n_lon: usize) -> Result<Self> {
        RegionMask::new(name, n_lat, n_lon, vec![1.0; n_lat * n_lon])
    }

    /// Cells whose centre lies inside a latitude/longitude box. Longitudes
    /// are in degrees east and the box may wrap past 0/360 (`lon_min > lon_max`
    /// after normalisation).
    pub fn from_box(
        name: impl Into<String>,
        n_lat: usize,
        n_lon: usize,
        lat: (f64, f64),
        lon: (f64, f64),
    ) -> Result<Self> {
        let lo = lon.0.rem_euclid(360.0);
        let hi = lon.1.rem_euclid(360.0);
        let mut weights = vec![0.0; n_lat * n_lon];
        for i in 0..n_lat {
            let la = row_latitude(i, n_lat);
            if la < lat.0 || la > lat.1 {
                continue;
            }
            for j in 0..n_lon {
                let lo_j = col_longitude(j, n_lon);
                let inside = if lo <= hi {
                    lo_j >= lo && lo_j <= hi
                } else {
                    lo_j >= lo || lo_j <= hi
                };
                if inside {
                    weights[i * n_lon + j] = 1.0;
                }
            }
        }
        RegionMask::new(name, n_lat, n_lon, weights)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn selected(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 1.0).count()
    }
}

/// Per-calendar-month mean fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    entries: Vec<GridField>,
    base_range: MonthRange,
}

impl Climatology {
    pub fn new(entries: Vec<GridField>, base_range: MonthRange) -> Result<Self> {
        if entries.len() != 12 {
            return Err(Error::Dimension(format!(
                "climatology needs 12 entries, got {}",
                entries.len()
            )));
        }
        let shape = entries[0].shape();
        for e in &entries {
            check_same_shape(shape, e.shape())?;
        }
        Ok(Climatology { entries, base_range })
    }

    /// Entry for calendar month `month` (1..=12).
    pub fn entry(&self, month: u8) -> &GridField {
        &self.entries[month as usize - 1]
    }

    pub fn base_range(&self) -> MonthRange {
        self.base_range
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries[0].shape()
    }
}

/// Unweighted mean absolute difference over all grid cells.
pub fn mae(pred: &GridField, truth: &GridField) -> Result<f64> {
    check_same_shape(pred.shape(), truth.shape())?;
    // Column means of row means, in the same order as the definition.
    let (n_lat, n_lon) = pred.shape();
    let mut total = 0.0;
    for j in 0..n_lon {
        let mut col = 0.0;
        for i in 0..n_lat {
            col += (pred.get(i, j) - truth.get(i, j)).abs();
        }
        total += col / n_lat as f64;
    }
    Ok(total / n_lon as f64)
}

/// Mean absolute difference over the cells selected by `mask`.
pub fn masked_mae(pred: &GridField, truth: &GridField, mask: &RegionMask) -> Result<f64> {
    check_same_shape(pred.shape(), truth.shape())?;
    check_same_shape(pred.shape(), mask.shape())?;
    let n = mask.selected();
    if n == 0 {
        return Err(Error::DegenerateMask(mask.name().to_string()));
    }
    if n == mask.weights.len() {
        return mae(pred, truth);
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .zip(mask.weights())
        .filter(|(_, &w)| w == 1.0)
        .map(|((&p, &t), _)| (p - t).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Optional cosine-latitude area-weighted MAE. Not used by default reports.
pub fn area_weighted_mae(pred: &GridField, truth: &GridField) -> Result<f64> {
    check_same_shape(pred.shape(), truth.shape())?;
    let (n_lat, n_lon) = pred.shape();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n_lat {
        let w = row_latitude(i, n_lat).to_radians().cos().max(0.0);
        for j in 0..n_lon {
            num += w * (pred.get(i, j) - truth.get(i, j)).abs();
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateStatistics("zero total area weight".into()));
    }
    Ok(num / den)
}

/// Per-gridpoint mean of each calendar month over `base_range`.
pub fn monthly_climatology(series: &GridSeries, base_range: MonthRange) -> Result<Climatology> {
    let first = series.index_of(base_range.first)?;
    let last = series.index_of(base_range.last)?;
    let (n_lat, n_lon) = series.shape();
    let mut sums = vec![vec![0.0; n_lat * n_lon]; 12];
    let mut counts = [0usize; 12];
    for k in first..=last {
        let m = series.stamp(k).month() as usize - 1;
        counts[m] += 1;
        for (s, &v) in sums[m].iter_mut().zip(series.field(k).values()) {
            *s += v;
        }
    }
    if let Some(m) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!(
            "calendar month {} does not occur in {base_range}",
            m + 1
        )));
    }
    let entries = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| GridField::new(n_lat, n_lon, s.into_iter().map(|v| v / c as f64).collect()))
        .collect::<Result<Vec<_>>>()?;
    Climatology::new(entries, base_range)
}

/// Subtract the climatology entry of each field's calendar month.
pub fn anomaly_series(series: &GridSeries, clim: &Climatology) -> Result<GridSeries> {
    check_same_shape(series.shape(), clim.shape())?;
    let fields = series
        .fields()
        .iter()
        .enumerate()
        .map(|(k, f)| f.zip_map(clim.entry(series.stamp(k).month()), |v, c| v - c))
        .collect::<Result<Vec<_>>>()?;
    GridSeries::new(series.start(), fields)
}
