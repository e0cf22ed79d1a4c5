//! Forecast verification: baselines, regional and seasonal MAE, case
//! ranking, anomaly-binned errors, regression diagnostics, and report and
//! heatmap output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mae, masked_mae, Climatology, GridField, GridSeries, MonthRange, MonthStamp, RegionMask};
use crate::model::Model;
use crate::stacking::{enumerate_cases, TemporalCase};
use crate::training::predict_many;

pub const GLOBAL: &str = "global";
pub const OVERALL: &str = "overall";
pub const OVERALL_RANK_RULE: &str = "rank of the mean MAE over all region x season cells; ties by canonical case order";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    /// Meteorological seasons: DJF, MAM, JJA, SON.
    pub fn of_month(month: u8) -> Season {
        match month {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Fall,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Fall => "Fall",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Previous month's field as the forecast for `target_index`.
pub fn persistence_forecast(series: &GridSeries, target_index: usize) -> Result<GridField> {
    if target_index == 0 {
        return Err(Error::InsufficientHistory(
            "persistence needs the month before the target".into(),
        ));
    }
    if target_index > series.len() {
        return Err(Error::OutOfRange(format!(
            "target index {target_index} beyond series of {}",
            series.len()
        )));
    }
    Ok(series.field(target_index - 1).clone())
}

/// Anything that can produce a field for each requested month.
pub trait Forecaster {
    fn name(&self) -> String;
    fn forecast(&self, months: &[MonthStamp]) -> Result<Vec<GridField>>;
}

pub struct Persistence<'a> {
    pub series: &'a GridSeries,
}

impl Forecaster for Persistence<'_> {
    fn name(&self) -> String {
        "persistence".into()
    }

    fn forecast(&self, months: &[MonthStamp]) -> Result<Vec<GridField>> {
        months
            .iter()
            .map(|&m| {
                let k = self.series.start().months_until(m);
                if k < 1 || k as usize > self.series.len() {
                    return Err(Error::Coverage(format!(
                        "persistence for {m} needs the previous month inside {}",
                        self.series.range()
                    )));
                }
                persistence_forecast(self.series, k as usize)
            })
            .collect()
    }
}

/// A stored series used as its own forecast, e.g. an ensemble mean.
pub struct StoredSeries<'a> {
    pub name: String,
    pub series: &'a GridSeries,
}

impl Forecaster for StoredSeries<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn forecast(&self, months: &[MonthStamp]) -> Result<Vec<GridField>> {
        months
            .iter()
            .map(|&m| {
                self.series
                    .at(m)
                    .cloned()
                    .map_err(|_| Error::Coverage(format!("{} has no field for {m}", self.name)))
            })
            .collect()
    }
}

/// Trained network forecasting from a history series.
pub struct ModelForecaster<'a> {
    pub model: &'a Model<f32>,
    pub history: &'a GridSeries,
    pub elevation: Option<&'a GridField>,
}

impl Forecaster for ModelForecaster<'_> {
    fn name(&self) -> String {
        format!("{}-{}", self.model.config().arch, self.model.config().case_id)
    }

    fn forecast(&self, months: &[MonthStamp]) -> Result<Vec<GridField>> {
        predict_many(self.model, self.history, self.elevation, months).map_err(|e| match e {
            Error::InsufficientHistory(m) => Error::Coverage(m),
            other => other,
        })
    }
}

/// Field values with their grid shape, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub n_lat: usize,
    pub n_lon: usize,
    pub values: Vec<f64>,
}

impl FieldRecord {
    pub fn to_field(&self) -> Result<GridField> {
        GridField::new(self.n_lat, self.n_lon, self.values.clone())
    }
}

impl From<&GridField> for FieldRecord {
    fn from(f: &GridField) -> Self {
        FieldRecord {
            n_lat: f.n_lat(),
            n_lon: f.n_lon(),
            values: f.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyMae {
    pub month: MonthStamp,
    pub mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionStats {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Error statistics of one forecasting system over one evaluation range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub system: String,
    pub overall_mae: f64,
    pub per_region_mae: BTreeMap<String, f64>,
    pub per_season_mae: BTreeMap<String, f64>,
    pub per_region_season_mae: BTreeMap<String, BTreeMap<String, f64>>,
    /// Per-month MAE keyed by region, with the whole grid under `global`.
    pub mae_time_series: BTreeMap<String, Vec<MonthlyMae>>,
    /// Per-cell mean absolute error over the evaluated months.
    pub mae_field: FieldRecord,
    /// Prediction regressed on truth over every (cell, month) pair of a region.
    pub regression: BTreeMap<String, RegressionStats>,
}

impl ErrorSummary {
    /// Region x season cells used for ranking; the global seasons when no
    /// regions were evaluated.
    pub fn rank_cells(&self) -> BTreeMap<String, f64> {
        let mut cells = BTreeMap::new();
        if self.per_region_season_mae.is_empty() {
            for (s, v) in &self.per_season_mae {
                cells.insert(format!("{GLOBAL}/{s}"), *v);
            }
        } else {
            for (r, seasons) in &self.per_region_season_mae {
                for (s, v) in seasons {
                    cells.insert(format!("{r}/{s}"), *v);
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub case_id: Option<String>,
    pub checkpoint_id: Option<String>,
    pub evaluation_range: MonthRange,
    pub climatology_base_range: Option<MonthRange>,
    pub seasons: String,
    pub overall_rank_rule: String,
}

impl ReportMetadata {
    pub fn new(evaluation_range: MonthRange) -> Self {
        ReportMetadata {
            case_id: None,
            checkpoint_id: None,
            evaluation_range,
            climatology_base_range: None,
            seasons: "Winter=DJF Spring=MAM Summer=JJA Fall=SON".into(),
            overall_rank_rule: OVERALL_RANK_RULE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    #[serde(flatten)]
    pub summary: ErrorSummary,
    pub baselines: BTreeMap<String, ErrorSummary>,
    pub anomaly_bins: Option<BinStats>,
}

impl EvalReport {
    pub fn new(metadata: ReportMetadata, summary: ErrorSummary) -> Self {
        EvalReport {
            metadata,
            summary,
            baselines: BTreeMap::new(),
            anomaly_bins: None,
        }
    }

    pub fn add_baseline(&mut self, summary: ErrorSummary) {
        self.baselines.insert(summary.system.clone(), summary);
    }

    /// One row per system, region and season, plus `all` aggregates.
    pub fn to_csv(&self) -> String {
        let case = self.metadata.case_id.clone().unwrap_or_default();
        let mut out = String::from("case_id,system,region,season,mae\n");
        for s in std::iter::once(&self.summary).chain(self.baselines.values()) {
            out.push_str(&format!("{case},{},{GLOBAL},all,{}\n", s.system, s.overall_mae));
            for (season, v) in &s.per_season_mae {
                out.push_str(&format!("{case},{},{GLOBAL},{season},{v}\n", s.system));
            }
            for (region, v) in &s.per_region_mae {
                out.push_str(&format!("{case},{},{region},all,{v}\n", s.system));
                for (season, v) in &s.per_region_season_mae[region] {
                    out.push_str(&format!("{case},{},{region},{season},{v}\n", s.system));
                }
            }
        }
        out
    }

    /// Write `<stem>.json` and `<stem>.csv`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        write_json(dir.as_ref().join(format!("{stem}.json")), self)?;
        write_text(&dir.as_ref().join(format!("{stem}.csv")), &self.to_csv())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EvalReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Deduplicate masks by name; the same name with different content is an error.
fn unique_masks(masks: &[RegionMask]) -> Result<BTreeMap<String, &RegionMask>> {
    let mut out: BTreeMap<String, &RegionMask> = BTreeMap::new();
    for m in masks {
        if let Some(prev) = out.get(m.name()) {
            if prev.weights() != m.weights() {
                return Err(Error::Input(format!("two different masks named '{}'", m.name())));
            }
        } else {
            out.insert(m.name().to_string(), m);
        }
    }
    if out.contains_key(GLOBAL) {
        return Err(Error::Input(format!("region name '{GLOBAL}' is reserved")));
    }
    Ok(out)
}

/// Score `predictor` against `truth` on every month of `range`, globally
/// and inside each mask.
pub fn evaluate(
    predictor: &dyn Forecaster,
    truth: &GridSeries,
    masks: &[RegionMask],
    range: MonthRange,
) -> Result<ErrorSummary> {
    let tr = truth.range();
    if !tr.contains(range.first) || !tr.contains(range.last) {
        return Err(Error::Coverage(format!("evaluation range {range} outside truth {tr}")));
    }
    let shape = truth.shape();
    let regions = unique_masks(masks)?;
    for m in regions.values() {
        crate::grid::check_same_shape(m.shape(), shape)?;
    }
    let months: Vec<MonthStamp> = range.iter().collect();
    let preds = predictor.forecast(&months)?;
    if preds.len() != months.len() {
        return Err(Error::Coverage(format!(
            "{} produced {} of {} months",
            predictor.name(),
            preds.len(),
            months.len()
        )));
    }

    let mut series: BTreeMap<String, Vec<MonthlyMae>> = BTreeMap::new();
    let mut field_sum = vec![0.0; shape.0 * shape.1];
    let mut pairs: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (&m, pred) in months.iter().zip(&preds) {
        let t = truth.at(m)?;
        crate::grid::check_same_shape(pred.shape(), shape)?;
        series.entry(GLOBAL.into()).or_default().push(MonthlyMae {
            month: m,
            mae: mae(pred, t)?,
        });
        for (name, mask) in &regions {
            series.entry(name.clone()).or_default().push(MonthlyMae {
                month: m,
                mae: masked_mae(pred, t, mask)?,
            });
        }
        for (i, (p, v)) in pred.values().iter().zip(t.values()).enumerate() {
            field_sum[i] += (p - v).abs();
        }
        let g = pairs.entry(GLOBAL.into()).or_default();
        g.0.extend_from_slice(pred.values());
        g.1.extend_from_slice(t.values());
        for (name, mask) in &regions {
            let e = pairs.entry(name.clone()).or_default();
            for ((p, v), w) in pred.values().iter().zip(t.values()).zip(mask.weights()) {
                if *w > 0.0 {
                    e.0.push(*p);
                    e.1.push(*v);
                }
            }
        }
    }

    let by_season = |values: &[MonthlyMae]| -> BTreeMap<String, f64> {
        Season::ALL
            .iter()
            .filter_map(|&s| {
                let v: Vec<f64> = values
                    .iter()
                    .filter(|x| Season::of_month(x.month.month()) == s)
                    .map(|x| x.mae)
                    .collect();
                (!v.is_empty()).then(|| (s.name().to_string(), mean(v)))
            })
            .collect()
    };

    let global = &series[GLOBAL];
    let overall_mae = mean(global.iter().map(|x| x.mae));
    let per_season_mae = by_season(global);
    let mut per_region_mae = BTreeMap::new();
    let mut per_region_season_mae = BTreeMap::new();
    for name in regions.keys() {
        let s = &series[name];
        per_region_mae.insert(name.clone(), mean(s.iter().map(|x| x.mae)));
        per_region_season_mae.insert(name.clone(), by_season(s));
    }
    let n = months.len() as f64;
    let mae_field = GridField::new(shape.0, shape.1, field_sum.into_iter().map(|s| s / n).collect())?;
    let mut regression = BTreeMap::new();
    for (name, (p, t)) in &pairs {
        if let Ok(r) = regression_stats(p, t) {
            regression.insert(name.clone(), r);
        }
    }

    Ok(ErrorSummary {
        system: predictor.name(),
        overall_mae,
        per_region_mae,
        per_season_mae,
        per_region_season_mae,
        mae_time_series: series,
        mae_field: FieldRecord::from(&mae_field),
        regression,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub case_id: String,
    pub label: String,
    pub ranks: BTreeMap<String, usize>,
    pub mae: BTreeMap<String, f64>,
}

/// Ranks of the 14 temporal cases in every region x season cell and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub columns: Vec<String>,
    /// Canonical case order.
    pub rows: Vec<RankRow>,
    pub overall_rank_rule: String,
}

impl RankTable {
    pub fn column(&self, name: &str) -> Vec<usize> {
        self.rows.iter().map(|r| r.ranks[name]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,label,cell,mae,rank\n");
        for r in &self.rows {
            for c in &self.columns {
                out.push_str(&format!("{},{},{c},{},{}\n", r.case_id, r.label, r.mae[c], r.ranks[c]));
            }
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        write_json(dir.as_ref().join(format!("{stem}.json")), self)?;
        write_text(&dir.as_ref().join(format!("{stem}.csv")), &self.to_csv())
    }
}

/// Rank per-case MAE cells. `cells[i]` holds the region x season values
/// of `cases[i]`.
pub fn rank_cells(cases: &[TemporalCase], cells: &[BTreeMap<String, f64>]) -> Result<RankTable> {
    let canonical = enumerate_cases();
    if cases.len() != canonical.len() || cells.len() != cases.len() {
        return Err(Error::Input(format!(
            "ranking needs exactly {} cases, got {}",
            canonical.len(),
            cases.len()
        )));
    }
    let mut slot: Vec<Option<usize>> = vec![None; canonical.len()];
    for (i, c) in cases.iter().enumerate() {
        let k = c.canonical_index();
        if slot[k].is_some() {
            return Err(Error::Input(format!("duplicate case id {c}")));
        }
        slot[k] = Some(i);
    }
    let order: Vec<usize> = slot.into_iter().map(|s| s.expect("14 distinct cases")).collect();
    let keys: Vec<String> = cells[0].keys().cloned().collect();
    if keys.is_empty() {
        return Err(Error::Input("reports have no region x season cells".into()));
    }
    for (c, m) in cases.iter().zip(cells) {
        if m.keys().ne(keys.iter()) {
            return Err(Error::Input(format!("report for {c} has a different region/season structure")));
        }
    }

    let mut rows: Vec<RankRow> = order
        .iter()
        .map(|&i| {
            let mut mae = cells[i].clone();
            mae.insert(OVERALL.into(), mean(cells[i].values().copied()));
            RankRow {
                case_id: cases[i].id(),
                label: cases[i].label(),
                ranks: BTreeMap::new(),
                mae,
            }
        })
        .collect();
    let mut columns = keys;
    columns.push(OVERALL.into());
    for col in &columns {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        // rows are in canonical order, so a stable sort breaks ties by it
        idx.sort_by(|&a, &b| rows[a].mae[col].total_cmp(&rows[b].mae[col]));
        for (rank, &r) in idx.iter().enumerate() {
            rows[r].ranks.insert(col.clone(), rank + 1);
        }
    }
    Ok(RankTable {
        columns,
        rows,
        overall_rank_rule: OVERALL_RANK_RULE.into(),
    })
}

/// Rank the 14 per-case reports on their region x season cells.
pub fn rank_cases(reports: &[EvalReport]) -> Result<RankTable> {
    let mut cases = Vec::with_capacity(reports.len());
    for r in reports {
        let id = r
            .metadata
            .case_id
            .as_deref()
            .ok_or_else(|| Error::Input("report without case id".into()))?;
        cases.push(id.parse::<TemporalCase>().map_err(|e| Error::Input(e.to_string()))?);
    }
    let cells: Vec<BTreeMap<String, f64>> = reports.iter().map(|r| r.summary.rank_cells()).collect();
    rank_cells(&cases, &cells)
}

/// Median and quartiles of one system's absolute errors in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Absent for empty bins.
    pub systems: BTreeMap<String, Option<Quartiles>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub edges: Vec<f64>,
    pub bins: Vec<AnomalyBin>,
    pub months: usize,
    /// Pairs whose anomaly fell outside the edges.
    pub outside: usize,
}

/// Integer bins from −10 to +10 °C.
pub fn default_bin_edges() -> Vec<f64> {
    (-10..=10).map(f64::from).collect()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bin index for `x`: half-open `[lo, hi)` except the last bin, which is closed.
fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let last = *edges.last()?;
    if x < edges[0] || x > last {
        return None;
    }
    if x == last {
        return Some(edges.len() - 2);
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Absolute errors of each system bucketed by the truth anomaly, over the
/// months every input covers.
pub fn binned_abs_error(
    systems: &[(&str, &GridSeries)],
    truth: &GridSeries,
    clim: &Climatology,
    edges: &[f64],
) -> Result<BinStats> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidValue("bin edges must be finite and strictly increasing".into()));
    }
    if systems.is_empty() {
        return Err(Error::Input("no systems to bin".into()));
    }
    crate::grid::check_same_shape(clim.shape(), truth.shape())?;
    let mut first = truth.start();
    let mut last = truth.end();
    for (_, s) in systems {
        crate::grid::check_same_shape(s.shape(), truth.shape())?;
        first = first.max(s.start());
        last = last.min(s.end());
    }
    if first > last {
        return Err(Error::Coverage("prediction and truth series do not overlap".into()));
    }
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    let mut errors: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); nb]; systems.len()];
    let mut outside = 0;
    let range = MonthRange::new(first, last)?;
    for m in range.iter() {
        let t = truth.at(m)?;
        let c = clim.entry(m.month());
        let preds: Vec<&GridField> = systems.iter().map(|(_, s)| s.at(m)).collect::<Result<_>>()?;
        for i in 0..t.values().len() {
            let a = t.values()[i] - c.values()[i];
            let Some(b) = bin_of(edges, a) else {
                outside += 1;
                continue;
            };
            counts[b] += 1;
            for (k, p) in preds.iter().enumerate() {
                errors[k][b].push((p.values()[i] - t.values()[i]).abs());
            }
        }
    }
    let bins = (0..nb)
        .map(|b| AnomalyBin {
            lo: edges[b],
            hi: edges[b + 1],
            count: counts[b],
            systems: systems
                .iter()
                .enumerate()
                .map(|(k, (name, _))| {
                    let v = &mut errors[k][b];
                    v.sort_by(f64::total_cmp);
                    let q = (!v.is_empty()).then(|| Quartiles {
                        q25: quantile_sorted(v, 0.25),
                        median: quantile_sorted(v, 0.5),
                        q75: quantile_sorted(v, 0.75),
                    });
                    (name.to_string(), q)
                })
                .collect(),
        })
        .collect();
    Ok(BinStats {
        edges: edges.to_vec(),
        bins,
        months: range.len(),
        outside,
    })
}

/// Least-squares fit `pred = slope * truth + intercept`. A constant
/// prediction is fitted exactly and reports R² = 1.
pub fn regression_stats(pred: &[f64], truth: &[f64]) -> Result<RegressionStats> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions vs {} truths", pred.len(), truth.len())));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::InvalidValue("regression needs at least two points".into()));
    }
    let mx = mean(truth.iter().copied());
    let my = mean(pred.iter().copied());
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in truth.iter().zip(pred) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::DegenerateStatistics("truth values have zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RegressionStats {
        slope,
        intercept,
        r_squared,
        n,
    })
}

/// Render `field` as an 8-bit binary PGM, rows north to south, with the
/// value mapping written to `<path>.txt`.
pub fn emit_heatmap(field: &GridField, path: impl AsRef<Path>, value_range: Option<(f64, f64)>) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = value_range.unwrap_or_else(|| {
        field
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidValue("heatmap range must be finite".into()));
    }
    let (n_lat, n_lon) = field.shape();
    let mut bytes = format!("P5 {n_lon} {n_lat} 255\n").into_bytes();
    bytes.extend(field.values().iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = format!(
        "min {lo}\nmax {hi}\nbyte = round(255 * (value - min) / (max - min)), clamped to 0..255; 0 when max <= min\n\
         rows north to south, columns eastward from 0 degrees longitude\n"
    );
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    std::fs::write(&side, sidecar).map_err(|e| Error::io(std::path::PathBuf::from(side.clone()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp(y: i32, m: u8) -> MonthStamp {
        MonthStamp::new(y, m).unwrap()
    }

    fn series(values: &[f64]) -> GridSeries {
        let fields = values.iter().map(|&v| GridField::filled(2, 2, v).unwrap()).collect();
        GridSeries::new(stamp(2000, 1), fields).unwrap()
    }

    #[test]
    fn seasons() {
        let s: Vec<Season> = (1..=12).map(Season::of_month).collect();
        assert_eq!(s[0], Season::Winter);
        assert_eq!(s[11], Season::Winter);
        assert_eq!(s[2], Season::Spring);
        assert_eq!(s[6], Season::Summer);
        assert_eq!(s[9], Season::Fall);
    }

    #[test]
    fn persistence_examples() {
        let alt = series(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(persistence_forecast(&alt, 0), Err(Error::InsufficientHistory(_))));
        assert_eq!(persistence_forecast(&alt, 3).unwrap(), *alt.field(2));
        let range = MonthRange::new(stamp(2000, 2), stamp(2000, 6)).unwrap();
        let r = evaluate(&Persistence { series: &alt }, &alt, &[], range).unwrap();
        assert_eq!(r.overall_mae, 1.0);
        let flat = series(&[3.0; 6]);
        let r = evaluate(&Persistence { series: &flat }, &flat, &[], range).unwrap();
        assert_eq!(r.overall_mae, 0.0);
        let whole = MonthRange::new(stamp(2000, 1), stamp(2000, 6)).unwrap();
        assert!(matches!(
            evaluate(&Persistence { series: &flat }, &flat, &[], whole),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn bins_half_open_last_closed() {
        let e = [-1.0, 0.0, 1.0];
        assert_eq!(bin_of(&e, -1.0), Some(0));
        assert_eq!(bin_of(&e, 0.0), Some(1));
        assert_eq!(bin_of(&e, 1.0), Some(1));
        assert_eq!(bin_of(&e, 1.5), None);
        assert_eq!(bin_of(&e, -1.01), None);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn regression_examples() {
        let t = [1.0, 2.0, 4.0, 8.0];
        let r = regression_stats(&t, &t).unwrap();
        assert_eq!((r.slope, r.intercept, r.r_squared, r.n), (1.0, 0.0, 1.0, 4));
        let twice: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        let r = regression_stats(&twice, &t).unwrap();
        assert_eq!((r.slope, r.r_squared), (2.0, 1.0));
        assert!(matches!(
            regression_stats(&t, &[1.0; 4]),
            Err(Error::DegenerateStatistics(_))
        ));
    }

    #[test]
    fn heatmap_endpoints_and_degenerate_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        emit_heatmap(&GridField::from_rows(&[vec![0.0, 3.5]]).unwrap(), &p, None).unwrap();
        let b = std::fs::read(&p).unwrap();
        assert_eq!(b, b"P5 2 1 255\n\x00\xff");
        assert!(dir.path().join("a.pgm.txt").exists());
        emit_heatmap(&GridField::filled(2, 2, 4.0).unwrap(), &p, None).unwrap();
        assert_eq!(&std::fs::read(&p).unwrap()[11..], &[0, 0, 0, 0]);
    }
}
