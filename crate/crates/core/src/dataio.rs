//! CGT grid files, normalization statistics, the synthetic climate
//! generator, and multi-member ensemble means.
//!
//! A CGT file is a 24-byte little-endian header followed by `f32` values:
//!
//! | offset | width | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 4     | magic `CGT1`                            |
//! | 4      | 4     | `n_time` (u32)                          |
//! | 8      | 4     | `n_lat` (u32)                           |
//! | 12     | 4     | `n_lon` (u32)                           |
//! | 16     | 4     | `start_year` (i32)                      |
//! | 20     | 1     | `start_month` (u8, 1..=12)              |
//! | 21     | 1     | kind: 0 series, 1 elevation, 2 mask     |
//! | 22     | 2     | reserved, zero                          |
//! | 24     | ..    | payload, time-major then row-major      |

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseIssue, Result};
use crate::grid::{row_latitude, GridField, GridSeries, MonthStamp, RegionMask};

pub const CGT_MAGIC: &[u8; 4] = b"CGT1";
pub const CGT_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CgtKind {
    Series = 0,
    Elevation = 1,
    Mask = 2,
}

/// Decoded content of a CGT file.
#[derive(Debug, Clone, PartialEq)]
pub enum CgtObject {
    Series(GridSeries),
    Elevation(GridField),
    Mask(RegionMask),
}

impl CgtObject {
    pub fn kind(&self) -> CgtKind {
        match self {
            CgtObject::Series(_) => CgtKind::Series,
            CgtObject::Elevation(_) => CgtKind::Elevation,
            CgtObject::Mask(_) => CgtKind::Mask,
        }
    }

    pub fn into_series(self) -> Result<GridSeries> {
        match self {
            CgtObject::Series(s) => Ok(s),
            other => Err(Error::Input(format!("expected a series file, found {:?}", other.kind()))),
        }
    }

    pub fn into_elevation(self) -> Result<GridField> {
        match self {
            CgtObject::Elevation(e) => Ok(e),
            other => Err(Error::Input(format!("expected an elevation file, found {:?}", other.kind()))),
        }
    }

    pub fn into_mask(self) -> Result<RegionMask> {
        match self {
            CgtObject::Mask(m) => Ok(m),
            other => Err(Error::Input(format!("expected a mask file, found {:?}", other.kind()))),
        }
    }
}

fn parse_err(offset: usize, issue: ParseIssue) -> Error {
    Error::Parse {
        offset: offset as u64,
        issue,
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Decode CGT bytes. `name` labels a decoded mask.
pub fn decode_cgt(bytes: &[u8], name: &str) -> Result<CgtObject> {
    if bytes.len() < CGT_HEADER_LEN {
        return Err(parse_err(
            bytes.len(),
            ParseIssue::Truncated {
                expected: CGT_HEADER_LEN as u64,
                found: bytes.len() as u64,
            },
        ));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != CGT_MAGIC {
        return Err(parse_err(0, ParseIssue::BadMagic(magic)));
    }
    let n_time = u32_at(bytes, 4);
    let n_lat = u32_at(bytes, 8);
    let n_lon = u32_at(bytes, 12);
    if n_time == 0 || n_lat == 0 || n_lon == 0 {
        return Err(parse_err(4, ParseIssue::EmptyDimension));
    }
    let start_year = i32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let start_month = bytes[20];
    if !(1..=12).contains(&start_month) {
        return Err(parse_err(20, ParseIssue::MonthOutOfRange(start_month)));
    }
    let kind = match bytes[21] {
        0 => CgtKind::Series,
        1 => CgtKind::Elevation,
        2 => CgtKind::Mask,
        k => return Err(parse_err(21, ParseIssue::UnknownKind(k))),
    };
    if bytes[22] != 0 || bytes[23] != 0 {
        return Err(parse_err(22, ParseIssue::ReservedNonZero));
    }
    if kind != CgtKind::Series && n_time != 1 {
        return Err(parse_err(
            4,
            ParseIssue::SingleFieldKind {
                kind: kind as u8,
                n_time,
            },
        ));
    }

    let cells = n_lat as u64 * n_lon as u64;
    let expected = n_time as u64 * cells * 4;
    let found = (bytes.len() - CGT_HEADER_LEN) as u64;
    if found < expected {
        return Err(parse_err(bytes.len(), ParseIssue::Truncated { expected, found }));
    }
    if found > expected {
        return Err(parse_err(
            CGT_HEADER_LEN + expected as usize,
            ParseIssue::TrailingBytes {
                extra: found - expected,
            },
        ));
    }

    let mut values = Vec::with_capacity((expected / 4) as usize);
    for (k, chunk) in bytes[CGT_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        let offset = CGT_HEADER_LEN + 4 * k;
        if !v.is_finite() {
            return Err(parse_err(offset, ParseIssue::NonFinite));
        }
        if kind == CgtKind::Mask && v != 0.0 && v != 1.0 {
            return Err(parse_err(offset, ParseIssue::MaskDomain(v)));
        }
        values.push(v as f64);
    }

    let (n_lat, n_lon, cells) = (n_lat as usize, n_lon as usize, cells as usize);
    match kind {
        CgtKind::Series => {
            let start = MonthStamp::new(start_year, start_month)?;
            let fields = values
                .chunks_exact(cells)
                .map(|c| GridField::new(n_lat, n_lon, c.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok(CgtObject::Series(GridSeries::new(start, fields)?))
        }
        CgtKind::Elevation => Ok(CgtObject::Elevation(GridField::new(n_lat, n_lon, values)?)),
        CgtKind::Mask => Ok(CgtObject::Mask(RegionMask::new(name, n_lat, n_lon, values)?)),
    }
}

/// Encode to CGT bytes. Values are stored as `f32`.
pub fn encode_cgt(obj: &CgtObject) -> Result<Vec<u8>> {
    let (n_time, (n_lat, n_lon), start, payload): (usize, _, _, Box<dyn Iterator<Item = f64> + '_>) =
        match obj {
            CgtObject::Series(s) => (
                s.len(),
                s.shape(),
                s.start(),
                Box::new(s.fields().iter().flat_map(|f| f.values().iter().copied())),
            ),
            CgtObject::Elevation(e) => (
                1,
                e.shape(),
                MonthStamp::new(0, 1)?,
                Box::new(e.values().iter().copied()),
            ),
            CgtObject::Mask(m) => (
                1,
                m.shape(),
                MonthStamp::new(0, 1)?,
                Box::new(m.weights().iter().copied()),
            ),
        };
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Dimension(format!("{what} = {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(CGT_HEADER_LEN + 4 * n_time * n_lat * n_lon);
    out.extend_from_slice(CGT_MAGIC);
    out.extend_from_slice(&dim(n_time, "n_time")?.to_le_bytes());
    out.extend_from_slice(&dim(n_lat, "n_lat")?.to_le_bytes());
    out.extend_from_slice(&dim(n_lon, "n_lon")?.to_le_bytes());
    out.extend_from_slice(&start.year().to_le_bytes());
    out.push(start.month());
    out.push(obj.kind() as u8);
    out.extend_from_slice(&[0, 0]);
    for v in payload {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidValue(format!("{v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn read_cgt(path: impl AsRef<Path>) -> Result<CgtObject> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_cgt(&bytes, &name)
}

pub fn write_cgt(obj: &CgtObject, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cgt(obj)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write a multi-month series as an elevation file; always rejected, since
/// elevation files carry exactly one field. Exists so callers holding a
/// series can get the invariant error instead of silently dropping months.
pub fn write_elevation_series(series: &GridSeries, path: impl AsRef<Path>) -> Result<()> {
    if series.len() != 1 {
        return Err(Error::InvalidValue(format!(
            "elevation needs exactly one field, series has {}",
            series.len()
        )));
    }
    write_cgt(&CgtObject::Elevation(series.field(0).clone()), path)
}

/// Scalar normalization constants frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub computed_over: String,
    pub elevation_mean: f64,
    pub elevation_std: f64,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.std) || !ok(self.elevation_std) || !self.mean.is_finite() || !self.elevation_mean.is_finite() {
            return Err(Error::DegenerateStatistics(format!(
                "std {} / elevation std {} must be positive and finite",
                self.std, self.elevation_std
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn normalize_elevation(&self, x: f64) -> f64 {
        (x - self.elevation_mean) / self.elevation_std
    }

    pub fn normalize_field(&self, f: &GridField) -> Result<GridField> {
        f.map(|v| self.normalize(v))
    }

    pub fn denormalize_field(&self, f: &GridField) -> Result<GridField> {
        f.map(|v| self.denormalize(v))
    }
}

/// Population mean and standard deviation, two-pass.
fn mean_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64, usize) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// Statistics over every training temperature value, plus elevation
/// statistics when an elevation field is supplied (otherwise 0 / 1).
pub fn compute_norm_stats(
    train_series: &[GridSeries],
    elevation: Option<&GridField>,
    computed_over: impl Into<String>,
) -> Result<NormStats> {
    if train_series.is_empty() {
        return Err(Error::Input("no training series".into()));
    }
    let all = train_series
        .iter()
        .flat_map(|s| s.fields().iter().flat_map(|f| f.values().iter()));
    let (mean, std, _) = mean_std(all);
    let (elevation_mean, elevation_std) = match elevation {
        Some(e) => {
            let (m, s, _) = mean_std(e.values().iter());
            (m, s)
        }
        None => (0.0, 1.0),
    };
    if !(std > 0.0) {
        return Err(Error::DegenerateStatistics("temperature values are constant".into()));
    }
    if !(elevation_std > 0.0) {
        return Err(Error::DegenerateStatistics("elevation values are constant".into()));
    }
    Ok(NormStats {
        mean,
        std,
        computed_over: computed_over.into(),
        elevation_mean,
        elevation_std,
    })
}

/// Per-cell mean across aligned members.
pub fn ensemble_mean(members: &[GridSeries]) -> Result<GridSeries> {
    let first = members
        .first()
        .ok_or_else(|| Error::Input("ensemble needs at least one member".into()))?;
    for (k, m) in members.iter().enumerate().skip(1) {
        if m.start() != first.start() || m.len() != first.len() {
            return Err(Error::Alignment(format!(
                "member {k} spans {}, member 0 spans {}",
                m.range(),
                first.range()
            )));
        }
        if m.shape() != first.shape() {
            return Err(Error::Dimension(format!("member {k} grid differs from member 0")));
        }
    }
    let (n_lat, n_lon) = first.shape();
    let n = members.len() as f64;
    let fields = (0..first.len())
        .map(|t| {
            let mut acc = vec![0.0; n_lat * n_lon];
            for m in members {
                for (a, &v) in acc.iter_mut().zip(m.field(t).values()) {
                    *a += v;
                }
            }
            GridField::new(n_lat, n_lon, acc.into_iter().map(|v| v / n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    GridSeries::new(first.start(), fields)
}

/// Parameters of the synthetic monthly temperature generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    pub n_years: usize,
    pub start: MonthStamp,
    /// °C at the equator.
    pub base_equator: f64,
    /// °C lost between equator and pole.
    pub pole_drop: f64,
    /// Seasonal cycle amplitude at the poles, °C.
    pub seasonal_amplitude_pole: f64,
    /// Calendar month of the seasonal maximum.
    pub phase_month: u8,
    /// °C per decade.
    pub trend: f64,
    pub noise_std: f64,
    /// °C per km.
    pub lapse_rate: f64,
    /// Peak elevation scale in km.
    pub elevation_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_lat: 24,
            n_lon: 48,
            n_years: 80,
            start: MonthStamp::new(1942, 1).unwrap(),
            base_equator: 27.0,
            pole_drop: 45.0,
            seasonal_amplitude_pole: 20.0,
            phase_month: 7,
            trend: 0.2,
            noise_std: 0.5,
            lapse_rate: 6.5,
            elevation_scale: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lat == 0 || self.n_lon == 0 || !self.n_lat.is_multiple_of(8) || !self.n_lon.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "grid {}x{} must be non-empty and divisible by 8",
                self.n_lat, self.n_lon
            )));
        }
        if self.n_years == 0 {
            return Err(Error::Config("n_years must be at least 1".into()));
        }
        if !(1..=12).contains(&self.phase_month) {
            return Err(Error::Config(format!("phase_month {} outside 1..=12", self.phase_month)));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std {} is negative", self.noise_std)));
        }
        let finite = [
            self.base_equator,
            self.pole_drop,
            self.seasonal_amplitude_pole,
            self.trend,
            self.noise_std,
            self.lapse_rate,
            self.elevation_scale,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite generator parameter".into()));
        }
        Ok(())
    }
}

/// Smooth elevation surface in km: three Gaussian bumps with seeded
/// centres, widths and heights. Longitude distance wraps.
fn synthetic_elevation(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<GridField> {
    let (n_lat, n_lon) = (cfg.n_lat, cfg.n_lon);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let ci = rng.random_range(0.0..n_lat as f64);
            let cj = rng.random_range(0.0..n_lon as f64);
            let sigma = rng.random_range((n_lat as f64 / 12.0).max(1.0)..(n_lat as f64 / 5.0).max(1.5));
            let height = rng.random_range(0.4..1.0);
            (ci, cj, sigma, height)
        })
        .collect();
    let mut values = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let mut h = 0.0;
            for &(ci, cj, sigma, height) in &bumps {
                let di = i as f64 - ci;
                let dj = {
                    let d = (j as f64 - cj).abs();
                    d.min(n_lon as f64 - d)
                };
                h += height * (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            }
            values.push((cfg.elevation_scale * h) as f32 as f64);
        }
    }
    GridField::new(n_lat, n_lon, values)
}

/// Synthetic monthly temperatures and the elevation surface used to make
/// them. Values are rounded to `f32` so that they survive a CGT roundtrip
/// unchanged.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(GridSeries, GridField)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let elevation = synthetic_elevation(cfg, &mut rng)?;
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let (n_lat, n_lon) = (cfg.n_lat, cfg.n_lon);
    let n_months = cfg.n_years * 12;
    let mut fields = Vec::with_capacity(n_months);
    for t in 0..n_months {
        let month = cfg.start.advance(t as i64).month();
        let phase = (2.0 * std::f64::consts::PI * (month as f64 - cfg.phase_month as f64) / 12.0).cos();
        let trend = cfg.trend * (t as f64 / 120.0);
        let mut values = Vec::with_capacity(n_lat * n_lon);
        for i in 0..n_lat {
            let lat_frac = row_latitude(i, n_lat).abs() / 90.0;
            let zonal = cfg.base_equator - cfg.pole_drop * lat_frac;
            let seasonal = cfg.seasonal_amplitude_pole * lat_frac * phase;
            for j in 0..n_lon {
                let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                let v = zonal + seasonal + trend - cfg.lapse_rate * elevation.get(i, j) + eps;
                values.push(v as f32 as f64);
            }
        }
        fields.push(GridField::new(n_lat, n_lon, values)?);
    }
    Ok((GridSeries::new(cfg.start, fields)?, elevation))
}

/// Four latitude/longitude boxes standing in for the continents used in
/// regional verification.
pub fn continent_masks(n_lat: usize, n_lon: usize) -> Result<Vec<RegionMask>> {
    [
        ("Africa", (-35.0, 37.0), (-18.0, 52.0)),
        ("North America", (15.0, 72.0), (-168.0, -52.0)),
        ("Europe", (36.0, 71.0), (-10.0, 40.0)),
        ("Asia", (5.0, 77.0), (40.0, 180.0)),
    ]
    .into_iter()
    .map(|(name, lat, lon)| RegionMask::from_box(name, n_lat, n_lon, lat, lon))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_series(value: f64) -> GridSeries {
        GridSeries::new(
            MonthStamp::new(2000, 1).unwrap(),
            vec![GridField::filled(2, 2, value).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn header_layout_and_size() {
        let bytes = encode_cgt(&CgtObject::Series(tiny_series(0.0))).unwrap();
        // 4 + 4 + 4 + 4 + 4 + 1 + 1 + 2 header bytes, then 4 f32 values.
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(&bytes[0..4], b"CGT1");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 2);
        assert_eq!(u32_at(&bytes, 12), 2);
        assert_eq!(i32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2000);
        assert_eq!(bytes[20], 1);
        assert_eq!(bytes[21], 0);
        assert_eq!(&bytes[22..24], &[0, 0]);
        assert!(bytes[24..].iter().all(|&b| b == 0));
    }

    #[test]
    fn decode_errors_name_offsets() {
        let good = encode_cgt(&CgtObject::Series(tiny_series(1.0))).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_cgt(&bad, "x"),
            Err(Error::Parse { offset: 0, issue: ParseIssue::BadMagic(_) })
        ));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            decode_cgt(truncated, "x"),
            Err(Error::Parse { issue: ParseIssue::Truncated { .. }, .. })
        ));

        let mut month = good.clone();
        month[20] = 13;
        assert!(matches!(
            decode_cgt(&month, "x"),
            Err(Error::Parse { offset: 20, issue: ParseIssue::MonthOutOfRange(13) })
        ));

        let mut nan = good.clone();
        nan[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_cgt(&nan, "x"),
            Err(Error::Parse { offset: 28, issue: ParseIssue::NonFinite })
        ));
    }

    #[test]
    fn mask_domain_and_single_field_kinds() {
        let mask = RegionMask::new("m", 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut bytes = encode_cgt(&CgtObject::Mask(mask)).unwrap();
        bytes[24..28].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(
            decode_cgt(&bytes, "m"),
            Err(Error::Parse { offset: 24, issue: ParseIssue::MaskDomain(_) })
        ));

        let two = GridSeries::new(
            MonthStamp::new(2000, 1).unwrap(),
            vec![GridField::filled(2, 2, 1.0).unwrap(); 2],
        )
        .unwrap();
        let mut bytes = encode_cgt(&CgtObject::Series(two.clone())).unwrap();
        bytes[21] = CgtKind::Elevation as u8;
        assert!(matches!(
            decode_cgt(&bytes, "e"),
            Err(Error::Parse { issue: ParseIssue::SingleFieldKind { .. }, .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(write_elevation_series(&two, dir.path().join("e.cgt")).is_err());
    }

    #[test]
    fn norm_stats_examples() {
        let s = GridSeries::new(
            MonthStamp::new(2000, 1).unwrap(),
            vec![GridField::new(1, 2, vec![0.0, 2.0]).unwrap()],
        )
        .unwrap();
        let st = compute_norm_stats(&[s], None, "two").unwrap();
        assert_eq!(st.mean, 1.0);
        assert_eq!(st.std, 1.0);
        assert_eq!(st.normalize(st.mean), 0.0);
        assert_eq!(st.normalize(st.mean + st.std), 1.0);
        assert!(matches!(
            compute_norm_stats(&[tiny_series(5.0)], None, "c"),
            Err(Error::DegenerateStatistics(_))
        ));
        assert!(compute_norm_stats(&[], None, "none").is_err());
    }

    #[test]
    fn ensemble_mean_examples() {
        let z = tiny_series(0.0);
        let two = tiny_series(2.0);
        let m = ensemble_mean(&[z.clone(), two]).unwrap();
        assert!(m.field(0).values().iter().all(|&v| v == 1.0));
        assert_eq!(ensemble_mean(std::slice::from_ref(&z)).unwrap(), z);
        let three = ensemble_mean(&[tiny_series(1.0), tiny_series(2.0), tiny_series(6.0)]).unwrap();
        assert_eq!(three.field(0).get(0, 0), 3.0);

        let late = GridSeries::new(
            MonthStamp::new(2000, 2).unwrap(),
            vec![GridField::filled(2, 2, 0.0).unwrap()],
        )
        .unwrap();
        assert!(matches!(ensemble_mean(&[z, late]), Err(Error::Alignment(_))));
    }

    #[test]
    fn synthetic_config_validation() {
        let cfg = SyntheticConfig {
            n_lat: 25,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SyntheticConfig {
            noise_std: -1.0,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn synthetic_equator_at_phase_month() {
        let cfg = SyntheticConfig {
            n_lat: 8,
            n_lon: 16,
            n_years: 2,
            noise_std: 0.0,
            trend: 0.0,
            phase_month: 3,
            start: MonthStamp::new(2000, 1).unwrap(),
            seed: 11,
            ..Default::default()
        };
        let (series, elev) = generate_synthetic(&cfg).unwrap();
        let eq = cfg.n_lat / 2;
        let t = series.index_of(MonthStamp::new(2000, 3).unwrap()).unwrap();
        for j in 0..cfg.n_lon {
            let expected = (cfg.base_equator - cfg.lapse_rate * elev.get(eq, j)) as f32 as f64;
            assert_eq!(series.field(t).get(eq, j), expected);
        }
        assert!(elev.values().iter().all(|&h| h >= 0.0));
    }

    #[test]
    fn continent_masks_are_nonempty() {
        let masks = continent_masks(24, 48).unwrap();
        assert_eq!(masks.len(), 4);
        assert!(masks.iter().all(|m| m.selected() > 0));
    }
}
