use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use unetcast::dataio::continent_masks;
use unetcast::evaluation::{
    binned_abs_error, default_bin_edges, emit_heatmap, evaluate, rank_cases, rank_cells, regression_stats,
    EvalReport, Persistence, ReportMetadata, StoredSeries, GLOBAL, OVERALL,
};
use unetcast::grid::{masked_mae, monthly_climatology, GridField, GridSeries, MonthRange, MonthStamp, RegionMask};
use unetcast::stacking::{enumerate_cases, TemporalCase};
use unetcast::Error;

fn random_series(n_lat: usize, n_lon: usize, months: usize, seed: u64) -> GridSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields = (0..months)
        .map(|_| GridField::new(n_lat, n_lon, (0..n_lat * n_lon).map(|_| rng.random_range(-20.0..30.0)).collect()).unwrap())
        .collect();
    GridSeries::new(MonthStamp::new(2001, 1).unwrap(), fields).unwrap()
}

fn stored<'a>(name: &str, s: &'a GridSeries) -> StoredSeries<'a> {
    StoredSeries {
        name: name.into(),
        series: s,
    }
}

#[test]
fn perfect_and_offset_forecasts() {
    let truth = random_series(8, 16, 24, 1);
    let masks = continent_masks(8, 16).unwrap();
    let range = truth.range();
    let r = evaluate(&stored("truth", &truth), &truth, &masks, range).unwrap();
    assert_eq!(r.overall_mae, 0.0);
    assert!(r.per_region_mae.values().chain(r.per_season_mae.values()).all(|&v| v == 0.0));
    assert!(r.mae_field.values.iter().all(|&v| v == 0.0));

    let plus = truth.map(|v| v + 1.0).unwrap();
    let r = evaluate(&stored("plus", &plus), &truth, &masks, range).unwrap();
    let close = |v: f64| (v - 1.0).abs() < 1e-12;
    assert!(close(r.overall_mae));
    assert!(r.per_region_mae.values().all(|&v| close(v)));
    assert!(r.per_season_mae.values().all(|&v| close(v)));
    assert!(r.per_region_season_mae.values().flat_map(|m| m.values()).all(|&v| close(v)));
    assert!(r.mae_field.values.iter().all(|&v| close(v)));
    assert_eq!(r.per_region_season_mae.len(), 4);
    assert!(r.per_region_season_mae.values().all(|m| m.len() == 4));
}

#[test]
fn regional_values_match_recomputation_and_ignore_mask_order() {
    let truth = random_series(4, 8, 12, 2);
    let pred = random_series(4, 8, 12, 3);
    let north = RegionMask::from_box("north", 4, 8, (1.0, 90.0), (0.0, 360.0)).unwrap();
    let south = RegionMask::from_box("south", 4, 8, (-90.0, 0.0), (0.0, 360.0)).unwrap();
    let range = truth.range();
    let a = evaluate(&stored("p", &pred), &truth, &[north.clone(), south.clone()], range).unwrap();
    let b = evaluate(&stored("p", &pred), &truth, &[south.clone(), north.clone(), south.clone()], range).unwrap();
    let none = evaluate(&stored("p", &pred), &truth, &[], range).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.overall_mae, none.overall_mae);
    for (mask, name) in [(&north, "north"), (&south, "south")] {
        let want: f64 = (0..12)
            .map(|k| masked_mae(pred.field(k), truth.field(k), mask).unwrap())
            .sum::<f64>()
            / 12.0;
        assert!((a.per_region_mae[name] - want).abs() < 1e-12);
    }
    let renamed = north.clone().with_name("south");
    assert!(matches!(
        evaluate(&stored("p", &pred), &truth, &[south, renamed], range),
        Err(Error::Input(_))
    ));
}

#[test]
fn overall_mae_is_mean_of_stored_monthly_values() {
    let truth = random_series(4, 8, 30, 4);
    let range = MonthRange::new(truth.stamp(1), truth.end()).unwrap();
    let r = evaluate(&Persistence { series: &truth }, &truth, &[], range).unwrap();
    let series = &r.mae_time_series[GLOBAL];
    assert_eq!(series.len(), 29);
    let mean = series.iter().map(|m| m.mae).sum::<f64>() / series.len() as f64;
    assert!((r.overall_mae - mean).abs() < 1e-9);

    let missing = MonthRange::new(truth.start(), truth.end().advance(1)).unwrap();
    assert!(matches!(
        evaluate(&Persistence { series: &truth }, &truth, &[], missing),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn report_json_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_series(8, 16, 14, 5);
    let masks = continent_masks(8, 16).unwrap();
    let range = MonthRange::new(truth.stamp(2), truth.end()).unwrap();
    let summary = evaluate(&stored("truth", &truth), &truth, &masks, range).unwrap();
    let mut meta = ReportMetadata::new(range);
    meta.case_id = Some("y1m1".into());
    let mut report = EvalReport::new(meta, summary);
    report.add_baseline(evaluate(&Persistence { series: &truth }, &truth, &masks, range).unwrap());
    report.save(dir.path(), "report").unwrap();
    let back = EvalReport::load(dir.path().join("report.json")).unwrap();
    assert_eq!(back, report);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("case_id,system,region,season,mae\n"));
    assert!(csv.contains("y1m1,persistence,Africa,Summer,"));
}

/// Published per-case MAE of model M6, in canonical case order.
const M6: [f64; 14] = [
    1.046, 1.002, 0.999, 0.983, 0.976, 1.003, 0.983, 0.984, 0.967, 0.979, 0.967, 0.975, 0.962, 0.955,
];

fn single_cell(v: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([("global/all".to_string(), v)])
}

fn is_permutation(col: &[usize]) -> bool {
    let mut c = col.to_vec();
    c.sort();
    c == (1..=14).collect::<Vec<_>>()
}

#[test]
fn published_column_ranks_four_years_two_months_first() {
    let cases = enumerate_cases();
    let cells: Vec<_> = M6.iter().map(|&v| single_cell(v)).collect();
    let t = rank_cells(&cases, &cells).unwrap();
    let first = t.rows.iter().find(|r| r.ranks[OVERALL] == 1).unwrap();
    assert_eq!(first.label, "4 years 2 months");
    assert_eq!(first.mae[OVERALL], 0.955);
    let last = t.rows.iter().find(|r| r.ranks[OVERALL] == 14).unwrap();
    assert_eq!(last.label, "6 months");
    for c in &t.columns {
        assert!(is_permutation(&t.column(c)));
    }
    // 0.983 appears for "24 months" and "1 year 1 month": canonical order breaks the tie
    let r24 = t.rows.iter().find(|r| r.case_id == "seq-24").unwrap().ranks[OVERALL];
    let r11 = t.rows.iter().find(|r| r.case_id == "y1m1").unwrap().ranks[OVERALL];
    assert_eq!(r11, r24 + 1);
}

#[test]
fn ties_and_duplicates() {
    let cases = enumerate_cases();
    let equal: Vec<_> = (0..14).map(|_| single_cell(1.0)).collect();
    let t = rank_cells(&cases, &equal).unwrap();
    assert_eq!(t.column(OVERALL), (1..=14).collect::<Vec<_>>());

    let mut dup = cases.clone();
    dup[13] = dup[0];
    assert!(matches!(rank_cells(&dup, &equal), Err(Error::Input(_))));
    assert!(matches!(rank_cells(&cases[..13], &equal[..13]), Err(Error::Input(_))));
}

proptest! {
    #[test]
    fn rank_columns_are_permutations_and_reverse_under_negation(
        values in prop::collection::vec(prop::collection::vec(0.5f64..2.0, 3), 14),
    ) {
        let cases: Vec<TemporalCase> = enumerate_cases();
        let cells: Vec<BTreeMap<String, f64>> = values
            .iter()
            .map(|v| v.iter().enumerate().map(|(i, &x)| (format!("r{i}/s"), x)).collect())
            .collect();
        let t = rank_cells(&cases, &cells).unwrap();
        let neg: Vec<BTreeMap<String, f64>> = cells
            .iter()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), -v)).collect())
            .collect();
        let tn = rank_cells(&cases, &neg).unwrap();
        for c in &t.columns {
            prop_assert!(is_permutation(&t.column(c)));
            let distinct = {
                let mut v: Vec<f64> = t.rows.iter().map(|r| r.mae[c]).collect();
                v.sort_by(f64::total_cmp);
                v.windows(2).all(|w| w[0] != w[1])
            };
            if distinct {
                for (a, b) in t.column(c).iter().zip(tn.column(c)) {
                    prop_assert_eq!(a + b, 15);
                }
            }
        }
    }

    #[test]
    fn regression_matches_closed_form(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let n = x.len() as f64;
        let (sx, sy, sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0, 0.0, 0.0), |a, &(x, y)| {
            (a.0 + x, a.1 + y, a.2 + x * x, a.3 + x * y, a.4 + y * y)
        });
        let vxx = sxx - sx * sx / n;
        prop_assume!(vxx > 1e-3);
        let slope = (sxy - sx * sy / n) / vxx;
        let intercept = (sy - slope * sx) / n;
        let r = regression_stats(&y, &x).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0);
        prop_assert!(rel(r.slope, slope), "{} vs {}", r.slope, slope);
        prop_assert!(rel(r.intercept, intercept));
        let vyy = syy - sy * sy / n;
        let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
        if vyy > 1e-6 {
            prop_assert!((r.r_squared - (1.0 - ss_res / vyy)).abs() < 1e-8);
        }
        prop_assert!((0.0..=1.0).contains(&r.r_squared));
    }

    #[test]
    fn binned_errors_match_brute_force(seed in any::<u64>(), months in 12usize..30) {
        let truth = random_series(2, 4, months, seed);
        let pred = random_series(2, 4, months, seed ^ 0xabcdef);
        let clim = monthly_climatology(&truth, truth.range()).unwrap();
        let edges = [-15.0, -5.0, 0.0, 5.0, 15.0];
        let stats = binned_abs_error(&[("p", &pred), ("t", &truth)], &truth, &clim, &edges).unwrap();
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); 4];
        let mut outside = 0;
        for k in 0..months {
            let c = clim.entry(truth.stamp(k).month());
            for i in 0..8 {
                let a = truth.field(k).values()[i] - c.values()[i];
                let ae = (pred.field(k).values()[i] - truth.field(k).values()[i]).abs();
                match edges.windows(2).position(|w| a >= w[0] && (a < w[1] || (w[1] == 15.0 && a == 15.0))) {
                    Some(b) => buckets[b].push(ae),
                    None => outside += 1,
                }
            }
        }
        prop_assert_eq!(stats.outside, outside);
        prop_assert_eq!(stats.bins.iter().map(|b| b.count).sum::<usize>() + outside, months * 8);
        for (bin, mut want) in stats.bins.iter().zip(buckets) {
            prop_assert_eq!(bin.count, want.len());
            prop_assert!(bin.systems["t"].is_none_or(|q| q.median == 0.0 && q.q75 == 0.0));
            want.sort_by(f64::total_cmp);
            match bin.systems["p"] {
                None => prop_assert!(want.is_empty()),
                Some(q) => {
                    // nearest-rank style brute force with explicit interpolation
                    let quant = |p: f64| {
                        let h = (want.len() - 1) as f64 * p;
                        let lo = want[h.floor() as usize];
                        let hi = want[h.ceil() as usize];
                        lo + (h - h.floor()) * (hi - lo)
                    };
                    for (got, p) in [(q.q25, 0.25), (q.median, 0.5), (q.q75, 0.75)] {
                        let w = quant(p);
                        prop_assert!((got - w).abs() <= 1e-10 * w.abs().max(1.0));
                    }
                }
            }
        }
    }
}

#[test]
fn binned_constant_cases() {
    let start = MonthStamp::new(2000, 1).unwrap();
    let flat = GridSeries::new(start, vec![GridField::filled(2, 2, 5.0).unwrap(); 12]).unwrap();
    let off = flat.map(|v| v + 0.5).unwrap();
    let clim = monthly_climatology(&flat, flat.range()).unwrap();
    let s = binned_abs_error(&[("m", &off)], &flat, &clim, &default_bin_edges()).unwrap();
    assert_eq!(s.edges.len(), 21);
    let zero_bin = s.bins.iter().position(|b| b.lo == 0.0).unwrap();
    for (i, b) in s.bins.iter().enumerate() {
        if i == zero_bin {
            assert_eq!(b.count, 48);
            let q = b.systems["m"].unwrap();
            assert_eq!((q.q25, q.median, q.q75), (0.5, 0.5, 0.5));
        } else {
            assert_eq!(b.count, 0);
        }
    }
    let later = GridSeries::new(start.advance(100), vec![GridField::filled(2, 2, 5.0).unwrap()]).unwrap();
    assert!(matches!(
        binned_abs_error(&[("m", &later)], &flat, &clim, &default_bin_edges()),
        Err(Error::Coverage(_))
    ));
    assert!(binned_abs_error(&[("m", &off)], &flat, &clim, &[1.0, 1.0]).is_err());
}

#[test]
fn uncorrelated_noise_has_small_r_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let r = regression_stats(&y, &x).unwrap();
    // n R^2 is approximately chi-square(1); 1e-3 is far in its tail
    assert!(r.r_squared < 1e-3, "{}", r.r_squared);
    assert_eq!(r.n, 10_000);
}

#[test]
fn heatmap_of_standard_grid() {
    let dir = tempfile::tempdir().unwrap();
    let f = random_series(24, 48, 1, 9).field(0).clone();
    let p = dir.path().join("mae.pgm");
    emit_heatmap(&f, &p, Some((-20.0, 30.0))).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let header = b"P5 48 24 255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len() - header.len(), 1152);
    let side = std::fs::read_to_string(dir.path().join("mae.pgm.txt")).unwrap();
    assert!(side.contains("min -20") && side.contains("max 30"));
}

#[test]
fn ranking_reports_uses_region_season_cells() {
    let truth = random_series(8, 16, 26, 10);
    let masks = continent_masks(8, 16).unwrap();
    let range = MonthRange::new(truth.stamp(1), truth.end()).unwrap();
    let reports: Vec<EvalReport> = enumerate_cases()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let pred = truth.map(|v| v + 0.1 * (14 - i) as f64).unwrap();
            let mut meta = ReportMetadata::new(range);
            meta.case_id = Some(c.id());
            EvalReport::new(meta, evaluate(&stored("m", &pred), &truth, &masks, range).unwrap())
        })
        .collect();
    let t = rank_cases(&reports).unwrap();
    assert_eq!(t.columns.len(), 4 * 4 + 1);
    assert_eq!(t.rows.len(), 14);
    // larger offsets for earlier cases, so the order is reversed
    assert_eq!(t.column(OVERALL), (1..=14).rev().collect::<Vec<_>>());
}
