use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use unetcast::dataio::{
    compute_norm_stats, continent_masks, ensemble_mean, generate_synthetic, read_cgt, write_cgt, CgtObject,
    NormStats, SyntheticConfig,
};
use unetcast::evaluation::{
    binned_abs_error, default_bin_edges, emit_heatmap, evaluate, rank_cases, EvalReport, Forecaster, Persistence,
    ReportMetadata, StoredSeries,
};
use unetcast::grid::{monthly_climatology, GridField, GridSeries, MonthRange, RegionMask};
use unetcast::model::{build_model, Checkpoint, ModelConfig};
use unetcast::stacking::{assemble_range, Sample, TemporalCase};
use unetcast::training::{predict_many, train_observed, TrainConfig, TrainHistory};
use unetcast::Error;

use crate::manifest::{beside, in_dir, Recorder};
use crate::{
    BaselineCommand, CliError, EvaluateArgs, FinetuneArgs, HeatmapArgs, PredictArgs, RankArgs, ScoringFlags,
    SynthArgs, TrainArgs, TrainingFlags,
};

type CliResult<T = ()> = Result<T, CliError>;

/// Months held out for validation when no range is given.
const DEFAULT_VAL_MONTHS: i64 = 60;
const DEFAULT_PATIENCE: usize = 5;

fn read_object(path: &Path, rec: &mut Recorder) -> CliResult<CgtObject> {
    rec.input(path)?;
    read_cgt(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path, rec: &mut Recorder) -> CliResult<GridSeries> {
    read_object(path, rec)?
        .into_series()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_elevation(path: Option<&Path>, rec: &mut Recorder) -> CliResult<Option<GridField>> {
    path.map(|p| {
        read_object(p, rec)?
            .into_elevation()
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))
    })
    .transpose()
}

fn read_checkpoint(dir: &Path, rec: &mut Recorder) -> CliResult<(Checkpoint, String)> {
    rec.input(dir)?;
    let ckpt = Checkpoint::load(dir).map_err(|e| match e {
        Error::Io { .. } => CliError::data(e.to_string()),
        e => e.into(),
    })?;
    let manifest = std::fs::read(dir.join(unetcast::model::MANIFEST_FILE))
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let id = hex::encode(Sha256::digest(&manifest))[..16].to_string();
    Ok((ckpt, id))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

pub fn synth(a: SynthArgs) -> CliResult {
    let rec = Recorder::new("synth");
    let cfg = SyntheticConfig {
        n_lat: a.lat,
        n_lon: a.lon,
        n_years: a.years,
        start: a.start,
        base_equator: a.base_equator,
        trend: a.trend,
        noise_std: a.noise,
        seed: a.seed,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let (series, elevation) = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    write_cgt(&CgtObject::Series(series), a.out.join("temperature.cgt"))?;
    write_cgt(&CgtObject::Elevation(elevation), a.out.join("elevation.cgt"))?;
    let mut masks = Vec::new();
    for m in continent_masks(cfg.n_lat, cfg.n_lon)? {
        let file = format!("{}.cgt", m.name().to_lowercase().replace(' ', "_"));
        write_cgt(&CgtObject::Mask(m), a.out.join(&file))?;
        masks.push(file);
    }
    let config = json!({ "synthetic": cfg, "masks": masks });
    rec.finish(&in_dir(&a.out), config, Some(a.seed))?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn train_config(t: &TrainingFlags) -> TrainConfig {
    TrainConfig {
        learning_rate: t.lr,
        weight_decay: t.weight_decay,
        epochs: t.epochs,
        batch_size: t.batch_size,
        step_size_epochs: t.step_size,
        lr_factor: t.lr_factor,
        early_stop_patience: (!t.no_early_stop).then(|| t.patience.unwrap_or(DEFAULT_PATIENCE.min(t.epochs.max(1)))),
        seed: t.seed,
        shuffle: !t.no_shuffle,
        ..Default::default()
    }
}

/// Training and validation target ranges, defaulting to the last
/// `DEFAULT_VAL_MONTHS` months for validation and everything before for
/// training.
fn split(series: &GridSeries, t: &TrainingFlags) -> CliResult<(MonthRange, MonthRange)> {
    let val = match t.val_range {
        Some(r) => r,
        None => {
            if (series.len() as i64) <= DEFAULT_VAL_MONTHS {
                return Err(CliError::data(format!(
                    "series of {} months is too short for the default validation split",
                    series.len()
                )));
            }
            MonthRange::new(series.end().advance(1 - DEFAULT_VAL_MONTHS), series.end())?
        }
    };
    let train = match t.train_range {
        Some(r) => r,
        None => MonthRange::new(series.start(), val.first.advance(-1))?,
    };
    Ok((train, val))
}

fn samples(
    members: &[GridSeries],
    elevation: Option<&GridField>,
    norm: &NormStats,
    case: &TemporalCase,
    range: MonthRange,
) -> CliResult<Vec<Sample>> {
    let mut out = Vec::new();
    for s in members {
        out.extend(assemble_range(s, elevation, norm, case, range.first, range.last)?);
    }
    if out.is_empty() {
        return Err(CliError::data(format!("no samples for case {case} in {range}")));
    }
    Ok(out)
}

fn print_epoch(r: &unetcast::training::EpochRecord) {
    eprintln!(
        "epoch {:>3}  lr {:.2e}  train_mse {:.5}  val_mse {:.5}  val_mae {:.3} C",
        r.epoch, r.learning_rate, r.train_mse, r.val_mse, r.val_mae
    );
}

fn save_run(ckpt: &Checkpoint, history: &TrainHistory, out: &Path) -> CliResult {
    ckpt.save(out)?;
    history.save(out)?;
    eprintln!(
        "best epoch {} (val_mse {:.5}), checkpoint in {}",
        history.best_epoch,
        history.best_validation_loss,
        out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult {
    let mut rec = Recorder::new("train");
    let members = a
        .data
        .iter()
        .map(|p| read_series(p, &mut rec))
        .collect::<CliResult<Vec<_>>>()?;
    let elevation = read_elevation(a.elevation.as_deref(), &mut rec)?;
    let cfg = train_config(&a.training);
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let (train_range, val_range) = split(&members[0], &a.training)?;

    let history_part = MonthRange::new(members[0].start(), train_range.last)?;
    let parts = members
        .iter()
        .map(|s| s.slice(history_part))
        .collect::<unetcast::Result<Vec<_>>>()?;
    let over = format!(
        "{} {history_part}",
        a.data.iter().map(|p| stem(p)).collect::<Vec<_>>().join("+")
    );
    let norm = compute_norm_stats(&parts, elevation.as_ref(), &over)?;
    let model_cfg = ModelConfig::new(a.arch, a.case, elevation.is_some(), a.width, norm.clone());
    model_cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mut model = build_model::<f32>(model_cfg.clone(), cfg.seed)?;

    let tr = samples(&members, elevation.as_ref(), &norm, &a.case, train_range)?;
    let va = samples(&members, elevation.as_ref(), &norm, &a.case, val_range)?;
    eprintln!(
        "{} {} W0={} in_channels={}: {} training and {} validation samples",
        a.arch,
        a.case,
        a.width,
        model_cfg.in_channels,
        tr.len(),
        va.len()
    );
    let (mut ckpt, history) = train_observed(&mut model, &tr, &va, &cfg, &mut print_epoch)?;
    ckpt.manifest.provenance.dataset_ids = a.data.iter().map(|p| stem(p)).collect();
    save_run(&ckpt, &history, &a.out)?;

    let config = json!({
        "arch": a.arch,
        "case": a.case,
        "base_width": a.width,
        "in_channels": model_cfg.in_channels,
        "elevation": a.elevation,
        "train_range": train_range,
        "val_range": val_range,
        "norm_stats": norm,
        "training": cfg,
    });
    rec.finish(&in_dir(&a.out), config, Some(cfg.seed))
}

pub fn finetune(a: FinetuneArgs) -> CliResult {
    let mut rec = Recorder::new("finetune");
    let (parent, parent_id) = read_checkpoint(&a.checkpoint, &mut rec)?;
    let members = a
        .data
        .iter()
        .map(|p| read_series(p, &mut rec))
        .collect::<CliResult<Vec<_>>>()?;
    let elevation = read_elevation(a.elevation.as_deref(), &mut rec)?;
    let model_cfg = &parent.manifest.config;
    if model_cfg.elevation && elevation.is_none() {
        return Err(CliError::usage("checkpoint uses elevation; pass --elevation"));
    }
    let elevation = elevation.filter(|_| model_cfg.elevation);
    let case = a.case.unwrap_or(parent.case());
    let cfg = train_config(&a.training);
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let (train_range, val_range) = split(&members[0], &a.training)?;
    let norm = &model_cfg.norm_stats;
    if case != parent.case() {
        return Err(CliError::usage(format!(
            "checkpoint was trained for case {}, not {case}",
            parent.case()
        )));
    }
    let tr = samples(&members, elevation.as_ref(), norm, &case, train_range)?;
    let va = samples(&members, elevation.as_ref(), norm, &case, val_range)?;
    let mut model = parent.to_model()?;
    let (mut ckpt, history) = train_observed(&mut model, &tr, &va, &cfg, &mut print_epoch)?;
    let pp = &parent.manifest.provenance;
    ckpt.manifest.provenance.dataset_ids = pp.dataset_ids.iter().cloned().chain(a.data.iter().map(|p| stem(p))).collect();
    ckpt.manifest.provenance.parent = Some(format!(
        "{} ({parent_id}) best_epoch={} best_val_mse={:?}",
        a.checkpoint.display(),
        pp.best_epoch,
        pp.best_validation_loss
    ));
    save_run(&ckpt, &history, &a.out)?;

    let config = json!({
        "parent": a.checkpoint,
        "parent_id": parent_id,
        "case": case,
        "elevation": a.elevation,
        "train_range": train_range,
        "val_range": val_range,
        "training": cfg,
    });
    rec.finish(&in_dir(&a.out), config, Some(cfg.seed))
}

pub fn predict(a: PredictArgs) -> CliResult {
    let mut rec = Recorder::new("predict");
    let (ckpt, id) = read_checkpoint(&a.checkpoint, &mut rec)?;
    let history = read_series(&a.data, &mut rec)?;
    let elevation = read_elevation(a.elevation.as_deref(), &mut rec)?;
    let model = ckpt.to_model()?;
    let months: Vec<_> = a.range.iter().collect();
    let fields = predict_many(&model, &history, elevation.as_ref(), &months)?;
    write_cgt(&CgtObject::Series(GridSeries::new(a.range.first, fields)?), &a.out)?;
    let config = json!({ "checkpoint_id": id, "range": a.range, "case": ckpt.case() });
    rec.finish(&beside(&a.out), config, None)
}

/// Scored forecast plus reference information for the report.
struct Scored {
    name: String,
    forecast: GridSeries,
    metadata: ReportMetadata,
    with_persistence: bool,
}

fn forecast_series(f: &dyn Forecaster, range: MonthRange) -> CliResult<GridSeries> {
    let months: Vec<_> = range.iter().collect();
    Ok(GridSeries::new(range.first, f.forecast(&months)?)?)
}

fn score(run: Scored, truth: &GridSeries, s: &ScoringFlags, rec: &mut Recorder) -> CliResult<EvalReport> {
    let (n_lat, n_lon) = truth.shape();
    let mut masks: Vec<RegionMask> = Vec::new();
    for p in &s.mask {
        masks.push(
            read_object(p, rec)?
                .into_mask()
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        );
    }
    if s.continents {
        masks.extend(continent_masks(n_lat, n_lon)?);
    }

    let main = StoredSeries {
        name: run.name.clone(),
        series: &run.forecast,
    };
    let summary = evaluate(&main, truth, &masks, s.range)?;
    let mut metadata = run.metadata;
    let mut report_systems = vec![(run.name.clone(), run.forecast.clone())];
    let mut baselines = Vec::new();
    if run.with_persistence {
        let p = forecast_series(&Persistence { series: truth }, s.range)?;
        let st = StoredSeries {
            name: "persistence".into(),
            series: &p,
        };
        baselines.push(evaluate(&st, truth, &masks, s.range)?);
        report_systems.push(("persistence".into(), p));
    }

    let base = s.clim_base.unwrap_or(s.range);
    let bins = match monthly_climatology(&truth.slice(base)?, base) {
        Ok(clim) => {
            let systems: Vec<(&str, &GridSeries)> = report_systems.iter().map(|(n, s)| (n.as_str(), s)).collect();
            Some(binned_abs_error(&systems, truth, &clim, &default_bin_edges())?)
        }
        Err(e @ Error::Coverage(_)) if s.clim_base.is_none() => {
            eprintln!("warning: no anomaly bins: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    metadata.climatology_base_range = bins.as_ref().map(|_| base);

    let mut report = EvalReport::new(metadata, summary);
    for b in baselines {
        report.add_baseline(b);
    }
    report.anomaly_bins = bins;
    Ok(report)
}

fn write_report(report: &EvalReport, out: &Path, stem: &str) -> CliResult {
    report.save(out, stem)?;
    eprintln!(
        "{}: overall MAE {:.4} C over {}",
        report.summary.system, report.summary.overall_mae, report.metadata.evaluation_range
    );
    for (name, b) in &report.baselines {
        eprintln!("{name}: overall MAE {:.4} C", b.overall_mae);
    }
    Ok(())
}

fn scoring_config(s: &ScoringFlags) -> serde_json::Value {
    json!({
        "truth": s.truth,
        "range": s.range,
        "masks": s.mask,
        "continents": s.continents,
        "clim_base": s.clim_base.unwrap_or(s.range),
        "bin_edges": default_bin_edges(),
    })
}

pub fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let mut rec = Recorder::new("evaluate");
    let s = &a.scoring;
    let truth = read_series(&s.truth, &mut rec)?;
    let mut metadata = ReportMetadata::new(s.range);
    let (name, forecast) = match (&a.checkpoint, &a.prediction) {
        (Some(dir), _) => {
            let (ckpt, id) = read_checkpoint(dir, &mut rec)?;
            let history = match &a.history {
                Some(p) => read_series(p, &mut rec)?,
                None => truth.clone(),
            };
            let elevation = read_elevation(a.elevation.as_deref(), &mut rec)?;
            let model = ckpt.to_model()?;
            let months: Vec<_> = s.range.iter().collect();
            let fields = predict_many(&model, &history, elevation.as_ref(), &months).map_err(|e| match e {
                Error::InsufficientHistory(m) => Error::Coverage(m),
                e => e,
            })?;
            metadata.case_id = Some(ckpt.case().id());
            metadata.checkpoint_id = Some(id);
            let cfg = &ckpt.manifest.config;
            (format!("{}-{}", cfg.arch, cfg.case_id), GridSeries::new(s.range.first, fields)?)
        }
        (None, Some(p)) => {
            let stored = read_series(p, &mut rec)?;
            let name = stem(p);
            let f = forecast_series(
                &StoredSeries {
                    name: name.clone(),
                    series: &stored,
                },
                s.range,
            )?;
            (name, f)
        }
        (None, None) => return Err(CliError::usage("pass --checkpoint or --prediction")),
    };
    create_dir(&s.out)?;
    write_cgt(&CgtObject::Series(forecast.clone()), s.out.join("prediction.cgt"))?;
    let run = Scored {
        name,
        forecast,
        metadata,
        with_persistence: true,
    };
    let report = score(run, &truth, s, &mut rec)?;
    write_report(&report, &s.out, "report")?;
    let mut config = scoring_config(s);
    config["checkpoint"] = to_json(&a.checkpoint);
    config["prediction"] = to_json(&a.prediction);
    config["history"] = to_json(&a.history);
    rec.finish(&in_dir(&s.out), config, None)
}

pub fn rank(a: RankArgs) -> CliResult {
    let mut rec = Recorder::new("rank");
    let mut reports = Vec::with_capacity(a.reports.len());
    for p in &a.reports {
        rec.input(p)?;
        reports.push(EvalReport::load(p).map_err(|e| CliError::data(e.to_string()))?);
    }
    let table = rank_cases(&reports)?;
    table.save(&a.out, "rank")?;
    let overall = unetcast::evaluation::OVERALL;
    let mut rows: Vec<_> = table.rows.iter().collect();
    rows.sort_by_key(|r| r.ranks[overall]);
    for r in rows {
        println!("{:>2}  {:<20} {:.4}", r.ranks[overall], r.label, r.mae[overall]);
    }
    let config = json!({ "reports": a.reports, "overall_rank_rule": table.overall_rank_rule });
    rec.finish(&in_dir(&a.out), config, None)
}

pub fn baseline(b: BaselineCommand) -> CliResult {
    let (command, members, s) = match b {
        BaselineCommand::Persistence(s) => ("baseline persistence", Vec::new(), s),
        BaselineCommand::Ensemble { members, scoring } => ("baseline ensemble", members, scoring),
    };
    let mut rec = Recorder::new(command);
    let truth = read_series(&s.truth, &mut rec)?;
    let (name, forecast) = if members.is_empty() {
        ("persistence", forecast_series(&Persistence { series: &truth }, s.range)?)
    } else {
        let series = members
            .iter()
            .map(|p| read_series(p, &mut rec))
            .collect::<CliResult<Vec<_>>>()?;
        let mean = ensemble_mean(&series)?;
        let stored = StoredSeries {
            name: "ensemble-mean".into(),
            series: &mean,
        };
        ("ensemble-mean", forecast_series(&stored, s.range)?)
    };
    let run = Scored {
        name: name.into(),
        forecast,
        metadata: ReportMetadata::new(s.range),
        with_persistence: false,
    };
    let report = score(run, &truth, &s, &mut rec)?;
    write_report(&report, &s.out, name)?;
    let mut config = scoring_config(&s);
    config["members"] = to_json(&members);
    rec.finish(&in_dir(&s.out), config, None)
}

pub fn heatmap(a: HeatmapArgs) -> CliResult {
    let mut rec = Recorder::new("heatmap");
    let field = match (&a.report, &a.cgt) {
        (Some(p), _) => {
            rec.input(p)?;
            let report = EvalReport::load(p).map_err(|e| CliError::data(e.to_string()))?;
            let summary = match &a.system {
                None => &report.summary,
                Some(name) if *name == report.summary.system => &report.summary,
                Some(name) => report
                    .baselines
                    .get(name)
                    .ok_or_else(|| CliError::data(format!("{} has no system '{name}'", p.display())))?,
            };
            summary.mae_field.to_field()?
        }
        (None, Some(p)) => match read_object(p, &mut rec)? {
            CgtObject::Series(s) => match a.month {
                Some(m) => s.at(m).map_err(|e| CliError::data(e.to_string()))?.clone(),
                None => s.field(0).clone(),
            },
            CgtObject::Elevation(f) => f,
            CgtObject::Mask(m) => {
                let (h, w) = m.shape();
                GridField::new(h, w, m.weights().to_vec())?
            }
        },
        (None, None) => return Err(CliError::usage("pass --report or --cgt")),
    };
    let range = a.min.zip(a.max);
    emit_heatmap(&field, &a.out, range)?;
    let config = json!({
        "report": a.report,
        "system": a.system,
        "cgt": a.cgt,
        "month": a.month,
        "value_range": range,
    });
    rec.finish(&beside(&a.out), config, None)
}
